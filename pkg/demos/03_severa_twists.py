"""
Twisting by closed and non-closed forms
=======================================

Twisting the Dorfman bracket by (U, V) -> iota_U iota_V H keeps the
Jacobi identity exactly when dH = 0.
"""

from bourbaki import Form, Poly, canned_dorfman, exterior_d, twist, twist_from_form

n = 4
st = canned_dorfman(n, k=1)

for H in (Form.basis(n, (0, 1, 2)), Form.basis(n, (0, 1, 2), Poly.var(n, 3))):
    twisted = twist(st, st.split, twist_from_form(n, 1, H))
    h = twisted.classify(degree=1)
    print(f"H = {H}, dH = {exterior_d(H)}")
    print(f"  {h.verdict('jacobi')}")
    print(f"  classification: {h.label}")
