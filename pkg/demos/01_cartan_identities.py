"""
Cartan calculus on a chart
==========================

Forms and vector fields with polynomial coefficients, the three Cartan
operators, and an exhaustive check of their identities.
"""

from bourbaki import Form, Poly, VectorField, check_cartan_suite, exterior_d, interior, lie_bracket, lie_derivative, wedge

n = 3
x1, x2, x3 = (Poly.var(n, i) for i in range(n))

# A 1-form and a vector field on R^3.
w = Form.basis(n, (0,), x1 * x2) + Form.basis(n, (2,), x3**2)
V = VectorField([x2, Poly.zero(n), x1])
print("w      =", w)
print("dw     =", exterior_d(w))
print("iota_V w =", interior(V, w))
print("L_V w  =", lie_derivative(V, w))

# Wedge products pick up the transposition sign.
print("dx2 ^ dx1 =", wedge(Form.basis(n, (1,)), Form.basis(n, (0,))))

U = VectorField([Poly.zero(n), x1, Poly.zero(n)])
print("[U, V] =", lie_bracket(U, V))

# Every identity is checked on all monomial inputs with coefficient degree
# up to 3.  The sweep is symbolic, so it takes a fraction of a second.
for report in check_cartan_suite(n, degree=3):
    print(f"  {report}")
