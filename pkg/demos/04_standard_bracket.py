"""
From a pre-calculus to a bracket and back
=========================================

The Cartan pre-calculus (iota, d, wedge, L, L) yields the higher Dorfman
bracket through the standard-bracket construction.  Twisting by a random
Z-valued 2-form and extracting the twist again returns the same tensor.
"""

from bourbaki import (
    bidiff_equal,
    canned_dorfman,
    extract_twist,
    induce_precalculus,
    make_cartan_precalculus,
    random_two_form,
    standard_bracket,
    twist,
)

pc = make_cartan_precalculus(3, k=2)
print(pc)
for sub in pc.report.subreports:
    print(f"  {sub}")

st = standard_bracket(pc)
canned = canned_dorfman(3, k=2)
print("standard bracket equals the higher Dorfman bracket:", bidiff_equal(st.bracket, canned.bracket))

H = random_two_form(st.split.A, st.split.Z, degree=2, seed=3)
data = extract_twist(twist(st.bracket, st.split, H), st.metric, st.split, pc)
print("extracted twist equals H:", bidiff_equal(data.H, H), "| isotropic:", data.isotropic)

induced = induce_precalculus(canned, canned.metric, canned.split)
print("induced pre-calculus has the Cartan operators:", induced.same_operators(pc))
