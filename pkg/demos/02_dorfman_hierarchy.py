"""
Where the Dorfman bracket sits in the hierarchy
===============================================

The Dorfman bracket on T + T* is assembled from chart formulas, then run
through the six hierarchy checks.
"""

from bourbaki import BidiffOp, BundleMap, Poly, Section, canned_dorfman, check_right_leibniz

st = canned_dorfman(3, k=1)
E = st.E
print("E has rank", E.rank, "with fibre labels", [E.label(b) for b in range(E.rank)])

# [d/dx1, x1 dx2] = L_{d/dx1}(x1 dx2) = dx2
u = Section.from_strings(E, ["1", "0", "0", "0", "0", "0"])
v = Section.from_strings(E, ["0", "0", "0", "0", "x1", "0"])
print("[u, v] =", st.bracket.apply(u, v))
print("g(u, v) =", st.metric.apply(u, v)[0])

report = st.classify(degree=2)
print(report)

# With the wrong anchor the right-Leibniz rule fails, and the report
# carries sections that reproduce the failure.
bad = check_right_leibniz(st.bracket, BundleMap.zero(E, st.base.bundle))
print(bad)
print("replayed residual:", bad.witness.replay())

# Injecting noise in the vector-field block breaks the anchor morphism.
noise = BidiffOp(E, E, E, C={(0, 1, 2): Poly.var(3, 2)})
h = st.with_bracket(st.bracket + noise).classify(degree=1)
print("with noise:", h.label)
