"""
Connections give pre-calculi without d^2 = 0
============================================

The exterior covariant derivative of a curved connection does not square to
zero, yet it still satisfies every pre-calculus axiom.
"""

from bourbaki import Bundle, Poly, make_connection_precalculus
from bourbaki.constructions import connection_differential

n, m = 2, 2
gamma = {(0, 0, 1): Poly.var(n, 0)}  # nabla_2 e_1 = x1 e_1
pc = make_connection_precalculus(Bundle("P", m, n), gamma, k=1)
print(pc)
for sub in pc.report.subreports:
    print(f"  {sub}")

d0 = connection_differential(n, m, gamma, 0)
d1 = connection_differential(n, m, gamma, 1)
e1 = d0.domain.basis(0)
print("d(e1)    =", d0.apply(e1))
print("d(d(e1)) =", d1.apply(d0.apply(e1)))
