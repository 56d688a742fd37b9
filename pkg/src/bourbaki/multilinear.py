"""Multilinear differential expressions over named section slots.

An axiom residual such as ``[u,[v,w]] - [[u,v],w] - [v,[u,w]]`` is
multilinear in its slots and polynomial-coefficient differential in each.
:class:`Expr` stores it in jet form: every term is a coefficient monomial
times one derivative ``d^alpha`` of one fiber component per slot.  Two
backends evaluate the same residual code:

* :class:`JetBackend` builds the ``Expr``; restricting it to derivative
  orders ``|alpha| <= D`` and testing for zero is exactly equivalent to
  evaluating the residual on every monomial section of degree ``<= D``
  (the evaluation map from such operators to their values on monomials is
  triangular with nonzero diagonal ``alpha!``).
* :class:`DirectBackend` evaluates on concrete sections with the plain
  bundle-level operators, for witnesses and sampled cross-checks.
"""

from __future__ import annotations

from fractions import Fraction
from operator import add

from .bundle import BidiffOp, Bundle, BundleMap, FirstOrderOp, Section, apply_bidiff, apply_first_order
from .errors import ShapeMismatch
from .poly import Poly, as_rational

__all__ = ["Tensorial", "Expr", "JetBackend", "DirectBackend"]


class Tensorial:
    """A C-infinity multilinear map ``ins[0] x ... x ins[k-1] -> out``.

    Entries are keyed ``(a, b_0, ..., b_{k-1})``.
    """

    __slots__ = ("ins", "out", "entries")

    def __init__(self, ins, out, entries):
        self.ins = tuple(ins)
        self.out = out
        n = out.nvars
        clean = {}
        for k, v in entries.items():
            p = v if isinstance(v, Poly) else Poly.const(n, v)
            if p:
                if len(k) != len(self.ins) + 1:
                    raise ShapeMismatch(f"tensor key {k} has the wrong arity")
                clean[tuple(k)] = p
        self.entries = clean

    @classmethod
    def from_map(cls, M):
        return cls((M.domain,), M.codomain, M.entries)

    @classmethod
    def from_metric(cls, g):
        return cls((g.E, g.E), g.R, g.entries)

    @classmethod
    def from_bidiff(cls, B):
        if not B.is_tensorial():
            raise ShapeMismatch("operator is not tensorial")
        return cls((B.left, B.right), B.out, B.C)

    def apply(self, *xs):
        n = self.out.nvars
        out = [Poly.zero(n)] * self.out.rank
        for key, p in self.entries.items():
            term = p
            for x, b in zip(xs, key[1:]):
                xb = x[b]
                if not xb:
                    term = None
                    break
                term = term * xb
            if term is not None:
                out[key[0]] = out[key[0]] + term
        return Section(self.out, out)


def _norm(c):
    if isinstance(c, Fraction) and c.denominator == 1:
        return c.numerator
    return c


class Expr:
    """A multilinear differential expression with values in a rank-``rank`` bundle.

    ``terms`` maps ``(a, factors, mono)`` to a rational coefficient, where
    ``factors`` holds one ``(component, alpha)`` per slot in ``slots`` order.
    """

    __slots__ = ("nvars", "rank", "slots", "terms", "max_order", "_by_out")

    def __init__(self, nvars, rank, slots, terms, max_order=None):
        self.nvars = nvars
        self.rank = rank
        self.slots = tuple(slots)
        self.terms = terms
        self.max_order = max_order
        self._by_out = None

    @classmethod
    def variable(cls, slot, rank, nvars, max_order=None):
        zero = (0,) * nvars
        terms = {(b, ((b, zero),), zero): 1 for b in range(rank)}
        return cls(nvars, rank, (slot,), terms, max_order)

    @classmethod
    def constant(cls, section, max_order=None):
        terms = {}
        for a, p in enumerate(section.components):
            for mono, c in p.terms.items():
                terms[(a, (), mono)] = c
        return cls(section.nvars, section.bundle.rank, (), terms, max_order)

    def by_out(self):
        if self._by_out is None:
            groups = {}
            for (a, factors, mono), c in self.terms.items():
                groups.setdefault(a, []).append((factors, mono, c))
            self._by_out = groups
        return self._by_out

    def is_zero(self):
        return not self.terms

    def partial(self, i):
        n = self.nvars
        cap = self.max_order
        acc = {}
        for (a, factors, mono), c in self.terms.items():
            k = mono[i]
            if k:
                m2 = mono[:i] + (k - 1,) + mono[i + 1:]
                key = (a, factors, m2)
                acc[key] = acc.get(key, 0) + c * k
            for s, (comp, alpha) in enumerate(factors):
                if cap is not None and sum(alpha) >= cap:
                    continue
                al2 = alpha[:i] + (alpha[i] + 1,) + alpha[i + 1:]
                f2 = factors[:s] + ((comp, al2),) + factors[s + 1:]
                key = (a, f2, mono)
                acc[key] = acc.get(key, 0) + c
        return Expr(n, self.rank, self.slots, _prune(acc), cap)

    def _combine(self, other, sign):
        if self.slots != other.slots:
            if set(self.slots) != set(other.slots):
                raise ShapeMismatch(f"cannot add expressions in slots {self.slots} and {other.slots}")
            other = other.reorder(self.slots)
        if self.rank != other.rank:
            raise ShapeMismatch("cannot add expressions of different rank")
        acc = dict(self.terms)
        for k, c in other.terms.items():
            acc[k] = acc.get(k, 0) + sign * c
        return Expr(self.nvars, self.rank, self.slots, _prune(acc), _cap(self, other))

    def __add__(self, other):
        return self._combine(other, 1)

    def __sub__(self, other):
        return self._combine(other, -1)

    def __neg__(self):
        return Expr(self.nvars, self.rank, self.slots, {k: -c for k, c in self.terms.items()}, self.max_order)

    def reorder(self, slots):
        perm = [self.slots.index(s) for s in slots]
        terms = {(a, tuple(f[p] for p in perm), m): c for (a, f, m), c in self.terms.items()}
        return Expr(self.nvars, self.rank, slots, terms, self.max_order)

    def truncate(self, order):
        """Keep terms whose every slot derivative has total order ``<= order``."""
        terms = {
            k: c for k, c in self.terms.items() if all(sum(al) <= order for _, al in k[1])
        }
        return Expr(self.nvars, self.rank, self.slots, terms, order)

    def sorted_terms(self):
        def key(item):
            (a, factors, mono), _ = item
            total = sum(sum(al) for _, al in factors)
            return (total, factors, a, mono)

        return sorted(self.terms.items(), key=key)

    def __len__(self):
        return len(self.terms)


def _cap(*exprs):
    caps = [e.max_order for e in exprs if e.max_order is not None]
    return min(caps) if caps else None


def _prune(acc):
    return {k: _norm(c) for k, c in acc.items() if c}


def _merge_plan(slot_lists):
    """Result slot order and, per operand, the target positions of its slots."""
    flat = [s for slots in slot_lists for s in slots]
    if len(set(flat)) != len(flat):
        raise ShapeMismatch(f"slot used twice in one product: {flat}")
    order = tuple(sorted(flat))
    if tuple(flat) == order:
        return order, None
    pos = {s: i for i, s in enumerate(order)}
    return order, [pos[s] for s in flat]


def contract(entries, operands, out_rank):
    """Pointwise multilinear contraction ``T^a_{b...} X^b ...`` of expressions."""
    nvars = operands[0].nvars
    order, perm = _merge_plan([x.slots for x in operands])
    cap = _cap(*operands)
    acc = {}
    groups = [x.by_out() for x in operands]
    k = len(operands)
    for key, p in entries.items():
        a = key[0]
        lists = []
        for j in range(k):
            lst = groups[j].get(key[j + 1])
            if not lst:
                break
            lists.append(lst)
        else:
            pterms = list(p.terms.items())
            if k == 1:
                for f1, m1, c1 in lists[0]:
                    for pm, pc in pterms:
                        mk = tuple(map(add, m1, pm))
                        kk = (a, f1, mk)
                        acc[kk] = acc.get(kk, 0) + c1 * pc
                continue
            if k == 2:
                for f1, m1, c1 in lists[0]:
                    for f2, m2, c2 in lists[1]:
                        ff = f1 + f2
                        if perm is not None:
                            ff = _permute(ff, perm)
                        m12 = tuple(map(add, m1, m2))
                        c12 = c1 * c2
                        for pm, pc in pterms:
                            kk = (a, ff, tuple(map(add, m12, pm)))
                            acc[kk] = acc.get(kk, 0) + c12 * pc
                continue
            partial = [((), (0,) * nvars, 1)]
            for lst in lists:
                partial = [
                    (ff + f, tuple(map(add, mm, m)), cc * c) for ff, mm, cc in partial for f, m, c in lst
                ]
            for ff, mm, cc in partial:
                if perm is not None:
                    ff = _permute(ff, perm)
                for pm, pc in pterms:
                    kk = (a, ff, tuple(map(add, mm, pm)))
                    acc[kk] = acc.get(kk, 0) + cc * pc
    return Expr(nvars, out_rank, order, _prune(acc), cap)


def _permute(factors, perm):
    out = [None] * len(factors)
    for src, dst in enumerate(perm):
        out[dst] = factors[src]
    return tuple(out)


_SPLIT = {}


def _split_by_index(op):
    """Group the ``P``/``Q`` (or ``D1``) tensors of an operator by derivative index."""
    key = id(op)
    hit = _SPLIT.get(key)
    if hit is not None and hit[0] is op:
        return hit[1]
    if isinstance(op, BidiffOp):
        Ps, Qs = {}, {}
        for (a, b, c, i), p in op.P.items():
            Ps.setdefault(i, {})[(a, b, c)] = p
        for (a, b, c, i), p in op.Q.items():
            Qs.setdefault(i, {})[(a, b, c)] = p
        val = (Ps, Qs)
    else:
        Ds = {}
        for (z, r, i), p in op.D1.items():
            Ds.setdefault(i, {})[(z, r)] = p
        val = Ds
    _SPLIT[key] = (op, val)
    return val


class JetBackend:
    """Builds residuals as :class:`Expr` objects."""

    def __init__(self, nvars, max_order=None):
        self.nvars = nvars
        self.max_order = max_order

    def variable(self, slot, bundle):
        return Expr.variable(slot, bundle.rank, self.nvars, self.max_order)

    def constant(self, section):
        return Expr.constant(section, self.max_order)

    def bidiff(self, B, x, y):
        if x.rank != B.left.rank or y.rank != B.right.rank:
            raise ShapeMismatch(f"arguments of rank {x.rank}, {y.rank} do not fit {B!r}")
        out = B.out.rank
        terms = [contract(B.C, [x, y], out)] if B.C else []
        Ps, Qs = _split_by_index(B)
        dx, dy = {}, {}
        for i, T in Ps.items():
            dy.setdefault(i, y.partial(i))
            terms.append(contract(T, [x, dy[i]], out))
        for i, T in Qs.items():
            dx.setdefault(i, x.partial(i))
            terms.append(contract(T, [dx[i], y], out))
        return self._sum(terms, x, y, out)

    def first_order(self, D, x):
        if x.rank != D.domain.rank:
            raise ShapeMismatch(f"argument of rank {x.rank} does not fit {D!r}")
        out = D.codomain.rank
        terms = [contract(D.D0, [x], out)] if D.D0 else []
        for i, T in _split_by_index(D).items():
            terms.append(contract(T, [x.partial(i)], out))
        return self._sum(terms, x, None, out)

    def map(self, M, x):
        return contract(M.entries, [x], M.codomain.rank)

    def tensor(self, T, *xs):
        return contract(T.entries, list(xs), T.out.rank)

    def _sum(self, terms, x, y, out):
        if not terms:
            slots = tuple(sorted(x.slots + (y.slots if y is not None else ())))
            return Expr(self.nvars, out, slots, {}, self.max_order)
        total = terms[0]
        for t in terms[1:]:
            total = total + t
        return total

    def add(self, x, y):
        return x + y

    def sub(self, x, y):
        return x - y

    def neg(self, x):
        return -x


class DirectBackend:
    """Evaluates residuals on concrete :class:`Section` values."""

    def __init__(self, nvars):
        self.nvars = nvars

    def variable(self, slot, bundle):
        raise TypeError("the direct backend evaluates concrete sections only")

    def constant(self, section):
        return section

    def bidiff(self, B, x, y):
        return apply_bidiff(B, x, y)

    def first_order(self, D, x):
        return apply_first_order(D, x)

    def map(self, M, x):
        return M.apply(x)

    def tensor(self, T, *xs):
        return T.apply(*xs)

    def add(self, x, y):
        return x + y

    def sub(self, x, y):
        return x - y

    def neg(self, x):
        return -x
