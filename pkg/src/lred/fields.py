"""Bundles, projectable vector fields, brackets and jet prolongation."""

from __future__ import annotations

import itertools
import threading
from dataclasses import dataclass, field

import sympy as sp

from lred.errors import AdmissibilityError, ClosureError, OrderOverflow
from lred.linalg import span_contains
from lred.symkernel import Context, to_text


@dataclass
class BundleSpec:
    """Local trivialization (x^i, u^a) with chart data held in ``ctx``."""

    ctx: Context
    base: list
    fiber: list

    def __post_init__(self):
        if set(self.base) & set(self.fiber):
            raise ValueError("base and fiber symbols must be disjoint")

    @property
    def coords(self):
        return list(self.base) + list(self.fiber)

    @property
    def constraints(self):
        return list(self.ctx.rules)

    @property
    def chart_assumptions(self):
        return list(self.ctx.assumptions)

    def base_dependent(self, e):
        """True if ``e`` involves no fiber (or jet) coordinates."""
        fibers = set(self.fiber) | set(self.ctx.of_kind("jet"))
        free = sp.sympify(e).free_symbols
        if free & fibers:
            return False
        # chart symbols defined through fiber coordinates (rho^2 -> u^2+v^2)
        for s in free:
            d = self.ctx.definitions.get(s)
            if d is not None and not self.base_dependent(d[1]):
                return False
        return True

    @property
    def effective_base_dim(self):
        ruled = {r.atom for r in self.ctx.rules}
        return len([b for b in self.base if b not in ruled])


class VectorField:
    """A derivation ``sum coeffs[s] d/ds``; zero coefficients are dropped."""

    __slots__ = ("coeffs", "name", "_key")

    def __init__(self, coeffs, name=""):
        self.coeffs = {s: sp.sympify(c) for s, c in coeffs.items() if sp.sympify(c) != 0}
        self.name = name
        self._key = tuple(sorted(((s.name, c) for s, c in self.coeffs.items()), key=lambda t: t[0]))

    def __getitem__(self, s):
        return self.coeffs.get(s, sp.S.Zero)

    def __eq__(self, other):
        return isinstance(other, VectorField) and self._key == other._key

    def __hash__(self):
        return hash(self._key)

    def __repr__(self):
        terms = " + ".join(f"({to_text(c)})*d/d{s.name}" for s, c in sorted(self.coeffs.items(), key=lambda t: t[0].name))
        return f"VectorField({self.name or '-'}: {terms or '0'})"

    def is_zero(self):
        return not self.coeffs

    def restrict(self, symbols):
        keep = set(symbols)
        return VectorField({s: c for s, c in self.coeffs.items() if s in keep}, self.name)

    def scaled(self, k, ctx):
        return VectorField({s: ctx.simplify(k * c) for s, c in self.coeffs.items()}, self.name)

    def add(self, other, ctx):
        keys = set(self.coeffs) | set(other.coeffs)
        return VectorField({s: ctx.simplify(self[s] + other[s]) for s in keys})

    def simplified(self, ctx):
        return VectorField({s: ctx.simplify(c) for s, c in self.coeffs.items()}, self.name)

    def to_json(self):
        return {s.name: to_text(c) for s, c in sorted(self.coeffs.items(), key=lambda t: t[0].name)}


def check_admissible(V, bundle):
    """Base coefficients base-only; fiber coefficients affine in the fiber."""
    ctx = bundle.ctx
    allowed = set(bundle.coords)
    for s in V.coeffs:
        if s not in allowed:
            raise AdmissibilityError(f"{V.name}: coefficient on non-coordinate {s}")
    for x in bundle.base:
        if not bundle.base_dependent(V[x]):
            raise AdmissibilityError(f"{V.name}: base coefficient of {x} depends on fiber coordinates")
    for u in bundle.fiber:
        c = sp.cancel(V[u])
        num, den = sp.fraction(c)
        if not bundle.base_dependent(den):
            raise AdmissibilityError(f"{V.name}: fiber coefficient of {u} has a fiber-dependent denominator")
        for w in bundle.fiber:
            if sp.diff(num, w, 2) != 0:
                raise AdmissibilityError(f"{V.name}: fiber coefficient of {u} is not affine in {w}")
        lin = [sp.diff(num, w) for w in bundle.fiber]
        if any(not bundle.base_dependent(l) for l in lin):
            raise AdmissibilityError(f"{V.name}: fiber coefficient of {u} is not affine in the fiber")
        for w in bundle.fiber:
            d = ctx.definitions.get(w)
            if d is not None:
                raise AdmissibilityError(f"{w} cannot be both a fiber coordinate and a derived symbol")
    return True


def apply(V, e, ctx):
    """V(e) simplified modulo the chart rules."""
    e = sp.sympify(e)
    total = sum((c * ctx.grad(e, s) for s, c in V.coeffs.items()), sp.S.Zero)
    return ctx.simplify(total)


def lie_bracket(V, W, ctx):
    keys = set(V.coeffs) | set(W.coeffs)
    out = {}
    for s in keys:
        out[s] = ctx.simplify(apply(V, W[s], ctx) - apply(W, V[s], ctx))
    return VectorField(out)


def linear_combination(fields, coeffs, ctx):
    keys = set().union(*[f.coeffs for f in fields]) if fields else set()
    return VectorField({s: ctx.simplify(sum(c * f[s] for c, f in zip(coeffs, fields))) for s in keys})


@dataclass
class LieAlgebra:
    generators: list
    bundle: BundleSpec
    closure_table: dict = field(default_factory=dict)
    _brackets: dict = field(default_factory=dict, repr=False)

    @property
    def names(self):
        return [g.name for g in self.generators]

    def bracket(self, i, j):
        key = (i, j)
        if key not in self._brackets:
            self._brackets[key] = lie_bracket(self.generators[i], self.generators[j], self.bundle.ctx)
        return self._brackets[key]

    def vectors(self, fields=None):
        coords = self.bundle.coords
        return [[f[s] for s in coords] for f in (fields or self.generators)]

    def check_closure(self):
        """Expand every bracket in the Expr-span of the generators (else ClosureError)."""
        ctx = self.bundle.ctx
        coords = self.bundle.coords
        basis = self.vectors()
        n = len(self.generators)
        for i, j in itertools.combinations(range(n), 2):
            b = self.bracket(i, j)
            if b.is_zero():
                self.closure_table[(i, j)] = [sp.S.Zero] * n
                continue
            vec = [b[s] for s in coords]
            c = _constant_span(basis, vec, ctx)
            if c is None:
                c = span_contains(basis, vec, ctx)
            if c is None:
                raise ClosureError(
                    f"[{self.generators[i].name},{self.generators[j].name}] is not in the span of the generators"
                )
            self.closure_table[(i, j)] = c
        return self.closure_table


def _constant_span(basis, vec, ctx, samples=3):
    """Structure constants guessed at generic points, then verified exactly.

    Returns None when no rational constant combination reproduces ``vec``;
    the caller then falls back to the symbolic span test.
    """
    from fractions import Fraction

    import numpy as np

    from lred.sampling import evaluate_matrix, generic_point
    from lred.errors import LredError

    rng = np.random.default_rng(7)
    exprs = [e for row in basis for e in row] + list(vec)
    rows, rhs = [], []
    try:
        for _ in range(samples):
            point, table = generic_point(ctx, exprs, rng=rng)
            rows.append(evaluate_matrix([[row[i] for row in basis] for i in range(len(vec))], point, table))
            rhs.append(evaluate_matrix([[e] for e in vec], point, table)[:, 0])
    except (LredError, ZeroDivisionError, OverflowError, ValueError):
        return None
    A = np.vstack(rows)
    y = np.concatenate(rhs)
    c, *_ = np.linalg.lstsq(A, y, rcond=None)
    if not np.allclose(A @ c, y, atol=1e-8 * max(1.0, np.abs(y).max())):
        return None
    coeffs = [sp.Rational(Fraction(float(x)).limit_denominator(1000)) for x in c]
    for i, e in enumerate(vec):
        if not ctx.is_zero(e - sum(k * row[i] for k, row in zip(coeffs, basis))):
            return None
    return coeffs


def make_algebra(generators, bundle, check=True):
    for g in generators:
        check_admissible(g, bundle)
    alg = LieAlgebra(list(generators), bundle)
    if check:
        alg.check_closure()
    return alg


# ---------------------------------------------------------------------------
# jets


def jet_name(fiber, index, base_names):
    names = [base_names[i] for i in index]
    if all(len(b) == 1 for b in base_names):
        return f"{fiber}_{''.join(names)}"
    return f"{fiber}_{'_'.join(names)}"


class JetContext:
    """Jet coordinates u^a_I for |I| <= order, declared in ``ctx`` as kind ``jet``."""

    def __init__(self, ctx, base, fiber, order, kind="jet"):
        self.ctx = ctx
        self.base = list(base)
        self.fiber = list(fiber)
        self.order = order
        self.kind = kind
        self.symbols = {}  # (fiber Symbol, sorted index tuple) -> Symbol
        self.index_of = {}  # Symbol -> (fiber, index)
        names = [b.name for b in self.base]
        for u in self.fiber:
            self.symbols[(u, ())] = u
            self.index_of[u] = (u, ())
            for k in range(1, order + 1):
                for idx in itertools.combinations_with_replacement(range(len(self.base)), k):
                    s = ctx.declare(jet_name(u.name, idx, names), kind)
                    self.symbols[(u, idx)] = s
                    self.index_of[s] = (u, idx)
        self._lock = threading.Lock()
        self._prolonged = {}

    def jet(self, u, index):
        return self.symbols[(u, tuple(sorted(index)))]

    def jets_of_order(self, k):
        return [s for (u, idx), s in self.symbols.items() if len(idx) == k]

    @property
    def all_jets(self):
        return list(self.symbols.values())

    def total_derivative(self, e, i):
        """D_i e for base index ``i``; OrderOverflow if a top-order jet occurs."""
        x = self.base[i]
        e = sp.sympify(e)
        out = self.ctx.grad(e, x)
        free = e.free_symbols
        chained = {d for d in self.ctx.definitions if d in free}
        for s, (u, idx) in self.index_of.items():
            if s not in free and not any(self.ctx.definitions[d][1].has(s) for d in chained):
                continue
            de = self.ctx.grad(e, s)
            if de == 0:
                continue
            if len(idx) >= self.order:
                raise OrderOverflow(f"total derivative of {to_text(e)} needs jets beyond order {self.order}")
            out += de * self.jet(u, idx + (i,))
        return self.ctx.simplify(out)

    def prolong(self, V):
        """Prolongation of V to this jet order (cached per field)."""
        with self._lock:
            hit = self._prolonged.get(V)
        if hit is not None:
            return hit
        ctx = self.ctx
        xi = [V[x] for x in self.base]
        # D_i xi^j, reused at every order
        dxi = [[self.total_derivative(xi[j], i) if xi[j] != 0 else sp.S.Zero for j in range(len(self.base))] for i in range(len(self.base))]
        coeffs = dict(V.coeffs)
        phi = {(u, ()): V[u] for u in self.fiber}
        for k in range(1, self.order + 1):
            for u in self.fiber:
                for idx in itertools.combinations_with_replacement(range(len(self.base)), k):
                    parent, i = idx[:-1], idx[-1]
                    val = self.total_derivative(phi[(u, parent)], i)
                    for j in range(len(self.base)):
                        if dxi[i][j] != 0:
                            val -= dxi[i][j] * self.jet(u, parent + (j,))
                    val = ctx.simplify(val)
                    phi[(u, idx)] = val
                    coeffs[self.jet(u, idx)] = val
        out = VectorField(coeffs, V.name)
        with self._lock:
            self._prolonged[V] = out
        return out


def prolong_field(V, jc):
    return jc.prolong(V)


def total_derivative(e, base_symbol, jc):
    return jc.total_derivative(e, jc.base.index(base_symbol))
