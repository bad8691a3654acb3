"""Transversality test, isotropy constraints, kinematic fiber and invariants."""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np
import sympy as sp
from sympy.core.function import AppliedUndef

from lred.errors import (
    ChartDegenerate,
    EmptyKinematic,
    InsufficientInvariants,
    LredError,
    NotTangent,
    NumericDomain,
)
from lred.fields import VectorField, apply
from lred.linalg import (
    Inconsistent,
    certify_pivots,
    check_constant_rank,
    echelon,
    nullspace,
    solve_affine,
)
from lred.sampling import branch_points, evaluate_matrix, generic_point, numeric_rank
from lred.symkernel import eval_numeric, to_text


def _rng(seed):
    return np.random.default_rng(seed)


# ---------------------------------------------------------------------------
# transversality


@dataclass
class TransversalityReport:
    rank_base: int
    rank_total: int
    holds: bool
    witness: dict = field(default_factory=dict)

    def to_json(self):
        return {
            "rank_base": self.rank_base,
            "rank_total": self.rank_total,
            "holds": self.holds,
            "witness": self.witness,
        }


def transversality_report(alg, seed=42):
    """Generic ranks of [xi] and [xi | eta] over the chart's function field."""
    b = alg.bundle
    ctx = b.ctx
    base_rows = [[g[x] for x in b.base] for g in alg.generators]
    full_rows = [[g[s] for s in b.coords] for g in alg.generators]
    eb = echelon(base_rows, ctx)
    ef = echelon(full_rows, ctx)
    rng = _rng(seed)
    certify_pivots(eb, ctx, rng)
    certify_pivots(ef, ctx, rng)
    check_constant_rank(base_rows, ctx, eb.rank, rng, "base coefficient matrix")
    check_constant_rank(full_rows, ctx, ef.rank, rng, "full coefficient matrix")
    witness = {}
    if eb.rank != ef.rank:
        # a combination of generators with no base part but nonzero fiber part
        cols = [[g[x] for g in alg.generators] for x in b.base]
        for phi in nullspace(cols, ctx, len(alg.generators)):
            eta = {u.name: to_text(ctx.simplify(sum(p * g[u] for p, g in zip(phi, alg.generators)))) for u in b.fiber}
            eta = {k: v for k, v in eta.items() if v != "0"}
            if eta:
                witness = {
                    "kernel_combo": [to_text(p) for p in phi],
                    "fiber_part": eta,
                }
                break
    return TransversalityReport(eb.rank, ef.rank, eb.rank == ef.rank, witness)


# ---------------------------------------------------------------------------
# isotropy constraints


@dataclass
class IsotropyConstraintSet:
    kernel_combos: list
    constraint_exprs: list
    discrete_constraints: list = field(default_factory=list)

    @property
    def all_exprs(self):
        return list(self.constraint_exprs) + list(self.discrete_constraints)


def isotropy_constraints(alg, discrete=()):
    """Kernel of [xi^i_a] and the affine fiber equations sum_a phi^a eta_a = 0.

    ``discrete`` is a list of maps fiber Symbol -> Expr (fiber-linear);
    each contributes the equations g(u) - u = 0.
    """
    b = alg.bundle
    ctx = b.ctx
    n = len(alg.generators)
    cols = [[g[x] for g in alg.generators] for x in b.base]
    if all(e == 0 for row in cols for e in row):
        combos = [[sp.Integer(int(i == j)) for j in range(n)] for i in range(n)]
    else:
        combos = nullspace(cols, ctx, n)
    exprs = []
    for phi in combos:
        for u in b.fiber:
            e = ctx.simplify(sum(p * g[u] for p, g in zip(phi, alg.generators)))
            if e != 0:
                exprs.append(ctx.simplify(sp.fraction(e)[0]))
    disc = []
    for g in discrete:
        for u in b.fiber:
            e = ctx.simplify(sp.sympify(g.get(u, u)) - u)
            if e != 0:
                disc.append(e)
    return IsotropyConstraintSet(combos, exprs, disc)


# ---------------------------------------------------------------------------
# kinematic fiber


@dataclass
class KinematicBundle:
    bundle: object
    v: list  # kinematic fiber coordinates
    inclusion: dict  # fiber Symbol -> Expr in (base, v)
    fiber_dim: int
    residual_generators: list
    constraint_rank: int
    constraints: list = field(default_factory=list)

    def iota(self, e):
        """Pull back an expression on E to the kinematic bundle."""
        return self.bundle.ctx.simplify(sp.sympify(e).xreplace(self.inclusion))

    @property
    def coords(self):
        return list(self.bundle.base) + list(self.v)

    def to_json(self):
        return {
            "fiber_dim": self.fiber_dim,
            "v": [s.name for s in self.v],
            "inclusion": {u.name: to_text(e) for u, e in self.inclusion.items()},
            "constraint_rank": self.constraint_rank,
        }


def _affine_system(exprs, fiber, ctx):
    A, rhs = [], []
    zero = {u: 0 for u in fiber}
    for e in exprs:
        row = [ctx.simplify(sp.diff(e, u)) for u in fiber]
        if any(r.free_symbols & set(fiber) for r in row):
            raise LredError(f"constraint {to_text(e)} is not affine in the fiber", square="kinematic")
        A.append(row)
        rhs.append(ctx.simplify(-sp.sympify(e).xreplace(zero)))
    return A, rhs


def solve_kinematic_fiber(cs, alg, seed=42, prefix="k_"):
    """Parametrize the solution set of the isotropy constraints by new v^a."""
    b = alg.bundle
    ctx = b.ctx
    exprs = cs.all_exprs
    fiber = list(b.fiber)
    if not exprs:
        part, basis, rank = [sp.S.Zero] * len(fiber), None, 0
        free = list(range(len(fiber)))
    else:
        A, rhs = _affine_system(exprs, fiber, ctx)
        try:
            part, basis, ech = solve_affine(A, rhs, ctx)
        except Inconsistent as exc:
            combo = [to_text(c) for c in exc.combo]
            raise EmptyKinematic(
                "isotropy constraints are inconsistent: the kinematic bundle is empty, no invariant sections exist",
                certificate={"combination": combo, "constraints": [to_text(e) for e in exprs]},
            ) from None
        rank = ech.rank
        certify_pivots(ech, ctx, _rng(seed))
        check_constant_rank(A, ctx, rank, _rng(seed + 1), "isotropy constraint matrix")
        free = ech.free
    v = [ctx.declare(prefix + fiber[f].name, "reduced-fiber") for f in free]
    inclusion = {}
    for i, u in enumerate(fiber):
        if basis is None:
            inclusion[u] = v[i]
        else:
            inclusion[u] = ctx.simplify(part[i] + sum(vec[i] * vs for vec, vs in zip(basis, v)))
    kb = KinematicBundle(b, v, inclusion, len(v), [], rank, exprs)
    for e in exprs:
        if kb.iota(e) != 0:
            raise LredError(f"inclusion does not satisfy constraint {to_text(e)}", square="kinematic")
    kb.residual_generators = [residual_field(g, kb) for g in alg.generators]
    return kb


def residual_field(V, kb, strict=True):
    """V restricted to the kinematic bundle, written in (base, v) coordinates.

    Raises NotTangent if V does not preserve the image of the inclusion.
    """
    b = kb.bundle
    ctx = b.ctx
    fiber = list(b.fiber)
    by_v = {}
    for vs in kb.v:
        # v^a is the free fiber slot whose inclusion is v^a itself
        u = next(u for u in fiber if kb.inclusion[u] == vs)
        by_v[vs] = kb.iota(V[u])
    coeffs = {x: V[x] for x in b.base}
    coeffs.update(by_v)
    W = VectorField(coeffs, V.name)
    for u in fiber:
        lhs = kb.iota(V[u])
        rhs = apply(W, kb.inclusion[u], ctx)
        if ctx.simplify(lhs - rhs) != 0:
            if strict:
                raise NotTangent(f"{V.name or 'field'} is not tangent to the kinematic bundle (component {u})")
            return None
    return W


# ---------------------------------------------------------------------------
# invariants


@dataclass
class Invariant:
    name: str
    expr: sp.Expr  # in base (and v) coordinates
    symbol: sp.Expr  # symbol standing for the invariant in reduced expressions
    provenance: str

    def to_json(self):
        return {"name": self.name, "expr": to_text(self.expr), "provenance": self.provenance}


@dataclass
class InvariantSet:
    base: list
    fiber: list

    @property
    def base_symbols(self):
        return [i.symbol for i in self.base]

    def to_json(self):
        return {"base": [i.to_json() for i in self.base], "fiber": [i.to_json() for i in self.fiber]}


def moving_symbols(fields, ctx, coords):
    """Coordinates some field acts on, plus chart symbols defined through them."""
    moving = [s for s in coords if any(f[s] != 0 for f in fields)]
    for d, (_, rhs) in ctx.definitions.items():
        if d not in moving and rhs.free_symbols & set(moving):
            moving.append(d)
    return moving


def monomials(symbols, degree, ctx, min_degree=1):
    """Monomials of total degree in [min_degree, degree], skipping ruled powers."""
    ruled = {r.atom: r.power for r in ctx.rules if r.atom in symbols}
    out = []
    for d in range(min_degree, degree + 1):
        for combo in itertools.combinations_with_replacement(symbols, d):
            if any(combo.count(a) >= p for a, p in ruled.items()):
                continue
            out.append(sp.Mul(*combo))
    return out


def _poly_gens(expr, moving):
    gens = set(moving)
    for node in sp.preorder_traversal(expr):
        if isinstance(node, (AppliedUndef, sp.Derivative)) and node.free_symbols & set(moving):
            gens.add(node)
    return sorted(gens, key=sp.default_sort_key)


def undetermined_solve(ctx, candidates, residuals_of, moving):
    """Find F-linear combinations sum c_j candidates[j] annihilated by ``residuals_of``.

    ``residuals_of(candidate)`` returns a list of Exprs that must vanish; they
    must be F-linear in the candidate, F being functions of non-moving symbols.
    Returns a list of coefficient vectors.
    """
    n = len(candidates)
    if n == 0:
        return []
    table = [residuals_of(c) for c in candidates]
    rows = []
    for k in range(len(table[0])):
        terms = [ctx.simplify(t[k]) for t in table]
        if all(t == 0 for t in terms):
            continue
        dens = [sp.fraction(t)[1] for t in terms]
        lcm = dens[0]
        for d in dens[1:]:
            lcm = sp.lcm(lcm, d)
        nums = [sp.expand(ctx.reduce(t * lcm)) if t != 0 else sp.S.Zero for t in terms]
        gens = _poly_gens(sp.Add(*nums), moving)
        coeff_maps = []
        keys = set()
        for num in nums:
            if num == 0:
                coeff_maps.append({})
                continue
            p = sp.Poly(num, *gens) if gens else None
            cm = dict(p.terms()) if p is not None else {(): num}
            coeff_maps.append(cm)
            keys |= set(cm)
        for key in sorted(keys):
            rows.append([cm.get(key, sp.S.Zero) for cm in coeff_maps])
    if not rows:
        return [[sp.Integer(int(i == j)) for j in range(n)] for i in range(n)]
    if _full_column_rank(rows, ctx, n):
        return []
    return nullspace(rows, ctx, n)


def _full_column_rank(rows, ctx, n, seed=7):
    """Exact rank n is implied by well-conditioned rank n at one point of
    every sign branch: specializing never raises the rank.
    """
    if len(rows) < n:
        return False
    try:
        point, table = generic_point(ctx, [e for r in rows for e in r], rng=_rng(seed))
        pts = branch_points(ctx, point, table)
        if pts is None:
            return False
        for q in pts:
            m = evaluate_matrix(rows, q, table)
            if not np.all(np.isfinite(m)):
                return False
            sv = np.linalg.svd(m, compute_uv=False)
            if sv[-1] <= 1e-6 * sv[0]:
                return False
    except (ChartDegenerate, NumericDomain, ZeroDivisionError, OverflowError, ValueError):
        return False
    return True


def _leading_normalize(expr, moving, ctx):
    num, den = sp.fraction(sp.cancel(expr))
    gens = _poly_gens(num, moving)
    if not gens:
        return ctx.simplify(expr)
    p = sp.Poly(num, *gens)
    lc = p.coeffs()[0]
    return ctx.simplify(expr / lc)


def _jacobian_rank(exprs, wrt, ctx, seed):
    if not exprs:
        return 0
    rows = [[ctx.grad(e, s) for s in wrt] for e in exprs]
    rng = _rng(seed)
    best = 0
    for _ in range(2):
        try:
            point, table = generic_point(ctx, [e for r in rows for e in r], rng=rng)
            best = max(best, numeric_rank(rows, point, table, rtol=1e-8))
        except ChartDegenerate:
            continue
    return best


def _greedy_independent(found, wrt, ctx, seed, start=()):
    chosen = list(start)
    rank = _jacobian_rank([c.expr for c in chosen], wrt, ctx, seed)
    for cand in found:
        r = _jacobian_rank([c.expr for c in chosen] + [cand.expr], wrt, ctx, seed)
        if r > rank:
            chosen.append(cand)
            rank = r
    return chosen, rank


def _search(ctx, fields, coords, moving, max_degree, denominators, v=(), seed=42):
    """Degree-bounded invariants of ``fields`` among polynomials in ``moving``."""
    out = []
    vset = set(v)
    dens = [sp.S.One] + [sp.sympify(d) for d in denominators]
    for den in dens:
        for deg in range(1, max_degree + 1):
            cands = [m for m in monomials(moving, deg, ctx) if not vset or sum(sp.degree(m, s) for s in vset) == 1]
            cands = [m for m in cands if not (den != 1 and m == den)]
            if not cands:
                continue
            sols = undetermined_solve(ctx, cands, lambda m: [apply(f, m / den, ctx) for f in fields], moving)
            for vec in sols:
                expr = ctx.simplify(sum(c * m for c, m in zip(vec, cands)) / den)
                if expr.is_Number:
                    continue
                out.append((deg, expr))
    out.sort(key=lambda t: (t[0], len(to_text(t[1])), to_text(t[1])))
    seen, uniq = set(), []
    for deg, e in out:
        e = _leading_normalize(e, moving, ctx)
        if e not in seen:
            seen.add(e)
            uniq.append((deg, e))
    return uniq


def _fresh_name(ctx, stem):
    name = stem
    k = 1
    while name in ctx.symbols or name in ctx.functions:
        k += 1
        name = f"{stem}{k}"
    return name


def compute_invariants(kb, alg, max_degree=4, denominators=(), hints=None, seed=42):
    """Base invariants x~^r and fiber invariants on the kinematic bundle.

    ``hints`` is ``{"base": [(name, expr)], "fiber": [(name, expr)]}`` with
    fiber hints written in E's coordinates (pulled back through the inclusion).
    """
    b = kb.bundle
    ctx = b.ctx
    hints = hints or {}
    gens = kb.residual_generators
    base_fields = [VectorField({x: g[x] for x in b.base}, g.name) for g in gens]
    rank_base = echelon([[g[x] for x in b.base] for g in gens], ctx).rank if gens else 0
    need = b.effective_base_dim - rank_base
    ruled = {r.atom for r in ctx.rules}
    base_free = [x for x in b.base if x not in ruled]

    # base invariants -------------------------------------------------------
    hinted = []
    for name, e in hints.get("base", []):
        e = sp.sympify(e)
        if any(apply(f, e, ctx) != 0 for f in base_fields):
            raise InsufficientInvariants(f"base invariant hint {name} = {to_text(e)} is not invariant")
        hinted.append(Invariant(name, e, None, "user-supplied-verified"))
    fixed = [
        Invariant(x.name, x, x, "coordinate")
        for x in base_free
        if all(f[x] == 0 for f in base_fields) and not any(h.expr == x for h in hinted)
    ]
    moving = moving_symbols(base_fields, ctx, b.base)
    chosen, rank = _greedy_independent(hinted + fixed, base_free, ctx, seed)
    if rank < need and moving:
        found = [
            Invariant("", e, None, f"computed(degree {d})")
            for d, e in _search(ctx, base_fields, b.base, moving, max_degree, denominators.get("base", []) if isinstance(denominators, dict) else denominators, seed=seed)
        ]
        chosen, rank = _greedy_independent(found, base_free, ctx, seed, start=chosen)
    if rank < need:
        raise InsufficientInvariants(
            f"found {rank} independent base invariants, need {need}; raise --max-degree or supply hints"
        )
    base_inv = []
    for k, inv in enumerate(chosen):
        if isinstance(inv.expr, sp.Symbol) and not inv.name:
            inv.name = inv.expr.name
        if isinstance(inv.expr, sp.Symbol) and inv.name == inv.expr.name:
            inv.symbol = inv.expr
        else:
            name = inv.name or _fresh_name(ctx, f"s{k + 1}")
            inv.name = name
            sym = ctx.declare(name, "reduced-base")
            ctx.define(sym, inv.expr)
            inv.symbol = sym
        base_inv.append(inv)

    # fiber invariants ------------------------------------------------------
    fiber_inv = []
    fhints = []
    for name, e in hints.get("fiber", []):
        pulled = kb.iota(sp.sympify(e))
        if any(apply(g, pulled, ctx) != 0 for g in gens):
            raise InsufficientInvariants(f"fiber invariant hint {name} = {to_text(e)} is not invariant")
        fhints.append(Invariant(name, pulled, None, "user-supplied-verified"))
    fixed = [Invariant("", vs, None, "coordinate") for vs in kb.v if all(g[vs] == 0 for g in gens)]
    chosen, rank = _greedy_independent(fhints + fixed, kb.v, ctx, seed)
    if rank < kb.fiber_dim:
        fmoving = moving_symbols(gens, ctx, kb.coords)
        fd = denominators.get("fiber", []) if isinstance(denominators, dict) else denominators
        found = [
            Invariant("", e, None, f"computed(degree {d})")
            for d, e in _search(ctx, gens, kb.coords, fmoving, max_degree + 1, fd, v=kb.v, seed=seed)
        ]
        chosen, rank = _greedy_independent(found, kb.v, ctx, seed, start=chosen)
    if rank < kb.fiber_dim:
        raise InsufficientInvariants(
            f"found {rank} independent fiber invariants, need {kb.fiber_dim}; raise --max-degree or supply hints"
        )
    for inv in chosen:
        if not inv.name:
            lead = next(vs for vs in kb.v if inv.expr.has(vs))
            stem = lead.name[2:] if lead.name.startswith("k_") else lead.name
            inv.name = _fresh_name(ctx, stem[:1].upper() + stem[1:])
        fiber_inv.append(inv)
    return InvariantSet(base_inv, fiber_inv)


def kinematic_diagram(tr, kb, inv):
    """Coordinate form of (x~, v) <- (x~, x^, v) -> (x~, x^, iota(x, v))."""
    b = kb.bundle
    return {
        "orbit_space": [i.name for i in inv.base],
        "kinematic_bundle": [x.name for x in b.base] + [i.name for i in inv.fiber],
        "total_space": [s.name for s in b.coords],
        "inclusion": {u.name: to_text(e) for u, e in kb.inclusion.items()},
        "base_invariants": {i.name: to_text(i.expr) for i in inv.base},
        "fiber_invariants": {i.name: to_text(i.expr) for i in inv.fiber},
        "fiber_dim": kb.fiber_dim,
        "transversal": tr.holds if tr is not None else None,
    }
