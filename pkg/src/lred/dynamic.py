"""Dynamic reduction: ansatz, restriction, invariant frame and factorization."""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np
import sympy as sp
from sympy.core.function import AppliedUndef

from lred.errors import (
    ChartDegenerate,
    FactorizationFailure,
    IndependenceFailure,
    InsufficientFrame,
    LredError,
    NumericDomain,
    UnboundFunction,
)
from lred.fields import VectorField, apply
from lred.kinematic import monomials, moving_symbols, undetermined_solve
from lred.linalg import Inconsistent, nullspace, solve_affine
from lred.sampling import function_atoms, generic_point, numeric_rank
from lred.symkernel import RewriteRule, eval_numeric, simplify, to_text


@dataclass
class OperatorSpec:
    order: int
    frame: list  # frame Symbols f^A
    components: dict  # f^A -> Expr over jets
    action: dict = field(default_factory=dict)  # generator name -> {f^A: Expr linear in frame}
    constraints: list = field(default_factory=list)  # Exprs linear in frame symbols
    builtin: str | None = None

    def action_matrix(self, name):
        """Lambda with L_V f^A = sum_B Lambda[A][B] f^B (zero if not given)."""
        act = self.action.get(name, {})
        return [[sp.diff(sp.sympify(act.get(fa, 0)), fb) for fb in self.frame] for fa in self.frame]


@dataclass
class Ansatz:
    kb: object
    inv: object
    unknowns: list  # applied opaque functions (or plain symbols on a point orbit space)
    v_solution: dict  # v Symbol -> Expr in unknowns and base
    section: dict  # fiber Symbol -> Expr
    jets: dict = field(default_factory=dict)
    relations: list = field(default_factory=list)  # pulled-back fiber relations
    order: int = 0
    rules: list = field(default_factory=list)  # relations solved as rewrite rules

    @property
    def substitution(self):
        out = dict(self.section)
        out.update(self.jets)
        return out

    def to_json(self):
        return {
            "unknowns": [to_text(u) for u in self.unknowns],
            "section": {u.name: to_text(e) for u, e in self.section.items()},
            "relations": [to_text(r) for r in self.relations],
            "rules": [f"{to_text(r.atom ** r.power)} -> {to_text(r.rhs)}" for r in self.rules],
        }


def _positive_exprs(ctx, subst):
    out = []
    for e, sign in ctx.assumptions:
        r = ctx.simplify(sp.sympify(e).xreplace(subst))
        out.append(r if sign == ">" else -r)
    return out


def build_ansatz(kb, inv):
    """Promote fiber invariants to unknowns of the base invariants and pull back."""
    b = kb.bundle
    ctx = b.ctx
    args = inv.base_symbols
    unknowns = []
    for f in inv.fiber:
        if args:
            fn = ctx.declare_function(f.name, args)
            unknowns.append(fn.apply())
        else:
            unknowns.append(ctx.declare(f.name, "reduced-fiber"))
    # invariants are affine in v: solve I_k(x, v) = F_k for v
    A = [[ctx.simplify(sp.diff(f.expr, vs)) for vs in kb.v] for f in inv.fiber]
    if any(e.free_symbols & set(kb.v) for row in A for e in row):
        raise LredError("fiber invariants must be affine in the kinematic fiber coordinates", square="ansatz")
    zero = {vs: 0 for vs in kb.v}
    rhs = [ctx.simplify(U - f.expr.xreplace(zero)) for U, f in zip(unknowns, inv.fiber)]
    try:
        sol, basis, _ = solve_affine(A, rhs, ctx)
    except Inconsistent:
        raise LredError("fiber invariants cannot be solved for the kinematic coordinates", square="ansatz") from None
    if basis:
        raise LredError("fiber invariants do not determine the kinematic coordinates", square="ansatz")
    v_sol = dict(zip(kb.v, sol))
    section = {u: ctx.simplify(e.xreplace(v_sol)) for u, e in kb.inclusion.items()}
    a = Ansatz(kb, inv, unknowns, v_sol, section)
    # fiber rules pulled back through the ansatz
    for r in list(ctx.rules):
        if isinstance(r.atom, sp.Symbol) and r.atom in section:
            rel = ctx.simplify(section[r.atom] ** r.power - r.rhs.xreplace(section))
            if rel == 0:
                continue
            rel = sp.factor_terms(sp.fraction(rel)[0])
            _add_relation(a, rel, ctx)
    _collapse_fiber_charts(a)
    return a


def _add_relation(a, rel, ctx):
    """c*K^n + d with K a plain unknown absent from c and d becomes the rule
    K^n -> -d/c; the last such unknown is chosen (sphere-like relations)."""
    syms = [u for u in a.unknowns if isinstance(u, sp.Symbol) and rel.has(u)]
    for K in reversed(syms):
        terms = sp.Poly(rel, K).terms()
        if len(terms) != 2 or terms[1][0] != (0,):
            continue
        c = terms[0][1]
        if c.free_symbols & set(syms):
            continue
        rule = RewriteRule(K, terms[0][0][0], ctx.simplify(-terms[1][1] / c))
        ctx.add_rule(rule)
        a.rules.append(rule)
        return
    a.relations.append(rel)


def _collapse_fiber_charts(a):
    """Chart symbols defined through fiber coordinates (rho^2 -> u^2+v^2+w^2)
    collapse to a section expression when the pulled-back rhs is a perfect power."""
    ctx = a.kb.bundle.ctx
    fibers = set(a.section)
    pos = _positive_exprs(ctx, a.section)
    for d, (n, rhs) in list(ctx.definitions.items()):
        if not rhs.free_symbols & fibers:
            continue
        pulled = sp.factor(ctx.simplify(rhs.xreplace(a.section)))
        root = None
        if n == 1:
            root = pulled
        elif isinstance(pulled, sp.Pow) and pulled.exp == n:
            q = pulled.base
            if any(ctx.simplify(q - p) == 0 for p in pos):
                root = q
            elif n % 2 == 0 and any(ctx.simplify(q + p) == 0 for p in pos):
                root = -q
            elif n % 2 == 1:
                root = q
        if root is None:
            raise LredError(f"chart symbol {d} does not collapse on the ansatz", square="ansatz")
        a.section[d] = root


def prolong_ansatz(a, jc, order=None):
    """Jet substitution map u^a_I -> D_I s^a up to ``order`` (chain rule)."""
    ctx = a.kb.bundle.ctx
    order = jc.order if order is None else order
    jets = {}
    for (u, idx), s in jc.symbols.items():
        if not idx or len(idx) > order or u not in a.section:
            continue
        parent = jc.symbols[(u, idx[:-1])]
        src = a.section[u] if not idx[:-1] else jets[parent]
        jets[s] = ctx.simplify(ctx.grad(src, jc.base[idx[-1]]))
    a.jets = jets
    a.order = order
    return a


def restrict_operator(op, a):
    ctx = a.kb.bundle.ctx
    if op.builtin:
        return BUILTINS[op.builtin](op, a)
    sub = a.substitution
    return {f: ctx.simplify(sp.sympify(e).xreplace(sub)) for f, e in op.components.items()}


# ---------------------------------------------------------------------------
# builtin operators


def _einstein_upper(op, a):
    """Contravariant Einstein tensor of the ansatz metric, components in frame order."""
    b = a.kb.bundle
    ctx = b.ctx
    xs = list(b.base)
    n = len(xs)
    names = {}
    for f in op.frame:
        names[f] = op.components[f]  # the component expr names the metric slot, e.g. g_uv
    g = sp.zeros(n, n)
    for u, e in a.section.items():
        i, j = _metric_slot(u.name, [x.name for x in xs])
        if i is None:
            continue
        g[i, j] = g[j, i] = e
    gi = g.inv(method="LU").applyfunc(ctx.simplify)

    def d(e, k):
        return ctx.grad(e, xs[k])

    gam = [[[ctx.simplify(sum(gi[l, m] * (d(g[m, i], j) + d(g[m, j], i) - d(g[i, j], m)) for m in range(n)) / 2)
             for j in range(n)] for i in range(n)] for l in range(n)]
    ric = sp.zeros(n, n)
    for i in range(n):
        for j in range(i, n):
            s = 0
            for l in range(n):
                s += d(gam[l][i][j], l) - d(gam[l][i][l], j)
                for m in range(n):
                    s += gam[l][l][m] * gam[m][i][j] - gam[l][j][m] * gam[m][i][l]
            ric[i, j] = ric[j, i] = ctx.simplify(s)
    R = ctx.simplify(sum(gi[i, j] * ric[i, j] for i in range(n) for j in range(n)))
    G = (ric - R * g / 2).applyfunc(ctx.simplify)
    Gu = (gi * G * gi).applyfunc(ctx.simplify)
    out = {}
    for f in op.frame:
        i, j = _metric_slot(str(names[f]), [x.name for x in xs])
        out[f] = Gu[i, j]
    return out


def _metric_slot(name, base_names):
    if not name.startswith("g_"):
        return None, None
    tail = name[2:]
    parts = tail.split("_") if "_" in tail else list(tail)
    if len(parts) != 2 or any(p not in base_names for p in parts):
        return None, None
    i, j = sorted(base_names.index(p) for p in parts)
    return i, j


BUILTINS = {"einstein_upper": _einstein_upper}


# ---------------------------------------------------------------------------
# invariant frame


@dataclass
class InvariantFrame:
    M: list  # rows: frame sections f~^Q as coefficient vectors over f^A
    frame: list  # ambient frame symbols
    degree: int = 0
    certificate: list = field(default_factory=list)

    @property
    def dim(self):
        return len(self.M)

    def to_json(self):
        return {
            "dim": self.dim,
            "frame": [f.name for f in self.frame],
            "M": [[to_text(c) for c in row] for row in self.M],
            "degree": self.degree,
        }


def frame_action(op, gens, kb):
    """Per generator: Lambda pulled back to the kinematic bundle."""
    out = []
    for g in gens:
        lam = op.action_matrix(g.name)
        out.append([[kb.iota(e) for e in row] for row in lam])
    return out


def _adapted(op, gens, kb, pullback):
    """Generators, pulled-back action and constraint rows for the frame search.

    With ``pullback`` (kinematic fiber coordinates in terms of the fiber
    invariants) the search runs in coordinates (base, invariants): the
    invariants are annihilated, so only the base parts of the generators act
    and the invariants join the coefficient field.
    """
    ctx = kb.bundle.ctx
    lams = frame_action(op, gens, kb)
    cons = [[kb.iota(sp.diff(c, f)) for f in op.frame] for c in op.constraints]
    coords = kb.coords
    if pullback:
        coords = kb.bundle.base
        gens = [g.restrict(coords) for g in gens]

        def pb(e):
            return ctx.simplify(sp.sympify(e).xreplace(pullback))

        lams = [[[pb(e) for e in row] for row in lam] for lam in lams]
        cons = [[pb(e) for e in row] for row in cons]
    return gens, lams, cons, moving_symbols(gens, ctx, coords)


def _frame_search(op, kb, gens, degree, seed, pullback=None):
    ctx = kb.bundle.ctx
    nf = len(op.frame)
    gens, lams, cons, moving = _adapted(op, gens, kb, pullback)
    monos = [sp.S.One] + monomials(moving, degree, ctx)
    cands = [(A, m) for A in range(nf) for m in monos]

    def residuals(cand):
        A, m = cand
        res = []
        for g, lam in zip(gens, lams):
            Vm = apply(g, m, ctx)
            for B in range(nf):
                e = lam[A][B] * m
                if B == A:
                    e += Vm
                res.append(e)
        for row in cons:
            res.append(row[A] * m)
        return res

    sols = undetermined_solve(ctx, cands, residuals, moving)
    vecs = []
    for s in sols:
        row = [sp.S.Zero] * nf
        for coef, (A, m) in zip(s, cands):
            row[A] += coef * m
        vecs.append([ctx.simplify(e) for e in row])
    vecs = [_normalize_row(v, moving, ctx) for v in vecs if any(e != 0 for e in v)]
    vecs.sort(key=lambda v: (max(_deg(e, moving) for e in v), [len(to_text(e)) for e in v], [to_text(e) for e in v]))
    return _independent_rows(vecs, ctx, seed)


def _deg(e, moving):
    num = sp.fraction(e)[0]
    gens = [s for s in moving if num.has(s)]
    if not gens:
        return 0
    try:
        return sp.Poly(num, *gens).total_degree()
    except sp.PolynomialError:
        return 99


def _normalize_row(row, moving, ctx):
    first = next(e for e in row if e != 0)
    num, den = sp.fraction(sp.cancel(first))
    gens = [s for s in moving if num.has(s)]
    lc = sp.Poly(num, *gens).coeffs()[0] if gens else num
    scale = lc / den
    return [ctx.simplify(e / scale) for e in row]


def _independent_rows(rows, ctx, seed):
    if not rows:
        return []
    rng = np.random.default_rng(seed)
    exprs = [e for r in rows for e in r]
    point, table = generic_point(ctx, exprs, rng=rng)
    chosen, rank = [], 0
    for r in rows:
        k = numeric_rank(chosen + [r], point, table, rtol=1e-8)
        if k > rank:
            chosen.append(r)
            rank = k
    return chosen


def invariant_frame(op, gens, kb, max_degree=4, seed=42, target=None, min_degree=0, pullback=None):
    """Invariant combinations c_A f^A over the kinematic bundle.

    Searches degree by degree; with ``target`` (restricted operator) it stops
    at the first degree whose frame expresses the target.
    """
    ctx = kb.bundle.ctx
    frame = None
    for deg in range(min_degree, max_degree + 1):
        rows = _frame_search(op, kb, gens, deg, seed, pullback)
        frame = InvariantFrame(rows, list(op.frame), deg)
        if target is not None:
            try:
                _solve_factor(target, frame, ctx, pullback)
                break
            except FactorizationFailure:
                continue
    frame.certificate = _frame_certificate(op, gens, kb, frame, pullback)
    return frame


def _frame_certificate(op, gens, kb, frame, pullback=None):
    ctx = kb.bundle.ctx
    gens, lams, _, _ = _adapted(op, gens, kb, pullback)
    out = []
    for row in frame.M:
        ok = True
        for g, lam in zip(gens, lams):
            for B in range(len(op.frame)):
                e = apply(g, row[B], ctx) + sum(row[A] * lam[A][B] for A in range(len(op.frame)))
                if ctx.simplify(e) != 0:
                    ok = False
        out.append(ok)
    if not all(out):
        raise InsufficientFrame("frame section failed its invariance certificate")
    return out


# ---------------------------------------------------------------------------
# factorization and descent


@dataclass
class ReducedOperator:
    components: list  # Delta~_Q in reduced variables
    raw: list  # Delta~_Q before rewriting in reduced coordinates
    frame: InvariantFrame
    factorization_ok: bool
    independence: dict
    cross_section: dict
    names: list = field(default_factory=list)

    def to_json(self):
        return {
            "components": {n: to_text(c) for n, c in zip(self.names, self.components)},
            "frame": self.frame.to_json(),
            "certificates": {
                "factorization": self.factorization_ok,
                "independence": self.independence,
            },
            "cross_section": {k.name: to_text(v) for k, v in self.cross_section.items()},
        }


def _pulled_rows(frame, ctx, pullback):
    if not pullback:
        return frame.M
    return [[ctx.simplify(sp.sympify(e).xreplace(pullback)) for e in row] for row in frame.M]


def _solve_factor(restricted, frame, ctx, pullback=None):
    fs = frame.frame
    M = _pulled_rows(frame, ctx, pullback)
    A = [[M[q][i] for q in range(frame.dim)] for i in range(len(fs))]
    b = [restricted.get(f, sp.S.Zero) for f in fs]
    if frame.dim == 0:
        if all(ctx.simplify(e) == 0 for e in b):
            return []
        raise FactorizationFailure("restricted operator is nonzero but the invariant frame is empty")
    try:
        sol, basis, _ = solve_affine(A, b, ctx)
    except Inconsistent:
        raise FactorizationFailure(
            "restricted operator is not in the span of the invariant frame (non-invariant operator or frame degree too low)"
        ) from None
    return sol


def _constraint_functions(ctx, base):
    out = []
    for r in ctx.rules:
        if isinstance(r.atom, sp.Symbol) and r.atom in base:
            out.append(r.atom**r.power - r.rhs)
    return out


def parametric_directions(inv, b):
    """Vector fields tangent to the level sets of the base invariants."""
    ctx = b.ctx
    rows = [[ctx.grad(i.expr, x) for x in b.base] for i in inv.base]
    rows += [[ctx.grad(c, x) for x in b.base] for c in _constraint_functions(ctx, b.base)]
    rows = [[ctx.simplify(e) for e in r] for r in rows]
    if not rows:
        return [[sp.Integer(int(i == j)) for j in range(len(b.base))] for i in range(len(b.base))]
    return nullspace(rows, ctx, len(b.base))


def independence_certificate(exprs, inv, b):
    ctx = b.ctx
    dirs = parametric_directions(inv, b)
    fails = []
    for q, e in enumerate(exprs):
        for w in dirs:
            d = ctx.simplify(sum(c * ctx.grad(e, x) for c, x in zip(w, b.base)))
            if d != 0:
                fails.append((q, [to_text(c) for c in w], to_text(d)))
    return {"directions": [[to_text(c) for c in w] for w in dirs], "ok": not fails}, fails


def _candidate_sections(inv, b):
    """Cross-sections x = sigma(x~): pinned symbols carry the invariants,
    the remaining parametric symbols are set to 0 or 1."""
    ctx = b.ctx
    ruled = {r.atom for r in ctx.rules}
    red = set(inv.base_symbols)
    params = [x for x in b.base if x not in red and x not in ruled]
    defs = [(s, *ctx.definitions[s]) for s in inv.base_symbols if s not in b.base and s in ctx.definitions]
    pools = [[x for x in params if rhs.has(x)] for _, _, rhs in defs]
    out = []
    for choice in itertools.product(*pools):
        if len(set(choice)) < len(choice):
            continue
        rest = [x for x in params if x not in choice]
        for vals in itertools.product([0, 1], repeat=len(rest)):
            sigma = {x: sp.Integer(v) for x, v in zip(rest, vals)}
            ok = True
            for (s, n, rhs), x in zip(defs, choice):
                r = ctx.simplify(rhs.xreplace(sigma))
                if n > 1:
                    if ctx.simplify(r - x**n) != 0:
                        ok = False
                        break
                    sigma[x] = s
                else:
                    c1 = ctx.simplify(sp.diff(r, x))
                    if c1 == 0 or c1.has(x):
                        ok = False
                        break
                    sigma[x] = ctx.simplify((s - r.xreplace({x: 0})) / c1)
            if ok:
                out.append(sigma)
    return out


def _ruled_completion(sigma, b):
    """Values for ruled base symbols (sphere z) consistent with sigma."""
    ctx = b.ctx
    out = dict(sigma)
    for r in ctx.rules:
        if isinstance(r.atom, sp.Symbol) and r.atom in b.base and r.atom not in out:
            val = ctx.simplify(r.rhs.xreplace(out))
            if val.is_Number and val >= 0:
                root = sp.sqrt(val) if r.power == 2 else sp.root(val, r.power)
                if root.is_Rational:
                    out[r.atom] = root
                    continue
            return None
    return out


def descend(exprs, inv, b, cross_section=None, guards=()):
    """Rewrite parametric-independent exprs in the reduced coordinates.

    ``guards`` is a list of groups; a cross-section is rejected if every
    expression of some group vanishes on it.
    """
    ctx = b.ctx
    allowed = set(inv.base_symbols) | set(ctx.of_kind("parameter", "constant", "reduced-fiber"))
    cands = [cross_section] if cross_section else _candidate_sections(inv, b)
    red = set(inv.base_symbols)
    # rules for reduced coordinates would reintroduce parametric symbols
    rules = [r for r in ctx.rules if r.atom not in red]
    for sigma in cands:
        sigma = _ruled_completion(sigma, b)
        if sigma is None:
            continue
        if any(all(simplify(g.xreplace(sigma), rules) == 0 for g in grp) for grp in guards):
            continue
        out = []
        good = True
        for e in exprs:
            num, den = sp.fraction(ctx.simplify(e))
            dn = simplify(den.xreplace(sigma), rules)
            if dn == 0:
                good = False
                break
            r = simplify(num.xreplace(sigma) / dn, rules)
            if r.free_symbols - allowed - _arg_symbols(r):
                good = False
                break
            out.append(r)
        if good:
            return out, sigma
    raise IndependenceFailure("no cross-section of the orbit space found; supply cross_section in the problem file")


def _arg_symbols(e):
    out = set()
    for a in function_atoms([e]):
        out |= a.free_symbols
    return out


def factor_through_frame(restricted, frame, inv, b, cross_section=None, pullback=None):
    """``pullback`` maps kinematic fiber coordinates to the ansatz unknowns."""
    ctx = b.ctx
    sol = _solve_factor(restricted, frame, ctx, pullback)
    M = _pulled_rows(frame, ctx, pullback)
    # factorization identity
    ok = True
    for i, f in enumerate(frame.frame):
        e = sum(sol[q] * M[q][i] for q in range(frame.dim)) - restricted.get(f, 0)
        if ctx.simplify(e) != 0:
            ok = False
    if not ok:
        raise FactorizationFailure("factorization identity does not hold")
    cert, fails = independence_certificate(sol, inv, b)
    if fails:
        q, w, d = fails[0]
        raise IndependenceFailure(f"reduced component {q + 1} depends on parametric direction {w}: derivative {d}")
    guards = [[sp.fraction(ctx.simplify(i.expr))[1]] for i in inv.fiber]
    guards += [list(row) for row in M]
    comps, sigma = descend(sol, inv, b, cross_section, guards) if sol else ([], cross_section or {})
    names = [f"F{q + 1}" for q in range(frame.dim)]
    return ReducedOperator(comps, sol, frame, ok, cert, sigma, names)


# ---------------------------------------------------------------------------
# solutions


def _apply_closed(e, closed, ctx):
    """Replace opaque unknowns by closed forms and evaluate derivatives."""
    reps = {}
    for name, (args, body) in closed.items():
        if name in ctx.functions:
            reps[sp.Function(name)] = sp.Lambda(tuple(args), body)
    out = sp.sympify(e)
    if reps:
        out = out.replace(lambda n: isinstance(n, AppliedUndef) and n.func in reps, lambda n: reps[n.func](*n.args))
        out = out.doit()
    syms = {ctx.symbols[n]: body for n, (args, body) in closed.items() if n in ctx.symbols}
    if syms:
        out = out.xreplace(syms)
    return out


def verify_solution(closed, reduced, a, op, b, restricted=None, plan=None, fns=None):
    """Residuals of a closed-form solution in the reduced and original systems.

    ``closed`` maps unknown name -> (argument symbols, Expr).
    """
    ctx = b.ctx.copy()
    # relations on constant unknowns become rules after substitution
    rel_ok = []
    for rel in a.relations:
        r = ctx.simplify(_apply_closed(rel, closed, ctx))
        if r != 0:
            syms = [s for s in r.free_symbols if ctx.kinds.get(s.name) == "reduced-fiber"]
            try:
                if len(syms) == 1:
                    p = sp.Poly(sp.fraction(r)[0], syms[0])
                    t = p.terms()
                    if len(t) == 2 and t[1][0] == (0,):
                        ctx.add_rule(RewriteRule(syms[0], t[0][0][0], ctx.simplify(-t[1][1] / t[0][1])))
                        rel_ok.append(True)
                        continue
            except sp.PolynomialError:
                pass
            rel_ok.append(False)
        else:
            rel_ok.append(True)
    out = {"relations": rel_ok, "reduced": [], "original": []}
    for c in reduced.components if reduced else []:
        out["reduced"].append(to_text(ctx.simplify(_apply_closed(c, closed, ctx))))
    if restricted is None:
        restricted = restrict_operator(op, a)
    for f in op.frame:
        out["original"].append(to_text(ctx.simplify(_apply_closed(restricted[f], closed, ctx))))
    out["ok"] = all(rel_ok) and all(r == "0" for r in out["reduced"] + out["original"])
    if not out["ok"] and fns is not None and plan is not None:
        from lred.numcheck import residual_scan

        comps = [_apply_closed(restricted[f], closed, ctx) for f in op.frame]
        out["numeric_max"] = residual_scan(comps, fns, plan, ctx)
    return out
