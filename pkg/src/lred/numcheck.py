"""Numerical oracle: flows, finite differences and residual scans.

Nothing here calls the symbolic zero test; expressions are evaluated as raw
trees, so agreement is independent evidence for the symbolic results.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field

import numpy as np
import sympy as sp
from scipy.integrate import solve_ivp

from lred.errors import ChartDegenerate, IntegrationFailure, NumericDomain
from lred.sampling import complete_point, function_atoms, generic_point
from lred.symkernel import FunctionTable, eval_numeric


@dataclass
class SamplePlan:
    seed: int = 42
    count: int = 20
    box: dict = field(default_factory=dict)  # Symbol -> (lo, hi)
    radius: float = 1e-6
    denominators: list = field(default_factory=list)

    def points(self, ctx, exprs=(), fns=None):
        """Reproducible stream of (point, table) pairs."""
        rng = np.random.default_rng(self.seed)
        if self.box:
            ctx = ctx.copy()
            ctx.boxes.update(self.box)
        out = []
        for _ in range(self.count):
            out.append(generic_point(ctx, exprs, rng=rng, denominators=self.denominators, radius=self.radius, fns=fns))
        return out


def generic_functions(ctx, names=None, seed=0):
    """Smooth closed-form stand-ins for opaque functions, for FD and flow checks."""
    rng = np.random.default_rng(seed)
    forms = {}
    for name, f in sorted(ctx.functions.items()):
        if names is not None and name not in names:
            continue
        args = f.args
        c = [sp.Rational(int(rng.integers(3, 12)), 7) for _ in range(2 * len(args) + 2)]
        body = c[0] + c[1] * sp.sin(sum(a for a in args) / 2 + sp.Rational(1, 3))
        for k, a in enumerate(args):
            body += c[2 + 2 * k] * a / 3 + c[3 + 2 * k] * sp.cos(a / 2 + sp.Rational(k, 5))
        forms[name] = (args, body)
    return FunctionTable.from_closed_forms(forms)


def _rel(a, b):
    return abs(a - b) / max(1.0, abs(b))


def _flow(rhs, p0, t_final):
    sol = solve_ivp(rhs, (0.0, t_final), p0, method="RK45", rtol=1e-9, atol=1e-12)
    if not sol.success:
        raise IntegrationFailure(f"flow integration failed: {sol.message}")
    return sol.y


def flow_invariance(I, V, ctx, plan, t_final=0.1, fns=None):
    """Max drift |I(p(t)) - I(p0)| / (1 + |I(p0)|) along the flow of V.

    Trajectories that come close to a pole of I or V are retried over
    shorter times; the flow is ill-conditioned there.
    """
    I = sp.sympify(I)
    moving = [s for s, c in V.coeffs.items()]
    names = [s.name for s in moving]
    exprs = [I] + list(V.coeffs.values())
    dens = [d for d in (sp.fraction(sp.together(e))[1] for e in exprs) if d.free_symbols]
    margin = max(plan.radius, 0.05)
    plan = dataclasses.replace(plan, denominators=list(plan.denominators) + dens, radius=margin)
    worst = 0.0
    for point, table in plan.points(ctx, exprs, fns=fns):
        p0 = np.array([point[n] for n in names], dtype=float)
        coeffs = [V.coeffs[s] for s in moving]

        def at(y, point=point, table=table):
            q = dict(point)
            q.update(zip(names, y))
            return complete_point(ctx, q, table, keep=names)

        def rhs(_, y, table=table):
            q = at(y)
            return [eval_numeric(c, q, table) for c in coeffs]

        end, last = None, None
        for t in (t_final, t_final / 10, t_final / 100):
            try:
                ys = _flow(rhs, p0, t)
                if all(abs(eval_numeric(d, at(y), table)) >= margin for y in ys.T for d in dens):
                    end = ys[:, -1]
                    break
                last = NumericDomain("trajectory approaches a pole")
            except (NumericDomain, ZeroDivisionError, OverflowError) as exc:
                last = exc
        if end is None:
            raise IntegrationFailure(f"flow left the chart: {last}") from last
        q0 = complete_point(ctx, point, table, keep=names)
        q1 = at(end)
        a = eval_numeric(I, q0, table)
        b = eval_numeric(I, q1, table)
        worst = max(worst, abs(b - a) / (1.0 + abs(a)))
    return worst


def fd_derivative(e, s, point, table, ctx, scale=1.0):
    """4th-order centered difference of e in the direction of symbol s."""
    x0 = point[s.name]
    h = 1e-4 * scale * max(1.0, abs(x0))

    def at(dx):
        q = dict(point)
        q[s.name] = x0 + dx
        q = complete_point(ctx, q, table, keep=[s.name])
        return eval_numeric(e, q, table)

    return (-at(2 * h) + 8 * at(h) - 8 * at(-h) + at(-2 * h)) / (12 * h)


def fd_crosscheck(e, s, ctx, plan, fns=None, target=None, points=None):
    """Max relative error between ``target`` (default: grad(e, s)) and FD of e.

    ``points`` reuses an already drawn sample instead of drawing from ``plan``.
    """
    e = sp.sympify(e)
    d = ctx.grad(e, s) if target is None else sp.sympify(target)
    if fns is None:
        names = {a.func.__name__ if not isinstance(a, sp.Derivative) else a.expr.func.__name__ for a in function_atoms([e, d])}
        fns = generic_functions(ctx, names)
    worst = 0.0
    for point, table in points if points is not None else plan.points(ctx, [e, d], fns=fns):
        point = complete_point(ctx, point, table)
        num = fd_derivative(e, s, point, table, ctx)
        sym = eval_numeric(d, point, table)
        worst = max(worst, _rel(num, sym))
    return worst


def residual_scan(components, fns, plan, ctx):
    """Per-component max |residual| over the plan's points."""
    comps = [sp.sympify(c) for c in components]
    worst = [0.0] * len(comps)
    for point, table in plan.points(ctx, comps, fns=fns):
        for i, c in enumerate(comps):
            worst[i] = max(worst[i], abs(eval_numeric(c, point, table)))
    return worst
