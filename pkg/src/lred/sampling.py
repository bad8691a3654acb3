"""Chart-respecting random points.

Independent symbols are drawn from per-symbol boxes; ruled atoms (``r`` with
``r^2 -> x.x``, ``z`` on a sphere, ``D(be,t,t)`` tied to other jets) are then
computed from their rules, and the point is rejected unless every sign
assumption holds and every watched denominator stays away from zero.
"""

import itertools
import math

import numpy as np
import sympy as sp
from sympy.core.function import AppliedUndef

from lred.errors import ChartDegenerate, NumericDomain, UnboundFunction
from lred.symkernel import FunctionTable, _orders, check_rule_set, eval_numeric

DEFAULT_BOX = (-1.5, 1.5)
MIN_ABS = 0.15


def _func_key(atom):
    if isinstance(atom, AppliedUndef):
        return atom.func.__name__, (0,) * len(atom.args)
    return atom.expr.func.__name__, _orders(atom.expr, atom.variable_count)


def function_atoms(exprs):
    out = set()
    for e in exprs:
        for node in sp.preorder_traversal(sp.sympify(e)):
            if isinstance(node, (AppliedUndef, sp.Derivative)) and (
                isinstance(node, AppliedUndef) or isinstance(node.expr, AppliedUndef)
            ):
                out.add(node)
    return out


def _draw(rng, box):
    lo, hi = box
    for _ in range(100):
        v = rng.uniform(lo, hi)
        if abs(v) >= MIN_ABS or lo >= 0 or hi <= 0:
            return v
    return v


def _root(val, n, negative=False):
    if n == 1:
        return val
    if n % 2 == 0:
        if val < 0:
            raise NumericDomain("even root of a negative value")
        r = val ** (1.0 / n)
    else:
        r = math.copysign(abs(val) ** (1.0 / n), val)
    return -r if negative else r


def generic_point(ctx, exprs=(), rng=None, denominators=(), radius=1e-6, tries=1000, fns=None, skip=()):
    """Return ``(point, table)``: symbol values and a FunctionTable.

    Opaque-function atoms not covered by ``fns`` get independent random
    constant values, which is what generic-rank certification needs.
    """
    rng = rng or np.random.default_rng(12345)
    rules = check_rule_set(list(ctx.rules))[::-1]  # dependencies first
    ruled = {r.atom for r in rules}
    negatives = {sp.sympify(e) for e, s in ctx.assumptions if s == "<"}
    exprs = list(exprs) + [r.rhs for r in rules] + [e for e, _ in ctx.assumptions] + list(denominators)
    fatoms = sorted(function_atoms(exprs) - ruled, key=sp.default_sort_key)
    for _ in range(tries):
        point = {}
        for name, s in ctx.symbols.items():
            if s in ruled or ctx.kinds[name] == "frame" or s in skip:
                continue
            point[name] = _draw(rng, ctx.boxes.get(s, DEFAULT_BOX))
        table = FunctionTable()
        if fns is not None:
            table = table.merged(fns)
        known = table.names() if fns is not None else set()
        for a in fatoms:
            name, orders = _func_key(a)
            if name in known:
                continue
            v = _draw(rng, (0.5, 2.0)) * (1 if rng.uniform() < 0.5 else -1)
            table.add(name, orders, (lambda val: (lambda *args: val))(v))
        try:
            for r in rules:
                val = eval_numeric(r.rhs, point, table)
                root = _root(val, r.power, negative=r.atom in negatives)
                if isinstance(r.atom, sp.Symbol):
                    point[r.atom.name] = root
                else:
                    name, orders = _func_key(r.atom)
                    table.add(name, orders, (lambda val: (lambda *args: val))(root))
            ok = all(
                (eval_numeric(e, point, table) > 0) if s == ">" else (eval_numeric(e, point, table) < 0)
                for e, s in ctx.assumptions
            )
            if ok:
                for d in denominators:
                    if abs(eval_numeric(d, point, table)) < radius:
                        ok = False
                        break
        except (NumericDomain, ZeroDivisionError, OverflowError, ValueError):
            continue
        except UnboundFunction:
            raise
        if ok:
            return point, table
    raise ChartDegenerate(f"no valid chart point found in {tries} draws")


def branch_points(ctx, point, table, limit=16):
    """The point on every sign branch of even-power rules c^2k -> q.

    Symbols assumed positive keep their sign. Dependent rules are recomputed
    per branch. Returns None if there are more than ``limit`` branches.
    """
    rules = check_rule_set(list(ctx.rules))[::-1]
    positive = {sp.sympify(e) for e, s in ctx.assumptions if s == ">"}
    free = [r.atom for r in rules if isinstance(r.atom, sp.Symbol) and r.power % 2 == 0 and r.atom not in positive]
    if 2 ** len(free) > limit:
        return None
    out = []
    for signs in itertools.product((1, -1), repeat=len(free)):
        flip = {a for a, sg in zip(free, signs) if sg < 0}
        q = dict(point)
        for r in rules:
            if not isinstance(r.atom, sp.Symbol):
                continue
            root = _root(eval_numeric(r.rhs, q, table), r.power)
            q[r.atom.name] = -abs(root) if r.atom in flip else (root if r.atom in free else q[r.atom.name])
        out.append(q)
    return out


def evaluate_matrix(rows, point, table):
    return np.array([[eval_numeric(e, point, table) for e in row] for row in rows], dtype=float)


def numeric_rank(rows, point, table, rtol=1e-9):
    if not rows or not rows[0]:
        return 0
    m = evaluate_matrix(rows, point, table)
    if not np.all(np.isfinite(m)):
        raise NumericDomain("non-finite matrix entry at sample point")
    s = np.linalg.svd(m, compute_uv=False)
    if s.size == 0 or s[0] == 0:
        return 0
    return int(np.sum(s > rtol * s[0]))


def complete_point(ctx, point, table, keep=()):
    """Recompute derived chart symbols (``r`` from ``r^2 -> x.x``) after moving a point."""
    out = dict(point)
    negatives = {sp.sympify(e) for e, s in ctx.assumptions if s == "<"}
    order = check_rule_set([r for r in ctx.rules if r.atom in ctx.definitions])[::-1]
    done = set()
    for r in order:
        if r.atom.name in keep:
            continue
        out[r.atom.name] = _root(eval_numeric(r.rhs, out, table), r.power, negative=r.atom in negatives)
        done.add(r.atom)
    for d, (n, rhs) in ctx.definitions.items():
        if d in done or d.name in keep or n != 1:
            continue
        out[d.name] = eval_numeric(rhs, out, table)
    return out
