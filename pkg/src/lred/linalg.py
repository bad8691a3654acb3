"""Exact linear algebra over the rational-function field of a chart.

Matrices are lists of rows of sympy expressions.  Elimination is
fraction-free: a row is combined as ``p*row_j - q*row_i`` and then made
primitive (denominators cleared, content divided out), with zero tests done
by the kernel's canonical form modulo the chart rules.  Purely rational
matrices take a DomainMatrix fast path.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import reduce

import numpy as np
import sympy as sp
from sympy.polys.matrices import DomainMatrix

from lred.errors import ChartDegenerate, RankJump
from lred.sampling import generic_point, numeric_rank
from lred.symkernel import eval_numeric


@dataclass
class Echelon:
    rows: list  # reduced rows (pivot rows first)
    pivots: list  # pivot column per pivot row
    ncols: int
    transform: list | None = None  # rows of the multiplier matrix, if tracked

    @property
    def rank(self):
        return len(self.pivots)

    @property
    def free(self):
        return [c for c in range(self.ncols) if c not in self.pivots]


def _size(e):
    return 0 if e.is_Number else sp.count_ops(e) + 1


def _primitive(row, ctx):
    row = [ctx.simplify(e) for e in row]
    nz = [e for e in row if e != 0]
    if not nz:
        return row
    dens = [sp.fraction(e)[1] for e in nz]
    nums = [sp.fraction(e)[0] for e in nz]
    lcm = reduce(sp.lcm, dens)
    g = reduce(sp.gcd, nums)
    scale = sp.cancel(lcm / g)
    if scale != 1:
        row = [ctx.simplify(e * scale) for e in row]
    # fix sign so the first nonzero entry has a positive leading coefficient
    first = next(e for e in row if e != 0)
    num = sp.fraction(first)[0]
    lead = num if num.is_Number else sp.Poly(num).LC()
    if lead < 0:
        row = [-e for e in row]
    return row


def _is_rational_matrix(rows):
    return all(e.is_Rational for row in rows for e in row)


def _radicals(rows, ctx):
    """Map constant symbols with rules c^n -> q (q rational, c > 0 or n odd)
    to real radicals, if those are the only symbols present.

    Returns ``(forward, back)`` substitutions, or None.
    """
    syms = set()
    for row in rows:
        for e in row:
            syms |= e.free_symbols
    if not syms:
        return {}, {}
    rules = {r.atom: r for r in ctx.rules}
    positive = {e for e, sign in ctx.assumptions if sign == ">"}
    fwd, back = {}, {}
    for c in syms:
        r = rules.get(c)
        if r is None or not r.rhs.is_Rational or r.rhs <= 0:
            return None
        if r.power % 2 == 0 and c not in positive:
            return None
        root = sp.root(r.rhs, r.power)
        fwd[c] = root
        for k in range(1, r.power):
            back[root**k] = c**k
    return fwd, back


def _echelon_rational(rows, ncols, track, radicals=None):
    n = len(rows)
    if track:
        rows = [list(r) + [sp.Integer(int(i == j)) for j in range(n)] for i, r in enumerate(rows)]
    if radicals:
        fwd, back = radicals
        rows = [[e.xreplace(fwd) for e in r] for r in rows]
        dm = DomainMatrix.from_list_sympy(n, len(rows[0]), rows, extension=True)
    else:
        dm = DomainMatrix.from_list_sympy(n, len(rows[0]) if rows else ncols, rows).convert_to(sp.QQ)
    rref, piv = dm.rref()
    dense = rref.to_Matrix().tolist()
    if radicals:
        dense = [[sp.expand(e).xreplace(back) for e in r] for r in dense]
    piv = [p for p in piv if p < ncols]
    out_rows = [r[:ncols] for r in dense]
    transform = [r[ncols:] for r in dense] if track else None
    # clear denominators so results look like the fraction-free path
    return Echelon(out_rows, list(piv), ncols, transform)


def echelon(rows, ctx, track=False):
    """Reduced echelon form (Gauss-Jordan) of ``rows`` over the chart's field.

    With ``track=True`` a multiplier matrix T with ``T @ rows == result`` is
    returned as ``transform`` (used for inconsistency certificates).
    """
    rows = [[sp.sympify(e) for e in row] for row in rows]
    ncols = len(rows[0]) if rows else 0
    if not rows:
        return Echelon([], [], ncols, [] if track else None)
    rows = [[ctx.simplify(e) for e in row] for row in rows]
    if not track:
        if _is_rational_matrix(rows):
            return _echelon_rational(rows, ncols, False)
        rad = _radicals(rows, ctx)
        if rad is not None and rad[0]:
            return _echelon_rational(rows, ncols, False, rad)
    n = len(rows)
    work = [list(r) for r in rows]
    trans = [[sp.Integer(int(i == j)) for j in range(n)] for i in range(n)] if track else None
    pivots = []
    prow = 0
    for col in range(ncols):
        cands = [i for i in range(prow, n) if work[i][col] != 0]
        if not cands:
            continue
        best = min(cands, key=lambda i: (_size(work[i][col]), i))
        work[prow], work[best] = work[best], work[prow]
        if track:
            trans[prow], trans[best] = trans[best], trans[prow]
        p = work[prow][col]
        for i in range(n):
            if i == prow or work[i][col] == 0:
                continue
            q = work[i][col]
            new = [ctx.simplify(p * a - q * b) for a, b in zip(work[i], work[prow])]
            if track:
                tnew = [ctx.simplify(p * a - q * b) for a, b in zip(trans[i], trans[prow])]
                both = _primitive(new + tnew, ctx)
                work[i], trans[i] = both[:ncols], both[ncols:]
            else:
                work[i] = _primitive(new, ctx)
        if not track:
            work[prow] = _primitive(work[prow], ctx)
        pivots.append(col)
        prow += 1
        if prow == n:
            break
    return Echelon(work, pivots, ncols, trans)


def rank(rows, ctx):
    return echelon(rows, ctx).rank


def nullspace(rows, ctx, ncols=None):
    """Basis of {v : rows @ v = 0}; each vector has a 1 in its free slot."""
    if not rows:
        n = ncols or 0
        return [[sp.Integer(int(i == j)) for j in range(n)] for i in range(n)]
    ech = echelon(rows, ctx)
    basis = []
    for f in ech.free:
        v = [sp.Integer(0)] * ech.ncols
        v[f] = sp.Integer(1)
        for r, c in enumerate(ech.pivots):
            v[c] = ctx.simplify(-ech.rows[r][f] / ech.rows[r][c])
        basis.append(v)
    return basis


class Inconsistent(Exception):
    def __init__(self, combo):
        super().__init__("inconsistent linear system")
        self.combo = combo


def solve_affine(A, b, ctx):
    """Solve ``A v = b``.  Returns ``(particular, nullspace_basis, echelon)``.

    Raises Inconsistent carrying the row combination that yields ``0 = c``.
    """
    n = len(A[0]) if A else 0
    aug = [list(row) + [sp.sympify(bi)] for row, bi in zip(A, b)]
    ech = echelon(aug, ctx, track=True)
    if n in ech.pivots:
        r = ech.pivots.index(n)
        raise Inconsistent([ctx.simplify(c) for c in ech.transform[r]])
    part = [sp.Integer(0)] * n
    for r, c in enumerate(ech.pivots):
        part[c] = ctx.simplify(ech.rows[r][n] / ech.rows[r][c])
    basis = []
    for f in [c for c in range(n) if c not in ech.pivots]:
        v = [sp.Integer(0)] * n
        v[f] = sp.Integer(1)
        for r, c in enumerate(ech.pivots):
            v[c] = ctx.simplify(-ech.rows[r][f] / ech.rows[r][c])
        basis.append(v)
    return part, basis, Echelon([row[:n] for row in ech.rows], [p for p in ech.pivots if p < n], n)


def certify_pivots(ech, ctx, rng=None, tries=20):
    """Find a chart point where every pivot is nonzero; return the point."""
    rng = rng or np.random.default_rng(7)
    pivs = [ech.rows[r][c] for r, c in enumerate(ech.pivots)]
    if all(p.is_Number for p in pivs):
        return None
    for _ in range(tries):
        point, table = generic_point(ctx, pivs, rng=rng)
        vals = [abs(eval_numeric(p, point, table)) for p in pivs]
        if all(v > 1e-10 for v in vals):
            return point
    raise ChartDegenerate("a pivot vanishes at every sampled chart point")


def check_constant_rank(rows, ctx, expected, rng=None, what="matrix"):
    """Generic rank must be attained at two independent chart points."""
    rng = rng or np.random.default_rng(11)
    if not rows or all(e.is_Number for row in rows for e in row):
        return []
    exprs = [e for row in rows for e in row]
    ranks = []
    for _ in range(2):
        point, table = generic_point(ctx, exprs, rng=rng)
        ranks.append(numeric_rank(rows, point, table))
    if ranks[0] != ranks[1] or ranks[0] != expected:
        retry = []
        for _ in range(3):
            point, table = generic_point(ctx, exprs, rng=rng)
            retry.append(numeric_rank(rows, point, table))
        if sum(r == expected for r in retry) < 2:
            raise RankJump(
                f"{what}: generic rank {expected} but sampled ranks {ranks + retry}",
            )
    return ranks


def mat_vec(A, v, ctx):
    return [ctx.simplify(sum(a * x for a, x in zip(row, v))) for row in A]


def span_contains(basis, vec, ctx):
    """Coefficients c (over the field) with sum c_i basis_i == vec, or None."""
    if not basis:
        return [] if all(ctx.is_zero(x) for x in vec) else None
    A = [[basis[j][i] for j in range(len(basis))] for i in range(len(vec))]
    try:
        part, _, _ = solve_affine(A, vec, ctx)
    except Inconsistent:
        return None
    return part
