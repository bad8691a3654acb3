import itertools

import pytest
import sympy as sp

from conftest import FIXTURES, run_of, spec_of
from lred import kinematic
from lred.errors import EmptyKinematic
from lred.fields import BundleSpec, VectorField, make_algebra
from lred.linalg import rank
from lred.symkernel import Context


def _kb(name):
    return run_of(name).kb()


def _inclusion_basis(kb):
    fiber = kb.bundle.fiber
    return [[sp.diff(kb.inclusion[u], v) for u in fiber] for v in kb.v]


def _same_span(rows_a, rows_b, ctx):
    ra, rb = rank(rows_a, ctx), rank(rows_b, ctx)
    return ra == rb == rank(rows_a + rows_b, ctx)


def test_transversality_ranks():
    for name, (rb, rt) in {"schwarzschild_stationary": (3, 4), "euler_rotational": (2, 3)}.items():
        tr = run_of(name).transversality()
        assert (tr.rank_base, tr.rank_total, tr.holds) == (rb, rt, False)
        assert tr.witness["fiber_part"]


def test_single_translation_is_transverse():
    ctx = Context()
    x, u = ctx.declare("x", "base"), ctx.declare("u", "fiber")
    alg = make_algebra([VectorField({x: sp.Integer(1)}, "Dx")], BundleSpec(ctx, [x], [u]))
    tr = kinematic.transversality_report(alg)
    assert (tr.rank_base, tr.rank_total, tr.holds) == (1, 1, True)


def test_euler_isotropy_is_cross_product():
    spec = spec_of("euler_rotational")
    ctx = spec.ctx
    cs = run_of("euler_rotational").constraints()
    xs = [ctx.sym(n) for n in ("x1", "x2", "x3")]
    us = [ctx.sym(n) for n in ("u1", "u2", "u3")]
    (combo,) = cs.kernel_combos
    # proportional to (x1, x2, x3)
    assert rank([list(combo), xs], ctx) == 1
    cross = [xs[1] * us[2] - xs[2] * us[1], xs[2] * us[0] - xs[0] * us[2], xs[0] * us[1] - xs[1] * us[0]]
    lin = lambda es: [[sp.diff(e, u) for u in us] for e in es]
    assert _same_span(lin(cs.constraint_exprs), lin(cross), ctx)


def test_transversal_fixture_has_no_constraints():
    cs = run_of("heat_translation").constraints()
    assert cs.all_exprs == []
    kb = _kb("heat_translation")
    assert kb.fiber_dim == len(kb.bundle.fiber)
    assert all(kb.inclusion[u] == v for u, v in zip(kb.bundle.fiber, kb.v))


def test_euler_kinematic_fiber():
    kb = _kb("euler_rotational")
    ctx = kb.bundle.ctx
    assert kb.fiber_dim == 2
    xs = [ctx.sym(n) for n in ("x1", "x2", "x3")]
    us = [kb.inclusion[ctx.sym(n)] for n in ("u1", "u2", "u3")]
    # u is parallel to x and p stays free
    assert rank([us, xs], ctx) == 1
    assert kb.inclusion[ctx.sym("p")] in kb.v


def _metric_vec(entries, names):
    return [sp.sympify(entries.get(n, 0)) for n in names]


def _stationary_matrices(ctx, static):
    x, y, z = (ctx.sym(n) for n in "xyz")
    X = {"x": x, "y": y, "z": z}
    A = {"g_tt": 1}
    B = {f"g_t{a}": X[a] for a in "xyz"}
    C = {f"g_{a}{b}": X[a] * X[b] for a, b in itertools.combinations_with_replacement("xyz", 2)}
    D = {f"g_{a}{a}": 1 for a in "xyz"}
    return [A, C, D] if static else [A, B, C, D]


@pytest.mark.parametrize("name,static", [("schwarzschild_stationary", False), ("static_metric_reflection", True)])
def test_stationary_fiber_is_span_of_reference_matrices(name, static):
    kb = _kb(name)
    ctx = kb.bundle.ctx
    names = [u.name for u in kb.bundle.fiber]
    ref = [_metric_vec(m, names) for m in _stationary_matrices(ctx, static)]
    assert kb.fiber_dim == (3 if static else 4)
    assert _same_span(_inclusion_basis(kb), ref, ctx)


def test_plane_wave_isotropy_and_fiber():
    spec = spec_of("plane_wave")
    ctx = spec.ctx
    g = {v.name: v for v in spec.generators}
    u, x, y = (ctx.sym(n) for n in "uxy")
    P, Q = sp.Function("P")(u), sp.Function("Q")(u)
    lin = lambda fs, cs: VectorField(
        {s: sum(c * f[s] for f, c in zip(fs, cs)) for s in set().union(*(f.coeffs for f in fs))}
    )
    Z1 = lin([g["V4"], g["V1"], g["V2"]], [1, -x, -P])
    Z2 = lin([g["V5"], g["V1"], g["V3"]], [1, -y, -Q])
    kb = _kb("plane_wave")
    for Z in (Z1, Z2):
        assert all(ctx.simplify(Z[b]) == 0 for b in spec.bundle.base)
        # the isotropy fields vanish on the kinematic fiber
        assert all(kb.iota(Z[f]) == 0 for f in spec.bundle.fiber)
    names = [f.name for f in spec.bundle.fiber]
    g1 = _metric_vec({"g_uu": 1}, names)
    Pp, Qp = sp.Derivative(P, u), sp.Derivative(Q, u)
    gamma = _metric_vec({"g_uv": -1, "g_xx": 1 / Pp, "g_yy": 1 / Qp}, names)
    assert kb.fiber_dim == 2
    assert _same_span(_inclusion_basis(kb), [g1, gamma], ctx)


def test_empty_kinematic_bundle_is_a_finding():
    r = run_of("mech_translation")
    with pytest.raises(EmptyKinematic) as exc:
        r.kb()
    assert exc.value.certificate["constraints"]


def test_central_force_diagram():
    kb = _kb("mech_central_force")
    inc = {u.name: e for u, e in kb.inclusion.items()}
    assert [inc[n] for n in ("u", "v", "pu", "pv")] == [0, 0, 0, 0]
    assert inc["w"] in kb.v and inc["pw"] in kb.v


OK_FIXTURES = sorted(n for n in FIXTURES if n != "mech_translation")


@pytest.mark.parametrize("name", OK_FIXTURES)
def test_fiber_dimension_law_and_constraints(name):
    kb = _kb(name)
    assert kb.fiber_dim == len(kb.bundle.fiber) - kb.constraint_rank
    for c in kb.constraints:
        assert kb.iota(c) == 0


@pytest.mark.parametrize("name", OK_FIXTURES)
def test_residual_action_is_transverse(name):
    kb = _kb(name)
    ctx = kb.bundle.ctx
    gens = kb.residual_generators
    base = [[g[x] for x in kb.bundle.base] for g in gens]
    full = [[g[s] for s in kb.coords] for g in gens]
    assert rank(base, ctx) == rank(full, ctx)


def test_euler_invariants():
    inv = run_of("euler_rotational").invariants()
    assert [i.name for i in inv.base] == ["t", "r"]
    assert [i.name for i in inv.fiber] == ["A", "B"]


def test_trivial_algebra_keeps_every_coordinate():
    ctx = Context()
    x, y = ctx.declare("x", "base"), ctx.declare("y", "base")
    u = ctx.declare("u", "fiber")
    b = BundleSpec(ctx, [x, y], [u])
    alg = make_algebra([VectorField({}, "Z")], b)
    cs = kinematic.isotropy_constraints(alg)
    kb = kinematic.solve_kinematic_fiber(cs, alg)
    inv = kinematic.compute_invariants(kb, alg, max_degree=1)
    assert len(inv.base) == 2 and len(inv.fiber) == 1
