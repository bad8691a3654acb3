import itertools
import math

import pytest
import sympy as sp

from conftest import FIXTURES, spec_of
from lred.errors import AdmissibilityError, OrderOverflow
from lred.fields import (
    BundleSpec,
    JetContext,
    VectorField,
    apply,
    check_admissible,
    lie_bracket,
    prolong_field,
    total_derivative,
)
from lred.symkernel import Context


def _plane(order=2):
    ctx = Context()
    x, y = ctx.declare("x", "base"), ctx.declare("y", "base")
    u = ctx.declare("u", "fiber")
    b = BundleSpec(ctx, [x, y], [u])
    return ctx, b, JetContext(ctx, [x, y], [u], order), x, y, u


def test_apply_rotation_invariant():
    ctx, b, _, x, y, _ = _plane()
    V = VectorField({y: x, x: -y})
    assert apply(V, x**2 + y**2, ctx) == 0
    assert apply(VectorField({}), x * y, ctx) == 0


def test_apply_euler_rotation_on_dot_product():
    spec = spec_of("euler_rotational")
    ctx = spec.ctx
    xs = [ctx.sym(n) for n in ("x1", "x2", "x3")]
    us = [ctx.sym(n) for n in ("u1", "u2", "u3")]
    dot = sum(a * c for a, c in zip(xs, us))
    for g in spec.generators:
        assert apply(g, dot, ctx) == 0


def test_bracket_with_itself_is_zero():
    ctx, b, _, x, y, u = _plane()
    V = VectorField({x: y, u: x * u})
    assert lie_bracket(V, V, ctx).is_zero()


def test_plane_wave_bracket_reproduces_translation():
    spec = spec_of("plane_wave")
    g = {v.name: v for v in spec.generators}
    assert lie_bracket(g["V2"], g["V4"], spec.ctx) == VectorField(g["V1"].coeffs)


def test_euler_structure_constants_are_levi_civita():
    spec = spec_of("euler_rotational")
    ctx = spec.ctx
    V = spec.generators
    for a, b in itertools.permutations(range(3), 2):
        c = 3 - a - b
        sign = sp.LeviCivita(a, b, c)
        expected = VectorField({s: -sign * k for s, k in V[c].coeffs.items()})
        assert lie_bracket(V[a], V[b], ctx) == expected


def _jacobi_zero(A, B, C, ctx):
    br = lambda p, q: lie_bracket(p, q, ctx)
    terms = [br(br(A, B), C), br(br(B, C), A), br(br(C, A), B)]
    keys = set().union(*(t.coeffs for t in terms))
    return all(ctx.simplify(sum(t[s] for t in terms)) == 0 for s in keys)


def test_jacobi_random_admissible_fields():
    ctx, b, _, x, y, u = _plane()
    fields = [
        VectorField({x: x**2 + y, y: x * y, u: x * u + y}),
        VectorField({x: y**3, u: (x - y) * u}),
        VectorField({y: x + 1, u: u + x**2}),
    ]
    for f in fields:
        check_admissible(f, b)
    assert _jacobi_zero(*fields, ctx)


@pytest.mark.parametrize("name", sorted(FIXTURES))
def test_jacobi_on_corpus_algebras(name):
    spec = spec_of(name)
    gens = spec.generators
    for A, B, C in itertools.combinations(gens, 3):
        assert _jacobi_zero(A, B, C, spec.ctx), (A.name, B.name, C.name)


def test_admissibility_gate():
    ctx, b, _, x, y, u = _plane()
    with pytest.raises(AdmissibilityError):
        check_admissible(VectorField({u: u**2}), b)
    with pytest.raises(AdmissibilityError):
        check_admissible(VectorField({x: u}), b)
    assert check_admissible(VectorField({x: y, u: x * u + 1}), b)


def test_translation_prolongs_trivially():
    ctx, b, jc, x, y, u = _plane()
    V = VectorField({x: sp.Integer(1)})
    assert prolong_field(V, jc) == V


def test_rotation_prolongation_matches_flow_of_jets():
    # u~_eps(p) = u(R_{-eps} p); d/deps of its x-derivative plus xi^j u_xj is the
    # prolonged coefficient phi^x
    ctx, b, jc, x, y, u = _plane(order=1)
    V = VectorField({x: -y, y: x})
    pr = prolong_field(V, jc)
    ux, uy = jc.jet(u, (0,)), jc.jet(u, (1,))

    def f(px, py):
        return math.sin(px) + px * py**2

    def ut(eps, px, py):
        c, s = math.cos(eps), math.sin(eps)
        return f(c * px + s * py, -s * px + c * py)

    def dx(fun, px, py, h=1e-4):
        return (fun(px + h, py) - fun(px - h, py)) / (2 * h)

    for px, py in [(0.3, -0.7), (1.1, 0.4), (-0.5, 0.9)]:
        e = 1e-4
        d_eps = (dx(lambda a, c: ut(e, a, c), px, py) - dx(lambda a, c: ut(-e, a, c), px, py)) / (2 * e)
        fxx = -math.sin(px)
        fxy = 2 * py
        # xi = (-y, x)
        numeric = d_eps + (-py) * fxx + px * fxy
        vals = {x: px, y: py, u: f(px, py), ux: math.cos(px) + py**2, uy: 2 * px * py}
        symbolic = float(pr[ux].subs(vals))
        assert numeric == pytest.approx(symbolic, rel=1e-5, abs=1e-6)


def test_prolonged_rotations_are_symmetries_of_euler():
    spec = spec_of("euler_rotational")
    ctx, jc, op = spec.ctx, spec.jets, spec.operator
    for g in spec.generators:
        pr = prolong_field(g, jc)
        for f, comp in op.components.items():
            # V(Delta_A) + sum_B Delta_B Lambda_BA = 0
            lam = op.action_matrix(g.name)
            frame = op.frame
            A = frame.index(f)
            acc = apply(pr, comp, ctx) + sum(op.components[frame[B]] * lam[B][A] for B in range(len(frame)))
            assert ctx.simplify(acc) == 0, (g.name, f.name)


@pytest.mark.parametrize("name", sorted(n for n in FIXTURES if spec_of(n).jets is not None))
def test_prolongation_is_a_homomorphism(name):
    spec = spec_of(name)
    ctx = spec.ctx.copy()
    jc = JetContext(ctx, spec.bundle.base, spec.bundle.fiber, 1, kind="jet")
    gens = spec.generators
    for V, W in itertools.combinations(gens, 2):
        lhs = prolong_field(lie_bracket(V, W, ctx), jc)
        rhs = lie_bracket(prolong_field(V, jc), prolong_field(W, jc), ctx)
        keys = set(lhs.coeffs) | set(rhs.coeffs)
        assert all(ctx.simplify(lhs[s] - rhs[s]) == 0 for s in keys), (V.name, W.name)


def test_total_derivative_basics():
    ctx, b, jc, x, y, u = _plane(order=3)
    assert total_derivative(u, x, jc) == jc.jet(u, (0,))
    e = x * u**2 + y * jc.jet(u, (1,)) * jc.jet(u, (0,))
    dxy = total_derivative(total_derivative(e, y, jc), x, jc)
    dyx = total_derivative(total_derivative(e, x, jc), y, jc)
    assert ctx.simplify(dxy - dyx) == 0
    with pytest.raises(OrderOverflow):
        total_derivative(jc.jet(u, (0, 0, 1)), x, jc)


def test_total_derivative_with_chart_symbol():
    spec = spec_of("euler_rotational")
    ctx = spec.ctx
    x1, r = ctx.sym("x1"), ctx.sym("r")
    t = ctx.sym("t")
    A = sp.Function("A")(t, r)
    # D_x1 (A(t,r) x1) = A + A_r x1^2 / r
    got = total_derivative(A * x1, x1, spec.jets)
    assert ctx.simplify(got - (A + sp.Derivative(A, r) * x1**2 / r)) == 0
