import math
import random

import pytest
import sympy as sp
from hypothesis import HealthCheck, given, settings
from hypothesis import strategies as st

from lred.errors import ExpressionSyntaxError, NonTerminatingRule, NumericDomain, UnknownSymbol
from lred.symkernel import (
    Context,
    FunctionTable,
    RewriteRule,
    diff,
    eval_numeric,
    parse,
    reduce_mod,
    simplify,
    substitute,
    to_text,
)


@pytest.fixture
def ctx():
    c = Context()
    for n in ("x", "y", "z", "t", "r"):
        c.declare(n, "base")
    c.declare("u", "fiber")
    c.declare("u_t", "jet")
    c.declare("u_x", "jet")
    c.declare_function("A", ["t", "r"])
    c.declare_function("f", ["x"])
    return c


def test_parse_sum_of_powers(ctx):
    x, y = ctx.sym("x"), ctx.sym("y")
    assert parse("x^2 + y^2", ctx) == x**2 + y**2


def test_parse_jets(ctx):
    e = parse("u_t + u*u_x", ctx)
    assert e == ctx.sym("u_t") + ctx.sym("u") * ctx.sym("u_x")


def test_parse_opaque_application(ctx):
    e = parse("A(t,r)*x", ctx)
    A = sp.Function("A")
    assert e == A(ctx.sym("t"), ctx.sym("r")) * ctx.sym("x")


def test_parse_errors_carry_position(ctx):
    with pytest.raises(ExpressionSyntaxError) as exc:
        parse("x + * y", ctx)
    assert exc.value.position == 4
    with pytest.raises(UnknownSymbol):
        parse("q + 1", ctx)
    with pytest.raises(UnknownSymbol):
        parse("sin(x)", ctx)


def test_elementary_only_on_request(ctx):
    assert parse("exp(x)", ctx, elementary=True) == sp.exp(ctx.sym("x"))


def test_simplify_ring_identity(ctx):
    assert simplify(parse("(x+y)^2 - x^2 - 2*x*y - y^2", ctx)) == 0


def test_simplify_cancellation(ctx):
    x = ctx.sym("x")
    assert simplify(parse("(x^2-1)/(x-1)", ctx)) == x + 1


def test_contraction_with_radius_rule():
    # x^j (A delta^i_j + A_r x^i x_j / r) with r^2 -> x.x
    c = Context()
    xs = [c.declare(n, "base") for n in ("x1", "x2", "x3")]
    t = c.declare("t", "base")
    r = c.declare("r", "chart")
    c.add_rule(RewriteRule(r, 2, sum(v**2 for v in xs)))
    A = sp.Function("A")(t, r)
    Ar = sp.Derivative(A, r)
    for i in range(3):
        e = sum(xs[j] * ((A if i == j else 0) + Ar * xs[i] * xs[j] / r) for j in range(3))
        assert c.simplify(e - (A * xs[i] + Ar * r * xs[i])) == 0


def test_diff(ctx):
    x = ctx.sym("x")
    assert diff(parse("x^2 + y^2", ctx), x) == 2 * x
    e = diff(parse("A(t,r)*x", ctx), ctx.sym("r"))
    A = sp.Function("A")(ctx.sym("t"), ctx.sym("r"))
    assert sp.simplify(e - sp.Derivative(A, ctx.sym("r")) * x) == 0


def test_diff_matches_finite_difference(ctx):
    # d/dx f(x^2) against a centered difference with f = sin
    e = parse("f(x^2 + 1)", ctx)
    d = diff(e, ctx.sym("x"))
    table = FunctionTable.from_closed_forms({"f": ([sp.Symbol("s")], sp.sin(sp.Symbol("s")))})
    rng = random.Random(3)
    for _ in range(20):
        x0 = rng.uniform(-1.5, 1.5)
        h = 1e-5
        fd = (eval_numeric(e, {"x": x0 + h}, table) - eval_numeric(e, {"x": x0 - h}, table)) / (2 * h)
        ex = eval_numeric(d, {"x": x0}, table)
        assert abs(fd - ex) <= 1e-6 * max(1.0, abs(ex))


def test_substitute(ctx):
    e = parse("u_x", ctx)
    rhs = parse("A(t,r) + x^2*D(A, r)/r", ctx)
    assert substitute(e, {ctx.sym("u_x"): rhs}) == simplify(rhs)
    assert substitute(parse("x*y + u", ctx), {}) == simplify(parse("x*y + u", ctx))


def test_substitute_composes_numerically(ctx):
    e = parse("x^2 + x*y", ctx)
    b = {ctx.sym("x"): parse("y + t", ctx)}
    out = substitute(e, b)
    rng = random.Random(5)
    for _ in range(20):
        y0, t0 = rng.uniform(-2, 2), rng.uniform(-2, 2)
        x0 = y0 + t0
        assert math.isclose(eval_numeric(out, {"y": y0, "t": t0}), x0**2 + x0 * y0, rel_tol=1e-12, abs_tol=1e-12)


def test_reduce_mod_sphere():
    c = Context()
    x, y, z = (c.declare(n, "base") for n in "xyz")
    rules = [RewriteRule(z, 2, 1 - x**2 - y**2)]
    assert sp.expand(reduce_mod(z**2, rules) - (1 - x**2 - y**2)) == 0
    quartic = x**4 + 2 * x**2 * y**2 + y**4 + 2 * x**2 * z**2 + 2 * y**2 * z**2 + z**4
    assert simplify(quartic, rules) == 1


def test_veronese_energy_density_is_six():
    c = Context()
    x, y, z = (c.declare(n, "base") for n in "xyz")
    s3 = c.declare("s3", "constant")
    c.add_rule(RewriteRule(z, 2, 1 - x**2 - y**2))
    c.add_rule(RewriteRule(s3, 2, sp.Integer(3)))
    phi = [s3 * x * y, s3 * x * z, s3 * y * z, s3 * (x**2 - y**2) / 2, (x**2 + y**2 - 2 * z**2) / 2]
    xs = (x, y, z)
    lam = 0
    for u in phi:
        grad = [sp.diff(u, v) for v in xs]
        lam += sum(g**2 for g in grad) - sum(v * g for v, g in zip(xs, grad)) ** 2
    assert c.simplify(lam) == 6


def test_rule_rejects_growing_rhs():
    x = sp.Symbol("x")
    with pytest.raises(NonTerminatingRule):
        RewriteRule(x, 2, x**3)


def test_eval_numeric(ctx):
    assert eval_numeric(parse("x^2 + y^2", ctx), {"x": 3, "y": 4}) == 25.0
    table = FunctionTable.from_closed_forms({"A": ([sp.Symbol("tt"), sp.Symbol("rr")], 1 / sp.Symbol("rr") ** 3)})
    assert eval_numeric(parse("A(t,r)", ctx), {"t": 0.3, "r": 2.0}, table) == pytest.approx(0.125)


# -- property suite: canonical form idempotence and numeric soundness -----------

X, Y, Z = sp.symbols("x y z")
LEAVES = st.sampled_from([X, Y, Z, sp.Integer(1), sp.Integer(2), sp.Integer(-3), sp.Rational(1, 2)])


def _exprs():
    return st.recursive(
        LEAVES,
        lambda sub: st.one_of(
            st.tuples(sub, sub).map(lambda p: p[0] + p[1]),
            st.tuples(sub, sub).map(lambda p: p[0] * p[1]),
            st.tuples(sub, sub).map(lambda p: p[0] - p[1]),
            st.tuples(sub, st.integers(0, 3)).map(lambda p: p[0] ** p[1]),
            st.tuples(sub, sub).map(lambda p: p[0] / (p[1] ** 2 + 1)),
        ),
        max_leaves=8,
    )


SPHERE = [RewriteRule(Z, 2, 1 - X**2 - Y**2)]


@settings(max_examples=1000, deadline=None, suppress_health_check=[HealthCheck.too_slow])
@given(_exprs(), st.integers(0, 2**31 - 1))
def test_canonical_form_properties(e, seed):
    s = simplify(e)
    assert simplify(s) == s
    # the printed form re-parses to the same canonical form
    c = Context()
    for n in "xyz":
        c.declare(n, "base")
    assert simplify(parse(to_text(s), c)) == s
    rng = random.Random(seed)
    for _ in range(3):
        p = {"x": rng.uniform(-2, 2), "y": rng.uniform(-2, 2), "z": rng.uniform(-2, 2)}
        try:
            a = eval_numeric(e, p)
        except (NumericDomain, ZeroDivisionError, OverflowError):
            continue
        b = eval_numeric(s, p)
        assert math.isclose(a, b, rel_tol=1e-9, abs_tol=1e-9)


@settings(max_examples=300, deadline=None, suppress_health_check=[HealthCheck.too_slow])
@given(_exprs(), st.integers(0, 2**31 - 1))
def test_reduction_modulo_sphere_is_sound(e, seed):
    s = simplify(e, SPHERE)
    assert simplify(s, SPHERE) == s
    rng = random.Random(seed)
    x0, y0 = rng.uniform(-0.6, 0.6), rng.uniform(-0.6, 0.6)
    z0 = math.sqrt(1 - x0**2 - y0**2)
    p = {"x": x0, "y": y0, "z": z0}
    try:
        a = eval_numeric(e, p)
    except (NumericDomain, ZeroDivisionError, OverflowError):
        return
    assert math.isclose(a, eval_numeric(s, p), rel_tol=1e-8, abs_tol=1e-8)
