import sympy as sp

import pytest

from conftest import report_of, run_of, spec_of
from lred import dynamic
from lred.golden import compare_reduced
from lred.pipeline import Run
from lred.problem import build
from lred.symkernel import to_text


def _reduced_text(name):
    return {n: to_text(c) for n, c in zip(run_of(name).reduced().names, run_of(name).reduced().components)}


def test_euler_ansatz_is_radial():
    r = run_of("euler_rotational")
    ctx = r.ctx
    a = r.ansatz()
    t, rr = ctx.sym("t"), ctx.sym("r")
    A, B = sp.Function("A")(t, rr), sp.Function("B")(t, rr)
    for i in (1, 2, 3):
        assert ctx.simplify(a.section[ctx.sym(f"u{i}")] - A * ctx.sym(f"x{i}")) == 0
    assert a.section[ctx.sym("p")] == B
    assert a.relations == [] and a.rules == []


def test_euler_prolonged_jets():
    r = run_of("euler_rotational")
    ctx = r.ctx
    a = r.ansatz()
    t, rr = ctx.sym("t"), ctx.sym("r")
    A = sp.Function("A")(t, rr)
    xs = [ctx.sym(f"x{i}") for i in (1, 2, 3)]
    for i in range(3):
        for j in range(3):
            jet = ctx.sym(f"u{i + 1}_x{j + 1}")
            want = (A if i == j else 0) + sp.Derivative(A, rr) * xs[i] * xs[j] / rr
            assert ctx.simplify(a.jets[jet] - want) == 0


def test_euler_restricted_divergence():
    r = run_of("euler_rotational")
    ctx = r.ctx
    t, rr = ctx.sym("t"), ctx.sym("r")
    A = sp.Function("A")(t, rr)
    assert ctx.simplify(r.restricted()[ctx.sym("e0")] - (3 * A + rr * sp.Derivative(A, rr))) == 0


def _same_rows(M, ref, ctx):
    from lred.linalg import rank

    return rank(M, ctx) == rank(ref, ctx) == rank(M + ref, ctx)


def test_euler_frame():
    r = run_of("euler_rotational")
    ctx = r.ctx
    fr = r.frame()
    xs = [ctx.sym(f"x{i}") for i in (1, 2, 3)]
    assert fr.dim == 2
    assert _same_rows(fr.M, [[0, 0, 0, 1], xs + [0]], ctx)


def test_new_euler_frame_drops_u_and_v():
    r = run_of("euler_new_reduction")
    ctx = r.ctx
    fr = r.frame()
    assert [f.name for f in fr.frame] == ["eu", "ev", "ew", "e0"]
    assert fr.dim == 2
    assert all(row[0] == 0 and row[1] == 0 for row in fr.M)
    assert _same_rows(fr.M, [[0, 0, 0, 1], [0, 0, ctx.sym("z"), 0]], ctx)
    rest = r.restricted()
    assert rest[ctx.sym("eu")] == 0 and rest[ctx.sym("ev")] == 0


def test_veronese_frame_is_empty():
    u = report_of("harmonic_s2s4_caseIII")["sections"]["universal"]
    assert u["frame_dim"] == 0 and u["universal"] is True


REFERENCE = {
    "euler_rotational": {
        "F1": "D(A, t) + A(t,r)*(A(t,r) + r*D(A, r)) + D(B, r)/r",
        "F2": "3*A(t,r) + r*D(A, r)",
    },
    "euler_new_reduction": {
        "F1": "D(A, t) + A(t)^2 + B(t)",
        "F2": "2*(al(t)*D(al, t) + be(t)*D(be, t))/(al(t)^2 + be(t)^2) + A(t)",
    },
    "mech_central_force": {"F1": "D(W, t) - Pw(t)", "F2": "D(Pw, t) + W(t)*f(W(t))"},
}


@pytest.mark.parametrize("name", sorted(REFERENCE))
def test_reduced_system_matches_reference(name):
    r = run_of(name)
    red = r.reduced()
    assert red.factorization_ok and red.independence["ok"]
    assert compare_reduced(_reduced_text(name), REFERENCE[name], r.ctx) == []


def test_reference_comparison_rejects_a_wrong_form():
    r = run_of("euler_rotational")
    bad = dict(REFERENCE["euler_rotational"], F2="2*A(t,r) + r*D(A, r)")
    assert compare_reduced(_reduced_text("euler_rotational"), bad, r.ctx)


def test_plane_wave_has_two_reduced_components():
    red = run_of("plane_wave").reduced()
    assert len(red.components) == 2
    assert red.factorization_ok


# -- transversal problems give the classical reduction ------------------------


def test_heat_translation_is_the_traveling_wave_ode():
    r = run_of("heat_translation")
    got = _reduced_text("heat_translation")
    ctx = r.ctx
    xi = ctx.sym("xi")
    t, x = sp.symbols("t x")
    U = sp.Function("U")
    e = sp.diff(U(x - t), t) - sp.diff(U(x - t), x, 2)
    classical = sp.simplify(e.subs(x, xi + t).doit())
    assert t not in classical.free_symbols
    assert compare_reduced(got, {"F1": to_text(classical)}, ctx) == []


def test_wave_boost_is_the_radial_ode():
    r = run_of("wave_boost")
    got = _reduced_text("wave_boost")
    ctx = r.ctx
    s = ctx.sym("s")
    t, x = sp.symbols("t x", positive=True)
    U = sp.Function("U")
    w = U(sp.sqrt(x**2 - t**2))
    e = sp.diff(w, t, 2) - sp.diff(w, x, 2)
    sp_ = sp.Symbol("sp", positive=True)
    e = e.subs(x, sp.sqrt(sp_**2 + t**2)).doit()
    classical = sp.simplify(e).subs(sp_, s)
    assert t not in classical.free_symbols
    assert compare_reduced(got, {"F1": to_text(classical)}, ctx) == []


HEAT_DX = {
    "name": "heat_space_translation",
    "base": ["t", "x"],
    "fiber": ["u"],
    "generators": [{"name": "Dx", "coeffs": {"x": "1"}}],
    "operator": {"order": 2, "frame": ["e"], "components": {"e": "u_t - u_xx"}},
    "invariants": {"base": [{"name": "t", "expr": "t"}], "fiber": [{"name": "U", "expr": "u"}]},
    "options": {"max_degree": 2},
}


def test_heat_with_space_translation_gives_u_of_t():
    r = Run(build(HEAT_DX))
    red = r.reduced()
    ctx = r.ctx
    assert r.ansatz().section[ctx.sym("u")] == sp.Function("U")(ctx.sym("t"))
    comps = {n: to_text(c) for n, c in zip(red.names, red.components)}
    assert compare_reduced(comps, {"F1": "D(U, t)"}, ctx) == []


# -- solutions ----------------------------------------------------------------


def _verify(name):
    return {v["name"]: v for v in report_of(name)["sections"]["verify"]}


def test_euler_closed_form_solves_both_systems():
    v = _verify("euler_rotational")
    assert v["closed_form"]["ok"] and set(v["closed_form"]["reduced"] + v["closed_form"]["original"]) == {"0"}
    assert v["perturbed"]["ok"] is False and v["perturbed"]["pass"]


@pytest.mark.parametrize("name", ["heat_translation", "wave_boost", "euler_new_reduction", "harmonic_s2s4_caseIII"])
def test_declared_solutions_verify(name):
    for v in _verify(name).values():
        assert v["pass"], v


def test_zero_candidate_in_a_nonzero_system():
    r = run_of("heat_translation")
    red = r.reduced()
    ctx = r.ctx
    closed = {"U": ([ctx.sym("xi")], ctx.sym("xi") ** 2)}
    res = dynamic.verify_solution(closed, red, r.ansatz(), r.spec.operator, r.spec.bundle, r.restricted())
    assert not res["ok"] and res["original"] != ["0"]
