import pytest
import sympy as sp

from conftest import FIXTURES, report_of, run_of, spec_of
from lred import residual
from lred.fields import VectorField

OK_FIXTURES = sorted(n for n in FIXTURES if n != "mech_translation")


@pytest.mark.parametrize("name", OK_FIXTURES)
def test_generators_are_in_the_isotropy(name):
    r = run_of(name)
    alg, kb = r.spec.algebra, r.kb()
    for g in alg.generators:
        assert residual.check_isotropy_member(g, alg, kb).verdict == residual.IN_ISOTROPY, g.name


def test_euler_time_translation_is_automorphism_only():
    (dt,) = [c for c in report_of("euler_rotational")["sections"]["residual"] if c["candidate"] == "Dt"]
    assert dt["isotropy"]["verdict"] == residual.IN_AUTOMORPHISM
    assert dt["isotropy"]["witness"]["not_in_span_component"] == "t"
    # it commutes with every rotation
    for coeffs in dt["automorphism"]["witness"]["bracket_coefficients"].values():
        assert coeffs == ["0", "0", "0"]


def test_euler_spatial_translation_is_outside():
    r = run_of("euler_rotational")
    ctx = r.ctx
    Y = VectorField({ctx.sym("x1"): sp.Integer(1)}, "Dx1")
    cert = residual.check_isotropy_member(Y, r.spec.algebra, r.kb())
    assert cert.verdict == residual.OUTSIDE


def test_case_two_rotation_is_automorphism_only():
    (c,) = report_of("harmonic_s2s4_caseII")["sections"]["residual"]
    assert c["candidate"] == "R45"
    assert c["isotropy"]["verdict"] == residual.IN_AUTOMORPHISM
    assert c["automorphism"]["verdict"] == residual.IN_AUTOMORPHISM


@pytest.mark.parametrize(
    "name,flag",
    [
        ("euler_rotational", False),
        ("harmonic_s2s4_caseI", True),
        ("harmonic_s2s4_caseII", False),
        ("harmonic_s2s4_caseIII", True),
    ],
)
def test_universality_flags(name, flag):
    u = report_of(name)["sections"]["universal"]
    assert u["universal"] is flag
    assert (u["frame_dim"] == 0) is flag


def test_universal_check_in_kinematic_coordinates():
    r = run_of("euler_rotational")
    ok, rep = residual.universal_check(r.spec.operator, r.kb(), r.spec.generators, max_degree=1)
    assert ok is False and rep["frame_dim"] == 2
