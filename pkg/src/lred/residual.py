"""Residual symmetry membership tests and the universal-solution detector."""

from __future__ import annotations

from dataclasses import dataclass, field

import sympy as sp

from lred.errors import NotTangent
from lred.fields import check_admissible, lie_bracket
from lred.kinematic import residual_field
from lred.linalg import Inconsistent, solve_affine
from lred.symkernel import to_text

IN_ISOTROPY = "in_isotropy"
IN_AUTOMORPHISM = "in_automorphism_only"
OUTSIDE = "outside"


@dataclass
class MembershipCertificate:
    candidate: str
    verdict: str
    witness: dict = field(default_factory=dict)

    def to_json(self):
        return {"candidate": self.candidate, "verdict": self.verdict, "witness": self.witness}


def _span_on_kb(vec_field, gens, kb):
    """Solve Y_p = sum c_a V_a(p) over p in the kinematic bundle.

    Returns (coefficients, None) or (None, offending coordinate name).
    """
    b = kb.bundle
    ctx = b.ctx
    coords = b.coords
    A = [[kb.iota(g[s]) for g in gens] for s in coords]
    rhs = [kb.iota(vec_field[s]) for s in coords]
    try:
        sol, _, _ = solve_affine(A, rhs, ctx)
    except Inconsistent as exc:
        # first coordinate carried by the inconsistent combination
        idx = next((i for i, c in enumerate(exc.combo) if c != 0), 0)
        return None, coords[idx].name
    return [ctx.simplify(c) for c in sol], None


def _tangent(Y, kb):
    try:
        residual_field(Y, kb)
        return True
    except NotTangent:
        return False


def check_automorphism_member(Y, alg, kb):
    """[V_a, Y] restricted to the bundle lies in span(V_a) for every generator."""
    check_admissible(Y, alg.bundle)
    name = Y.name or "Y"
    if not _tangent(Y, kb):
        return MembershipCertificate(name, OUTSIDE, {"reason": "not tangent to the kinematic bundle"})
    coeffs = {}
    for g in alg.generators:
        br = lie_bracket(g, Y, alg.bundle.ctx)
        c, bad = _span_on_kb(br, alg.generators, kb)
        if c is None:
            return MembershipCertificate(
                name, OUTSIDE, {"generator": g.name, "component": bad, "bracket": br.to_json()}
            )
        coeffs[g.name] = [to_text(x) for x in c]
    return MembershipCertificate(name, IN_AUTOMORPHISM, {"bracket_coefficients": coeffs})


def check_isotropy_member(Y, alg, kb):
    """Classify Y: in the isotropy subalgebra, automorphism only, or outside."""
    check_admissible(Y, alg.bundle)
    name = Y.name or "Y"
    c, bad = _span_on_kb(Y, alg.generators, kb)
    if c is not None:
        return MembershipCertificate(name, IN_ISOTROPY, {"coefficients": [to_text(x) for x in c]})
    auto = check_automorphism_member(Y, alg, kb)
    auto.witness["not_in_span_component"] = bad
    return auto


def universal_check(op, kb, gens, max_degree=4, seed=42):
    """True iff the invariant frame over the kinematic bundle is empty."""
    from lred.dynamic import invariant_frame

    res = [residual_field(g, kb) for g in gens]
    frame = invariant_frame(op, res, kb, max_degree=max_degree, seed=seed)
    return frame.dim == 0, universal_report(frame, max_degree, gens)


def universal_report(frame, max_degree, gens):
    return {
        "frame_dim": frame.dim,
        "max_degree": max_degree,
        "frame": frame.to_json(),
        "generators": [g.name for g in gens],
    }
