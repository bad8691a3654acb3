"""Golden reports: the stable view of a report and an equivalence-aware comparator.

Reduced systems are compared up to an invertible constant recombination of
the frame components: report components R and golden components G pass when
R = C G for some constant matrix C with det C != 0. C is found by an exact
linear solve over the coefficients of the numerators.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import sympy as sp
from sympy.core.function import AppliedUndef

from lred.problem import build, corpus_files
from lred.symkernel import parse


@dataclass
class GoldenResult:
    ok: bool
    diffs: list = field(default_factory=list)

    def to_json(self):
        return {"ok": self.ok, "diffs": self.diffs}


def golden_view(report):
    """The parts of a report that goldens pin down."""
    s = report.get("sections", {})
    view = {"problem": report["problem"], "command": report["command"], "status": report["status"]}
    if "finding" in report:
        view["finding"] = report["finding"]["kind"]
    if "error" in report:
        view["error"] = report["error"]["kind"]
    if "check" in s:
        t = s["check"]["transversality"]
        view["transversality"] = {k: t[k] for k in ("holds", "rank_base", "rank_total")}
    if "kinematic" in s:
        view["fiber_dim"] = s["kinematic"]["bundle"]["fiber_dim"]
    if "invariants" in s:
        view["invariants"] = {
            "base": {i["name"]: i["expr"] for i in s["invariants"]["base"]},
            "fiber": {i["name"]: i["expr"] for i in s["invariants"]["fiber"]},
        }
    if "reduce" in s:
        red = s["reduce"]
        view["ansatz"] = red["ansatz"]["section"]
        view["reduced"] = red["reduced"]["components"]
    if "verify" in s:
        view["verify"] = {v["name"]: v["pass"] for v in s["verify"]}
    if "residual" in s:
        view["residual"] = {
            r["candidate"]: [r["isotropy"]["verdict"], r["automorphism"]["verdict"]] for r in s["residual"]
        }
    if "universal" in s:
        view["universal"] = s["universal"]["universal"]
    return view


def _context(problem, raw):
    """Symbol table with the reduced unknowns declared, for parsing components."""
    from lred.pipeline import Run

    if raw is None:
        for p in corpus_files():
            data = json.loads(p.read_text(encoding="utf-8"))
            if data["name"] == problem:
                raw = data
                break
        else:
            raise FileNotFoundError(f"no corpus fixture named {problem!r}")
    spec = build(raw)
    r = Run(spec, numeric=False)
    r.ansatz()
    return spec.ctx


def _opaque(exprs):
    """Replace function and derivative atoms by plain symbols.

    xreplace matches whole nodes top-down, so D(U, s) is never rewritten
    inside D(U, s, s).
    """
    atoms = set()
    for e in exprs:
        atoms |= e.atoms(sp.Derivative) | e.atoms(AppliedUndef)
    atoms = sorted(atoms, key=sp.default_sort_key)
    reps = {a: sp.Dummy(f"J{k}") for k, a in enumerate(atoms)}
    return [e.xreplace(reps) for e in exprs]


def _combination(r, gs, ctx, tag):
    """Constants c with r = sum c_j g_j, or None."""
    cs = sp.symbols(f"{tag}_0:{len(gs)}")
    e = ctx.simplify(r - sum(c * g for c, g in zip(cs, gs)))
    (e,) = _opaque([e])
    num = sp.expand(sp.fraction(sp.together(e))[0])
    gens = sorted(num.free_symbols - set(cs), key=sp.default_sort_key)
    eqs = sp.Poly(num, *gens).coeffs() if gens else [num]
    sol = sp.linsolve(eqs, cs)
    if not sol:
        return None
    (vals,) = sol
    # free parameters: pick 0 (any member of the affine family will do)
    free = set().union(*(sp.sympify(v).free_symbols for v in vals)) & set(cs)
    return [sp.sympify(v).xreplace({f: 0 for f in free}) for v in vals]


def compare_reduced(report_comps, golden_comps, ctx):
    """Components agree up to an invertible constant recombination.

    Checked as span equality in both directions, so components that vanish
    identically are allowed on both sides.
    """
    names = sorted(report_comps)
    gnames = sorted(golden_comps)
    if len(names) != len(gnames):
        return [{"field": "reduced", "reason": f"{len(names)} components vs golden {len(gnames)}"}]
    R = [parse(report_comps[n], ctx) for n in names]
    G = [parse(golden_comps[n], ctx) for n in gnames]
    diffs = []
    for k, (n, r) in enumerate(zip(names, R)):
        if _combination(r, G, ctx, f"c{k}") is None:
            diffs.append({"field": f"reduced.{n}", "reason": "not a constant combination of the golden components",
                          "report": report_comps[n]})
    if diffs:
        return diffs
    for k, (n, g) in enumerate(zip(gnames, G)):
        if _combination(g, R, ctx, f"d{k}") is None:
            diffs.append({"field": f"reduced.{n}", "reason": "golden component not spanned by the report",
                          "golden": golden_comps[n]})
    return diffs


def compare_golden(report, golden, raw=None):
    """Compare a report (or its view) against a golden view."""
    view = golden_view(report) if "sections" in report else report
    diffs = []
    for key in sorted(set(view) | set(golden)):
        if key == "reduced":
            continue
        if view.get(key) != golden.get(key):
            diffs.append({"field": key, "report": view.get(key), "golden": golden.get(key)})
    if "reduced" in view or "reduced" in golden:
        if ("reduced" in view) != ("reduced" in golden):
            diffs.append({"field": "reduced", "reason": "present in only one side"})
        else:
            ctx = _context(view["problem"], raw)
            diffs += compare_reduced(view["reduced"], golden["reduced"], ctx)
    return GoldenResult(not diffs, diffs)


def golden_path(fixture):
    p = Path(fixture)
    return p.with_name(p.name.replace(".lred.json", ".golden.json"))


def write_golden(report, path):
    Path(path).write_text(json.dumps(golden_view(report), indent=2, sort_keys=True) + "\n", encoding="utf-8")


def read_golden(path):
    return json.loads(Path(path).read_text(encoding="utf-8"))
