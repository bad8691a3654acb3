"""Stage orchestration and report assembly."""

from __future__ import annotations

import copy

import numpy as np
import sympy as sp

from lred import dynamic, kinematic, numcheck, residual
from lred.errors import EmptyKinematic, LredError
from lred.fields import VectorField
from lred.problem import SCHEMA_VERSION, build
from lred.symkernel import parse, to_text

STAGES = ("check", "kinematic", "invariants", "reduce", "verify", "residual", "universal")


class Run:
    """One reduction of one problem; stages are computed lazily and cached."""

    def __init__(self, spec, max_degree=None, seed=None, tol_num=None, tol_fd=None, candidates=None, numeric=True):
        self.spec = spec
        self.ctx = spec.ctx
        self.max_degree = max_degree if max_degree is not None else spec.option("max_degree", 4)
        self.frame_degree = spec.option("frame_degree", self.max_degree)
        self.seed = seed if seed is not None else spec.option("seed", 42)
        self.tol_num = tol_num if tol_num is not None else spec.option("tol_num", 1e-6)
        self.tol_fd = tol_fd if tol_fd is not None else spec.option("tol_fd", 1e-5)
        self.extra_candidates = list(candidates or [])
        self.numeric = numeric
        self.count = spec.raw.get("numeric", {}).get("count", 20)
        self._cache = {}

    def plan(self, count=None, salt=0):
        return numcheck.SamplePlan(seed=self.seed + salt, count=count or self.count)

    def functions(self, names=None):
        """Generic stand-ins, overridden by the problem's own numeric forms."""
        fns = numcheck.generic_functions(self.ctx, names, seed=self.seed)
        return fns.merged(self.spec.numeric) if self.spec.numeric else fns

    # -- stages -------------------------------------------------------------
    def transversality(self):
        if "tr" not in self._cache:
            self._cache["tr"] = kinematic.transversality_report(self.spec.algebra, seed=self.seed)
        return self._cache["tr"]

    def constraints(self):
        if "cs" not in self._cache:
            self._cache["cs"] = kinematic.isotropy_constraints(self.spec.algebra, self.spec.discrete)
        return self._cache["cs"]

    def kb(self):
        if "kb" not in self._cache:
            self._cache["kb"] = kinematic.solve_kinematic_fiber(self.constraints(), self.spec.algebra, seed=self.seed)
        return self._cache["kb"]

    def invariants(self):
        if "inv" not in self._cache:
            self._cache["inv"] = kinematic.compute_invariants(
                self.kb(), self.spec.algebra, self.max_degree, self.spec.denominators, self.spec.hints, seed=self.seed
            )
        return self._cache["inv"]

    def ansatz(self):
        if "ansatz" not in self._cache:
            a = dynamic.build_ansatz(self.kb(), self.invariants())
            if self.spec.jets is not None:
                dynamic.prolong_ansatz(a, self.spec.jets, self.spec.operator.order)
            self._cache["ansatz"] = a
        return self._cache["ansatz"]

    def restricted(self):
        if "restricted" not in self._cache:
            self._cache["restricted"] = dynamic.restrict_operator(self.spec.operator, self.ansatz())
        return self._cache["restricted"]

    def frame(self):
        if "frame" not in self._cache:
            self._cache["frame"] = dynamic.invariant_frame(
                self.spec.operator,
                self.kb().residual_generators,
                self.kb(),
                max_degree=self.frame_degree,
                seed=self.seed,
                target=self.restricted(),
                pullback=self.ansatz().v_solution,
            )
        return self._cache["frame"]

    def reduced(self):
        if "reduced" not in self._cache:
            sigma = None
            raw = self.spec.raw.get("cross_section")
            if raw:
                sigma = {self.ctx.sym(k): parse(v, self.ctx) for k, v in raw.items()}
            self._cache["reduced"] = dynamic.factor_through_frame(
                self.restricted(), self.frame(), self.invariants(), self.spec.bundle, sigma,
                pullback=self.ansatz().v_solution,
            )
        return self._cache["reduced"]

    # -- sections -----------------------------------------------------------
    def section_check(self):
        tr = self.transversality()
        alg = self.spec.algebra
        closure = {
            f"[{alg.generators[i].name},{alg.generators[j].name}]": [to_text(c) for c in v]
            for (i, j), v in sorted(alg.closure_table.items())
        }
        return {"transversality": tr.to_json(), "closure": closure, "generators": [g.name for g in alg.generators]}

    def section_kinematic(self):
        cs = self.constraints()
        kb = self.kb()
        return {
            "kernel_combos": [[to_text(c) for c in phi] for phi in cs.kernel_combos],
            "constraints": [to_text(e) for e in cs.constraint_exprs],
            "discrete_constraints": [to_text(e) for e in cs.discrete_constraints],
            "bundle": kb.to_json(),
            "residual_generators": [g.to_json() for g in kb.residual_generators],
        }

    def section_invariants(self):
        inv = self.invariants()
        out = inv.to_json()
        out["diagram"] = kinematic.kinematic_diagram(self.transversality(), self.kb(), inv)
        if self.numeric:
            out["numeric"] = self.invariant_drift()
        return out

    def invariant_drift(self):
        """Flow drift of every invariant under every generator (ODE oracle)."""
        b = self.spec.bundle
        kb = self.kb()
        inv = self.invariants()
        worst = 0.0
        rows = []
        for k, g in enumerate(kb.residual_generators):
            base_part = VectorField({x: g[x] for x in b.base}, g.name)
            for i in inv.base:
                if base_part.is_zero():
                    continue
                d = numcheck.flow_invariance(i.expr, base_part, self.ctx, self.plan(salt=k))
                rows.append([i.name, g.name, _fmt(d)])
                worst = max(worst, d)
            for i in inv.fiber:
                if g.is_zero():
                    continue
                d = numcheck.flow_invariance(i.expr, g, self.ctx, self.plan(salt=k))
                rows.append([i.name, g.name, _fmt(d)])
                worst = max(worst, d)
        return {"max_drift": _fmt(worst), "ok": worst < self.tol_num, "rows": rows}

    def ansatz_fd(self):
        """Finite-difference check of every first-order jet entry of the ansatz."""
        a = self.ansatz()
        jc = self.spec.jets
        worst = 0.0
        if jc is None:
            return {"max_error": "0", "ok": True}
        fns = self.functions()
        plan = self.plan(count=min(self.count, 20), salt=101)
        checks = []
        for s, e in a.jets.items():
            u, idx = jc.index_of[s]
            parent = a.section[u] if len(idx) == 1 else a.jets[jc.symbols[(u, idx[:-1])]]
            checks.append((parent, jc.base[idx[-1]], e))
        # one sample for all entries
        points = plan.points(self.ctx, [x for p, _, e in checks for x in (p, e)], fns=fns)
        for parent, x, e in checks:
            err = numcheck.fd_crosscheck(parent, x, self.ctx, plan, fns=fns, target=e, points=points)
            worst = max(worst, err)
        return {"max_error": _fmt(worst), "ok": worst < self.tol_fd}

    def section_reduce(self):
        a = self.ansatz()
        out = {"ansatz": a.to_json()}
        if self.spec.operator is None:
            return out
        if self.numeric:
            out["ansatz_fd"] = self.ansatz_fd()
        R = self.restricted()
        out["restricted"] = {f.name: to_text(R[f]) for f in self.spec.operator.frame}
        red = self.reduced()
        out["reduced"] = red.to_json()
        out["reduced"]["raw"] = {n: to_text(c) for n, c in zip(red.names, red.raw)}
        return out

    def section_verify(self):
        out = []
        for sol in self.spec.raw.get("solutions", []):
            out.append(self.verify_one(sol))
        return out

    def closed_forms(self, sol):
        ctx = self.ctx
        for f in sol.get("functions", []):
            ctx.declare_function(f["name"], [ctx.sym(x) for x in f["args"]])
        closed = {}
        for name, v in sol["values"].items():
            args = [ctx.sym(x) for x in v["args"]]
            closed[name] = (args, parse(v["expr"], ctx, elementary=True))
        return closed

    def verify_one(self, sol):
        ctx = self.ctx
        closed = self.closed_forms(sol)
        red = self.reduced() if self._reduced_available() else None
        res = dynamic.verify_solution(closed, red, self.ansatz(), self.spec.operator, self.spec.bundle, self.restricted())
        res["name"] = sol["name"]
        if self.numeric:
            free = {f["name"] for f in sol.get("functions", [])}
            fns = self.functions(free | set(self.spec.numeric.names()))
            if sol.get("numeric"):
                from lred.problem import numeric_table

                fns = fns.merged(numeric_table(ctx, sol["numeric"]))
            comps = [dynamic._apply_closed(self.restricted()[f], closed, ctx) for f in self.spec.operator.frame]
            try:
                worst = numcheck.residual_scan(comps, fns, self.plan(count=10, salt=7), ctx)
                res["numeric_max"] = [_fmt(w) for w in worst]
                res["numeric_ok"] = max(worst, default=0.0) < self.tol_num
            except LredError as exc:
                res["numeric_max"] = None
                res["numeric_error"] = str(exc)
        expect = sol.get("expect", "zero")
        res["expect"] = expect
        res["pass"] = res["ok"] if expect == "zero" else not res["ok"]
        return res

    def _reduced_available(self):
        try:
            self.reduced()
            return True
        except LredError:
            return False

    def section_residual(self):
        kb = self.kb()
        alg = self.spec.algebra
        out = []
        for Y in list(self.spec.candidates) + self.extra_candidates:
            iso = residual.check_isotropy_member(Y, alg, kb)
            aut = residual.check_automorphism_member(Y, alg, kb)
            out.append({"candidate": Y.name, "isotropy": iso.to_json(), "automorphism": aut.to_json()})
        return out

    def section_universal(self):
        u = self.spec.universal
        op = self.spec.operator
        if u is None:
            gens, action = self.kb().residual_generators, op.action
            lifted = self.spec.generators
        else:
            lifted = u["generators"]
            action = dict(op.action)
            action.update(u["action"])
        uop = copy.copy(op)
        uop.action = action
        deg = u.get("max_degree") if u and u.get("max_degree") is not None else self.frame_degree
        # same generators, action and degree as the operator frame: reuse it
        same = [g.coeffs for g in lifted] == [g.coeffs for g in self.spec.generators] and action == op.action
        if same:
            frame = self._cache.get("frame")
            if frame is None or frame.degree != deg:
                kb = self.kb()
                frame = dynamic.invariant_frame(
                    op, kb.residual_generators, kb, max_degree=deg, seed=self.seed, min_degree=deg,
                    pullback=self.ansatz().v_solution,
                )
            flag, rep = frame.dim == 0, residual.universal_report(frame, deg, lifted)
        else:
            flag, rep = residual.universal_check(uop, self.kb(), lifted, max_degree=deg, seed=self.seed)
        rep["universal"] = flag
        return rep

    # -- driver -------------------------------------------------------------
    def report(self, command):
        stages = _stages_for(command, self.spec)
        rep = {
            "schema_version": SCHEMA_VERSION,
            "problem": self.spec.name,
            "input_sha256": self.spec.sha256,
            "command": command,
            "options": {"max_degree": self.max_degree, "seed": self.seed, "tol_num": self.tol_num, "tol_fd": self.tol_fd},
            "status": "ok",
        }
        sections = {}
        try:
            for st in stages:
                sections[st] = getattr(self, f"section_{st}")()
        except EmptyKinematic as exc:
            rep["status"] = "finding"
            rep["finding"] = {"kind": "EmptyKinematic", "square": exc.square, "message": str(exc), "certificate": exc.certificate}
        except LredError as exc:
            rep["status"] = "error"
            rep["error"] = {"kind": type(exc).__name__, "square": exc.square, "message": str(exc)}
        rep["sections"] = sections
        return rep


def _fmt(x):
    return f"{float(x):.3e}"


def _stages_for(command, spec):
    if command == "all":
        stages = spec.option("stages", None)
        if stages is None:
            stages = ["check", "kinematic", "invariants"]
            if spec.operator is not None:
                stages.append("reduce")
            if spec.raw.get("solutions"):
                stages.append("verify")
            if spec.candidates:
                stages.append("residual")
            if spec.operator is not None:
                stages.append("universal")
        return list(stages)
    order = {
        "check": ["check"],
        "kinematic": ["check", "kinematic"],
        "invariants": ["check", "kinematic", "invariants"],
        "reduce": ["check", "kinematic", "invariants", "reduce"],
        "verify": ["check", "kinematic", "invariants", "reduce", "verify"],
        "residual": ["check", "kinematic", "residual"],
        "universal": ["check", "kinematic", "invariants", "universal"],
    }
    return order[command]


def run(spec, command, **kw):
    return Run(spec, **kw).report(command)


def reverify(report, raw):
    """Re-check the factorization and independence claims of a serialized report.

    Rebuilds the symbol table from the problem file, replays the ansatz stage
    (which only declares names), then parses every expression from the report.
    """
    spec = build(raw)
    r = Run(spec, numeric=False)
    r.ansatz()
    ctx = spec.ctx
    red = report["sections"]["reduce"]
    restricted = {ctx.sym(k): parse(v, ctx) for k, v in red["restricted"].items()}
    rr = red["reduced"]
    names = list(rr["raw"])
    raw_comps = [parse(rr["raw"][n], ctx) for n in names]
    frame = [ctx.sym(f) for f in rr["frame"]["frame"]]
    M = [[parse(e, ctx) for e in row] for row in rr["frame"]["M"]]
    fact = all(
        ctx.simplify(sum(raw_comps[q] * M[q][i] for q in range(len(M))) - restricted[f]) == 0
        for i, f in enumerate(frame)
    )
    dirs = [[parse(e, ctx) for e in w] for w in rr["certificates"]["independence"]["directions"]]
    base = spec.bundle.base
    indep = all(
        ctx.simplify(sum(c * ctx.grad(e, x) for c, x in zip(w, base))) == 0 for e in raw_comps for w in dirs
    )
    return {"factorization": fact, "independence": indep}
