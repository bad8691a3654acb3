"""Command line: ``lred <command> [problem files] [options]``.

Exit codes: 0 success, 2 mathematical finding (e.g. empty kinematic bundle),
1 tool failure (schema, syntax, certificate failure, golden mismatch).
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from lred.errors import LredError
from lred.golden import compare_golden, golden_path, read_golden
from lred.pipeline import Run
from lred.problem import SCHEMA_VERSION, _parse_field, _Locator, corpus_files, load

COMMANDS = ("check", "kinematic", "invariants", "reduce", "verify", "residual", "universal", "all")
EXIT = {"ok": 0, "finding": 2, "error": 1}


def parser():
    p = argparse.ArgumentParser(prog="lred", description="Symmetry reduction without the transversality assumption.")
    p.add_argument("command", choices=COMMANDS)
    p.add_argument("problems", nargs="*", help="problem files (default: every fixture of the corpus)")
    p.add_argument("--max-degree", type=int, default=None, help="invariant and frame search bound (default 4)")
    p.add_argument("--seed", type=int, default=None, help="sampling seed (default 42)")
    p.add_argument("--tol-num", type=float, default=None, help="numeric drift/residual tolerance (default 1e-6)")
    p.add_argument("--tol-fd", type=float, default=None, help="finite-difference tolerance (default 1e-5)")
    p.add_argument("--format", choices=("text", "json"), default="text")
    p.add_argument("--jobs", type=int, default=1, help="fixtures processed in parallel")
    p.add_argument("--candidates", type=Path, default=None, help="JSON list of residual candidate fields")
    p.add_argument("--out", type=Path, default=None, help="write the output here instead of stdout")
    p.add_argument("--golden", action="store_true", help="compare against the fixture's golden file")
    p.add_argument("--timing", action="store_true", help="add wall-clock timing to reports")
    return p


def _candidates(spec, path):
    if path is None:
        return []
    text = path.read_text(encoding="utf-8")
    raw = json.loads(text)
    if isinstance(raw, dict):
        raw = raw.get("candidates", [])
    loc = _Locator(text, str(path))
    return [_parse_field(spec.ctx, c, f"candidates[{k}]", loc) for k, c in enumerate(raw)]


def _error_report(path, command, exc):
    return {
        "schema_version": SCHEMA_VERSION,
        "problem": str(path),
        "command": command,
        "status": "error",
        "error": {"kind": type(exc).__name__, "square": getattr(exc, "square", None), "message": str(exc)},
        "sections": {},
    }


def run_one(path, args):
    """Report for one problem file; never raises for engine errors."""
    t0 = time.perf_counter()
    try:
        spec = load(path)
        r = Run(
            spec,
            max_degree=args.max_degree,
            seed=args.seed,
            tol_num=args.tol_num,
            tol_fd=args.tol_fd,
            candidates=_candidates(spec, args.candidates),
        )
        rep = r.report(args.command)
    except (LredError, OSError, ValueError) as exc:
        return _error_report(path, args.command, exc)
    if args.golden:
        gp = golden_path(path)
        if not gp.exists():
            res = {"ok": False, "diffs": [{"field": "golden", "reason": f"missing {gp.name}"}]}
        elif args.command != "all":
            res = {"ok": False, "diffs": [{"field": "golden", "reason": "goldens describe the `all` command"}]}
        else:
            res = compare_golden(rep, read_golden(gp), spec.raw).to_json()
        rep["golden"] = res
        if not res["ok"] and rep["status"] != "error":
            rep["status"] = "error"
            rep["error"] = {"kind": "GoldenMismatch", "square": None, "message": "report differs from golden"}
    if args.timing:
        rep["timing_s"] = round(time.perf_counter() - t0, 3)
    return rep


def _job(item):
    path, args = item
    return run_one(path, args)


def exit_code(reports):
    codes = [EXIT[r["status"]] for r in reports]
    if 1 in codes:
        return 1
    return 2 if 2 in codes else 0


# -- text rendering ----------------------------------------------------------


def _kv(d):
    return ", ".join(f"{k} = {v}" for k, v in d.items())


def render_text(rep):
    out = [f"== {rep['problem']} ({rep['command']}): {rep['status']}"]
    s = rep.get("sections", {})
    if "check" in s:
        t = s["check"]["transversality"]
        out.append(f"transversality: holds={str(t['holds']).lower()} rank_base={t['rank_base']} rank_total={t['rank_total']}")
    if "kinematic" in s:
        b = s["kinematic"]["bundle"]
        out.append(f"kinematic fiber: dim {b['fiber_dim']}, coordinates {', '.join(b['v']) or '-'}")
        out.append(f"  inclusion: {_kv(b['inclusion'])}")
    if "invariants" in s:
        inv = s["invariants"]
        out.append("invariants: " + _kv({i["name"]: i["expr"] for i in inv["base"] + inv["fiber"]}))
        out.append(f"  flow drift: {inv['numeric']['max_drift']} ({'ok' if inv['numeric']['ok'] else 'FAIL'})")
    if "reduce" in s:
        red = s["reduce"]
        out.append("ansatz: " + _kv(red["ansatz"]["section"]))
        for rel in red["ansatz"]["relations"]:
            out.append(f"  relation: {rel} = 0")
        for rule in red["ansatz"]["rules"]:
            out.append(f"  rule: {rule}")
        out.append(f"  chain-rule FD error: {red['ansatz_fd']['max_error']}")
        rr = red["reduced"]
        out.append(f"invariant frame: dim {rr['frame']['dim']} (degree {rr['frame']['degree']})")
        for name, comp in rr["components"].items():
            out.append(f"  {name} = {comp}")
        c = rr["certificates"]
        out.append(f"  certificates: factorization={str(c['factorization']).lower()} independence={str(c['independence']['ok']).lower()}")
    for v in s.get("verify", []):
        out.append(f"verify {v['name']}: expect {v['expect']}, reduced [{', '.join(v['reduced'])}] -> {'pass' if v['pass'] else 'FAIL'}")
    for r in s.get("residual", []):
        out.append(f"residual {r['candidate']}: {r['isotropy']['verdict']}")
    if "universal" in s:
        u = s["universal"]
        out.append(f"universal: {str(u['universal']).lower()} (frame dim {u['frame_dim']}, degree <= {u['max_degree']})")
    if "finding" in rep:
        out.append(f"finding {rep['finding']['kind']}: {rep['finding']['message']}")
    if "error" in rep:
        out.append(f"error {rep['error']['kind']}: {rep['error']['message']}")
    if "golden" in rep:
        g = rep["golden"]
        out.append("golden: " + ("match" if g["ok"] else "MISMATCH " + json.dumps(g["diffs"], sort_keys=True)))
    if "timing_s" in rep:
        out.append(f"time: {rep['timing_s']} s")
    return "\n".join(out)


def render(reports, fmt):
    if fmt == "json":
        doc = reports[0] if len(reports) == 1 else {"schema_version": SCHEMA_VERSION, "reports": reports}
        return json.dumps(doc, indent=2, sort_keys=True, ensure_ascii=False) + "\n"
    return "\n\n".join(render_text(r) for r in reports) + "\n"


def main(argv=None):
    args = parser().parse_args(argv)
    paths = [Path(p) for p in args.problems] or corpus_files()
    if not paths:
        print("lred: no problem files given and the corpus is empty", file=sys.stderr)
        return 1
    try:
        if args.jobs > 1 and len(paths) > 1:
            with ProcessPoolExecutor(max_workers=args.jobs) as pool:
                reports = list(pool.map(_job, [(p, args) for p in paths]))
        else:
            reports = [run_one(p, args) for p in paths]
    except KeyboardInterrupt:
        print("lred: interrupted", file=sys.stderr)
        return 1
    text = render(reports, args.format)
    if args.out:
        args.out.write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    return exit_code(reports)


if __name__ == "__main__":
    sys.exit(main())
