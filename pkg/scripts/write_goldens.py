"""Write src/lred/fixtures/*.golden.json from fresh `all` runs.

Reduced systems with a published reference form are pinned to that form
(written by hand below); the comparator accepts any constant recombination.
Run from the repository root: python3 scripts/write_goldens.py
"""

import json

from lred.golden import compare_golden, golden_path, golden_view
from lred.pipeline import run
from lred.problem import corpus_files, load

REFERENCE = {
    "euler_rotational": {
        "F1": "D(A, t) + A(t,r)*(A(t,r) + r*D(A, r)) + D(B, r)/r",
        "F2": "3*A(t,r) + r*D(A, r)",
    },
    "euler_new_reduction": {
        # sigma = log(al^2 + be^2)
        "F1": "D(A, t) + A(t)^2 + B(t)",
        "F2": "2*(al(t)*D(al, t) + be(t)*D(be, t))/(al(t)^2 + be(t)^2) + A(t)",
    },
    "mech_central_force": {
        "F1": "D(W, t) - Pw(t)",
        "F2": "D(Pw, t) + W(t)*f(W(t))",
    },
}


def main():
    for path in corpus_files():
        spec = load(path)
        report = run(spec, "all")
        view = golden_view(report)
        if spec.name in REFERENCE:
            view["reduced"] = REFERENCE[spec.name]
            res = compare_golden(report, view, spec.raw)
            if not res.ok:
                raise SystemExit(f"{spec.name}: report disagrees with the reference form: {res.diffs}")
        out = golden_path(path)
        out.write_text(json.dumps(view, indent=2, sort_keys=True) + "\n", encoding="utf-8")
        print(out)


if __name__ == "__main__":
    main()
