"""Write the metric corpus fixtures.

Base vector fields V are lifted to the bundle of metrics by
eta_ij = -(g_lj d_i V^l + g_il d_j V^l); the action on the symmetric
contravariant frame T_ij comes from the Lie derivative of d_i (x) d_j.
Run from the repository root: python3 scripts/gen_metric_fixtures.py
"""

import itertools
import json
from pathlib import Path

import sympy as sp

OUT = Path(__file__).resolve().parent.parent / "src" / "lred" / "fixtures"


def text(e):
    s = sp.sstr(sp.expand(e))
    s = s.replace("**", "^")
    for name in ("P", "Q"):
        s = s.replace(f"Derivative({name}(u), u)", f"D({name}, u)")
    return s


def slots(names):
    return [(i, j) for i, j in itertools.combinations_with_replacement(range(len(names)), 2)]


def metric_lift(V, xs, g):
    n = len(xs)
    out = {}
    for i, j in slots([x.name for x in xs]):
        eta = -sum(g[l][j] * sp.diff(V[l], xs[i]) + g[i][l] * sp.diff(V[l], xs[j]) for l in range(n))
        if sp.expand(eta) != 0:
            out[g[i][j].name] = text(eta)
    return out


def frame_action(V, xs, frame):
    """L_V of each symmetric basis element, written in the basis."""
    n = len(xs)

    def pair(a, b):
        # d_a (x) d_b + d_b (x) d_a in the basis
        return {frame[min(a, b)][max(a, b)]: 2 if a == b else 1}

    out = {}
    for i, j in slots([x.name for x in xs]):
        acc = {}
        for l in range(n):
            di = -sp.diff(V[l], xs[i])
            dj = -sp.diff(V[l], xs[j])
            terms = []
            if i == j:
                terms.append((di, pair(l, i)))
            else:
                terms.append((di, pair(l, j)))
                terms.append((dj, pair(i, l)))
            for c, p in terms:
                for f, k in p.items():
                    acc[f] = acc.get(f, 0) + c * k
        acc = {f: c for f, c in acc.items() if sp.expand(c) != 0}
        if acc:
            out[frame[i][j]] = " + ".join(f"({text(c)})*{f}" for f, c in sorted(acc.items()))
    return out


def setup(names):
    xs = sp.symbols(names)
    n = len(xs)
    g = [[None] * n for _ in range(n)]
    frame = [[None] * n for _ in range(n)]
    for i, j in slots(names):
        g[i][j] = g[j][i] = sp.Symbol(f"g_{names[i]}{names[j]}")
        frame[i][j] = frame[j][i] = f"T_{names[i]}{names[j]}"
    return xs, g, frame


def field(name, V, xs, g):
    coeffs = {x.name: text(c) for x, c in zip(xs, V) if c != 0}
    coeffs.update(metric_lift(V, xs, g))
    return {"name": name, "coeffs": coeffs}


def stationary(static):
    names = ["t", "x", "y", "z"]
    xs, g, _ = setup(names)
    t, x, y, z = xs
    fields = [
        ("Dt", [1, 0, 0, 0]),
        ("Rx", [0, 0, -z, y]),
        ("Ry", [0, z, 0, -x]),
        ("Rz", [0, -y, x, 0]),
    ]
    fiber = [g[i][j].name for i, j in slots(names)]
    xgx = "(" + " + ".join(
        f"{'2*' if a != b else ''}{names[a]}*{names[b]}*{g[a][b].name}" for a, b in slots(names) if a and b
    ) + ")"
    tr = "(g_xx + g_yy + g_zz)"
    raw = {
        "name": "static_metric_reflection" if static else "schwarzschild_stationary",
        "description": (
            "Lorentz metrics on R x (R^3 - 0) invariant under time translation, rotations and the time reflection."
            if static
            else "Lorentz metrics on R x (R^3 - 0) invariant under time translation and rotations. Kinematic stage only."
        ),
        "base": names,
        "fiber": fiber,
        "chart": {
            "symbols": ["r"],
            "rules": [{"lhs": "r^2", "rhs": "x^2 + y^2 + z^2"}],
            "assumptions": ["r > 0"],
        },
        "generators": [field(n, V, xs, g) for n, V in fields],
    }
    if static:
        flip = {g[0][j].name: f"-{g[0][j].name}" for j in range(1, 4)}
        raw["discrete"] = [{"name": "time_reflection", "map": {"t": "-t", **flip}}]
    hints = [{"name": "A", "expr": "g_tt"}]
    if not static:
        hints.append({"name": "B", "expr": "(x*g_tx + y*g_ty + z*g_tz)/r^2"})
    hints += [
        {"name": "C", "expr": f"(3*{xgx} - r^2*{tr})/(2*r^4)"},
        {"name": "D", "expr": f"(r^2*{tr} - {xgx})/(2*r^2)"},
    ]
    raw["invariants"] = {"fiber": hints}
    raw["options"] = {"max_degree": 2, "stages": ["check", "kinematic", "invariants"]}
    return raw


def plane_wave():
    names = ["u", "v", "x", "y"]
    xs, g, frame = setup(names)
    u, v, x, y = xs
    P = sp.Function("P")(u)
    Q = sp.Function("Q")(u)
    fields = [
        ("V1", [0, 1, 0, 0]),
        ("V2", [0, 0, 1, 0]),
        ("V3", [0, 0, 0, 1]),
        ("V4", [0, x, P, 0]),
        ("V5", [0, y, 0, Q]),
    ]
    raw = {
        "name": "plane_wave",
        "description": "Vacuum Einstein equations for metrics on R^4 invariant under the five-parameter plane wave group with profile functions P(u), Q(u).",
        "base": names,
        "fiber": [g[i][j].name for i, j in slots(names)],
        "functions": [{"name": "P", "args": ["u"]}, {"name": "Q", "args": ["u"]}],
        "chart": {"assumptions": ["D(P, u) > 0", "D(Q, u) > 0"]},
        "generators": [field(n, V, xs, g) for n, V in fields],
        "operator": {
            "order": 2,
            "builtin": "einstein_upper",
            "frame": [frame[i][j] for i, j in slots(names)],
            "components": {frame[i][j]: g[i][j].name for i, j in slots(names)},
            "action": {},
        },
        "invariants": {
            "fiber": [
                {"name": "A", "expr": "g_uu"},
                {"name": "B", "expr": "-g_uv"},
            ]
        },
        "solutions": [
            {
                "name": "flat_profile",
                "values": {
                    "P": {"args": ["u"], "expr": "u"},
                    "Q": {"args": ["u"], "expr": "u"},
                    "A": {"args": ["u"], "expr": "u^2"},
                    "B": {"args": ["u"], "expr": "1"},
                },
                "expect": "zero",
            },
            {
                "name": "curved_profile",
                "values": {
                    "P": {"args": ["u"], "expr": "u^3"},
                    "Q": {"args": ["u"], "expr": "u"},
                    "A": {"args": ["u"], "expr": "u^2"},
                    "B": {"args": ["u"], "expr": "1"},
                },
                "expect": "nonzero",
            },
        ],
        "options": {"max_degree": 2, "frame_degree": 1},
    }
    for n, V in fields:
        act = frame_action(V, xs, frame)
        if act:
            raw["operator"]["action"][n] = act
    return raw


def main():
    for raw in (stationary(False), stationary(True), plane_wave()):
        path = OUT / f"{raw['name']}.lred.json"
        path.write_text(json.dumps(raw, indent=2) + "\n", encoding="utf-8")
        print(path)


if __name__ == "__main__":
    main()
