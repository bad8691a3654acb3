"""Write the harmonic map S^2 -> S^4 fixtures (three homomorphisms SO(3) -> SO(5)).

The operator is the tension field written with ambient jets on R^3 x R^5:
  -Lap u + x^i x^j u_ij + 2 x^i u_i - lambda u,
  lambda = |du|^2 - |x^i u_i|^2,
which does not depend on how u is extended off the unit sphere.
Run from the repository root: python3 scripts/gen_harmonic_fixtures.py
"""

import json
from pathlib import Path

import sympy as sp

OUT = Path(__file__).resolve().parent.parent / "src" / "lred" / "fixtures"

X = ["x", "y", "z"]
U = ["u1", "u2", "u3", "u4", "u5"]
F = ["f1", "f2", "f3", "f4", "f5"]
s3 = sp.Symbol("s3")
xs = sp.symbols(X)
us = sp.symbols(U)


def text(e):
    return sp.sstr(sp.expand(e)).replace("**", "^")


def rotations():
    x, y, z = xs
    return [
        {"x": 0, "y": z, "z": -y},
        {"x": -z, "y": 0, "z": x},
        {"x": y, "y": -x, "z": 0},
    ]


def fiber_parts(case):
    u1, u2, u3, u4, u5 = us
    if case == "I":
        return [{}, {}, {}]
    if case == "II":
        return [
            {"u2": u3, "u3": -u2},
            {"u1": -u3, "u3": u1},
            {"u1": u2, "u2": -u1},
        ]
    return [
        {"u1": u2, "u2": -u1, "u3": u4 - s3 * u5, "u4": -u3, "u5": s3 * u3},
        {"u1": -u3, "u2": u4 + s3 * u5, "u3": u1, "u4": -u2, "u5": -s3 * u2},
        {"u1": -2 * u4, "u2": u3, "u3": -u2, "u4": 2 * u1},
    ]


def generator(name, base, fiber):
    coeffs = {k: text(v) for k, v in base.items() if v != 0}
    coeffs.update({k: text(v) for k, v in fiber.items() if v != 0})
    return {"name": name, "coeffs": coeffs}


def frame_action(fiber):
    """L_V f_a = -sum_b d(V^b)/du_a f_b for a fiber-linear V."""
    out = {}
    for a, ua in enumerate(us):
        terms = []
        for b, ub in enumerate(U):
            c = -sp.diff(sp.sympify(fiber.get(ub, 0)), ua)
            if c != 0:
                terms.append(f"({text(c)})*{F[b]}")
        if terms:
            out[F[a]] = " + ".join(terms)
    return out


def so5():
    gens = []
    for a in range(5):
        for b in range(a + 1, 5):
            gens.append((f"S{a + 1}{b + 1}", {U[a]: us[b], U[b]: -us[a]}))
    return gens


def jet(u, *idx):
    return sp.Symbol(f"{u}_{''.join(idx)}")


def operator():
    comps = {}
    lam = 0
    for u in U:
        lam += sum(jet(u, i) ** 2 for i in X) - sum(x * jet(u, i) for x, i in zip(xs, X)) ** 2
    lam_sym = sp.Symbol("LAM")
    for u, f in zip(U, F):
        e = -sum(jet(u, i, i) for i in X)
        for a in range(3):
            for b in range(3):
                i, j = sorted((X[a], X[b]), key=X.index)
                e += xs[a] * xs[b] * jet(u, i, j)
        e += 2 * sum(x * jet(u, i) for x, i in zip(xs, X))
        e -= lam_sym * sp.Symbol(u)
        comps[f] = text(e).replace("LAM", "(" + text(lam) + ")")
    return comps


def veronese(sign=1):
    x, y, z = xs
    return [sign * s3 * c for c in (x * y, x * z, y * z, (x**2 - y**2) / 2, s3 / 6 * (x**2 + y**2 - 2 * z**2))]


def fixture(case):
    base = rotations()
    fibers = fiber_parts(case)
    names = ["V1", "V2", "V3"]
    raw = {
        "name": f"harmonic_s2s4_case{case}",
        "description": {
            "I": "Harmonic maps from S^2 to S^4 invariant under SO(3) acting on the source only. Invariant maps are constant.",
            "II": "Harmonic maps from S^2 to S^4 invariant under SO(3) acting on the source and, by the standard inclusion, on the first three target coordinates.",
            "III": "Harmonic maps from S^2 to S^4 invariant under SO(3) acting on the target through harmonic quadratic polynomials. The invariant maps are the Veronese map and its antipode.",
        }[case],
        "base": X,
        "fiber": U,
        "constants": ["s3"],
        "chart": {
            "rules": [
                {"lhs": "z^2", "rhs": "1 - x^2 - y^2"},
                {"lhs": "u5^2", "rhs": "1 - u1^2 - u2^2 - u3^2 - u4^2"},
                {"lhs": "s3^2", "rhs": "3"},
            ],
            "assumptions": ["z > 0", "u5 > 0", "s3 > 0"],
            "boxes": {"x": [-0.7, 0.7], "y": [-0.7, 0.7], **{u: [-0.45, 0.45] for u in U[:4]}},
        },
        "generators": [generator(n, b, f) for n, b, f in zip(names, base, fibers)],
        "operator": {
            "order": 2,
            "frame": F,
            "components": operator(),
            "action": {n: a for n, f in zip(names, fibers) if (a := frame_action(f))},
            "constraints": [" + ".join(f"{u}*{f}" for u, f in zip(U, F))],
        },
    }
    if case == "I":
        raw["invariants"] = {"fiber": [{"name": n, "expr": u} for n, u in zip("ABCDE", U)]}
        ugens = [generator(n, b, {}) for n, b in zip(names, base)]
        ugens += [generator(n, {}, f) for n, f in so5()]
        uact = {n: frame_action(f) for n, f in so5()}
        raw["universal"] = {"generators": ugens, "action": uact, "max_degree": 1}
        raw["solutions"] = [
            {
                "name": "constant",
                "values": {"A": {"args": [], "expr": "3/5"}, "B": {"args": [], "expr": "0"}, "C": {"args": [], "expr": "0"},
                           "D": {"args": [], "expr": "0"}, "E": {"args": [], "expr": "4/5"}},
                "expect": "zero",
            }
        ]
    elif case == "II":
        raw["invariants"] = {
            "fiber": [{"name": "A", "expr": "x*u1 + y*u2 + z*u3"}, {"name": "B", "expr": "u4"}, {"name": "C", "expr": "u5"}]
        }
        raw["universal"] = {"generators": raw["generators"], "action": raw["operator"]["action"], "max_degree": 1}
        raw["residual"] = {"candidates": [{"name": "R45", "coeffs": {"u4": "u5", "u5": "-u4"}}]}
        raw["solutions"] = [
            {
                "name": "inclusion",
                "values": {"A": {"args": [], "expr": "1"}, "B": {"args": [], "expr": "0"}, "C": {"args": [], "expr": "0"}},
                "expect": "zero",
            },
            {
                "name": "tilted",
                "values": {"A": {"args": [], "expr": "3/5"}, "B": {"args": [], "expr": "0"}, "C": {"args": [], "expr": "4/5"}},
                "expect": "nonzero",
            },
        ]
    else:
        phi = veronese()
        raw["invariants"] = {"fiber": [{"name": "A", "expr": text(sum(u * p for u, p in zip(us, phi)))}]}
        raw["universal"] = {"generators": raw["generators"], "action": raw["operator"]["action"], "max_degree": 2}
        raw["solutions"] = [
            {"name": "veronese", "values": {"A": {"args": [], "expr": "1"}}, "expect": "zero"},
            {"name": "antipodal", "values": {"A": {"args": [], "expr": "-1"}}, "expect": "zero"},
        ]
    raw["options"] = {"max_degree": 2, "frame_degree": 2}
    return raw


def main():
    for case in ("I", "II", "III"):
        raw = fixture(case)
        path = OUT / f"{raw['name']}.lred.json"
        path.write_text(json.dumps(raw, indent=2) + "\n", encoding="utf-8")
        print(path)


if __name__ == "__main__":
    main()
