"""Problem files: schema validation, loading into engine objects, saving."""

from __future__ import annotations

import hashlib
import json
import re
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import jsonschema
import sympy as sp

from lred.dynamic import OperatorSpec
from lred.errors import ExpressionSyntaxError, LredError, SchemaError, UnknownSymbol
from lred.fields import BundleSpec, JetContext, VectorField, check_admissible, make_algebra
from lred.symkernel import Context, FunctionTable, RewriteRule, parse

SCHEMA_VERSION = "1.0"


def schema():
    text = resources.files("lred").joinpath("data/problem.schema.json").read_text(encoding="utf-8")
    return json.loads(text)


@dataclass
class ProblemSpec:
    raw: dict
    path: str
    sha256: str
    ctx: Context
    bundle: BundleSpec
    generators: list
    algebra: object
    discrete: list = field(default_factory=list)
    jets: JetContext | None = None
    operator: OperatorSpec | None = None
    hints: dict = field(default_factory=dict)
    denominators: dict = field(default_factory=dict)
    candidates: list = field(default_factory=list)
    universal: dict | None = None
    numeric: FunctionTable | None = None
    options: dict = field(default_factory=dict)

    @property
    def name(self):
        return self.raw["name"]

    def option(self, key, default):
        return self.options.get(key, default)


class _Locator:
    """Maps a failing expression back to a line of the problem file."""

    def __init__(self, text, path):
        self.lines = text.splitlines()
        self.path = path

    def line_of(self, expr_text):
        needle = json.dumps(expr_text)
        for i, line in enumerate(self.lines, 1):
            if needle in line:
                return i
        return None

    def fail(self, where, text, exc):
        line = self.line_of(text)
        loc = f"{self.path}:{line}" if line else self.path
        if isinstance(exc, ExpressionSyntaxError):
            err = ExpressionSyntaxError(f"{loc}: {where}: {exc.args[0]}", exc.text, exc.position, exc.expected)
        else:
            err = type(exc)(f"{loc}: {where}: {exc}")
        err.square = "load"
        err.details = {"file": self.path, "line": line, "where": where}
        raise err from None


def _parse(ctx, text, where, loc):
    try:
        return parse(text, ctx)
    except (ExpressionSyntaxError, UnknownSymbol) as exc:
        loc.fail(where, text, exc)


def _parse_field(ctx, spec, where, loc):
    coeffs = {}
    for name, text in spec["coeffs"].items():
        if name not in ctx.symbols:
            loc.fail(f"{where}.coeffs", text, UnknownSymbol(f"unknown coordinate {name!r}"))
        coeffs[ctx.symbols[name]] = _parse(ctx, text, f"{where}.coeffs.{name}", loc)
    return VectorField(coeffs, spec["name"])


def _parse_action(ctx, action, where, loc):
    out = {}
    for gname, mapping in (action or {}).items():
        out[gname] = {}
        for fname, text in mapping.items():
            if fname not in ctx.symbols or ctx.kinds[fname] != "frame":
                loc.fail(where, text, UnknownSymbol(f"unknown frame symbol {fname!r}"))
            out[gname][ctx.symbols[fname]] = _parse(ctx, text, f"{where}.{gname}.{fname}", loc)
    return out


def numeric_table(ctx, forms):
    """Closed forms for numeric checks; may use sin, cos, exp, log, sqrt."""
    entries = {}
    for name, spec in (forms or {}).items():
        args = [sp.Symbol(a) for a in spec["args"]]
        local = {a.name: a for a in args}
        local.update({n: s for n, s in ctx.symbols.items() if n not in local})
        entries[name] = (args, sp.sympify(spec["expr"], locals=local))
    return FunctionTable.from_closed_forms(entries)


def build(raw, path="<memory>", text=None):
    try:
        jsonschema.validate(raw, schema())
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise SchemaError(f"{path}: {where}: {exc.message}") from None
    text = text if text is not None else json.dumps(raw, indent=2, sort_keys=True)
    loc = _Locator(text, path)
    ctx = Context()
    try:
        for n in raw["base"]:
            ctx.declare(n, "base")
        for n in raw["fiber"]:
            ctx.declare(n, "fiber")
        for n in raw.get("parameters", []):
            ctx.declare(n, "parameter")
        for n in raw.get("constants", []):
            ctx.declare(n, "constant")
        chart = raw.get("chart", {})
        for n in chart.get("symbols", []):
            ctx.declare(n, "chart")
        for f in raw.get("functions", []):
            ctx.declare_function(f["name"], [ctx.sym(a) for a in f["args"]])
    except (ValueError, UnknownSymbol) as exc:
        raise SchemaError(f"{path}: declarations: {exc}") from None
    for k, r in enumerate(chart.get("rules", [])):
        lhs = _parse(ctx, r["lhs"], f"chart.rules[{k}].lhs", loc)
        rhs = _parse(ctx, r["rhs"], f"chart.rules[{k}].rhs", loc)
        atom, power = lhs.as_base_exp()
        try:
            ctx.add_rule(RewriteRule(atom, int(power), rhs))
        except (LredError, TypeError, ValueError) as exc:
            loc.fail(f"chart.rules[{k}]", r["lhs"], LredError(str(exc)))
    for k, a in enumerate(chart.get("assumptions", [])):
        m = re.fullmatch(r"\s*(.+?)\s*([<>])\s*0\s*", a)
        ctx.assumptions.append((_parse(ctx, m.group(1), f"chart.assumptions[{k}]", loc), m.group(2)))
    for n, box in chart.get("boxes", {}).items():
        ctx.boxes[ctx.sym(n)] = tuple(box)
    bundle = BundleSpec(ctx, [ctx.sym(n) for n in raw["base"]], [ctx.sym(n) for n in raw["fiber"]])
    gens = [_parse_field(ctx, g, f"generators[{k}]", loc) for k, g in enumerate(raw["generators"])]
    algebra = make_algebra(gens, bundle)
    discrete = []
    for k, d in enumerate(raw.get("discrete", [])):
        mp = {}
        for n, text in d["map"].items():
            mp[ctx.sym(n)] = _parse(ctx, text, f"discrete[{k}].map.{n}", loc)
        discrete.append(mp)
    spec = ProblemSpec(raw, path, "", ctx, bundle, gens, algebra, discrete)
    op = raw.get("operator")
    if op is not None:
        frame = [ctx.declare(n, "frame") for n in op["frame"]]
        spec.jets = JetContext(ctx, bundle.base, bundle.fiber, max(op["order"], 0))
        comps = {}
        for n, text in op["components"].items():
            if n not in op["frame"]:
                loc.fail("operator.components", text, UnknownSymbol(f"unknown frame symbol {n!r}"))
            comps[ctx.sym(n)] = _parse(ctx, text, f"operator.components.{n}", loc)
        action = _parse_action(ctx, op.get("action"), "operator.action", loc)
        cons = [_parse(ctx, c, f"operator.constraints[{k}]", loc) for k, c in enumerate(op.get("constraints", []))]
        spec.operator = OperatorSpec(op["order"], frame, comps, action, cons, op.get("builtin"))
    inv = raw.get("invariants", {})
    spec.hints = {
        "base": [(h["name"], _parse(ctx, h["expr"], f"invariants.base.{h['name']}", loc)) for h in inv.get("base", [])],
        "fiber": [(h["name"], _parse(ctx, h["expr"], f"invariants.fiber.{h['name']}", loc)) for h in inv.get("fiber", [])],
    }
    dens = inv.get("denominators", {})
    spec.denominators = {
        k: [_parse(ctx, d, f"invariants.denominators.{k}", loc) for d in dens.get(k, [])] for k in ("base", "fiber")
    }
    spec.candidates = [
        _parse_field(ctx, c, f"residual.candidates[{k}]", loc) for k, c in enumerate(raw.get("residual", {}).get("candidates", []))
    ]
    for c in spec.candidates:
        check_admissible(c, bundle)
    if "universal" in raw:
        u = raw["universal"]
        ugens = [_parse_field(ctx, g, f"universal.generators[{k}]", loc) for k, g in enumerate(u["generators"])]
        for g in ugens:
            check_admissible(g, bundle)
        spec.universal = {
            "generators": ugens,
            "action": _parse_action(ctx, u.get("action"), "universal.action", loc),
            "max_degree": u.get("max_degree"),
        }
    spec.numeric = numeric_table(ctx, raw.get("numeric", {}).get("functions"))
    spec.options = dict(raw.get("options", {}))
    spec.sha256 = hashlib.sha256(canonical_json(raw).encode("utf-8")).hexdigest()
    return spec


def canonical_json(raw):
    return json.dumps(raw, sort_keys=True, separators=(",", ":"), ensure_ascii=False)


def load(path):
    path = Path(path)
    text = path.read_text(encoding="utf-8")
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SchemaError(f"{path}:{exc.lineno}: invalid JSON: {exc.msg}") from None
    return build(raw, str(path), text)


def save(spec, path):
    Path(path).write_text(json.dumps(spec.raw, indent=2, ensure_ascii=False) + "\n", encoding="utf-8")


def corpus_root():
    import os

    env = os.environ.get("LRED_CORPUS")
    if env:
        return Path(env)
    return Path(str(resources.files("lred").joinpath("fixtures")))


def corpus_files(root=None):
    root = Path(root) if root else corpus_root()
    return sorted(root.glob("*.lred.json"))
