"""Exact symbolic kernel.

Expressions are sympy trees restricted to the rational fragment: exact
rational constants, declared symbols, sums, products, integer powers, and
opaque (undefined) function applications with their formal derivatives.
On top of sympy this module adds the pieces the reduction pipeline needs:

* a small expression grammar (``parse``) and its printer (``to_text``),
* canonical simplification modulo single-atom power rules (``simplify``),
* chain-aware partial derivatives through chart symbols such as ``r`` with
  ``r^2 -> x1^2+x2^2+x3^2`` (``Context.grad``),
* a raw-tree numeric evaluator that never simplifies (``eval_numeric``).
"""

from __future__ import annotations

import functools
import math
import re
from dataclasses import dataclass, field
from functools import reduce as _fold

import sympy as sp
from sympy.core.function import AppliedUndef
from sympy.printing.str import StrPrinter

from lred.errors import (
    CyclicSubstitution,
    DivisionByZeroExpr,
    ExpressionSyntaxError,
    NonTerminatingRule,
    NumericDomain,
    UnboundFunction,
    UnboundSymbol,
    UnknownSymbol,
)

KINDS = (
    "base",
    "fiber",
    "jet",
    "reduced-base",
    "reduced-fiber",
    "reduced-jet",
    "parameter",
    "constant",
    "chart",
    "frame",
)

_IDENT = re.compile(r"[A-Za-z_][A-Za-z0-9_]*")


def is_atom(e):
    """True for the generators of the rational fragment."""
    return isinstance(e, (sp.Symbol, AppliedUndef, sp.Derivative))


def atoms_of(e):
    """Generator atoms of ``e`` (symbols, applications, derivative atoms)."""
    out = set()
    for node in sp.preorder_traversal(e):
        if isinstance(node, sp.Derivative):
            out.add(node)
        elif isinstance(node, AppliedUndef):
            out.add(node)
        elif isinstance(node, sp.Symbol):
            out.add(node)
    # symbols that only occur inside derivative variable lists still count,
    # because d/ds of A(s) is not zero
    return out


@dataclass(frozen=True)
class OpaqueFunction:
    name: str
    args: tuple  # declared argument Symbols

    @property
    def fn(self):
        return sp.Function(self.name)

    def apply(self, args=None):
        return self.fn(*(self.args if args is None else args))

    @property
    def arity(self):
        return len(self.args)


@dataclass(frozen=True)
class RewriteRule:
    """``atom^power -> rhs``; ``atom`` is a symbol or an opaque-derivative atom."""

    atom: sp.Expr
    power: int
    rhs: sp.Expr

    def __post_init__(self):
        if not is_atom(self.atom):
            raise NonTerminatingRule(f"rule lhs must be a power of a single atom, got {self.atom}")
        if self.power < 1:
            raise NonTerminatingRule("rule power must be >= 1")
        num, den = sp.fraction(sp.cancel(self.rhs))
        for part in (num, den):
            part = mask_functions(part, self.atom)[0]
            if part.has(self.atom):
                deg = sp.Poly(part, self.atom).degree()
                if deg >= self.power:
                    raise NonTerminatingRule(
                        f"rhs of {self.atom}^{self.power} has degree {deg} in the ruled atom"
                    )

    @property
    def lhs(self):
        return self.atom**self.power

    def __str__(self):
        return f"{to_text(self.lhs)} -> {to_text(self.rhs)}"


def check_rule_set(rules):
    """Reject rule sets whose atoms depend on each other cyclically.

    Returns the rules in application order.
    """
    return list(_ordered_rules(tuple(rules)))


@functools.lru_cache(maxsize=256)
def _ordered_rules(rules):
    atoms = [r.atom for r in rules]
    if len(set(atoms)) != len(atoms):
        raise NonTerminatingRule("two rules govern the same atom")
    deps = {r.atom: {a for a in atoms if a != r.atom and r.rhs.has(a)} for r in rules}
    seen, stack = set(), set()

    def visit(a):
        if a in stack:
            raise NonTerminatingRule(f"cyclic rule dependency through {a}")
        if a in seen:
            return
        stack.add(a)
        for b in deps[a]:
            visit(b)
        stack.discard(a)
        seen.add(a)

    for a in atoms:
        visit(a)
    # order so that a rule is applied before the rules its rhs depends on
    order = []
    placed = set()
    while len(order) < len(rules):
        for r in rules:
            if r.atom in placed:
                continue
            users = [q for q in rules if q.atom not in placed and q.atom != r.atom and r.atom in deps[q.atom]]
            if not users:
                order.append(r)
                placed.add(r.atom)
    return tuple(reversed(order))


# ---------------------------------------------------------------------------
# reduction modulo rules and canonical form


def mask_functions(e, atom):
    """Replace function atoms that merely contain ``atom`` by dummies.

    Returns ``(masked, back)``; ``masked.xreplace(back)`` restores ``e``.
    """
    reps = {}
    for node in sp.preorder_traversal(e):
        if node == atom or node in reps:
            continue
        if isinstance(node, (AppliedUndef, sp.Derivative, sp.Subs)) and node.has(atom):
            reps[node] = sp.Dummy("m")
    if not reps:
        return e, {}
    # outermost atoms first so derivative atoms are not split apart
    masked = e.xreplace(reps)
    return masked, {v: k for k, v in reps.items()}


def _reduce_poly(p, rule):
    if not p.has(rule.atom):
        return p, False
    masked, back = mask_functions(p, rule.atom)
    if not masked.has(rule.atom):
        return p, False
    poly = sp.Poly(masked, rule.atom)
    if poly.degree() < rule.power:
        return p, False
    out = sp.S.Zero
    for (k,), c in poly.terms():
        q, m = divmod(k, rule.power)
        out += c * rule.atom**m * rule.rhs**q
    return out.xreplace(back), True


def reduce_mod(e, rules, max_passes=64):
    """Normal form of ``e`` with every ruled power eliminated.

    Works on the numerator and denominator of the cancelled rational form
    separately, so the result agrees with ``e`` on the constraint variety.
    """
    e = sp.cancel(sp.sympify(e))
    if not rules:
        return e
    ordered = check_rule_set(list(rules))
    for _ in range(max_passes):
        num, den = sp.fraction(e)
        changed = False
        for rule in ordered:
            num, c1 = _reduce_poly(num, rule)
            den, c2 = _reduce_poly(den, rule)
            changed = changed or c1 or c2
        if not changed:
            return e
        den_c = sp.cancel(den)
        if den_c == 0:
            raise DivisionByZeroExpr(f"denominator vanishes modulo constraints in {e}")
        e = sp.cancel(num / den_c)
    raise NonTerminatingRule(f"reduction did not stabilise for {e}")


def simplify(e, rules=()):
    """Canonical form: cancelled numerator/denominator, reduced modulo ``rules``."""
    e = sp.sympify(e)
    if e.has(sp.zoo) or e.has(sp.nan):
        raise DivisionByZeroExpr(f"division by zero in {e}")
    try:
        out = reduce_mod(e, rules) if rules else sp.cancel(e)
    except ZeroDivisionError as exc:  # pragma: no cover - sympy raises this rarely
        raise DivisionByZeroExpr(str(exc)) from exc
    if out.has(sp.zoo) or out.has(sp.nan):
        raise DivisionByZeroExpr(f"denominator is identically zero in {e}")
    return out


def diff(e, s):
    """Partial derivative; other symbols independent, opaque calls give derivative atoms."""
    return sp.diff(e, s)


def substitute(e, bindings, rules=()):
    """Simultaneous substitution followed by simplification."""
    keys = set(bindings)
    graph = {k: {j for j in keys if j != k and sp.sympify(bindings[k]).has(j)} for k in keys}
    state = {}

    def visit(k, path):
        if state.get(k) == 1:
            raise CyclicSubstitution(f"cyclic bindings through {k}: {' -> '.join(map(str, path))}")
        if state.get(k) == 2:
            return
        state[k] = 1
        for j in graph[k]:
            visit(j, path + [j])
        state[k] = 2

    for k in keys:
        visit(k, [k])
    func_keys = {k: v for k, v in bindings.items() if not isinstance(k, sp.Symbol)}
    sym_keys = {k: v for k, v in bindings.items() if isinstance(k, sp.Symbol)}
    out = sp.sympify(e)
    if func_keys:
        # derivative atoms before the applications they contain
        out = out.xreplace(func_keys)
    if sym_keys:
        out = out.xreplace(sym_keys)
    return simplify(out, rules)


def is_zero(e, rules=()):
    return simplify(e, rules) == 0


# ---------------------------------------------------------------------------
# symbol table


@dataclass
class Context:
    """Symbol table plus chart data (constraint rules and sign assumptions)."""

    symbols: dict = field(default_factory=dict)
    kinds: dict = field(default_factory=dict)
    functions: dict = field(default_factory=dict)
    rules: list = field(default_factory=list)
    assumptions: list = field(default_factory=list)  # (expr, '>' | '<'), meaning expr > 0 / < 0
    definitions: dict = field(default_factory=dict)  # Symbol -> (power, rhs) for derived symbols
    boxes: dict = field(default_factory=dict)  # Symbol -> (lo, hi) sampling box

    # declaration ---------------------------------------------------------
    def declare(self, name, kind):
        if kind not in KINDS:
            raise ValueError(f"unknown symbol kind {kind!r}")
        if not _IDENT.fullmatch(name):
            raise ValueError(f"bad identifier {name!r}")
        if name in self.functions:
            raise ValueError(f"{name!r} already declared as a function")
        if name in self.symbols:
            if self.kinds[name] != kind:
                raise ValueError(f"symbol {name!r} redeclared with kind {kind} (was {self.kinds[name]})")
            return self.symbols[name]
        s = sp.Symbol(name)
        self.symbols[name] = s
        self.kinds[name] = kind
        return s

    def declare_function(self, name, args):
        if name in self.symbols:
            raise ValueError(f"{name!r} already declared as a symbol")
        args = tuple(a if isinstance(a, sp.Symbol) else self.symbols[a] for a in args)
        f = OpaqueFunction(name, args)
        old = self.functions.get(name)
        if old is not None and old != f:
            raise ValueError(f"function {name!r} redeclared with different arguments")
        self.functions[name] = f
        return f

    def add_rule(self, rule, consequences=2):
        rules = self.rules + [rule]
        check_rule_set(rules)
        self.rules = rules
        if isinstance(rule.atom, sp.Symbol) and self.kinds.get(rule.atom.name) in ("chart", "constant"):
            self.definitions[rule.atom] = (rule.power, rule.rhs)
        if isinstance(rule.atom, sp.Derivative) and rule.power == 1 and consequences > 0:
            # differential consequences: D_s(atom) -> D_s(rhs)
            app = rule.atom.expr
            for s in dict.fromkeys(app.args):
                if not isinstance(s, sp.Symbol):
                    continue
                atom = sp.Derivative(app, *rule.atom.variable_count, (s, 1))
                if any(r.atom == atom for r in self.rules):
                    continue
                self.add_rule(RewriteRule(atom, 1, self.simplify(sp.diff(rule.rhs, s))), consequences - 1)

    def define(self, sym, rhs):
        """Record ``sym = rhs`` for chain rules without rewriting ``sym`` away."""
        self.definitions[sym] = (1, rhs)

    def copy(self):
        return Context(
            dict(self.symbols),
            dict(self.kinds),
            dict(self.functions),
            list(self.rules),
            list(self.assumptions),
            dict(self.definitions),
            dict(self.boxes),
        )

    def of_kind(self, *kinds):
        return [self.symbols[n] for n in self.symbols if self.kinds[n] in kinds]

    def kind(self, s):
        return self.kinds.get(s.name)

    def sym(self, name):
        try:
            return self.symbols[name]
        except KeyError:
            raise UnknownSymbol(f"undeclared symbol {name!r}") from None

    # algebra -------------------------------------------------------------
    def parse(self, text):
        return parse(text, self)

    def simplify(self, e):
        return simplify(e, self.rules)

    def is_zero(self, e):
        return self.simplify(e) == 0

    def reduce(self, e):
        return reduce_mod(e, self.rules)

    def grad(self, e, s):
        """d e / d s with chart symbols (``r``, ``rho``...) treated as functions of ``s``."""
        e = sp.sympify(e)
        out = sp.diff(e, s)
        for d, (n, rhs) in self.definitions.items():
            if d == s or not e.has(d):
                continue
            dd = self.grad(rhs, s)
            if dd != 0:
                out += sp.diff(e, d) * dd / (n * d ** (n - 1))
        return out

    def text(self, e):
        return to_text(e)


# ---------------------------------------------------------------------------
# parser

_TOKEN = re.compile(r"\s*(?:(\d+)|([A-Za-z_][A-Za-z0-9_]*)|(.))")


# allowed only in closed-form solution values, never in operators or fields
ELEMENTARY = {"exp": sp.exp, "log": sp.log, "sin": sp.sin, "cos": sp.cos, "sqrt": sp.sqrt}


class _Parser:
    def __init__(self, text, ctx, elementary=False):
        self.text = text
        self.ctx = ctx
        self.elementary = elementary
        self.toks = []
        pos = 0
        while pos < len(text):
            m = _TOKEN.match(text, pos)
            if m.end() == pos:
                break
            if m.group(1) is not None:
                self.toks.append(("num", m.group(1), m.start(1)))
            elif m.group(2) is not None:
                self.toks.append(("id", m.group(2), m.start(2)))
            elif m.group(3) is not None:
                ch = m.group(3)
                if ch not in "+-*/^(),":
                    raise ExpressionSyntaxError(f"unexpected character {ch!r}", text, m.start(3))
                self.toks.append(("op", ch, m.start(3)))
            pos = m.end()
        self.i = 0

    def peek(self):
        return self.toks[self.i] if self.i < len(self.toks) else ("eof", "", len(self.text))

    def take(self):
        t = self.peek()
        self.i += 1
        return t

    def expect(self, val):
        t = self.take()
        if t[1] != val:
            raise ExpressionSyntaxError(f"unexpected {t[1] or 'end of input'!r}", self.text, t[2], [repr(val)])
        return t

    def parse(self):
        if not self.toks:
            raise ExpressionSyntaxError("empty expression", self.text, 0, ["expression"])
        e = self.expr()
        t = self.peek()
        if t[0] != "eof":
            raise ExpressionSyntaxError(f"unexpected {t[1]!r}", self.text, t[2], ["operator", "end of input"])
        return e

    def expr(self):
        e = self.term()
        while self.peek()[1] in ("+", "-") and self.peek()[0] == "op":
            op = self.take()[1]
            rhs = self.term()
            e = e + rhs if op == "+" else e - rhs
        return e

    def term(self):
        e = self.unary()
        while self.peek()[1] in ("*", "/") and self.peek()[0] == "op":
            op, _, pos = self.take()[1], None, self.peek()[2]
            rhs = self.unary()
            if op == "*":
                e = e * rhs
            else:
                if rhs == 0:
                    raise ExpressionSyntaxError("division by literal zero", self.text, pos)
                e = e / rhs
        return e

    def unary(self):
        t = self.peek()
        if t[0] == "op" and t[1] in "+-":
            self.take()
            e = self.unary()
            return -e if t[1] == "-" else e
        return self.power()

    def power(self):
        base = self.atom()
        if self.peek()[1] == "^" and self.peek()[0] == "op":
            pos = self.take()[2]
            ex = self.unary()
            if not (ex.is_Integer):
                raise ExpressionSyntaxError("exponent must be an integer", self.text, pos + 1, ["integer"])
            if base == 0 and ex < 0:
                raise ExpressionSyntaxError("zero raised to a negative power", self.text, pos)
            return base**ex
        return base

    def atom(self):
        t = self.take()
        kind, val, pos = t
        if kind == "num":
            return sp.Integer(int(val))
        if kind == "op" and val == "(":
            e = self.expr()
            self.expect(")")
            return e
        if kind == "id":
            if val == "D" and self.peek()[1] == "(" and "D" not in self.ctx.functions and "D" not in self.ctx.symbols:
                return self.derivative(pos)
            if self.peek()[1] == "(" and self.peek()[0] == "op":
                return self.application(val, pos)
            return self.identifier(val, pos)
        raise ExpressionSyntaxError(
            f"unexpected {val or 'end of input'!r}", self.text, pos, ["number", "identifier", "'('"]
        )

    def args(self):
        self.expect("(")
        out = [self.expr()]
        while self.peek()[1] == ",":
            self.take()
            out.append(self.expr())
        self.expect(")")
        return out

    def application(self, name, pos):
        f = self.ctx.functions.get(name)
        if f is None and self.elementary and name in ELEMENTARY:
            args = self.args()
            if len(args) != 1:
                raise ExpressionSyntaxError(f"{name} expects 1 argument, got {len(args)}", self.text, pos)
            return ELEMENTARY[name](args[0])
        if f is None:
            raise UnknownSymbol(f"undeclared function {name!r} at position {pos}")
        args = self.args()
        if len(args) != f.arity:
            raise ExpressionSyntaxError(f"{name} expects {f.arity} arguments, got {len(args)}", self.text, pos)
        return f.fn(*args)

    def identifier(self, name, pos):
        if name in self.ctx.symbols:
            return self.ctx.symbols[name]
        if name in self.ctx.functions:
            return self.ctx.functions[name].apply()
        # shorthand derivative atoms: A_r, A_rt, A_t_r
        if "_" in name:
            head, _, tail = name.partition("_")
            while True:
                f = self.ctx.functions.get(head)
                if f is not None:
                    seq = _split_args(tail, [a.name for a in f.args])
                    if seq:
                        return sp.diff(f.apply(), *[self.ctx.symbols[a] for a in seq])
                if "_" not in tail:
                    break
                h2, _, tail = tail.partition("_")
                head = head + "_" + h2
        raise UnknownSymbol(f"undeclared identifier {name!r} at position {pos}")

    def derivative(self, pos):
        self.expect("(")
        t = self.take()
        if t[0] != "id":
            raise ExpressionSyntaxError("D expects a function name", self.text, t[2], ["function name"])
        f = self.ctx.functions.get(t[1])
        if f is None:
            raise UnknownSymbol(f"undeclared function {t[1]!r} at position {t[2]}")
        target = f.apply()
        if self.peek()[1] == "(":
            target = self.application(t[1], t[2])
        vars_ = []
        while self.peek()[1] == ",":
            self.take()
            v = self.take()
            if v[0] == "num":
                k = int(v[1])
                if not 1 <= k <= f.arity:
                    raise ExpressionSyntaxError("argument index out of range", self.text, v[2])
                vars_.append(f.args[k - 1])
            elif v[0] == "id" and v[1] in [a.name for a in f.args]:
                vars_.append(self.ctx.symbols[v[1]])
            else:
                raise ExpressionSyntaxError(
                    f"{v[1]!r} is not an argument of {f.name}", self.text, v[2], [a.name for a in f.args]
                )
        self.expect(")")
        if not vars_:
            return target
        if target != f.apply():
            # derivative evaluated at non-declared arguments
            return sp.diff(f.apply(), *vars_).subs(dict(zip(f.args, target.args)))
        return sp.diff(target, *vars_)


def _split_args(tail, names):
    """Split ``rt`` or ``r_t`` into declared argument names (greedy longest match)."""
    if not tail:
        return None
    parts = tail.split("_")
    if all(p in names for p in parts):
        return parts
    out = []
    s = "".join(parts)
    by_len = sorted(names, key=len, reverse=True)
    i = 0
    while i < len(s):
        for n in by_len:
            if s.startswith(n, i):
                out.append(n)
                i += len(n)
                break
        else:
            return None
    return out


def parse(text, ctx, elementary=False):
    """Parse ``text`` in the expression grammar against the symbol table ``ctx``.

    ``elementary`` additionally admits exp, log, sin, cos and sqrt.
    """
    return _Parser(text, ctx, elementary).parse()


# ---------------------------------------------------------------------------
# printer


class _Printer(StrPrinter):
    def _print_Pow(self, expr, rational=False):
        from sympy.printing.precedence import PRECEDENCE, precedence

        b, e = expr.as_base_exp()
        if e.is_Integer and e < 0:
            inner = b if e == -1 else sp.Pow(b, -e, evaluate=False)
            return "1/" + self.parenthesize(inner, PRECEDENCE["Pow"])
        return "%s^%s" % (self.parenthesize(b, PRECEDENCE["Pow"], strict=True), self.parenthesize(e, precedence(expr), strict=False))

    def _print_Derivative(self, expr):
        f = expr.expr
        vars_ = []
        for v, n in expr.variable_count:
            vars_ += [self._print(v)] * int(n)
        if isinstance(f, AppliedUndef) and all(isinstance(a, sp.Symbol) for a in f.args):
            head = f.func.__name__
        else:
            head = self._print(f)
            if isinstance(f, AppliedUndef):
                vars_ = []
                for v, n in expr.variable_count:
                    vars_ += [str(list(f.args).index(v) + 1)] * int(n)
        return "D(%s, %s)" % (head, ", ".join(vars_))

    def _print_Function(self, expr):
        return expr.func.__name__ + "(%s)" % ",".join(self._print(a) for a in expr.args)

    def _print_Subs(self, expr):
        # f'(g) style atoms: D(f(g), arg)
        d, olds, news = expr.args
        f = d.expr
        mapping = dict(zip(olds, news))
        vars_ = []
        for v, n in d.variable_count:
            vars_ += [str(list(f.args).index(v) + 1)] * int(n)
        app = f.func.__name__ + "(%s)" % ",".join(self._print(mapping.get(a, a)) for a in f.args)
        return "D(%s, %s)" % (app, ", ".join(vars_))


_printer = _Printer({"order": None})


def to_text(e):
    """Render ``e`` in the expression grammar (round-trips through ``parse``)."""
    return _printer.doprint(sp.sympify(e))


# ---------------------------------------------------------------------------
# numeric evaluation


@functools.lru_cache(maxsize=4096)
def _compiled(args, expr, orders):
    d = expr
    for a, n in zip(args, orders):
        if n:
            d = sp.diff(d, a, n)
    return sp.lambdify(args, d, modules="math")


class FunctionTable:
    """Numeric rules for opaque functions and their derivatives.

    Entries are keyed by ``(name, derivative_orders)`` where
    ``derivative_orders`` is a tuple with one differentiation count per
    argument, e.g. ``("A", (0, 1))`` for ``A_r`` of ``A(t, r)``.
    """

    def __init__(self, entries=None, closed_forms=None):
        self._entries = dict(entries or {})
        self._closed = dict(closed_forms or {})  # name -> (arg symbols, sympy expr)

    @classmethod
    def from_closed_forms(cls, forms):
        return cls(closed_forms=forms)

    def add(self, name, orders, fn):
        self._entries[(name, tuple(orders))] = fn

    def names(self):
        return {k[0] for k in self._entries} | set(self._closed)

    def lookup(self, name, orders):
        key = (name, tuple(orders))
        fn = self._entries.get(key)
        if fn is None and name in self._closed:
            args, expr = self._closed[name]
            fn = _compiled(tuple(args), expr, tuple(orders))
            self._entries[key] = fn
        if fn is None:
            raise UnboundFunction(f"no numeric rule for {name} with derivative orders {orders}")
        return fn

    def merged(self, other):
        keep = {k: v for k, v in self._entries.items() if k[0] not in other._closed}
        out = FunctionTable(keep, self._closed)
        out._entries.update(other._entries)
        out._closed.update(other._closed)
        return out


def _orders(app, dvars):
    counts = [0] * len(app.args)
    for v, n in dvars:
        idx = list(app.args).index(v)
        counts[idx] += int(n)
    return tuple(counts)


def eval_numeric(e, point, fns=None, eps=1e-300):
    """IEEE double evaluation of the raw tree ``e`` (no simplification).

    ``point`` maps Symbols (or their names) to floats; ``fns`` is a
    FunctionTable for opaque functions.
    """
    vals = {}
    for k, v in point.items():
        vals[k.name if isinstance(k, sp.Symbol) else k] = float(v)
    fns = fns or FunctionTable()
    cache = {}

    def ev(node):
        hit = cache.get(node)
        if hit is not None:
            return hit
        out = _ev(node)
        cache[node] = out
        return out

    def _ev(node):
        if node.is_Number:
            return float(node)
        if isinstance(node, sp.Symbol):
            try:
                return vals[node.name]
            except KeyError:
                raise UnboundSymbol(f"no value for {node.name}") from None
        if isinstance(node, sp.Add):
            return math.fsum(ev(a) for a in sorted(node.args, key=sp.default_sort_key))
        if isinstance(node, sp.Mul):
            return _fold(lambda x, y: x * y, (ev(a) for a in sorted(node.args, key=sp.default_sort_key)), 1.0)
        if isinstance(node, sp.Pow):
            b = ev(node.base)
            ex = node.exp
            if ex.is_Integer:
                k = int(ex)
                if k < 0 and abs(b) < eps:
                    raise NumericDomain(f"division by ~0 evaluating {node}")
                return b**k
            if ex.is_Rational:
                if b < 0:
                    raise NumericDomain(f"negative base under a fractional power in {node}")
                return b ** float(ex)
            return b ** ev(ex)
        if isinstance(node, AppliedUndef):
            fn = fns.lookup(node.func.__name__, (0,) * len(node.args))
            return float(fn(*[ev(a) for a in node.args]))
        if isinstance(node, sp.Derivative):
            app = node.expr
            if not isinstance(app, AppliedUndef):
                raise NumericDomain(f"cannot evaluate derivative of {app}")
            fn = fns.lookup(app.func.__name__, _orders(app, node.variable_count))
            return float(fn(*[ev(a) for a in app.args]))
        if isinstance(node, sp.Subs):
            d, olds, news = node.args
            app = d.expr
            fn = fns.lookup(app.func.__name__, _orders(app, d.variable_count))
            mapping = dict(zip(olds, [ev(n) for n in news]))
            return float(fn(*[mapping[a] if a in mapping else ev(a) for a in app.args]))
        if node.func in _NUMERIC_FUNCS:
            return _NUMERIC_FUNCS[node.func](*[ev(a) for a in node.args])
        raise NumericDomain(f"unsupported node {node.func} in numeric evaluation")

    return ev(sp.sympify(e))


_NUMERIC_FUNCS = {
    sp.sin: math.sin,
    sp.cos: math.cos,
    sp.exp: math.exp,
    sp.log: math.log,
    sp.Abs: abs,
}
