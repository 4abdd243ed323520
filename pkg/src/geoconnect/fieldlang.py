"""Small expression language for scalar and vector fields.

Sources are written over the coordinates ``x1 .. xd`` and the extra
parameter ``u`` (used by plane-wave profiles).  Supported syntax::

    + - * / ^          arithmetic, ``^`` is right associative
    sin cos exp sqrt abs log
    piecewise(a < b, then, else)     comparisons: < <= > >=
    pi                 constant
    [e1, ..., ed]      vector field (top level only)

Parsed expressions are immutable.  Derivatives are obtained by symbolic
differentiation of the tree, so they are exact up to rounding.  Two
evaluation paths exist: a checked tree walker (precise error locations,
seam detection) and a generated numpy function used on hot paths.
"""
from __future__ import annotations

import math
import re
from dataclasses import dataclass
from functools import cached_property

import numpy as np

__all__ = [
    "FieldError",
    "FieldSyntaxError",
    "UnknownIdentifierError",
    "ArityError",
    "FieldDomainError",
    "SeamError",
    "FieldExpr",
    "parse",
    "compile_bundle",
]

SEAM_TOL = 1e-9
FUNCTIONS = ("sin", "cos", "exp", "sqrt", "abs", "log")
# sign only appears in derivatives of abs; it is not part of the grammar
_INTERNAL_FUNCTIONS = FUNCTIONS + ("sign",)
_CMP_OPS = ("<", "<=", ">", ">=")


class FieldError(ValueError):
    pass


class FieldSyntaxError(FieldError):
    def __init__(self, message, offset):
        super().__init__(f"{message} at byte offset {offset}")
        self.offset = offset


class UnknownIdentifierError(FieldSyntaxError):
    pass


class ArityError(FieldSyntaxError):
    pass


class FieldDomainError(FieldError):
    def __init__(self, message, offset=None, point=None):
        where = f" (byte offset {offset})" if offset is not None else ""
        at = f" at point {list(point)}" if point is not None else ""
        super().__init__(f"{message}{where}{at}")
        self.offset = offset
        self.point = point


class SeamError(FieldError):
    pass


# ---------------------------------------------------------------------------
# AST
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Num:
    value: float
    pos: int = -1


@dataclass(frozen=True)
class Var:
    name: str
    index: int  # 0..d-1 for x1..xd, d for u
    pos: int = -1


@dataclass(frozen=True)
class Neg:
    arg: object
    pos: int = -1


@dataclass(frozen=True)
class Bin:
    op: str
    left: object
    right: object
    pos: int = -1


@dataclass(frozen=True)
class Call:
    fn: str
    arg: object
    pos: int = -1


@dataclass(frozen=True)
class Cmp:
    op: str
    left: object
    right: object
    pos: int = -1


@dataclass(frozen=True)
class Piecewise:
    cond: Cmp
    then: object
    other: object
    pos: int = -1


def _is_num(node, value=None):
    return isinstance(node, Num) and (value is None or node.value == value)


# simplifying constructors; keep derivative trees small

def _add(a, b):
    if _is_num(a, 0.0):
        return b
    if _is_num(b, 0.0):
        return a
    if _is_num(a) and _is_num(b):
        return Num(a.value + b.value)
    return Bin("+", a, b)


def _sub(a, b):
    if _is_num(b, 0.0):
        return a
    if _is_num(a, 0.0):
        return _neg(b)
    if _is_num(a) and _is_num(b):
        return Num(a.value - b.value)
    return Bin("-", a, b)


def _mul(a, b):
    if _is_num(a, 0.0) or _is_num(b, 0.0):
        return Num(0.0)
    if _is_num(a, 1.0):
        return b
    if _is_num(b, 1.0):
        return a
    if _is_num(a) and _is_num(b):
        return Num(a.value * b.value)
    return Bin("*", a, b)


def _div(a, b):
    if _is_num(a, 0.0):
        return Num(0.0)
    if _is_num(b, 1.0):
        return a
    return Bin("/", a, b)


def _pow(a, b):
    if _is_num(b, 0.0):
        return Num(1.0)
    if _is_num(b, 1.0):
        return a
    return Bin("^", a, b)


def _neg(a):
    if _is_num(a):
        return Num(-a.value)
    if isinstance(a, Neg):
        return a.arg
    return Neg(a)


def _call(fn, arg):
    return Call(fn, arg)


def _piecewise(cond, a, b):
    if a == b:
        return a
    return Piecewise(cond, a, b)


def diff_node(node, index):
    """Symbolic partial derivative of ``node`` with respect to variable ``index``."""
    if isinstance(node, Num):
        return Num(0.0)
    if isinstance(node, Var):
        return Num(1.0 if node.index == index else 0.0)
    if isinstance(node, Neg):
        return _neg(diff_node(node.arg, index))
    if isinstance(node, Bin):
        a, b = node.left, node.right
        da, db = diff_node(a, index), diff_node(b, index)
        if node.op == "+":
            return _add(da, db)
        if node.op == "-":
            return _sub(da, db)
        if node.op == "*":
            return _add(_mul(da, b), _mul(a, db))
        if node.op == "/":
            return _div(_sub(_mul(da, b), _mul(a, db)), _pow(b, Num(2.0)))
        if node.op == "^":
            if _is_num(b):
                return _mul(_mul(b, _pow(a, Num(b.value - 1.0))), da)
            # general power: a^b (b' log a + b a' / a)
            return _mul(node, _add(_mul(db, _call("log", a)), _div(_mul(b, da), a)))
    if isinstance(node, Call):
        a = node.arg
        da = diff_node(a, index)
        if _is_num(da, 0.0):
            return Num(0.0)
        fn = node.fn
        if fn == "sin":
            outer = _call("cos", a)
        elif fn == "cos":
            outer = _neg(_call("sin", a))
        elif fn == "exp":
            outer = node
        elif fn == "sqrt":
            outer = _div(Num(0.5), node)
        elif fn == "abs":
            outer = _call("sign", a)
        elif fn == "log":
            outer = _div(Num(1.0), a)
        elif fn == "sign":
            return Num(0.0)
        else:  # pragma: no cover
            raise AssertionError(fn)
        return _mul(outer, da)
    if isinstance(node, Piecewise):
        return _piecewise(node.cond, diff_node(node.then, index), diff_node(node.other, index))
    raise TypeError(f"cannot differentiate {node!r}")


def node_source(node) -> str:
    """Fully parenthesised source text; re-parses to the same tree."""
    if isinstance(node, Num):
        if node.value == math.pi:
            return "pi"
        text = repr(float(node.value))
        return f"({text})" if node.value < 0 else text
    if isinstance(node, Var):
        return node.name
    if isinstance(node, Neg):
        return f"(-{node_source(node.arg)})"
    if isinstance(node, Bin):
        return f"({node_source(node.left)} {node.op} {node_source(node.right)})"
    if isinstance(node, Call):
        if node.fn == "sign":
            # not in the grammar; spell it with piecewise
            a = node_source(node.arg)
            return f"piecewise({a} > 0, 1.0, piecewise({a} < 0, -1.0, 0.0))"
        return f"{node.fn}({node_source(node.arg)})"
    if isinstance(node, Cmp):
        return f"{node_source(node.left)} {node.op} {node_source(node.right)}"
    if isinstance(node, Piecewise):
        return (
            f"piecewise({node_source(node.cond)}, "
            f"{node_source(node.then)}, {node_source(node.other)})"
        )
    raise TypeError(node)


def walk(node):
    yield node
    for child in _children(node):
        yield from walk(child)


def _children(node):
    if isinstance(node, Neg):
        return (node.arg,)
    if isinstance(node, (Bin, Cmp)):
        return (node.left, node.right)
    if isinstance(node, Call):
        return (node.arg,)
    if isinstance(node, Piecewise):
        return (node.cond, node.then, node.other)
    return ()


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------

_TOKEN_RE = re.compile(
    r"\s*(?:(?P<num>(?:\d+\.\d*|\.\d+|\d+)(?:[eE][+-]?\d+)?)"
    r"|(?P<name>[A-Za-z_][A-Za-z_0-9]*)"
    r"|(?P<op><=|>=|==|[-+*/^(),<>\[\]]))"
)


def _tokenize(source):
    tokens = []
    pos = 0
    n = len(source)
    while pos < n:
        m = _TOKEN_RE.match(source, pos)
        if m is None or m.end() == pos:
            rest = source[pos:]
            if rest.strip() == "":
                break
            bad = pos + (len(rest) - len(rest.lstrip()))
            raise FieldSyntaxError(f"unexpected character {source[bad]!r}", _byte(source, bad))
        kind = m.lastgroup
        start = m.start(kind)
        tokens.append((kind, m.group(kind), start))
        pos = m.end()
    tokens.append(("end", "", len(source)))
    return tokens


def _byte(source, char_offset):
    return len(source[:char_offset].encode("utf-8"))


class _Parser:
    def __init__(self, source, dimension):
        self.source = source
        self.dim = dimension
        self.tokens = _tokenize(source)
        self.i = 0

    # helpers
    def peek(self):
        return self.tokens[self.i]

    def advance(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def off(self, tok):
        return _byte(self.source, tok[2])

    def expect(self, value):
        tok = self.advance()
        if tok[1] != value or tok[0] == "num":
            got = tok[1] or "end of input"
            raise FieldSyntaxError(f"expected {value!r}, got {got!r}", self.off(tok))
        return tok

    # grammar
    def parse_top(self):
        tok = self.peek()
        if tok[1] == "[" and tok[0] == "op":
            self.advance()
            items = [self.parse_expr()]
            while self.peek()[1] == ",":
                self.advance()
                items.append(self.parse_expr())
            self.expect("]")
            if len(items) != self.dim:
                raise ArityError(
                    f"vector field has {len(items)} components, dimension is {self.dim}",
                    self.off(tok),
                )
            result = tuple(items)
            after = self.peek()
            if after[0] == "op" and after[1] in ("+", "-", "*", "/", "^"):
                raise ArityError("vector field combined with a scalar operator", self.off(after))
        else:
            result = self.parse_expr()
        end = self.peek()
        if end[0] != "end":
            raise FieldSyntaxError(f"unexpected token {end[1]!r}", self.off(end))
        return result

    def parse_expr(self):
        node = self.parse_term()
        while self.peek()[1] in ("+", "-") and self.peek()[0] == "op":
            tok = self.advance()
            node = Bin(tok[1], node, self.parse_term(), tok[2])
        return node

    def parse_term(self):
        node = self.parse_unary()
        while self.peek()[1] in ("*", "/") and self.peek()[0] == "op":
            tok = self.advance()
            node = Bin(tok[1], node, self.parse_unary(), tok[2])
        return node

    def parse_unary(self):
        tok = self.peek()
        if tok[0] == "op" and tok[1] == "-":
            self.advance()
            return Neg(self.parse_unary(), tok[2])
        if tok[0] == "op" and tok[1] == "+":
            self.advance()
            return self.parse_unary()
        return self.parse_power()

    def parse_power(self):
        base = self.parse_atom()
        tok = self.peek()
        if tok[0] == "op" and tok[1] == "^":
            self.advance()
            return Bin("^", base, self.parse_unary(), tok[2])
        return base

    def parse_atom(self):
        tok = self.advance()
        kind, text, start = tok
        if kind == "num":
            return Num(float(text), start)
        if kind == "name":
            if self.peek()[1] == "(":
                return self.parse_call(tok)
            if text == "pi":
                return Num(math.pi, start)
            if text == "u":
                return Var("u", self.dim, start)
            m = re.fullmatch(r"x([1-9][0-9]*)", text)
            if m and int(m.group(1)) <= self.dim:
                return Var(text, int(m.group(1)) - 1, start)
            if text in FUNCTIONS or text == "piecewise":
                raise ArityError(f"function {text!r} needs arguments", self.off(tok))
            raise UnknownIdentifierError(f"unknown identifier {text!r}", self.off(tok))
        if text == "(":
            node = self.parse_expr()
            self.expect(")")
            return node
        if text == "[":
            raise ArityError("vector literal inside a scalar expression", self.off(tok))
        if kind == "end":
            raise FieldSyntaxError("unexpected end of input", self.off(tok))
        raise FieldSyntaxError(f"unexpected token {text!r}", self.off(tok))

    def parse_args(self):
        self.expect("(")
        args = []
        if self.peek()[1] != ")":
            args.append(self.parse_arg())
            while self.peek()[1] == ",":
                self.advance()
                args.append(self.parse_arg())
        self.expect(")")
        return args

    def parse_arg(self):
        left = self.parse_expr()
        tok = self.peek()
        if tok[0] == "op" and tok[1] in _CMP_OPS:
            self.advance()
            return Cmp(tok[1], left, self.parse_expr(), tok[2])
        if tok[0] == "op" and tok[1] == "==":
            raise FieldSyntaxError("equality comparisons are not supported", self.off(tok))
        return left

    def parse_call(self, name_tok):
        name = name_tok[1]
        args = self.parse_args()
        off = self.off(name_tok)
        if name == "piecewise":
            if len(args) != 3:
                raise ArityError(f"piecewise takes 3 arguments, got {len(args)}", off)
            cond, a, b = args
            if not isinstance(cond, Cmp):
                raise FieldSyntaxError("first piecewise argument must be a comparison", off)
            for arg in (a, b):
                if isinstance(arg, Cmp):
                    raise FieldSyntaxError("comparison used as a value", off)
            return Piecewise(cond, a, b, name_tok[2])
        if name in FUNCTIONS:
            if len(args) != 1:
                raise ArityError(f"{name} takes 1 argument, got {len(args)}", off)
            if isinstance(args[0], Cmp):
                raise FieldSyntaxError("comparison used as a value", off)
            return Call(name, args[0], name_tok[2])
        raise UnknownIdentifierError(f"unknown function {name!r}", off)


# ---------------------------------------------------------------------------
# Checked tree-walking evaluation
# ---------------------------------------------------------------------------


def _seam_gap(cond, x, u):
    left = _interp(cond.left, x, u, False)
    right = _interp(cond.right, x, u, False)
    return left, right


def _compare(op, a, b):
    if op == "<":
        return a < b
    if op == "<=":
        return a <= b
    if op == ">":
        return a > b
    return a >= b


def _interp(node, x, u, seam_check, source=None):
    """Evaluate at a single point with domain checks.

    With ``seam_check`` both branches of a piecewise are evaluated when the
    point sits on its seam and must agree to SEAM_TOL.
    """
    if isinstance(node, Num):
        return node.value
    if isinstance(node, Var):
        return u if node.index == len(x) else x[node.index]
    if isinstance(node, Neg):
        return -_interp(node.arg, x, u, seam_check, source)
    if isinstance(node, Bin):
        a = _interp(node.left, x, u, seam_check, source)
        b = _interp(node.right, x, u, seam_check, source)
        op = node.op
        if op == "+":
            return a + b
        if op == "-":
            return a - b
        if op == "*":
            return a * b
        if op == "/":
            if b == 0.0:
                raise FieldDomainError("division by zero", _off(source, node.pos), x)
            return a / b
        if a < 0.0 and b != math.floor(b):
            raise FieldDomainError("fractional power of a negative number", _off(source, node.pos), x)
        if a == 0.0 and b < 0.0:
            raise FieldDomainError("negative power of zero", _off(source, node.pos), x)
        try:
            return math.pow(a, b)
        except OverflowError:
            raise FieldDomainError("overflow in power", _off(source, node.pos), x) from None
    if isinstance(node, Call):
        a = _interp(node.arg, x, u, seam_check, source)
        fn = node.fn
        if fn == "sqrt":
            if a < 0.0:
                raise FieldDomainError("sqrt of a negative number", _off(source, node.pos), x)
            return math.sqrt(a)
        if fn == "log":
            if a <= 0.0:
                raise FieldDomainError("log of a non-positive number", _off(source, node.pos), x)
            return math.log(a)
        if fn == "exp":
            try:
                return math.exp(a)
            except OverflowError:
                raise FieldDomainError("overflow in exp", _off(source, node.pos), x) from None
        if fn == "sin":
            return math.sin(a)
        if fn == "cos":
            return math.cos(a)
        if fn == "abs":
            return abs(a)
        if fn == "sign":
            return float(np.sign(a))
        raise AssertionError(fn)  # pragma: no cover
    if isinstance(node, Piecewise):
        left, right = _seam_gap(node.cond, x, u)
        if seam_check and abs(left - right) <= 1e-14 * max(1.0, abs(right)):
            a = _interp(node.then, x, u, seam_check, source)
            b = _interp(node.other, x, u, seam_check, source)
            if abs(a - b) > SEAM_TOL:
                raise SeamError(
                    f"piecewise branches disagree on the seam "
                    f"({node_source(node.cond)}) at point {list(x)}: {a!r} vs {b!r}"
                )
        if _compare(node.cond.op, left, right):
            return _interp(node.then, x, u, seam_check, source)
        return _interp(node.other, x, u, seam_check, source)
    raise TypeError(node)


def _off(source, pos):
    if source is None or pos < 0:
        return None
    return _byte(source, pos)


# ---------------------------------------------------------------------------
# Code generation
# ---------------------------------------------------------------------------

_NP_FUNCS = {
    "sin": "_np.sin",
    "cos": "_np.cos",
    "exp": "_np.exp",
    "sqrt": "_np.sqrt",
    "abs": "_np.abs",
    "log": "_np.log",
    "sign": "_np.sign",
}


def _codegen(node):
    if isinstance(node, Num):
        return repr(float(node.value))
    if isinstance(node, Var):
        return f"_v[{node.index}]"
    if isinstance(node, Neg):
        return f"(-{_codegen(node.arg)})"
    if isinstance(node, Bin):
        op = "**" if node.op == "^" else node.op
        return f"({_codegen(node.left)} {op} {_codegen(node.right)})"
    if isinstance(node, Call):
        return f"{_NP_FUNCS[node.fn]}({_codegen(node.arg)})"
    if isinstance(node, Cmp):
        return f"({_codegen(node.left)} {node.op} {_codegen(node.right)})"
    if isinstance(node, Piecewise):
        return f"_np.where({_codegen(node.cond)}, {_codegen(node.then)}, {_codegen(node.other)})"
    raise TypeError(node)


def compile_bundle(nodes, dimension):
    """Compile several scalar trees into one vectorised function.

    The returned callable takes ``x`` of shape ``(N, d)`` and ``u`` (scalar
    or ``(N,)``) and returns an ``(len(nodes), N)`` array.  No domain checks
    are done here; callers look for non-finite output.
    """
    body = ", ".join(_codegen(n) for n in nodes) or ""
    src = (
        "def _bundle(_v):\n"
        f"    return ({body},)\n"
    )
    namespace = {"_np": np}
    exec(compile(src, "<fieldlang>", "exec"), namespace)
    raw = namespace["_bundle"]
    count = len(nodes)

    def bundle(x, u=0.0):
        x = np.asarray(x, dtype=float)
        npts = x.shape[0]
        cols = [x[:, i] for i in range(dimension)]
        cols.append(np.broadcast_to(np.asarray(u, dtype=float), (npts,)))
        out = np.empty((count, npts))
        if count == 0:
            return out
        with np.errstate(all="ignore"):
            values = raw(cols)
        for k, val in enumerate(values):
            out[k] = val
        return out

    return bundle


# ---------------------------------------------------------------------------
# Public expression type
# ---------------------------------------------------------------------------


class FieldExpr:
    """A parsed scalar or vector field over ``x1..xd`` and ``u``.

    Values are immutable; derived expressions (partials) are cached.
    """

    def __init__(self, source, dimension, tree):
        self.source = source
        self.dimension = dimension
        self._tree = tree

    @property
    def arity(self):
        return "vector" if isinstance(self._tree, tuple) else "scalar"

    @property
    def components(self):
        return self._tree if isinstance(self._tree, tuple) else (self._tree,)

    @property
    def ast(self):
        return self._tree

    def __repr__(self):
        return f"FieldExpr({self.source!r}, dimension={self.dimension})"

    def pretty(self) -> str:
        if self.arity == "vector":
            return "[" + ", ".join(node_source(c) for c in self._tree) + "]"
        return node_source(self._tree)

    @classmethod
    def from_tree(cls, tree, dimension, source=None):
        expr = cls(None, dimension, tree)
        expr.source = source if source is not None else expr.pretty()
        return expr

    # structural queries --------------------------------------------------

    @cached_property
    def variables(self) -> frozenset:
        """Indices of variables that occur (``dimension`` stands for ``u``)."""
        return frozenset(
            n.index for c in self.components for n in walk(c) if isinstance(n, Var)
        )

    def is_zero(self) -> bool:
        return all(_is_num(c, 0.0) for c in self.components)

    def is_constant(self) -> bool:
        return not self.variables

    @cached_property
    def seams(self):
        """Distinct piecewise conditions, as (left - right) trees."""
        seen = []
        for c in self.components:
            for n in walk(c):
                if isinstance(n, Piecewise):
                    gap = _sub(n.cond.left, n.cond.right)
                    if gap not in seen:
                        seen.append(gap)
        return tuple(seen)

    # evaluation ------------------------------------------------------------

    def _point(self, point, u):
        x = [float(v) for v in np.asarray(point, dtype=float).ravel()]
        if len(x) == self.dimension + 1 and u is None:
            u = x.pop()
        if len(x) != self.dimension:
            raise FieldError(f"point has {len(x)} coordinates, field dimension is {self.dimension}")
        return x, (0.0 if u is None else float(u))

    def eval(self, point, u=None):
        """Checked evaluation at one point (``u`` defaults to 0)."""
        x, u = self._point(point, u)
        vals = [_interp(c, x, u, False, self.source) for c in self.components]
        if self.arity == "vector":
            return np.array(vals)
        return vals[0]

    def derivative(self, point, index, u=None):
        """Exact partial derivative along variable ``index`` (0-based; ``d`` is u).

        Raises SeamError when the point lies on a piecewise seam whose
        branches (values or first derivatives) disagree.
        """
        x, u = self._point(point, u)
        for c in self.components:
            _interp(c, x, u, True, self.source)
        part = self.partial(index)
        vals = [_interp(c, x, u, True, self.source) for c in part.components]
        if self.arity == "vector":
            return np.array(vals)
        return vals[0]

    def partial(self, index) -> "FieldExpr":
        return self._partials(index)

    def _partials(self, index):
        cache = self.__dict__.setdefault("_partial_cache", {})
        if index not in cache:
            if not 0 <= index <= self.dimension:
                raise FieldError(f"no variable with index {index}")
            comps = tuple(diff_node(c, index) for c in self.components)
            tree = comps if self.arity == "vector" else comps[0]
            cache[index] = FieldExpr.from_tree(tree, self.dimension)
        return cache[index]

    @cached_property
    def _compiled(self):
        return compile_bundle(self.components, self.dimension)

    def __call__(self, x, u=0.0):
        """Vectorised evaluation; ``x`` has shape (N, d) or (d,)."""
        x = np.asarray(x, dtype=float)
        single = x.ndim == 1
        xs = x[None, :] if single else x
        out = self._compiled(xs, u)
        if not np.all(np.isfinite(out)):
            bad = int(np.nonzero(~np.all(np.isfinite(out), axis=0))[0][0])
            ub = np.broadcast_to(np.asarray(u, dtype=float), (xs.shape[0],))[bad]
            self.eval(xs[bad], ub)  # raises with location if the tree walker agrees
            raise FieldDomainError("non-finite value", None, xs[bad])
        if self.arity == "scalar":
            out = out[0]
            return out[0] if single else out
        out = out.T
        return out[0] if single else out


def parse(source: str, dimension: int) -> FieldExpr:
    if not isinstance(dimension, int) or dimension < 1:
        raise ValueError("dimension must be a positive integer")
    tree = _Parser(str(source), dimension).parse_top()
    return FieldExpr(str(source), dimension, tree)


def constant(source: str) -> float:
    """Evaluate a coordinate-free expression such as ``3*pi/2``."""
    expr = parse(source, 1)
    if expr.variables:
        raise FieldError(f"{source!r} is not a constant expression")
    return expr.eval([0.0])
