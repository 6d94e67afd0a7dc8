"""A tiny arithmetic language for user-supplied vector fields and Lyapunov functions.

Grammar (``^`` binds tightest and is right-associative; unary minus sits
between ``^`` and ``*``/``/``)::

    expr  := term (("+" | "-") term)*
    term  := unary (("*" | "/") unary)*
    unary := "-" unary | power
    power := atom ("^" unary)?
    atom  := NUMBER | "x" DIGITS | "pi" | "e" | FUNC "(" expr ")" | "(" expr ")"

so ``-x1^3`` is ``-(x1^3)`` and ``2^-1`` is ``0.5``. Functions are ``sin``,
``cos``, ``exp``, ``log``, ``sqrt``, ``tanh`` and ``abs``. Variables are
1-based (``x1`` .. ``xn``). The parser works on UTF-8 bytes and reports byte
offsets in its errors.
"""

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .exceptions import ArityError, EvalDomainError, ExprSyntaxError, UnknownIdentifier

__all__ = [
    "BinOp",
    "Call",
    "CompiledField",
    "Const",
    "Neg",
    "Var",
    "compile_expr",
    "compile_field",
    "evaluate",
    "numeric_jacobian",
    "parse",
    "to_source",
]

FUNCTIONS = ("sin", "cos", "exp", "log", "sqrt", "tanh", "abs")
CONSTANTS = {"pi": math.pi, "e": math.e}
MAX_DEPTH = 100  # nesting of parentheses, calls, unary minus and powers
MAX_HEIGHT = 250  # tree height, bounded so the recursive compiler stays within the stack


@dataclass(frozen=True)
class Const:
    value: float
    offset: int = field(default=0, compare=False)


@dataclass(frozen=True)
class Var:
    index: int  # 1-based
    offset: int = field(default=0, compare=False)


@dataclass(frozen=True)
class Neg:
    operand: object
    offset: int = field(default=0, compare=False)


@dataclass(frozen=True)
class BinOp:
    op: str
    left: object
    right: object
    offset: int = field(default=0, compare=False)


@dataclass(frozen=True)
class Call:
    func: str
    arg: object
    offset: int = field(default=0, compare=False)


# -- lexer ---------------------------------------------------------------------

_PUNCT = {ord(c): c for c in "+-*/^(),"}
_DIGITS = b"0123456789"


def _tokenize(data):
    """Yield ``(kind, text, offset)``; kinds: num, ident, punct, end."""
    tokens = []
    i, n = 0, len(data)
    while i < n:
        b = data[i]
        if b in b" \t\r\n":
            i += 1
        elif b in _PUNCT:
            tokens.append(("punct", _PUNCT[b], i))
            i += 1
        elif b in _DIGITS or (b == ord(".") and i + 1 < n and data[i + 1] in _DIGITS):
            start = i
            while i < n and data[i] in _DIGITS:
                i += 1
            if i < n and data[i] == ord("."):
                i += 1
                while i < n and data[i] in _DIGITS:
                    i += 1
            if i < n and data[i] in b"eE":
                j = i + 1
                if j < n and data[j] in b"+-":
                    j += 1
                if j < n and data[j] in _DIGITS:
                    i = j
                    while i < n and data[i] in _DIGITS:
                        i += 1
            text = data[start:i].decode("ascii")
            value = float(text)
            if not math.isfinite(value):
                raise ExprSyntaxError("numeric literal out of range", start, "finite number")
            tokens.append(("num", value, start))
        elif (65 <= b <= 90) or (97 <= b <= 122) or b == ord("_"):
            start = i
            while i < n and ((65 <= data[i] <= 90) or (97 <= data[i] <= 122)
                             or data[i] in _DIGITS or data[i] == ord("_")):
                i += 1
            tokens.append(("ident", data[start:i].decode("ascii"), start))
        else:
            raise ExprSyntaxError(f"unexpected byte 0x{b:02x}", i, "operand or operator")
    tokens.append(("end", None, n))
    return tokens


# -- parser ----------------------------------------------------------------------


class _Parser:
    def __init__(self, tokens, n_vars):
        self.tokens = tokens
        self.pos = 0
        self.n_vars = n_vars
        self.depth = 0

    def peek(self):
        return self.tokens[self.pos]

    def take(self):
        tok = self.tokens[self.pos]
        self.pos += 1
        return tok

    def expect(self, text):
        kind, value, off = self.take()
        if kind != "punct" or value != text:
            raise ExprSyntaxError(f"unexpected {_describe(kind, value)}", off, repr(text))

    def enter(self, off):
        self.depth += 1
        if self.depth > MAX_DEPTH:
            raise ExprSyntaxError("expression nested too deeply", off, "shallower expression")

    def expr(self):
        node = self.term()
        while True:
            kind, value, off = self.peek()
            if kind == "punct" and value in "+-":
                self.take()
                node = BinOp(value, node, self.term(), off)
            else:
                return node

    def term(self):
        node = self.unary()
        while True:
            kind, value, off = self.peek()
            if kind == "punct" and value in "*/":
                self.take()
                node = BinOp(value, node, self.unary(), off)
            else:
                return node

    def unary(self):
        kind, value, off = self.peek()
        if kind == "punct" and value == "-":
            self.take()
            self.enter(off)
            node = Neg(self.unary(), off)
            self.depth -= 1
            return node
        return self.power()

    def power(self):
        base = self.atom()
        kind, value, off = self.peek()
        if kind == "punct" and value == "^":
            self.take()
            self.enter(off)
            node = BinOp("^", base, self.unary(), off)
            self.depth -= 1
            return node
        return base

    def atom(self):
        kind, value, off = self.take()
        if kind == "num":
            return Const(value, off)
        if kind == "punct" and value == "(":
            self.enter(off)
            node = self.expr()
            self.expect(")")
            self.depth -= 1
            return node
        if kind == "ident":
            return self.identifier(value, off)
        raise ExprSyntaxError(f"unexpected {_describe(kind, value)}", off,
                              "number, variable, function call or '('")

    def identifier(self, name, off):
        if name in FUNCTIONS:
            kind, value, paren = self.peek()
            if kind != "punct" or value != "(":
                raise ExprSyntaxError(f"unexpected {_describe(kind, value)}", paren, "'('")
            self.take()
            self.enter(off)
            if self.peek()[:2] == ("punct", ")"):
                raise ArityError(name, 0, off)
            arg = self.expr()
            given = 1
            while self.peek()[:2] == ("punct", ","):
                self.take()
                self.expr()
                given += 1
            if given != 1:
                raise ArityError(name, given, off)
            self.expect(")")
            self.depth -= 1
            return Call(name, arg, off)
        if name in CONSTANTS:
            return Const(CONSTANTS[name], off)
        if len(name) > 1 and name[0] == "x" and name[1:].isdigit() and name[1] != "0":
            index = int(name[1:])
            if self.n_vars is not None and index > self.n_vars:
                raise UnknownIdentifier(name, off)
            return Var(index, off)
        raise UnknownIdentifier(name, off)


def _describe(kind, value):
    if kind == "end":
        return "end of input"
    if kind == "num":
        return f"number {value!r}"
    return repr(value)


def parse(source, n_vars=None):
    """Parse ``source`` (str or bytes) into an expression tree.

    ``n_vars`` bounds the admissible variable indices when given.
    """
    if isinstance(source, str):
        data = source.encode("utf-8")
    elif isinstance(source, (bytes, bytearray)):
        data = bytes(source)
    else:
        raise TypeError("source must be str or bytes")
    parser = _Parser(_tokenize(data), n_vars)
    node = parser.expr()
    kind, value, off = parser.peek()
    if kind != "end":
        raise ExprSyntaxError(f"unexpected {_describe(kind, value)}", off, "operator or end of input")
    if _height(node) > MAX_HEIGHT:
        raise ExprSyntaxError("expression too long to evaluate safely", 0, f"tree height <= {MAX_HEIGHT}")
    return node


def _children(node):
    if isinstance(node, Neg):
        return (node.operand,)
    if isinstance(node, BinOp):
        return (node.left, node.right)
    if isinstance(node, Call):
        return (node.arg,)
    return ()


def _height(node):
    best, stack = 0, [(node, 1)]
    while stack:
        n, h = stack.pop()
        best = max(best, h)
        stack.extend((c, h + 1) for c in _children(n))
    return best


def to_source(node):
    """Fully parenthesized text that parses back to an equal tree."""
    if isinstance(node, Const):
        return repr(float(node.value))
    if isinstance(node, Var):
        return f"x{node.index}"
    if isinstance(node, Neg):
        return f"(-{to_source(node.operand)})"
    if isinstance(node, BinOp):
        return f"({to_source(node.left)}{node.op}{to_source(node.right)})"
    if isinstance(node, Call):
        return f"{node.func}({to_source(node.arg)})"
    raise TypeError(f"not an expression node: {node!r}")


def variables(node):
    """Set of variable indices referenced by ``node``."""
    if isinstance(node, Var):
        return {node.index}
    if isinstance(node, Neg):
        return variables(node.operand)
    if isinstance(node, BinOp):
        return variables(node.left) | variables(node.right)
    if isinstance(node, Call):
        return variables(node.arg)
    return set()


# -- evaluation ------------------------------------------------------------------


def _literal_int(node):
    if isinstance(node, Const) and float(node.value).is_integer():
        return int(node.value)
    if isinstance(node, Neg):
        k = _literal_int(node.operand)
        return None if k is None else -k
    return None


def _ipow(base, k, off):
    if k < 0:
        if base == 0.0:
            raise EvalDomainError("zero raised to a negative power", off)
        return 1.0 / _ipow(base, -k, off)
    result = 1.0
    while k:
        if k & 1:
            result *= base
        base *= base
        k >>= 1
    return result


def _checked(value, what, off):
    if not math.isfinite(value):
        raise EvalDomainError(f"{what} produced a non-finite value", off)
    return value


def _compile(node):
    if isinstance(node, Const):
        value = float(node.value)
        return lambda x: value
    if isinstance(node, Var):
        i = node.index - 1
        return lambda x: x[i]
    off = node.offset
    if isinstance(node, Neg):
        inner = _compile(node.operand)
        return lambda x: -inner(x)
    if isinstance(node, Call):
        return _compile_call(node.func, _compile(node.arg), off)
    left, right = _compile(node.left), _compile(node.right)
    op = node.op
    if op == "+":
        return lambda x: _checked(left(x) + right(x), "addition", off)
    if op == "-":
        return lambda x: _checked(left(x) - right(x), "subtraction", off)
    if op == "*":
        return lambda x: _checked(left(x) * right(x), "multiplication", off)
    if op == "/":
        def div(x):
            den = right(x)
            if den == 0.0:
                raise EvalDomainError("division by zero", off)
            return _checked(left(x) / den, "division", off)
        return div
    k = _literal_int(node.right)
    if k is not None and abs(k) <= 64:
        return lambda x: _checked(_ipow(left(x), k, off), "power", off)

    def power(x):
        b, p = left(x), right(x)
        if b < 0.0 and not float(p).is_integer():
            raise EvalDomainError("negative base with non-integer exponent", off)
        if b == 0.0 and p < 0.0:
            raise EvalDomainError("zero raised to a negative power", off)
        try:
            return _checked(b ** p, "power", off)
        except OverflowError:
            raise EvalDomainError("power overflow", off)
    return power


def _compile_call(name, arg, off):
    if name == "sin":
        return lambda x: math.sin(arg(x))
    if name == "cos":
        return lambda x: math.cos(arg(x))
    if name == "tanh":
        return lambda x: math.tanh(arg(x))
    if name == "abs":
        return lambda x: abs(arg(x))
    if name == "exp":
        def exp(x):
            try:
                return math.exp(arg(x))
            except OverflowError:
                raise EvalDomainError("exp overflow", off)
        return exp
    if name == "log":
        def log(x):
            v = arg(x)
            if v <= 0.0:
                raise EvalDomainError("log of a nonpositive number", off)
            return math.log(v)
        return log

    def sqrt(x):
        v = arg(x)
        if v < 0.0:
            raise EvalDomainError("sqrt of a negative number", off)
        return math.sqrt(v)
    return sqrt


@lru_cache(maxsize=512)
def _compiled(node):
    return _compile(node)


def compile_expr(node):
    """Return ``f(point) -> float`` evaluating ``node``; domain violations raise."""
    fn = _compiled(node)
    needed = max(variables(node), default=0)

    def call(point):
        x = [float(v) for v in np.ravel(point)]
        if len(x) < needed:
            raise ValueError(f"point has {len(x)} coordinates, expression needs x{needed}")
        return fn(x)
    return call


def evaluate(node, point):
    """Evaluate ``node`` at ``point`` in IEEE double precision."""
    return compile_expr(node)(point)


class CompiledField:
    """Vector-valued function built from one expression per output component.

    Compiled closures are cached per tree; nothing is cached per point.
    """

    def __init__(self, components, dimension=None):
        if isinstance(components, (str, bytes)):
            components = [components]
        trees = [parse(c) if isinstance(c, (str, bytes)) else c for c in components]
        used = max((max(variables(t), default=0) for t in trees), default=0)
        self.dimension = len(trees) if dimension is None else int(dimension)
        if used > self.dimension:
            raise UnknownIdentifier(f"x{used}", 0)
        self.components = tuple(trees)
        self._fns = tuple(_compiled(t) for t in trees)

    def __call__(self, point):
        x = [float(v) for v in np.ravel(point)]
        if len(x) != self.dimension:
            raise ValueError(f"expected a point of dimension {self.dimension}, got {len(x)}")
        return np.array([fn(x) for fn in self._fns])

    def scalar(self, point):
        """Value of a single-component field as a float."""
        if len(self._fns) != 1:
            raise ValueError("scalar() needs a single-component field")
        return self._fns[0]([float(v) for v in np.ravel(point)])

    def __repr__(self):
        src = ", ".join(to_source(t) for t in self.components)
        return f"CompiledField([{src}], dimension={self.dimension})"


def compile_field(sources, dimension=None):
    return CompiledField(sources, dimension)


def numeric_jacobian(field, point, step=None):
    """Central-difference Jacobian of ``field`` at ``point``.

    The default step is ``1e-6 * (1 + |point|)``; the error is O(step**2).
    """
    x = np.asarray(point, dtype=float).ravel()
    if step is None:
        step = 1e-6 * (1.0 + np.linalg.norm(x))
    if not step > 0:
        raise ValueError("step must be positive")
    f0 = np.atleast_1d(np.asarray(field(x), dtype=float))
    J = np.empty((f0.size, x.size))
    for j in range(x.size):
        e = np.zeros_like(x)
        e[j] = step
        fp = np.atleast_1d(np.asarray(field(x + e), dtype=float))
        fm = np.atleast_1d(np.asarray(field(x - e), dtype=float))
        J[:, j] = (fp - fm) / (2.0 * step)
    return J
