"""
Arithmetic expressions in x and y for source terms, e.g. "x*y" or
"sin(pi*x)^2 - exp(-y)".

Grammar (Pratt parser, binding powers low to high):
    + -     left associative
    * /     left associative
    unary -
    ^       right associative
    atoms:  numbers, x, y, pi, sin/cos/exp/sqrt "(" expr ")", "(" expr ")"
"""
import re
from dataclasses import dataclass
from typing import Callable, Dict, Iterator, List, NamedTuple, Union

import numpy as np

from hodgedirac.core.errors import EvaluationError, ParseError

FUNCTIONS: Dict[str, Callable] = {
    "sin": np.sin,
    "cos": np.cos,
    "exp": np.exp,
    "sqrt": np.sqrt,
}
VARIABLES = ("x", "y")
CONSTANTS = {"pi": np.pi}

BINARY_LBP = {"+": 10, "-": 10, "*": 20, "/": 20, "^": 30}
UNARY_MINUS_BP = 25

ATOM_START = frozenset({"number", "x", "y", "pi", "(", "-"} | set(FUNCTIONS))


@dataclass(frozen=True)
class Number:
    value: float


@dataclass(frozen=True)
class Variable:
    name: str


@dataclass(frozen=True)
class Constant:
    name: str


@dataclass(frozen=True)
class Negate:
    operand: "Expression"


@dataclass(frozen=True)
class BinaryOp:
    op: str
    left: "Expression"
    right: "Expression"


@dataclass(frozen=True)
class Call:
    func: str
    arg: "Expression"


Expression = Union[Number, Variable, Constant, Negate, BinaryOp, Call]


class Token(NamedTuple):
    kind: str  # "number", "name", an operator or parenthesis, or "end"
    text: str
    offset: int  # byte offset into the source


_TOKEN = re.compile(r"\s*(?:(\d+\.?\d*(?:[eE][+-]?\d+)?|\.\d+(?:[eE][+-]?\d+)?)|([A-Za-z_]\w*)|(.))")


def tokenize(text: str) -> Iterator[Token]:
    pos = 0
    while pos < len(text):
        match = _TOKEN.match(text, pos)
        if match is None:
            break  # trailing whitespace
        start = match.start(match.lastindex) if match.lastindex else match.end()
        offset = len(text[:start].encode("utf-8"))
        number, name, other = match.groups()
        if number is not None:
            yield Token("number", number, offset)
        elif name is not None:
            yield Token("name", name, offset)
        elif other is not None:
            if other not in "+-*/^()":
                raise ParseError(f"unexpected character {other!r}", offset, ATOM_START | set(BINARY_LBP))
            yield Token(other, other, offset)
        pos = match.end()
    yield Token("end", "", len(text.encode("utf-8")))


class _Parser:
    def __init__(self, text: str):
        self.tokens: List[Token] = list(tokenize(text))
        self.index = 0

    @property
    def token(self) -> Token:
        return self.tokens[self.index]

    def advance(self) -> Token:
        t = self.token
        self.index += 1
        return t

    def expect(self, kind: str) -> Token:
        if self.token.kind != kind:
            raise ParseError(f"unexpected {self._describe(self.token)}", self.token.offset, {kind})
        return self.advance()

    @staticmethod
    def _describe(t: Token) -> str:
        return "end of input" if t.kind == "end" else repr(t.text)

    def lbp(self, t: Token) -> int:
        return BINARY_LBP.get(t.kind, 0)

    def expression(self, rbp: int = 0) -> Expression:
        left = self.nud(self.advance())
        while rbp < self.lbp(self.token):
            op = self.advance()
            # ^ is right associative
            right = self.expression(BINARY_LBP[op.kind] - (1 if op.kind == "^" else 0))
            left = BinaryOp(op.kind, left, right)
        return left

    def nud(self, t: Token) -> Expression:
        if t.kind == "number":
            return Number(float(t.text))
        if t.kind == "-":
            return Negate(self.expression(UNARY_MINUS_BP))
        if t.kind == "(":
            inner = self.expression()
            self.expect(")")
            return inner
        if t.kind == "name":
            if t.text in VARIABLES:
                return Variable(t.text)
            if t.text in CONSTANTS:
                return Constant(t.text)
            if t.text in FUNCTIONS:
                self.expect("(")
                arg = self.expression()
                self.expect(")")
                return Call(t.text, arg)
            raise ParseError(f"unknown name {t.text!r}", t.offset, ATOM_START)
        raise ParseError(f"unexpected {self._describe(t)}", t.offset, ATOM_START)


def parse_expression(text: str) -> Expression:
    if not text or not text.strip():
        raise ParseError("empty expression", 0, ATOM_START)
    parser = _Parser(text)
    tree = parser.expression()
    if parser.token.kind != "end":
        raise ParseError(f"unexpected {parser._describe(parser.token)}", parser.token.offset, set(BINARY_LBP) | {"end"})
    return tree


def to_text(expr: Expression) -> str:
    """Fully parenthesized source text; parse_expression(to_text(e)) == e."""
    if isinstance(expr, Number):
        return repr(expr.value)
    if isinstance(expr, (Variable, Constant)):
        return expr.name
    if isinstance(expr, Negate):
        return f"(-{to_text(expr.operand)})"
    if isinstance(expr, BinaryOp):
        return f"({to_text(expr.left)} {expr.op} {to_text(expr.right)})"
    return f"{expr.func}({to_text(expr.arg)})"


def _eval(expr: Expression, x: np.ndarray, y: np.ndarray):
    if isinstance(expr, Number):
        return np.float64(expr.value)
    if isinstance(expr, Variable):
        return x if expr.name == "x" else y
    if isinstance(expr, Constant):
        return np.float64(CONSTANTS[expr.name])
    if isinstance(expr, Negate):
        return -_eval(expr.operand, x, y)
    if isinstance(expr, Call):
        return FUNCTIONS[expr.func](_eval(expr.arg, x, y))
    left = _eval(expr.left, x, y)
    right = _eval(expr.right, x, y)
    if expr.op == "+":
        return left + right
    if expr.op == "-":
        return left - right
    if expr.op == "*":
        return left * right
    if expr.op == "/":
        return np.divide(left, right)
    return np.power(left, right)


def evaluate(expr: Expression, x, y) -> np.ndarray:
    """Vectorized evaluation; domain errors and overflow raise EvaluationError."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    try:
        with np.errstate(all="raise"):
            value = np.broadcast_to(_eval(expr, x, y), np.broadcast(x, y).shape).astype(float)
    except (FloatingPointError, ZeroDivisionError, OverflowError) as e:
        raise EvaluationError(f"evaluating {to_text(expr)}: {e}") from e
    if not np.all(np.isfinite(value)):
        raise EvaluationError(f"evaluating {to_text(expr)}: non-finite result")
    return value


def compile_expression(text: str) -> Callable[[np.ndarray, np.ndarray], np.ndarray]:
    """Parse once; the returned callable evaluates on coordinate arrays."""
    tree = parse_expression(text)
    return lambda x, y: evaluate(tree, x, y)
