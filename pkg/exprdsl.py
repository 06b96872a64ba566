"""
A small expression language for the free functions of the surface constructions.

Expressions are parsed against a declared set of variables, evaluated on floats or
numpy arrays, and differentiated symbolically. The grammar (see docs/expressions.md):

    expr     := term (("+" | "-") term)*
    term     := unary (("*" | "/") unary)*
    unary    := "-" unary | power
    power    := atom ("^" exponent)?
    exponent := unary                      (must be free of variables)
    atom     := NUMBER | NAME | FUNC "(" expr ")" | "(" expr ")"
"""
import math
import re
from dataclasses import dataclass
from typing import Dict, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np

FUNCTIONS = ("sin", "cos", "sinh", "cosh", "exp", "ln", "sqrt")
CONSTANTS = {"pi": math.pi}

Number = Union[float, np.ndarray]


class ParseError(ValueError):
    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} at offset {offset}")
        self.offset = offset


class UnknownIdentifierError(ParseError):
    def __init__(self, name: str, offset: int):
        super().__init__(f"unknown identifier '{name}'", offset)
        self.name = name


class EvaluationError(ValueError):
    def __init__(self, message: str, index: Optional[int] = None):
        where = f" (flat index {index})" if index is not None else ""
        super().__init__(f"{message}{where}")
        self.message = message
        self.index = index


# =============================
# Syntax tree
# =============================

@dataclass(frozen=True)
class Num:
    value: float


@dataclass(frozen=True)
class Var:
    name: str


@dataclass(frozen=True)
class Neg:
    operand: "Node"


@dataclass(frozen=True)
class BinOp:
    op: str
    left: "Node"
    right: "Node"


@dataclass(frozen=True)
class Pow:
    base: "Node"
    exponent: float


@dataclass(frozen=True)
class Call:
    func: str
    arg: "Node"


Node = Union[Num, Var, Neg, BinOp, Pow, Call]


@dataclass(frozen=True)
class Expr:
    """A parsed expression together with the variables it was declared over."""
    root: Node
    variables: Tuple[str, ...]

    def evaluate(self, bindings: Dict[str, Number]) -> Number:
        return evaluate(self, bindings)

    def differentiate(self, var: str) -> "Expr":
        return differentiate(self, var)

    def to_text(self) -> str:
        return to_text(self)

    def free_variables(self) -> Tuple[str, ...]:
        return free_variables(self)

    def call(self, x: Number) -> Number:
        """Evaluate a one-variable function at x."""
        if len(self.variables) != 1:
            raise EvaluationError(f"call() needs exactly one declared variable, got {self.variables}")
        return evaluate(self, {self.variables[0]: x})

    def __str__(self):
        return to_text(self)


# =============================
# Tokenizer
# =============================

_TOKEN_RE = re.compile(
    r"\s*(?:(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)"
    r"|(?P<name>[A-Za-z_][A-Za-z0-9_]*)"
    r"|(?P<op>[-+*/^(),]))"
)


@dataclass(frozen=True)
class Token:
    kind: str  # "num", "name", "op" or "end"
    text: str
    offset: int


def tokenize(text: str) -> List[Token]:
    tokens: List[Token] = []
    idx = 0
    while idx < len(text):
        if text[idx].isspace():
            idx += 1
            continue
        match = _TOKEN_RE.match(text, idx)
        if match is None or match.end() == idx:
            raise ParseError(f"unexpected character '{text[idx]}'", idx)
        kind = match.lastgroup
        if kind == "num" and not math.isfinite(float(match.group(kind))):
            raise ParseError(f"number '{match.group(kind)}' overflows a double", match.start(kind))
        tokens.append(Token(kind, match.group(kind), match.start(kind)))
        idx = match.end()
    tokens.append(Token("end", "", len(text)))
    return tokens


# =============================
# Parser
# =============================

class _Parser:
    def __init__(self, text: str, variables: Sequence[str]):
        self.tokens = tokenize(text)
        self.pos = 0
        self.variables = tuple(variables)

    def peek(self) -> Token:
        return self.tokens[self.pos]

    def advance(self) -> Token:
        token = self.tokens[self.pos]
        self.pos += 1
        return token

    def expect(self, text: str) -> Token:
        token = self.advance()
        if token.text != text:
            found = token.text or "end of input"
            raise ParseError(f"expected '{text}' but found '{found}'", token.offset)
        return token

    def parse(self) -> Node:
        node = self.expr()
        token = self.peek()
        if token.kind != "end":
            raise ParseError(f"unexpected token '{token.text}'", token.offset)
        return node

    def expr(self) -> Node:
        node = self.term()
        while self.peek().text in ("+", "-"):
            op = self.advance().text
            node = _binop(op, node, self.term())
        return node

    def term(self) -> Node:
        node = self.unary()
        while self.peek().text in ("*", "/"):
            op = self.advance().text
            node = _binop(op, node, self.unary())
        return node

    def unary(self) -> Node:
        if self.peek().text == "-":
            self.advance()
            return _neg(self.unary())
        return self.power()

    def power(self) -> Node:
        base = self.atom()
        if self.peek().text != "^":
            return base
        caret = self.advance()
        exponent = self.unary()
        if _free_names(exponent):
            raise ParseError("exponent of '^' must be a constant", caret.offset)
        value = float(_eval_node(exponent, {}))
        if not math.isfinite(value):
            raise ParseError("exponent of '^' is not finite", caret.offset)
        return _pow(base, value)

    def atom(self) -> Node:
        token = self.advance()
        if token.kind == "num":
            return Num(float(token.text))
        if token.kind == "name":
            if token.text in FUNCTIONS:
                self.expect("(")
                arg = self.expr()
                self.expect(")")
                return Call(token.text, arg)
            if token.text in self.variables:
                return Var(token.text)
            if token.text in CONSTANTS:
                return Num(CONSTANTS[token.text])
            raise UnknownIdentifierError(token.text, token.offset)
        if token.text == "(":
            node = self.expr()
            self.expect(")")
            return node
        if token.kind == "end":
            raise ParseError("unexpected end of input", token.offset)
        raise ParseError(f"unexpected token '{token.text}'", token.offset)


def parse(text: str, variables: Iterable[str]) -> Expr:
    """
    Parse an infix expression over the declared variables.

    Args:
        text: Expression source, e.g. "sin(2*s)+s^2"
        variables: Names the expression may reference

    Returns:
        Expr whose free variables are a subset of the declared ones

    Raises:
        ParseError: on a syntax error (with byte offset)
        UnknownIdentifierError: when a name is neither declared, a function nor a constant
    """
    variables = tuple(variables)
    if not text or not text.strip():
        raise ParseError("empty expression", 0)
    for name in variables:
        if name in FUNCTIONS or name in CONSTANTS:
            raise ParseError(f"variable name '{name}' is reserved", 0)
    return Expr(_Parser(text, variables).parse(), variables)


def constant(value: float, variables: Iterable[str] = ()) -> Expr:
    return Expr(Num(float(value)), tuple(variables))


# =============================
# Constant-folding constructors
# =============================

def _is_num(node: Node, value: Optional[float] = None) -> bool:
    return isinstance(node, Num) and (value is None or node.value == value)


def _neg(node: Node) -> Node:
    if isinstance(node, Num):
        return Num(-node.value)
    if isinstance(node, Neg):
        return node.operand
    return Neg(node)


def _binop(op: str, left: Node, right: Node) -> Node:
    if isinstance(left, Num) and isinstance(right, Num):
        if op != "/" or right.value != 0:
            value = _eval_node(BinOp(op, left, right), {})
            if math.isfinite(value):
                return Num(value)
    if op == "+":
        if _is_num(left, 0.0):
            return right
        if _is_num(right, 0.0):
            return left
    elif op == "-":
        if _is_num(right, 0.0):
            return left
        if _is_num(left, 0.0):
            return _neg(right)
    elif op == "*":
        if _is_num(left, 0.0) or _is_num(right, 0.0):
            return Num(0.0)
        if _is_num(left, 1.0):
            return right
        if _is_num(right, 1.0):
            return left
    elif op == "/":
        if _is_num(left, 0.0) and not _is_num(right, 0.0):
            return Num(0.0)
        if _is_num(right, 1.0):
            return left
    return BinOp(op, left, right)


def _pow(base: Node, exponent: float) -> Node:
    if exponent == 0.0:
        return Num(1.0)
    if exponent == 1.0:
        return base
    if isinstance(base, Num) and (base.value > 0 or float(exponent).is_integer()) \
            and not (base.value == 0 and exponent < 0):
        try:
            value = base.value ** exponent
        except OverflowError:
            value = math.inf
        if math.isfinite(value):
            return Num(value)
    return Pow(base, exponent)


# =============================
# Evaluation
# =============================

def _first_index(mask) -> Optional[int]:
    if np.ndim(mask) == 0:
        return None
    return int(np.flatnonzero(mask)[0])


def _eval_node(node: Node, env: Dict[str, Number]) -> Number:
    if isinstance(node, Num):
        return node.value
    if isinstance(node, Var):
        return env[node.name]
    if isinstance(node, Neg):
        return -_eval_node(node.operand, env)
    if isinstance(node, BinOp):
        left = _eval_node(node.left, env)
        right = _eval_node(node.right, env)
        if node.op == "+":
            return left + right
        if node.op == "-":
            return left - right
        if node.op == "*":
            return left * right
        zero = np.asarray(right) == 0
        if np.any(zero):
            raise EvaluationError("division by zero", _first_index(zero))
        return left / right
    if isinstance(node, Pow):
        base = _eval_node(node.base, env)
        if float(node.exponent).is_integer():
            zero = np.asarray(base) == 0
            if node.exponent < 0 and np.any(zero):
                raise EvaluationError("division by zero in negative power", _first_index(zero))
            return np.power(base, int(node.exponent)) if node.exponent >= 0 else 1.0 / np.power(base, int(-node.exponent))
        bad = np.asarray(base) <= 0
        if np.any(bad):
            raise EvaluationError("non-integer power of a non-positive base", _first_index(bad))
        return np.power(base, node.exponent)
    if isinstance(node, Call):
        arg = _eval_node(node.arg, env)
        if node.func == "ln":
            bad = np.asarray(arg) <= 0
            if np.any(bad):
                raise EvaluationError("ln of a non-positive value", _first_index(bad))
            return np.log(arg)
        if node.func == "sqrt":
            bad = np.asarray(arg) < 0
            if np.any(bad):
                raise EvaluationError("sqrt of a negative value", _first_index(bad))
            return np.sqrt(arg)
        return _UFUNCS[node.func](arg)
    raise TypeError(f"not an expression node: {node!r}")


_UFUNCS = {
    "sin": np.sin,
    "cos": np.cos,
    "sinh": np.sinh,
    "cosh": np.cosh,
    "exp": np.exp,
}


def evaluate(e: Expr, bindings: Dict[str, Number]) -> Number:
    """
    Evaluate in IEEE double precision.

    Bindings may be floats or numpy arrays (broadcast together); the result has the
    broadcast shape. Domain violations and non-finite results raise EvaluationError.
    """
    missing = [name for name in free_variables(e) if name not in bindings]
    if missing:
        raise EvaluationError(f"no binding for {', '.join(missing)}")
    arrays = [np.asarray(bindings[name], dtype=float) for name in e.variables if name in bindings]
    with np.errstate(all="ignore"):
        value = _eval_node(e.root, {name: np.asarray(v, dtype=float) if np.ndim(v) else float(v)
                                    for name, v in bindings.items()})
    shape = np.broadcast(*arrays).shape if arrays else ()
    if shape:
        value = np.array(np.broadcast_to(value, shape), dtype=float)
        bad = ~np.isfinite(value)
        if np.any(bad):
            raise EvaluationError("non-finite result", _first_index(bad))
        return value
    value = float(value)
    if not math.isfinite(value):
        raise EvaluationError("non-finite result")
    return value


# =============================
# Symbolic differentiation
# =============================

def _d(node: Node, var: str) -> Node:
    if isinstance(node, Num):
        return Num(0.0)
    if isinstance(node, Var):
        return Num(1.0 if node.name == var else 0.0)
    if isinstance(node, Neg):
        return _neg(_d(node.operand, var))
    if isinstance(node, BinOp):
        f, g = node.left, node.right
        df, dg = _d(f, var), _d(g, var)
        if node.op in ("+", "-"):
            return _binop(node.op, df, dg)
        if node.op == "*":
            return _binop("+", _binop("*", df, g), _binop("*", f, dg))
        numerator = _binop("-", _binop("*", df, g), _binop("*", f, dg))
        return _binop("/", numerator, _pow(g, 2.0))
    if isinstance(node, Pow):
        outer = _binop("*", Num(node.exponent), _pow(node.base, node.exponent - 1.0))
        return _binop("*", outer, _d(node.base, var))
    if isinstance(node, Call):
        inner = _d(node.arg, var)
        if _is_num(inner, 0.0):
            return Num(0.0)
        arg = node.arg
        if node.func == "sin":
            outer = Call("cos", arg)
        elif node.func == "cos":
            outer = _neg(Call("sin", arg))
        elif node.func == "sinh":
            outer = Call("cosh", arg)
        elif node.func == "cosh":
            outer = Call("sinh", arg)
        elif node.func == "exp":
            outer = node
        elif node.func == "ln":
            return _binop("/", inner, arg)
        else:  # sqrt
            return _binop("/", inner, _binop("*", Num(2.0), node))
        return _binop("*", outer, inner)
    raise TypeError(f"not an expression node: {node!r}")


def differentiate(e: Expr, var: str) -> Expr:
    """Exact derivative with respect to a declared variable (literal arithmetic folded)."""
    if var not in e.variables:
        raise UnknownIdentifierError(var, 0)
    return Expr(_d(e.root, var), e.variables)


# =============================
# Printing and inspection
# =============================

_PREC = {"+": 1, "-": 1, "*": 2, "/": 2}


def _prec(node: Node) -> int:
    if isinstance(node, BinOp):
        return _PREC[node.op]
    if isinstance(node, Neg) or (isinstance(node, Num) and node.value < 0):
        return 3
    if isinstance(node, Pow):
        return 4
    return 5


def _wrap(node: Node, minimum: int) -> str:
    text = _text(node)
    return f"({text})" if _prec(node) < minimum else text


def _text(node: Node) -> str:
    if isinstance(node, Num):
        return f"-{abs(node.value)!r}" if node.value < 0 else repr(node.value)
    if isinstance(node, Var):
        return node.name
    if isinstance(node, Neg):
        return "-" + _wrap(node.operand, 3)
    if isinstance(node, BinOp):
        p = _PREC[node.op]
        return f"{_wrap(node.left, p)} {node.op} {_wrap(node.right, p + 1)}"
    if isinstance(node, Pow):
        exponent = repr(node.exponent) if node.exponent >= 0 else f"({node.exponent!r})"
        return f"{_wrap(node.base, 5)}^{exponent}"
    return f"{node.func}({_text(node.arg)})"


def to_text(e: Expr) -> str:
    return _text(e.root)


def _free_names(node: Node) -> set:
    if isinstance(node, Var):
        return {node.name}
    if isinstance(node, Neg):
        return _free_names(node.operand)
    if isinstance(node, BinOp):
        return _free_names(node.left) | _free_names(node.right)
    if isinstance(node, Pow):
        return _free_names(node.base)
    if isinstance(node, Call):
        return _free_names(node.arg)
    return set()


def free_variables(e: Expr) -> Tuple[str, ...]:
    names = _free_names(e.root)
    return tuple(name for name in e.variables if name in names)
