"""Tiny integer expression language for template rules and skeletons.

Supports integer literals, named variables, + - * / % (floor division),
comparisons, && and ||, unary minus, parentheses, and the functions
ceil_div(a, b), min(a, b), max(a, b). Booleans are represented as 0/1.
No attribute access, no calls beyond the three functions, no eval().
"""

from __future__ import annotations

import re
from typing import Mapping

from .model import HivegenError


class ExprError(HivegenError):
    pass


_TOKEN_RE = re.compile(
    r"\s*(?:(?P<int>\d+)|(?P<name>[A-Za-z_][A-Za-z0-9_.]*)|(?P<op><=|>=|==|!=|&&|\|\||[-+*/%<>(),]))"
)

_FUNCTIONS = {
    "ceil_div": lambda a, b: -(-a // b),
    "min": min,
    "max": max,
}


def _tokenize(text: str) -> list[str]:
    tokens = []
    pos = 0
    while pos < len(text):
        match = _TOKEN_RE.match(text, pos)
        if match is None:
            if text[pos:].strip() == "":
                break
            raise ExprError(f"bad character {text[pos]!r} in expression {text!r}")
        tokens.append(match.group(match.lastgroup))
        pos = match.end()
    return tokens


class _Parser:
    def __init__(self, tokens: list[str], source: str):
        self.tokens = tokens
        self.source = source
        self.pos = 0

    def peek(self) -> str | None:
        return self.tokens[self.pos] if self.pos < len(self.tokens) else None

    def take(self) -> str:
        tok = self.peek()
        if tok is None:
            raise ExprError(f"unexpected end of expression {self.source!r}")
        self.pos += 1
        return tok

    def expect(self, token: str) -> None:
        tok = self.take()
        if tok != token:
            raise ExprError(f"expected {token!r}, got {tok!r} in {self.source!r}")

    # precedence climbing: or < and < cmp < add < mul < unary
    def parse_or(self) -> tuple:
        node = self.parse_and()
        while self.peek() == "||":
            self.take()
            node = ("or", node, self.parse_and())
        return node

    def parse_and(self) -> tuple:
        node = self.parse_cmp()
        while self.peek() == "&&":
            self.take()
            node = ("and", node, self.parse_cmp())
        return node

    def parse_cmp(self) -> tuple:
        node = self.parse_add()
        if self.peek() in ("<", "<=", ">", ">=", "==", "!="):
            op = self.take()
            node = ("cmp", op, node, self.parse_add())
        return node

    def parse_add(self) -> tuple:
        node = self.parse_mul()
        while self.peek() in ("+", "-"):
            op = self.take()
            node = ("bin", op, node, self.parse_mul())
        return node

    def parse_mul(self) -> tuple:
        node = self.parse_unary()
        while self.peek() in ("*", "/", "%"):
            op = self.take()
            node = ("bin", op, node, self.parse_unary())
        return node

    def parse_unary(self) -> tuple:
        if self.peek() == "-":
            self.take()
            return ("neg", self.parse_unary())
        return self.parse_atom()

    def parse_atom(self) -> tuple:
        tok = self.take()
        if tok == "(":
            node = self.parse_or()
            self.expect(")")
            return node
        if tok.isdigit():
            return ("int", int(tok))
        if re.fullmatch(r"[A-Za-z_][A-Za-z0-9_.]*", tok):
            if self.peek() == "(":
                if tok not in _FUNCTIONS:
                    raise ExprError(f"unknown function {tok!r} in {self.source!r}")
                self.take()
                args = [self.parse_or()]
                while self.peek() == ",":
                    self.take()
                    args.append(self.parse_or())
                self.expect(")")
                return ("call", tok, tuple(args))
            return ("var", tok)
        raise ExprError(f"unexpected token {tok!r} in {self.source!r}")


def parse(text: str) -> tuple:
    parser = _Parser(_tokenize(text), text)
    node = parser.parse_or()
    if parser.peek() is not None:
        raise ExprError(f"trailing tokens after expression {text!r}")
    return node


def free_variables(text: str) -> set[str]:
    names: set[str] = set()

    def walk(node: tuple) -> None:
        kind = node[0]
        if kind == "var":
            names.add(node[1])
        elif kind == "int":
            pass
        elif kind == "neg":
            walk(node[1])
        elif kind in ("or", "and"):
            walk(node[1])
            walk(node[2])
        elif kind in ("cmp", "bin"):
            walk(node[2])
            walk(node[3])
        elif kind == "call":
            for arg in node[2]:
                walk(arg)

    walk(parse(text))
    return names


def evaluate(text: str, env: Mapping[str, int]) -> int:
    """Evaluate the expression to an int; unknown names are hard errors."""

    def walk(node: tuple) -> int:
        kind = node[0]
        if kind == "int":
            return node[1]
        if kind == "var":
            if node[1] not in env:
                raise ExprError(f"unknown name {node[1]!r} in expression {text!r}")
            return int(env[node[1]])
        if kind == "neg":
            return -walk(node[1])
        if kind == "or":
            return 1 if (walk(node[1]) or walk(node[2])) else 0
        if kind == "and":
            return 1 if (walk(node[1]) and walk(node[2])) else 0
        if kind == "cmp":
            op, lhs, rhs = node[1], walk(node[2]), walk(node[3])
            result = {
                "<": lhs < rhs,
                "<=": lhs <= rhs,
                ">": lhs > rhs,
                ">=": lhs >= rhs,
                "==": lhs == rhs,
                "!=": lhs != rhs,
            }[op]
            return 1 if result else 0
        if kind == "bin":
            op, lhs, rhs = node[1], walk(node[2]), walk(node[3])
            if op == "+":
                return lhs + rhs
            if op == "-":
                return lhs - rhs
            if op == "*":
                return lhs * rhs
            if op in ("/", "%") and rhs == 0:
                raise ExprError(f"division by zero in {text!r}")
            return lhs // rhs if op == "/" else lhs % rhs
        if kind == "call":
            args = [walk(a) for a in node[2]]
            if node[1] == "ceil_div" and args[1] == 0:
                raise ExprError(f"division by zero in {text!r}")
            return int(_FUNCTIONS[node[1]](*args))
        raise ExprError(f"bad node {node!r}")

    return walk(parse(text))
