"""Mini kernel DSL frontend: straight-line arithmetic into a data-flow graph.

Statements have the form ``dest = a <op> b;`` with ops + - * << >> < plus
the unary form ``dest = pass a;``. Names defined by an earlier statement
feed def-use edges; names never defined anywhere are kernel inputs. One
node per statement, so the graph is acyclic by construction.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Iterable

from .model import HivegenError

OP_SYMBOLS = {
    "+": "ADD",
    "-": "SUB",
    "*": "MUL",
    "<<": "SHIFT",
    ">>": "SHIFT",
    "<": "CMP",
}

ALL_OPS = ("PASS", "ADD", "SUB", "MUL", "SHIFT", "CMP")


class DslSyntaxError(HivegenError):
    def __init__(self, message: str, line: int, col: int):
        super().__init__(f"line {line}, col {col}: {message}")
        self.line = line
        self.col = col


class UseBeforeDef(HivegenError):
    def __init__(self, name: str, line: int, col: int):
        super().__init__(f"line {line}, col {col}: {name} used before its definition")
        self.name = name
        self.line = line
        self.col = col


@dataclass(frozen=True)
class DfgNode:
    id: str
    op: str  # one of ALL_OPS


@dataclass(frozen=True)
class KernelDfg:
    nodes: tuple[DfgNode, ...]
    edges: tuple[tuple[str, str], ...]
    inputs: tuple[str, ...]

    @property
    def op_set(self) -> frozenset[str]:
        return frozenset(n.op for n in self.nodes)

    @property
    def node_count(self) -> int:
        return len(self.nodes)

    def to_json(self) -> dict:
        return {
            "nodes": [{"id": n.id, "op": n.op} for n in self.nodes],
            "edges": [list(e) for e in self.edges],
            "inputs": list(self.inputs),
            "op_set": sorted(self.op_set),
            "node_count": self.node_count,
        }


_IDENT = r"[A-Za-z_][A-Za-z0-9_]*"
_BINARY_RE = re.compile(rf"^({_IDENT})\s*=\s*({_IDENT})\s*(<<|>>|[+\-*<])\s*({_IDENT})$")
_PASS_RE = re.compile(rf"^({_IDENT})\s*=\s*pass\s+({_IDENT})$")


@dataclass(frozen=True)
class _Statement:
    dest: str
    op: str
    sources: tuple[str, ...]
    line: int
    col: int


def _strip_comment(raw: str) -> str:
    return raw.split("#", 1)[0]


def _split_statements(source: str) -> Iterable[tuple[str, int, int]]:
    """Yield (statement_text, line, col) for each ';'-terminated statement."""
    buf: list[str] = []
    start: tuple[int, int] | None = None
    for lineno, raw in enumerate(source.splitlines(), start=1):
        line = _strip_comment(raw)
        for colno, ch in enumerate(line, start=1):
            if ch == ";":
                text = "".join(buf).strip()
                if text:
                    assert start is not None
                    yield text, start[0], start[1]
                buf = []
                start = None
            else:
                if not ch.isspace() and start is None:
                    start = (lineno, colno)
                buf.append(ch)
        buf.append(" ")  # statements may span lines
    leftover = "".join(buf).strip()
    if leftover:
        assert start is not None
        raise DslSyntaxError("missing ';' after statement", start[0], start[1])


def parse_kernel(source: str) -> KernelDfg:
    """Parse kernel text into its DFG; empty input yields an empty graph."""
    statements: list[_Statement] = []
    for text, line, col in _split_statements(source):
        match = _PASS_RE.match(text)
        if match:
            statements.append(_Statement(match.group(1), "PASS", (match.group(2),), line, col))
            continue
        match = _BINARY_RE.match(text)
        if match:
            dest, lhs, symbol, rhs = match.groups()
            statements.append(_Statement(dest, OP_SYMBOLS[symbol], (lhs, rhs), line, col))
            continue
        raise DslSyntaxError(f"cannot parse statement {text!r}", line, col)

    first_def: dict[str, int] = {}
    for index, stmt in enumerate(statements):
        first_def.setdefault(stmt.dest, index)

    nodes: list[DfgNode] = []
    edges: list[tuple[str, str]] = []
    inputs: list[str] = []
    defined_by: dict[str, str] = {}  # name -> node id of the most recent def
    for index, stmt in enumerate(statements):
        node_id = f"n{index}"
        nodes.append(DfgNode(node_id, stmt.op))
        for name in stmt.sources:
            if name in defined_by:
                edges.append((defined_by[name], node_id))
            elif name in first_def:
                raise UseBeforeDef(name, stmt.line, stmt.col)
            elif name not in inputs:
                inputs.append(name)
        defined_by[stmt.dest] = node_id
    return KernelDfg(nodes=tuple(nodes), edges=tuple(edges), inputs=tuple(inputs))


def extract_dfg(kernel_source: str) -> KernelDfg:
    return parse_kernel(kernel_source)
