"""Structural parser for the generated Verilog subset.

Extracts module names, port declarations, and submodule instantiations;
checks construct balance. Expression semantics are out of scope: bodies
are opaque beyond the instance lines, which is all that validation,
assembly checking, and the PPA proxy need.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Mapping, Optional, Sequence, Union

from .model import DesignHierarchy, Direction, HivegenError, InstanceRef, ModuleSpec, PortDecl

_KEYWORDS = {
    "module", "endmodule", "input", "output", "inout", "wire", "reg", "assign",
    "always", "initial", "begin", "end", "if", "else", "case", "casex", "casez",
    "endcase", "default", "for", "while", "repeat", "forever", "parameter",
    "localparam", "integer", "genvar", "generate", "endgenerate", "function",
    "endfunction", "task", "endtask", "posedge", "negedge", "or", "and", "not",
    "signed", "unsigned",
}

_BLOCK_COMMENT_RE = re.compile(r"/\*.*?\*/", re.DOTALL)
_LINE_COMMENT_RE = re.compile(r"//[^\n]*")
_MODULE_RE = re.compile(
    r"\bmodule\s+([A-Za-z_][A-Za-z0-9_]*)\s*(#\s*\([^;]*?\))?\s*(\(.*?\))?\s*;(.*?)\bendmodule\b",
    re.DOTALL,
)
_DIRECTION_RE = re.compile(r"\s*(input|output|inout)\b(.*)", re.DOTALL)
_RANGE_RE = re.compile(r"\[\s*(\d+)\s*:\s*(\d+)\s*\]")
_NAME_RE = re.compile(r"^[A-Za-z_][A-Za-z0-9_]*$")
_INSTANCE_RE = re.compile(
    r"\b([A-Za-z_][A-Za-z0-9_]*)\s+(?:#\s*\([^;]*?\)\s*)?([A-Za-z_][A-Za-z0-9_]*)\s*\(([^;]*?)\)\s*;",
    re.DOTALL,
)
_CONNECTION_RE = re.compile(r"\.\s*([A-Za-z_][A-Za-z0-9_]*)\s*\(\s*([^)]*?)\s*\)")


class ToolError(HivegenError):
    pass


class VerilogSyntaxError(HivegenError):
    pass


@dataclass(frozen=True)
class ParsedModule:
    name: str
    ports: tuple[PortDecl, ...]
    instances: tuple[InstanceRef, ...]

    def instance_counts(self) -> dict[str, int]:
        counts: dict[str, int] = {}
        for inst in self.instances:
            counts[inst.module_name] = counts.get(inst.module_name, 0) + 1
        return counts

    def to_spec(self) -> ModuleSpec:
        return ModuleSpec(name=self.name, ports=self.ports, instances=self.instances)


def strip_comments(source: str) -> str:
    return _LINE_COMMENT_RE.sub(" ", _BLOCK_COMMENT_RE.sub(" ", source))


def check_balance(source: str) -> Optional[str]:
    """Return a message for the first unbalanced construct, or None."""
    text = strip_comments(source)
    pairs = [("module", "endmodule"), ("begin", "end"), ("case", "endcase"), ("function", "endfunction")]
    words = re.findall(r"[A-Za-z_][A-Za-z0-9_]*", text)
    for opener, closer in pairs:
        opens = sum(1 for w in words if w == opener)
        closes = sum(1 for w in words if w == closer)
        if opener == "case":
            opens = sum(1 for w in words if w in ("case", "casex", "casez"))
        if opens != closes:
            return f"unbalanced {opener}/{closer}: {opens} vs {closes}"
    depth = 0
    for ch in text:
        if ch == "(":
            depth += 1
        elif ch == ")":
            depth -= 1
            if depth < 0:
                return "unbalanced parentheses"
    if depth != 0:
        return "unbalanced parentheses"
    return None


def parse_modules(source: str) -> list[ParsedModule]:
    """All modules in one source text; empty or headerless input is an error."""
    balance = check_balance(source)
    if balance is not None:
        raise VerilogSyntaxError(balance)
    text = strip_comments(source)
    modules = []
    for match in _MODULE_RE.finditer(text):
        name, _params, header, body = match.groups()
        header = header or "()"
        ports = _parse_ports(header[1:-1], body)
        instances = _parse_instances(body)
        modules.append(ParsedModule(name=name, ports=tuple(ports), instances=tuple(instances)))
    if not modules:
        raise VerilogSyntaxError("no module declaration found")
    return modules


def _clean_name(chunk: str) -> str:
    text = _RANGE_RE.sub(" ", chunk)
    text = re.sub(r"\b(wire|reg|signed|unsigned)\b", " ", text)
    return text.strip()


def _parse_decl_list(text: str) -> list[PortDecl]:
    """Parse comma-separated port declarations; later names inherit the
    direction and width of the declaration they follow."""
    ports: list[PortDecl] = []
    direction: Direction | None = None
    width = 1
    for chunk in text.split(","):
        match = _DIRECTION_RE.match(chunk)
        if match:
            direction = Direction(match.group(1))
            rest = match.group(2)
            range_match = _RANGE_RE.search(rest)
            width = int(range_match.group(1)) - int(range_match.group(2)) + 1 if range_match else 1
            name = _clean_name(rest)
        else:
            name = _clean_name(chunk)
        if direction is not None and _NAME_RE.match(name):
            ports.append(PortDecl(name, direction, width))
    return ports


def _parse_ports(header: str, body: str) -> list[PortDecl]:
    ports = _parse_decl_list(header)
    if not ports and header.strip():
        # non-ANSI style: bare names in the header, directions declared in the body
        bare = [n.strip() for n in header.split(",") if n.strip()]
        body_ports: list[PortDecl] = []
        for statement in body.split(";"):
            body_ports.extend(_parse_decl_list(statement))
        by_name = {p.name: p for p in body_ports}
        ports = [by_name[n] for n in bare if n in by_name]
    deduped: list[PortDecl] = []
    seen: set[str] = set()
    for port in ports:
        if port.name not in seen:
            seen.add(port.name)
            deduped.append(port)
    return deduped


def _parse_instances(body: str) -> list[InstanceRef]:
    instances: list[InstanceRef] = []
    for match in _INSTANCE_RE.finditer(body):
        module_name, instance_name, conn_text = match.groups()
        if module_name in _KEYWORDS or instance_name in _KEYWORDS:
            continue
        connections = {}
        for conn in _CONNECTION_RE.finditer(conn_text):
            port, net = conn.groups()
            if (port, net) != ("port", "port"):  # placeholder wiring stays empty
                connections[port] = net
        instances.append(
            InstanceRef(module_name=module_name, instance_name=instance_name, connections=connections)
        )
    return instances


def parse_design(sources: Union[Mapping[str, str], Sequence[str]]) -> dict[str, ParsedModule]:
    """Parse a full source set into a module map keyed by module name."""
    texts = list(sources.values()) if isinstance(sources, Mapping) else list(sources)
    modules: dict[str, ParsedModule] = {}
    for text in texts:
        for mod in parse_modules(text):
            modules[mod.name] = mod
    return modules


def render_structural_module(spec: ModuleSpec, children: Mapping[str, ModuleSpec]) -> str:
    """Emit a compilable structural body for a module made of instances.

    Connection rule: a child port whose name matches a parent port connects
    straight through; every other child port gets a dedicated wire named
    <instance>_<port>. Deterministic, so repeated expansion is byte-stable.
    """
    lines = [f"module {spec.name} ({', '.join(p.render() for p in spec.ports)});"]
    parent_ports = {p.name for p in spec.ports}
    wires: list[str] = []
    body: list[str] = []
    for inst in spec.instances:
        child = children.get(inst.module_name)
        if child is None or not child.ports:
            body.append(f"  {inst.render()}")
            continue
        conns = []
        for port in child.ports:
            if port.name in inst.connections:
                net = inst.connections[port.name]
            elif port.name in parent_ports:
                net = port.name
            else:
                net = f"{inst.instance_name}_{port.name}"
                wires.append(f"  wire [{port.width - 1}:0] {net};" if port.width > 1 else f"  wire {net};")
            conns.append(f".{port.name}({net})")
        body.append(f"  {inst.module_name} {inst.instance_name} ({', '.join(conns)});")
    lines.extend(wires)
    lines.extend(body)
    lines.append("endmodule")
    return "\n".join(lines)


def induced_hierarchy(modules: Mapping[str, ParsedModule]) -> DesignHierarchy:
    """The DesignHierarchy implied by parsed sources; root is the module
    nothing instantiates (first in parse order when several qualify)."""
    instantiated = {inst.module_name for mod in modules.values() for inst in mod.instances}
    root = next((name for name in modules if name not in instantiated), None)
    if root is None and modules:
        root = next(iter(modules))
    return DesignHierarchy(
        root=root or "",
        modules={name: mod.to_spec() for name, mod in modules.items()},
    )
