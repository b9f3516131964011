"""Shared design-data model: hierarchies, code blocks, and their JSON forms.

Everything here is an immutable value; pipeline stages communicate by
constructing new values, never by mutating shared ones.
"""

from __future__ import annotations

import hashlib
import re
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Mapping, Optional

IDENTIFIER_RE = re.compile(r"^[A-Za-z_][A-Za-z0-9_]*$")

# Rendered for instances whose port mapping is not known yet.
PLACEHOLDER_CONNECTION = "(.port(port))"


class HivegenError(Exception):
    """Base class for all pipeline errors."""


def is_identifier(name: str) -> bool:
    return bool(IDENTIFIER_RE.match(name))


class Direction(str, Enum):
    INPUT = "input"
    OUTPUT = "output"
    INOUT = "inout"


class BodyState(str, Enum):
    PLACEHOLDER = "placeholder"
    FILLED = "filled"


@dataclass(frozen=True)
class PortDecl:
    """A single port of a module: name, direction, bit width."""

    name: str
    direction: Direction
    width: int = 1

    def __post_init__(self) -> None:
        if not is_identifier(self.name):
            raise ValueError(f"illegal port name: {self.name!r}")
        if self.width < 1:
            raise ValueError(f"port {self.name}: width must be >= 1, got {self.width}")

    def render(self) -> str:
        if self.width == 1:
            return f"{self.direction.value} {self.name}"
        return f"{self.direction.value} [{self.width - 1}:0] {self.name}"

    def to_json(self) -> dict:
        return {"name": self.name, "direction": self.direction.value, "width": self.width}

    @classmethod
    def from_json(cls, data: Mapping) -> "PortDecl":
        return cls(name=data["name"], direction=Direction(data["direction"]), width=int(data.get("width", 1)))


@dataclass(frozen=True)
class InstanceRef:
    """One submodule instantiation inside a parent module.

    An empty connections map means the port wiring is not known yet; such
    instances render with the literal placeholder ``(.port(port))``.
    """

    module_name: str
    instance_name: str
    connections: Mapping[str, str] = field(default_factory=dict)

    def __post_init__(self) -> None:
        for ident in (self.module_name, self.instance_name):
            if not is_identifier(ident):
                raise ValueError(f"illegal identifier: {ident!r}")

    def render(self) -> str:
        if not self.connections:
            return f"{self.module_name} {self.instance_name} {PLACEHOLDER_CONNECTION};"
        conns = ", ".join(f".{p}({n})" for p, n in sorted(self.connections.items()))
        return f"{self.module_name} {self.instance_name} ({conns});"

    def to_json(self) -> dict:
        return {
            "module_name": self.module_name,
            "instance_name": self.instance_name,
            "connections": dict(self.connections),
        }

    @classmethod
    def from_json(cls, data: Mapping) -> "InstanceRef":
        return cls(
            module_name=data["module_name"],
            instance_name=data["instance_name"],
            connections=dict(data.get("connections", {})),
        )


@dataclass(frozen=True)
class ModuleSpec:
    """Structural description of one module: ports, parameters, children."""

    name: str
    ports: tuple[PortDecl, ...] = ()
    parameters: Mapping[str, int] = field(default_factory=dict)
    instances: tuple[InstanceRef, ...] = ()
    body_state: BodyState = BodyState.PLACEHOLDER

    def __post_init__(self) -> None:
        if not is_identifier(self.name):
            raise ValueError(f"illegal module name: {self.name!r}")
        port_names = [p.name for p in self.ports]
        if len(port_names) != len(set(port_names)):
            raise ValueError(f"module {self.name}: duplicate port names")
        for pname in self.parameters:
            if not is_identifier(pname):
                raise ValueError(f"module {self.name}: illegal parameter name {pname!r}")

    def child_module_names(self) -> list[str]:
        return [inst.module_name for inst in self.instances]

    def to_json(self) -> dict:
        return {
            "name": self.name,
            "ports": [p.to_json() for p in self.ports],
            "parameters": dict(self.parameters),
            "instances": [i.to_json() for i in self.instances],
            "body_state": self.body_state.value,
        }

    @classmethod
    def from_json(cls, data: Mapping) -> "ModuleSpec":
        return cls(
            name=data["name"],
            ports=tuple(PortDecl.from_json(p) for p in data.get("ports", [])),
            parameters={k: int(v) for k, v in data.get("parameters", {}).items()},
            instances=tuple(InstanceRef.from_json(i) for i in data.get("instances", [])),
            body_state=BodyState(data.get("body_state", "placeholder")),
        )


@dataclass(frozen=True)
class DesignHierarchy:
    """A DAG of module specs rooted at one top module."""

    root: str
    modules: Mapping[str, ModuleSpec]

    def to_json(self) -> dict:
        return {"root": self.root, "modules": {name: m.to_json() for name, m in self.modules.items()}}

    @classmethod
    def from_json(cls, data: Mapping) -> "DesignHierarchy":
        return cls(
            root=data["root"],
            modules={name: ModuleSpec.from_json(m) for name, m in data["modules"].items()},
        )


@dataclass(frozen=True)
class Violation:
    """One broken hierarchy invariant, located at a module or instance."""

    kind: str
    where: str
    message: str


def validate_hierarchy(h: DesignHierarchy) -> list[Violation]:
    """Check every DesignHierarchy invariant; an empty list means ok.

    Violations are values, not exceptions: a broken hierarchy is a normal
    input for validation, never a crash.
    """
    out: list[Violation] = []
    if h.root not in h.modules:
        out.append(Violation("missing_root", h.root, f"root module {h.root} not declared"))

    for name, mod in h.modules.items():
        if name != mod.name:
            out.append(Violation("key_mismatch", name, f"module keyed {name} declares name {mod.name}"))
        seen_instances: set[str] = set()
        for inst in mod.instances:
            if inst.instance_name in seen_instances:
                out.append(
                    Violation(
                        "duplicate_instance",
                        name,
                        f"instance name {inst.instance_name} repeated in {name}",
                    )
                )
            seen_instances.add(inst.instance_name)
            if inst.module_name not in h.modules:
                out.append(
                    Violation(
                        "unresolved_module",
                        name,
                        f"unresolved module {inst.module_name}",
                    )
                )

    for cycle in _find_cycles(h):
        out.append(Violation("cycle", cycle[0], "cycle " + " -> ".join(cycle)))
    return out


def _find_cycles(h: DesignHierarchy) -> list[list[str]]:
    """Collect instantiation cycles (each reported once, smallest member first)."""
    WHITE, GRAY, BLACK = 0, 1, 2
    color = {name: WHITE for name in h.modules}
    cycles: list[list[str]] = []
    seen_keys: set[tuple[str, ...]] = set()

    def visit(node: str, stack: list[str]) -> None:
        color[node] = GRAY
        stack.append(node)
        for child in h.modules[node].child_module_names():
            if child not in h.modules:
                continue
            if color[child] == GRAY:
                start = stack.index(child)
                loop = stack[start:]
                pivot = loop.index(min(loop))
                ordered = loop[pivot:] + loop[:pivot]
                key = tuple(ordered)
                if key not in seen_keys:
                    seen_keys.add(key)
                    cycles.append(ordered + [ordered[0]])
            elif color[child] == WHITE:
                visit(child, stack)
        stack.pop()
        color[node] = BLACK

    for name in sorted(h.modules):
        if color[name] == WHITE:
            visit(name, [])
    return cycles


def topological_order(h: DesignHierarchy) -> list[str]:
    """Leaf-first order of all modules; requires a valid (acyclic) hierarchy."""
    violations = [v for v in validate_hierarchy(h) if v.kind in ("cycle", "unresolved_module")]
    if violations:
        raise HivegenError(f"hierarchy not orderable: {violations[0].message}")
    order: list[str] = []
    done: set[str] = set()

    def visit(name: str) -> None:
        if name in done:
            return
        for child in h.modules[name].child_module_names():
            visit(child)
        done.add(name)
        order.append(name)

    for name in sorted(h.modules):
        visit(name)
    return order


_BLOCK_COMMENT_RE = re.compile(r"/\*.*?\*/", re.DOTALL)
_LINE_COMMENT_RE = re.compile(r"//[^\n]*")
_WS_RE = re.compile(r"\s+")


def canonicalize_source(source: str) -> str:
    """Normalize HDL text: drop comments, collapse whitespace runs, trim."""
    text = _BLOCK_COMMENT_RE.sub(" ", source)
    text = _LINE_COMMENT_RE.sub(" ", text)
    return _WS_RE.sub(" ", text).strip()


def hash_block(source: str) -> str:
    """256-bit content digest of canonicalized source, as lowercase hex.

    Invariant under whitespace reflow and comment removal, so cosmetic
    regeneration differences cannot defeat duplicate or avoidance checks.
    """
    return hashlib.sha256(canonicalize_source(source).encode("utf-8")).hexdigest()


@dataclass(frozen=True)
class CodeBlock:
    """A generated or reused HDL block; verified only after testbench gating."""

    id: str
    module_name: str
    source: str
    content_hash: str = ""
    verified: bool = False

    def __post_init__(self) -> None:
        if not self.content_hash:
            object.__setattr__(self, "content_hash", hash_block(self.source))

    def to_json(self) -> dict:
        return {
            "id": self.id,
            "module_name": self.module_name,
            "source": self.source,
            "content_hash": self.content_hash,
            "verified": self.verified,
        }

    @classmethod
    def from_json(cls, data: Mapping) -> "CodeBlock":
        return cls(
            id=data["id"],
            module_name=data["module_name"],
            source=data["source"],
            content_hash=data.get("content_hash", ""),
            verified=bool(data.get("verified", False)),
        )


@dataclass(frozen=True)
class ModuleBrief:
    """One module's entry in a hierarchical prompt: interface plus intent."""

    name: str
    description: str = ""
    ports: tuple[PortDecl, ...] = ()
    parameters: Mapping[str, int] = field(default_factory=dict)
    instances: tuple[InstanceRef, ...] = ()

    def to_spec(self) -> ModuleSpec:
        return ModuleSpec(
            name=self.name,
            ports=self.ports,
            parameters=dict(self.parameters),
            instances=self.instances,
        )

    def to_json(self) -> dict:
        return {
            "name": self.name,
            "description": self.description,
            "ports": [p.to_json() for p in self.ports],
            "parameters": dict(self.parameters),
            "instances": [i.to_json() for i in self.instances],
        }

    @classmethod
    def from_json(cls, data: Mapping) -> "ModuleBrief":
        return cls(
            name=data["name"],
            description=data.get("description", ""),
            ports=tuple(PortDecl.from_json(p) for p in data.get("ports", [])),
            parameters={k: int(v) for k, v in data.get("parameters", {}).items()},
            instances=tuple(InstanceRef.from_json(i) for i in data.get("instances", [])),
        )


@dataclass(frozen=True)
class HierarchicalPrompt:
    """Ordered module descriptions covering one design, top module last known.

    The module order is the order of first mention; task planning re-sorts
    into dependency order, so producers only need to name every module once.
    """

    design: str
    modules: tuple[ModuleBrief, ...]

    def module_names(self) -> list[str]:
        return [m.name for m in self.modules]

    def top_module(self) -> str:
        """The module no other module instantiates (first mentioned wins)."""
        instantiated = {
            inst.module_name for brief in self.modules for inst in brief.instances
        }
        for brief in self.modules:
            if brief.name not in instantiated:
                return brief.name
        return self.modules[0].name

    def to_hierarchy(self) -> DesignHierarchy:
        return DesignHierarchy(
            root=self.top_module(),
            modules={b.name: b.to_spec() for b in self.modules},
        )

    def render(self) -> str:
        lines = [f"Design: {self.design}", ""]
        for brief in self.modules:
            lines.append(f"Module {brief.name}:")
            if brief.description:
                lines.append(f"  {brief.description}")
            for port in brief.ports:
                lines.append(f"  port {port.render()}")
            for pname, pval in sorted(brief.parameters.items()):
                lines.append(f"  parameter {pname} = {pval}")
            for inst in brief.instances:
                lines.append(f"  instance {inst.instance_name} of module {inst.module_name}")
            lines.append("")
        return "\n".join(lines)

    def to_json(self) -> dict:
        return {"design": self.design, "modules": [m.to_json() for m in self.modules]}

    @classmethod
    def from_json(cls, data: Mapping) -> "HierarchicalPrompt":
        return cls(
            design=data.get("design", "design"),
            modules=tuple(ModuleBrief.from_json(m) for m in data["modules"]),
        )


def new_block_id(module_name: str, source: str) -> str:
    """Deterministic block id: module name plus a short source digest."""
    return f"{module_name}-{hash_block(source)[:12]}"
