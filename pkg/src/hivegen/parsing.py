"""On-the-fly parsing: task planning, live code sketches, edit commands.

A sketch is the structural skeleton of one module (header, instance lines,
body placeholder). Users steer the evolving sketch set with short natural
language commands; a closed, rule-based grammar keeps parsing deterministic
and echoes a linguistic-structure tree of role-labeled tokens for display.

Command grammar (verbs add / remove / rename / connect):

    add an instance <name> of module <module> within <parent>
    remove instance <name> from <parent>
    rename module <old> to <new>
    add port <direction> <name>[<width>] to <parent>
    remove port <name> from <parent>
    connect <instance>.<port> to <net> in <parent>
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Mapping, Optional, Sequence, Union

from .model import (
    BodyState,
    Direction,
    HierarchicalPrompt,
    HivegenError,
    InstanceRef,
    ModuleBrief,
    ModuleSpec,
    PortDecl,
    is_identifier,
)


class TaskStatus(str, Enum):
    PENDING = "pending"
    GENERATING = "generating"
    DONE = "done"
    FAILED = "failed"


@dataclass(frozen=True)
class Task:
    module_name: str
    status: TaskStatus = TaskStatus.PENDING


@dataclass(frozen=True)
class TaskList:
    """Dependency-ordered generation plan; dependencies precede dependents."""

    tasks: tuple[Task, ...]
    dependency_edges: tuple[tuple[str, str], ...]  # (module, depends_on)

    def module_names(self) -> list[str]:
        return [t.module_name for t in self.tasks]

    def get(self, module_name: str) -> Task:
        for task in self.tasks:
            if task.module_name == module_name:
                return task
        raise KeyError(module_name)

    def with_status(self, module_name: str, status: TaskStatus) -> "TaskList":
        tasks = tuple(
            replace(t, status=status) if t.module_name == module_name else t for t in self.tasks
        )
        return TaskList(tasks=tasks, dependency_edges=self.dependency_edges)

    def dependencies_of(self, module_name: str) -> list[str]:
        return [dep for mod, dep in self.dependency_edges if mod == module_name]

    def to_json(self) -> dict:
        return {
            "tasks": [{"module_name": t.module_name, "status": t.status.value} for t in self.tasks],
            "dependency_edges": [list(e) for e in self.dependency_edges],
        }


class CycleError(HivegenError):
    def __init__(self, cycle: Sequence[str]):
        super().__init__("dependency cycle " + " -> ".join(cycle))
        self.cycle = tuple(cycle)


def _merge_briefs(first: ModuleBrief, later: ModuleBrief) -> ModuleBrief:
    """First mention wins; later mentions may only contribute richer detail."""
    return ModuleBrief(
        name=first.name,
        description=first.description or later.description,
        ports=first.ports or later.ports,
        parameters=first.parameters or later.parameters,
        instances=first.instances or later.instances,
    )


def dedup_briefs(prompt: HierarchicalPrompt) -> list[ModuleBrief]:
    briefs: dict[str, ModuleBrief] = {}
    order: list[str] = []
    for brief in prompt.modules:
        if brief.name in briefs:
            briefs[brief.name] = _merge_briefs(briefs[brief.name], brief)
        else:
            briefs[brief.name] = brief
            order.append(brief.name)
    # Modules referenced by instances but never described still need generating.
    for brief in list(briefs.values()):
        for inst in brief.instances:
            if inst.module_name not in briefs:
                briefs[inst.module_name] = ModuleBrief(name=inst.module_name)
                order.append(inst.module_name)
    return [briefs[name] for name in order]


def build_task_list(prompt: HierarchicalPrompt) -> TaskList:
    """Deduplicate prompt modules and order them leaf-first, top last.

    Ties follow first mention, so re-running on a prompt already in task
    order preserves that order.
    """
    if not prompt.modules:
        raise HivegenError("prompt names no modules")
    briefs = dedup_briefs(prompt)
    mention = {brief.name: idx for idx, brief in enumerate(briefs)}
    top = prompt.top_module()

    edges: list[tuple[str, str]] = []
    deps: dict[str, set[str]] = {b.name: set() for b in briefs}
    dependents: dict[str, set[str]] = {b.name: set() for b in briefs}
    for brief in briefs:
        for inst in brief.instances:
            if inst.module_name not in deps[brief.name]:
                deps[brief.name].add(inst.module_name)
                dependents[inst.module_name].add(brief.name)
                edges.append((brief.name, inst.module_name))

    remaining = {name: set(children) for name, children in deps.items()}
    ready = sorted(
        (name for name, children in remaining.items() if not children),
        key=lambda n: (n == top, mention[n]),
    )
    order: list[str] = []
    while ready:
        name = ready.pop(0)
        order.append(name)
        for parent in sorted(dependents[name], key=lambda n: mention[n]):
            remaining[parent].discard(name)
            if not remaining[parent]:
                ready.append(parent)
        ready.sort(key=lambda n: (n == top, mention[n]))
    if len(order) != len(briefs):
        stuck = sorted(n for n, children in remaining.items() if children)
        raise CycleError(_trace_cycle(stuck[0], remaining))
    return TaskList(
        tasks=tuple(Task(module_name=name) for name in order),
        dependency_edges=tuple(edges),
    )


def _trace_cycle(start: str, unsatisfied: Mapping[str, set[str]]) -> list[str]:
    """Walk unsatisfied dependencies from a stuck node until one repeats."""
    path = [start]
    node = start
    while True:
        nxt = min(unsatisfied[node])
        if nxt in path:
            return path[path.index(nxt) :] + [nxt]
        path.append(nxt)
        node = nxt


# -- sketches ----------------------------------------------------------------


@dataclass(frozen=True)
class SketchDoc:
    """Per-module skeleton the runtime parser mutates by replacement."""

    module_name: str
    header: ModuleSpec
    instance_lines: tuple[InstanceRef, ...] = ()
    body_state: BodyState = BodyState.PLACEHOLDER
    revision: int = 0


def make_sketch(spec: ModuleSpec) -> SketchDoc:
    return SketchDoc(
        module_name=spec.name,
        header=ModuleSpec(name=spec.name, ports=spec.ports, parameters=dict(spec.parameters)),
        instance_lines=spec.instances,
    )


def make_sketch_set(prompt: HierarchicalPrompt) -> dict[str, SketchDoc]:
    return {brief.name: make_sketch(brief.to_spec()) for brief in dedup_briefs(prompt)}


def render_sketch(sketch: SketchDoc) -> str:
    """Canonical sketch text; deterministic for a given revision."""
    ports = ", ".join(p.render() for p in sketch.header.ports)
    if sketch.header.parameters:
        params = ", ".join(f"parameter {k} = {v}" for k, v in sorted(sketch.header.parameters.items()))
        head = f"module {sketch.module_name} #({params}) ({ports});"
    else:
        head = f"module {sketch.module_name} ({ports});"
    lines = [head]
    for inst in sketch.instance_lines:
        lines.append(f"  {inst.render()}")
    if sketch.body_state is BodyState.PLACEHOLDER:
        lines.append("  /* body block */")
    lines.append("endmodule")
    return "\n".join(lines)


def sketch_to_spec(sketch: SketchDoc) -> ModuleSpec:
    return ModuleSpec(
        name=sketch.module_name,
        ports=sketch.header.ports,
        parameters=dict(sketch.header.parameters),
        instances=sketch.instance_lines,
        body_state=sketch.body_state,
    )


# -- edit commands -------------------------------------------------------------


@dataclass(frozen=True)
class AddInstance:
    module: str
    instance: str
    parent: str


@dataclass(frozen=True)
class RemoveInstance:
    instance: str
    parent: str


@dataclass(frozen=True)
class RenameModule:
    old: str
    new: str


@dataclass(frozen=True)
class AddPort:
    parent: str
    port: PortDecl


@dataclass(frozen=True)
class RemovePort:
    parent: str
    name: str


@dataclass(frozen=True)
class Connect:
    parent: str
    instance: str
    port: str
    net: str


EditCommand = Union[AddInstance, RemoveInstance, RenameModule, AddPort, RemovePort, Connect]


class ParseError(HivegenError):
    pass


class UnrecognizedVerb(ParseError):
    pass


class MissingArgument(ParseError):
    pass


class AmbiguousCommand(ParseError):
    pass


class Role(str, Enum):
    ROOT_VERB = "root_verb"
    DOBJ = "dobj"
    PREP = "prep"
    POBJ = "pobj"
    NP_MODIFIER = "np_modifier"
    DET = "det"
    OTHER = "other"


@dataclass(frozen=True)
class LsToken:
    text: str
    role: Role


@dataclass(frozen=True)
class LsTree:
    tokens: tuple[LsToken, ...]

    def __post_init__(self) -> None:
        roots = [t for t in self.tokens if t.role is Role.ROOT_VERB]
        if len(roots) != 1:
            raise ValueError("linguistic tree needs exactly one root verb")

    def role_of(self, text: str) -> Role:
        for token in self.tokens:
            if token.text == text:
                return token.role
        raise KeyError(text)

    def to_json(self) -> dict:
        return {"tokens": [{"text": t.text, "role": t.role.value} for t in self.tokens]}


VERBS = ("add", "remove", "rename", "connect")
_DETERMINERS = ("a", "an", "the")
_PORT_NAME_RE = re.compile(r"^([A-Za-z_][A-Za-z0-9_]*)(?:\[(\d+)\])?$")
_DOTTED_RE = re.compile(r"^([A-Za-z_][A-Za-z0-9_]*)\.([A-Za-z_][A-Za-z0-9_]*)$")


class _TokenStream:
    def __init__(self, tokens: Sequence[str]):
        self.tokens = list(tokens)
        self.pos = 0
        self.roles: list[LsToken] = []

    def done(self) -> bool:
        return self.pos >= len(self.tokens)

    def peek(self) -> Optional[str]:
        return self.tokens[self.pos] if self.pos < len(self.tokens) else None

    def take(self, role: Role, expect_what: str) -> str:
        if self.done():
            raise MissingArgument(f"expected {expect_what}, but the sentence ended")
        token = self.tokens[self.pos]
        self.pos += 1
        self.roles.append(LsToken(token, role))
        return token

    def keyword(self, word: str, role: Role) -> None:
        token = self.take(role, f"'{word}'")
        if token.lower() != word:
            raise MissingArgument(f"expected '{word}', got '{token}'")

    def optional_determiner(self) -> None:
        if self.peek() and self.peek().lower() in _DETERMINERS:
            self.take(Role.DET, "determiner")

    def identifier(self, role: Role, what: str) -> str:
        token = self.take(role, what)
        if not is_identifier(token):
            raise MissingArgument(f"{what} must be an identifier, got '{token}'")
        return token

    def finish(self) -> None:
        if not self.done():
            extra = " ".join(self.tokens[self.pos :])
            raise MissingArgument(f"unexpected trailing words: '{extra}'")


def _rule_add_instance(stream: _TokenStream) -> AddInstance:
    stream.keyword("add", Role.ROOT_VERB)
    stream.optional_determiner()
    stream.keyword("instance", Role.DOBJ)
    instance = stream.identifier(Role.NP_MODIFIER, "instance name")
    stream.keyword("of", Role.PREP)
    stream.keyword("module", Role.OTHER)
    module = stream.identifier(Role.POBJ, "module name")
    stream.keyword("within", Role.PREP)
    parent = stream.identifier(Role.POBJ, "parent module")
    stream.finish()
    return AddInstance(module=module, instance=instance, parent=parent)


def _rule_add_port(stream: _TokenStream) -> AddPort:
    stream.keyword("add", Role.ROOT_VERB)
    stream.optional_determiner()
    stream.keyword("port", Role.DOBJ)
    direction = stream.take(Role.OTHER, "port direction")
    try:
        parsed_dir = Direction(direction.lower())
    except ValueError:
        raise MissingArgument(f"port direction must be input/output/inout, got '{direction}'")
    decl = stream.take(Role.NP_MODIFIER, "port name")
    match = _PORT_NAME_RE.match(decl)
    if not match:
        raise MissingArgument(f"port name must look like name or name[width], got '{decl}'")
    stream.keyword("to", Role.PREP)
    parent = stream.identifier(Role.POBJ, "parent module")
    stream.finish()
    width = int(match.group(2)) if match.group(2) else 1
    return AddPort(parent=parent, port=PortDecl(match.group(1), parsed_dir, width))


def _rule_remove_instance(stream: _TokenStream) -> RemoveInstance:
    stream.keyword("remove", Role.ROOT_VERB)
    stream.optional_determiner()
    stream.keyword("instance", Role.DOBJ)
    instance = stream.identifier(Role.NP_MODIFIER, "instance name")
    stream.keyword("from", Role.PREP)
    parent = stream.identifier(Role.POBJ, "parent module")
    stream.finish()
    return RemoveInstance(instance=instance, parent=parent)


def _rule_remove_port(stream: _TokenStream) -> RemovePort:
    stream.keyword("remove", Role.ROOT_VERB)
    stream.optional_determiner()
    stream.keyword("port", Role.DOBJ)
    name = stream.identifier(Role.NP_MODIFIER, "port name")
    stream.keyword("from", Role.PREP)
    parent = stream.identifier(Role.POBJ, "parent module")
    stream.finish()
    return RemovePort(parent=parent, name=name)


def _rule_rename_module(stream: _TokenStream) -> RenameModule:
    stream.keyword("rename", Role.ROOT_VERB)
    stream.optional_determiner()
    stream.keyword("module", Role.DOBJ)
    old = stream.identifier(Role.NP_MODIFIER, "current module name")
    stream.keyword("to", Role.PREP)
    new = stream.identifier(Role.POBJ, "new module name")
    stream.finish()
    return RenameModule(old=old, new=new)


def _rule_connect(stream: _TokenStream) -> Connect:
    stream.keyword("connect", Role.ROOT_VERB)
    dotted = stream.take(Role.DOBJ, "instance.port")
    match = _DOTTED_RE.match(dotted)
    if not match:
        raise MissingArgument(f"expected instance.port, got '{dotted}'")
    stream.keyword("to", Role.PREP)
    net = stream.identifier(Role.POBJ, "net name")
    stream.keyword("in", Role.PREP)
    parent = stream.identifier(Role.POBJ, "parent module")
    stream.finish()
    return Connect(parent=parent, instance=match.group(1), port=match.group(2), net=net)


_RULES_BY_VERB = {
    "add": (_rule_add_instance, _rule_add_port),
    "remove": (_rule_remove_instance, _rule_remove_port),
    "rename": (_rule_rename_module,),
    "connect": (_rule_connect,),
}


def parse_command(text: str) -> tuple[LsTree, EditCommand]:
    """Parse one edit sentence into its role tree and typed command."""
    stripped = text.strip().rstrip(".!?")
    tokens = stripped.split()
    if not tokens:
        raise UnrecognizedVerb("empty command")
    verb = tokens[0].lower()
    if verb not in _RULES_BY_VERB:
        raise UnrecognizedVerb(f"unrecognized verb '{tokens[0]}'; known verbs: {', '.join(VERBS)}")
    matches: list[tuple[LsTree, EditCommand]] = []
    last_error: Optional[MissingArgument] = None
    for rule in _RULES_BY_VERB[verb]:
        stream = _TokenStream(tokens)
        try:
            command = rule(stream)
        except MissingArgument as exc:
            # A rule that never got past its structure keyword simply does
            # not apply; one that did but lost an argument is reported.
            if stream.pos >= 3:
                last_error = exc
            continue
        matches.append((LsTree(tuple(stream.roles)), command))
    if len(matches) > 1:
        raise AmbiguousCommand(f"{len(matches)} grammar rules match: '{stripped}'")
    if matches:
        return matches[0]
    if last_error is not None:
        raise last_error
    raise MissingArgument(f"no grammar rule for '{stripped}'")


def unparse_command(cmd: EditCommand) -> str:
    """Canonical sentence for a command; parse_command round-trips it."""
    if isinstance(cmd, AddInstance):
        return f"add an instance {cmd.instance} of module {cmd.module} within {cmd.parent}"
    if isinstance(cmd, RemoveInstance):
        return f"remove instance {cmd.instance} from {cmd.parent}"
    if isinstance(cmd, RenameModule):
        return f"rename module {cmd.old} to {cmd.new}"
    if isinstance(cmd, AddPort):
        return f"add port {cmd.port.direction.value} {cmd.port.name}[{cmd.port.width}] to {cmd.parent}"
    if isinstance(cmd, RemovePort):
        return f"remove port {cmd.name} from {cmd.parent}"
    if isinstance(cmd, Connect):
        return f"connect {cmd.instance}.{cmd.port} to {cmd.net} in {cmd.parent}"
    raise TypeError(f"not an edit command: {cmd!r}")


# -- edit application ----------------------------------------------------------


class EditError(HivegenError):
    pass


class UnknownParent(EditError):
    pass


class DuplicateInstanceName(EditError):
    pass


class DuplicateName(EditError):
    pass


class NotFound(EditError):
    pass


def apply_edit(
    sketches: Mapping[str, SketchDoc],
    tasks: TaskList,
    cmd: EditCommand,
) -> tuple[dict[str, SketchDoc], TaskList]:
    """Apply one command, returning new sketch-set and task-list values.

    Errors leave both inputs untouched (no revision moves). An edit that
    names a module absent from the task list inserts it pending, ordered
    before its parent; a parent already generated re-opens to pending.
    """
    if isinstance(cmd, AddInstance):
        parent = _require_parent(sketches, cmd.parent)
        if any(i.instance_name == cmd.instance for i in parent.instance_lines):
            raise DuplicateInstanceName(f"instance {cmd.instance} already exists in {cmd.parent}")
        new_parent = replace(
            parent,
            instance_lines=parent.instance_lines + (InstanceRef(cmd.module, cmd.instance),),
            revision=parent.revision + 1,
        )
        new_sketches = {**sketches, cmd.parent: new_parent}
        new_tasks = _ensure_task_before(tasks, cmd.module, cmd.parent)
        new_tasks = _reopen(new_tasks, cmd.parent)
        if cmd.module not in new_sketches:
            new_sketches[cmd.module] = make_sketch(ModuleSpec(name=cmd.module))
        return new_sketches, new_tasks

    if isinstance(cmd, RemoveInstance):
        parent = _require_parent(sketches, cmd.parent)
        kept = tuple(i for i in parent.instance_lines if i.instance_name != cmd.instance)
        if len(kept) == len(parent.instance_lines):
            raise NotFound(f"no instance {cmd.instance} in {cmd.parent}")
        new_parent = replace(parent, instance_lines=kept, revision=parent.revision + 1)
        return {**sketches, cmd.parent: new_parent}, _reopen(tasks, cmd.parent)

    if isinstance(cmd, RenameModule):
        if cmd.old not in sketches:
            raise NotFound(f"no module {cmd.old}")
        if cmd.new in sketches:
            raise DuplicateName(f"module {cmd.new} already exists")
        new_sketches: dict[str, SketchDoc] = {}
        for name, sketch in sketches.items():
            renamed_lines = tuple(
                replace(i, module_name=cmd.new) if i.module_name == cmd.old else i
                for i in sketch.instance_lines
            )
            touched = renamed_lines != sketch.instance_lines
            if name == cmd.old:
                header = replace(sketch.header, name=cmd.new)
                new_sketches[cmd.new] = replace(
                    sketch,
                    module_name=cmd.new,
                    header=header,
                    instance_lines=renamed_lines,
                    revision=sketch.revision + 1,
                )
            elif touched:
                new_sketches[name] = replace(
                    sketch, instance_lines=renamed_lines, revision=sketch.revision + 1
                )
            else:
                new_sketches[name] = sketch
        new_tasks = TaskList(
            tasks=tuple(
                replace(t, module_name=cmd.new) if t.module_name == cmd.old else t for t in tasks.tasks
            ),
            dependency_edges=tuple(
                (cmd.new if a == cmd.old else a, cmd.new if b == cmd.old else b)
                for a, b in tasks.dependency_edges
            ),
        )
        return new_sketches, new_tasks

    if isinstance(cmd, AddPort):
        parent = _require_parent(sketches, cmd.parent)
        if any(p.name == cmd.port.name for p in parent.header.ports):
            raise DuplicateName(f"port {cmd.port.name} already exists on {cmd.parent}")
        header = replace(parent.header, ports=parent.header.ports + (cmd.port,))
        new_parent = replace(parent, header=header, revision=parent.revision + 1)
        return {**sketches, cmd.parent: new_parent}, _reopen(tasks, cmd.parent)

    if isinstance(cmd, RemovePort):
        parent = _require_parent(sketches, cmd.parent)
        kept = tuple(p for p in parent.header.ports if p.name != cmd.name)
        if len(kept) == len(parent.header.ports):
            raise NotFound(f"no port {cmd.name} on {cmd.parent}")
        header = replace(parent.header, ports=kept)
        new_parent = replace(parent, header=header, revision=parent.revision + 1)
        return {**sketches, cmd.parent: new_parent}, _reopen(tasks, cmd.parent)

    if isinstance(cmd, Connect):
        parent = _require_parent(sketches, cmd.parent)
        lines = []
        found = False
        for inst in parent.instance_lines:
            if inst.instance_name == cmd.instance:
                found = True
                connections = {**inst.connections, cmd.port: cmd.net}
                lines.append(replace(inst, connections=connections))
            else:
                lines.append(inst)
        if not found:
            raise NotFound(f"no instance {cmd.instance} in {cmd.parent}")
        new_parent = replace(parent, instance_lines=tuple(lines), revision=parent.revision + 1)
        return {**sketches, cmd.parent: new_parent}, _reopen(tasks, cmd.parent)

    raise TypeError(f"not an edit command: {cmd!r}")


def _require_parent(sketches: Mapping[str, SketchDoc], parent: str) -> SketchDoc:
    if parent not in sketches:
        raise UnknownParent(f"unknown parent module {parent}")
    return sketches[parent]


def _ensure_task_before(tasks: TaskList, module: str, parent: str) -> TaskList:
    edges = tasks.dependency_edges
    if (parent, module) not in edges:
        edges = edges + ((parent, module),)
    if module in tasks.module_names():
        return TaskList(tasks=tasks.tasks, dependency_edges=edges)
    new_tasks: list[Task] = []
    inserted = False
    for task in tasks.tasks:
        if task.module_name == parent and not inserted:
            new_tasks.append(Task(module_name=module))
            inserted = True
        new_tasks.append(task)
    if not inserted:
        new_tasks.insert(0, Task(module_name=module))
    return TaskList(tasks=tuple(new_tasks), dependency_edges=edges)


def _reopen(tasks: TaskList, module: str) -> TaskList:
    try:
        task = tasks.get(module)
    except KeyError:
        return tasks
    if task.status in (TaskStatus.DONE, TaskStatus.FAILED):
        return tasks.with_status(module, TaskStatus.PENDING)
    return tasks
