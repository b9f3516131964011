"""Accelerator templates: parameter schemas, design rules, and skeletons.

A template is a JSON document {name, parameters, design_rules, skeleton,
one_shot_example}. The skeleton is a hierarchy description whose widths,
counts, conditions, and descriptions are expressions or format strings
over the declared parameters; expanding it under a concrete assignment
yields an ordinary DesignHierarchy plus prompt-ready module briefs.
"""

from __future__ import annotations

import json
import string
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Mapping, Optional, Sequence, Union

from . import exprs
from .kernel_dsl import ALL_OPS, KernelDfg
from .model import (
    Direction,
    HierarchicalPrompt,
    HivegenError,
    InstanceRef,
    ModuleBrief,
    PortDecl,
)

ConfigValue = Union[int, tuple[str, ...]]


class TemplateError(HivegenError):
    pass


@dataclass(frozen=True)
class ParamDomain:
    kind: str  # "range" | "choice" | "op_subset"
    lo: int = 0
    hi: int = 0
    values: tuple[int, ...] = ()
    ops: tuple[str, ...] = ()

    def contains(self, value: ConfigValue) -> bool:
        if self.kind == "range":
            return isinstance(value, int) and self.lo <= value <= self.hi
        if self.kind == "choice":
            return isinstance(value, int) and value in self.values
        if self.kind == "op_subset":
            return not isinstance(value, int) and set(value) <= set(self.ops)
        return False

    def describe(self) -> str:
        if self.kind == "range":
            return f"integer in [{self.lo}, {self.hi}]"
        if self.kind == "choice":
            return f"one of {list(self.values)}"
        return f"subset of {list(self.ops)}"

    @classmethod
    def from_json(cls, data: Mapping) -> "ParamDomain":
        kind = data["type"]
        if kind == "range":
            return cls(kind="range", lo=int(data["min"]), hi=int(data["max"]))
        if kind == "choice":
            return cls(kind="choice", values=tuple(int(v) for v in data["values"]))
        if kind == "op_subset":
            return cls(kind="op_subset", ops=tuple(data["ops"]))
        raise TemplateError(f"unknown domain type {kind!r}")


@dataclass(frozen=True)
class TemplateParameter:
    name: str
    domain: ParamDomain


@dataclass(frozen=True)
class DesignRule:
    kind: str  # "op_coverage" | "inequality"
    param: str = ""
    label: str = ""
    lhs: str = ""
    cmp: str = ">="
    rhs: str = ""

    @classmethod
    def from_json(cls, data: Mapping) -> "DesignRule":
        kind = data["kind"]
        if kind == "op_coverage":
            return cls(kind=kind, param=data["param"])
        if kind == "inequality":
            return cls(kind=kind, label=data["label"], lhs=data["lhs"], cmp=data.get("cmp", ">="), rhs=data["rhs"])
        raise TemplateError(f"unknown rule kind {kind!r}")

    def check(self, assignment: Mapping[str, ConfigValue], dfg: KernelDfg) -> list[str]:
        if self.kind == "op_coverage":
            allowed = set(assignment.get(self.param, ()))
            missing = [op for op in ALL_OPS if op in dfg.op_set and op not in allowed]
            return [f"op {op} unsupported by ALU" for op in missing]
        env = _int_env(assignment)
        env["node_count"] = dfg.node_count
        lhs = exprs.evaluate(self.lhs, env)
        rhs = exprs.evaluate(self.rhs, env)
        holds = {"<": lhs < rhs, "<=": lhs <= rhs, ">": lhs > rhs, ">=": lhs >= rhs}[self.cmp]
        if holds:
            return []
        negated = {"<": ">=", "<=": ">", ">": "<=", ">=": "<"}[self.cmp]
        return [f"{self.label} {lhs} {negated} {rhs}"]


@dataclass(frozen=True)
class TemplateDef:
    name: str
    parameters: tuple[TemplateParameter, ...]
    design_rules: tuple[DesignRule, ...]
    skeleton: dict
    one_shot_example: Optional[dict] = None

    def parameter(self, name: str) -> TemplateParameter:
        for p in self.parameters:
            if p.name == name:
                return p
        raise TemplateError(f"template {self.name} has no parameter {name!r}")

    def parameter_names(self) -> list[str]:
        return [p.name for p in self.parameters]

    def describe_parameters(self) -> str:
        return "\n".join(f"- {p.name}: {p.domain.describe()}" for p in self.parameters)


def _int_env(assignment: Mapping[str, ConfigValue]) -> dict[str, int]:
    return {k: v for k, v in assignment.items() if isinstance(v, int)}


def render_ops(ops: Sequence[str]) -> str:
    ordered = [op for op in ALL_OPS if op in set(ops)]
    return ", ".join(ordered)


def _format_env(assignment: Mapping[str, ConfigValue], loop_env: Mapping[str, int]) -> dict:
    env: dict = {}
    for key, value in assignment.items():
        env[key] = render_ops(value) if not isinstance(value, int) else value
    env.update(loop_env)
    return env


def _format_fields(text: str) -> set[str]:
    fields = set()
    for _, name, _, _ in string.Formatter().parse(text):
        if name:
            fields.add(name.split(".")[0].split("[")[0])
    return fields


def load_template(source: Union[str, Path, Mapping]) -> TemplateDef:
    if isinstance(source, (str, Path)):
        data = json.loads(Path(source).read_text(encoding="utf-8"))
    else:
        data = source
    tpl = TemplateDef(
        name=data["name"],
        parameters=tuple(
            TemplateParameter(p["name"], ParamDomain.from_json(p["domain"])) for p in data["parameters"]
        ),
        design_rules=tuple(DesignRule.from_json(r) for r in data.get("design_rules", [])),
        skeleton=data["skeleton"],
        one_shot_example=data.get("one_shot_example"),
    )
    _validate_template(tpl)
    return tpl


def builtin_template_names() -> list[str]:
    root = resources.files("hivegen").joinpath("data/templates")
    return sorted(p.name[: -len(".json")] for p in root.iterdir() if p.name.endswith(".json"))


def load_builtin_template(name: str) -> TemplateDef:
    path = resources.files("hivegen").joinpath(f"data/templates/{name}.json")
    if not path.is_file():
        raise TemplateError(f"no builtin template {name!r}; have {builtin_template_names()}")
    return load_template(json.loads(path.read_text(encoding="utf-8")))


def _validate_template(tpl: TemplateDef) -> None:
    """Every placeholder in rules and skeleton must name a declared parameter."""
    params = set(tpl.parameter_names())
    for rule in tpl.design_rules:
        if rule.kind == "op_coverage":
            if rule.param not in params:
                raise TemplateError(f"rule references unknown parameter {rule.param!r}")
            continue
        for side in (rule.lhs, rule.rhs):
            unknown = exprs.free_variables(side) - params - {"node_count"}
            if unknown:
                raise TemplateError(f"rule {rule.label!r} references unknown names {sorted(unknown)}")

    skeleton = tpl.skeleton
    if "root" not in skeleton or "modules" not in skeleton:
        raise TemplateError("skeleton needs root and modules")
    module_names = {m["name"] for m in skeleton["modules"]}
    if skeleton["root"] not in module_names:
        raise TemplateError(f"skeleton root {skeleton['root']!r} not among its modules")

    def check_expr(text: Union[str, int], scope: set[str], where: str) -> None:
        if isinstance(text, int):
            return
        unknown = exprs.free_variables(text) - scope
        if unknown:
            raise TemplateError(f"{where}: unknown names {sorted(unknown)}")

    def check_instances(entries: Sequence[Mapping], scope: set[str], owner: str) -> None:
        for entry in entries:
            if "when" in entry:
                check_expr(entry["when"], scope, f"{owner} instance condition")
            if "foreach" in entry:
                check_expr(entry["count"], scope, f"{owner} loop count")
                check_instances(entry["items"], scope | {entry["foreach"]}, owner)
            else:
                if entry["module"] not in module_names:
                    raise TemplateError(f"{owner} instantiates unknown module {entry['module']!r}")
                bad = _format_fields(entry["instance"]) - scope
                if bad:
                    raise TemplateError(f"{owner} instance name uses unknown names {sorted(bad)}")

    for mod in skeleton["modules"]:
        owner = f"module {mod['name']}"
        if "when" in mod:
            check_expr(mod["when"], params, f"{owner} condition")
        bad = _format_fields(mod.get("description", "")) - params
        if bad:
            raise TemplateError(f"{owner} description uses unknown names {sorted(bad)}")
        for port in mod.get("ports", []):
            check_expr(port.get("width", 1), params, f"{owner} port {port['name']}")
        for value in mod.get("parameters", {}).values():
            check_expr(value, params, f"{owner} parameter")
        check_instances(mod.get("instances", []), params, owner)


def expand_skeleton(tpl: TemplateDef, assignment: Mapping[str, ConfigValue]) -> HierarchicalPrompt:
    """Deterministic expansion of the skeleton under a full assignment.

    Modules appear in skeleton order, conditional modules only when their
    condition holds; raises on any unassigned placeholder.
    """
    env = _int_env(assignment)
    missing = [p.name for p in tpl.parameters if p.name not in assignment]
    if missing:
        raise TemplateError(f"unassigned placeholder parameters: {missing}")

    briefs: list[ModuleBrief] = []
    for mod in tpl.skeleton["modules"]:
        if "when" in mod and exprs.evaluate(mod["when"], env) == 0:
            continue
        ports = tuple(
            PortDecl(
                name=port["name"],
                direction=Direction(port["direction"]),
                width=_eval_width(port.get("width", 1), env),
            )
            for port in mod.get("ports", [])
        )
        parameters = {
            name: exprs.evaluate(value, env) if isinstance(value, str) else int(value)
            for name, value in mod.get("parameters", {}).items()
        }
        instances = tuple(_expand_instances(mod.get("instances", []), assignment, env, {}))
        briefs.append(
            ModuleBrief(
                name=mod["name"],
                description=mod.get("description", "").format_map(_format_env(assignment, {})),
                ports=ports,
                parameters=parameters,
                instances=instances,
            )
        )
    return HierarchicalPrompt(design=f"{tpl.name}", modules=tuple(briefs))


def _eval_width(width: Union[str, int], env: Mapping[str, int]) -> int:
    return width if isinstance(width, int) else exprs.evaluate(width, env)


def _expand_instances(
    entries: Sequence[Mapping],
    assignment: Mapping[str, ConfigValue],
    env: Mapping[str, int],
    loop_env: dict[str, int],
) -> list[InstanceRef]:
    out: list[InstanceRef] = []
    scope = {**env, **loop_env}
    for entry in entries:
        if "when" in entry and exprs.evaluate(entry["when"], scope) == 0:
            continue
        if "foreach" in entry:
            var = entry["foreach"]
            count = exprs.evaluate(entry["count"], scope)
            for i in range(count):
                out.extend(_expand_instances(entry["items"], assignment, env, {**loop_env, var: i}))
        else:
            name = entry["instance"].format_map(_format_env(assignment, loop_env))
            out.append(InstanceRef(module_name=entry["module"], instance_name=name))
    return out
