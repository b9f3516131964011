"""Design-space exploration: configs, rule checking, and prompt enhancement.

Two generation modes share this engine. Template designs run the explorer
against a parameter schema and design rules, with previous-round feedback
(rule conflicts or PPA numbers) folded into the next prompt. Simple
designs skip configuration and ask directly for a hierarchical prompt.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field, replace
from typing import Mapping, Optional, Sequence, Union

from .kernel_dsl import KernelDfg
from .llm import ChatRequest, LlmBackend, LlmParams
from .model import HierarchicalPrompt, HivegenError
from .templates import ConfigValue, TemplateDef, expand_skeleton, render_ops


class MalformedConfig(HivegenError):
    """Config names an unknown parameter or omits one; not a rule conflict."""


class ProposalFailed(HivegenError):
    def __init__(self, message: str, raw_output: str):
        super().__init__(message)
        self.raw_output = raw_output


class InputError(HivegenError):
    pass


@dataclass(frozen=True)
class DesignConfig:
    template: str
    assignment: Mapping[str, ConfigValue]

    def to_json(self) -> dict:
        rendered = {
            k: (v if isinstance(v, int) else list(v)) for k, v in self.assignment.items()
        }
        return {"template": self.template, "assignment": rendered}

    @classmethod
    def from_json(cls, data: Mapping) -> "DesignConfig":
        assignment: dict[str, ConfigValue] = {}
        for key, value in data["assignment"].items():
            if isinstance(value, bool):
                assignment[key] = int(value)
            elif isinstance(value, (list, tuple)):
                assignment[key] = tuple(str(v) for v in value)
            else:
                assignment[key] = int(value)
        return cls(template=data["template"], assignment=assignment)


@dataclass(frozen=True)
class PpaFeedback:
    power_mw: float
    clock_ns: float
    area_um2: float
    passed: bool

    def __post_init__(self) -> None:
        if self.passed and min(self.power_mw, self.clock_ns, self.area_um2) < 0:
            raise ValueError("passing feedback requires non-negative metrics")

    def to_json(self) -> dict:
        return {
            "power_mw": self.power_mw,
            "clock_ns": self.clock_ns,
            "area_um2": self.area_um2,
            "passed": self.passed,
        }

    @classmethod
    def from_json(cls, data: Mapping) -> "PpaFeedback":
        return cls(
            power_mw=float(data["power_mw"]),
            clock_ns=float(data["clock_ns"]),
            area_um2=float(data["area_um2"]),
            passed=bool(data["passed"]),
        )


@dataclass(frozen=True)
class DseRound:
    """One explored configuration with whatever feedback it earned.

    Rule-conflict rounds carry the conflict text and no PPA numbers; both
    kinds are rendered verbatim into the next round's prompt.
    """

    config: DesignConfig
    ppa: Optional[PpaFeedback] = None
    conflicts: tuple[str, ...] = ()

    def to_json(self) -> dict:
        return {
            "config": self.config.to_json(),
            "ppa": self.ppa.to_json() if self.ppa else None,
            "conflicts": list(self.conflicts),
        }


@dataclass
class ExplorerState:
    """Session-local exploration record: append-only history plus goals."""

    objective: str = "clock"  # "power" | "clock" | "area"
    strategy_hint: Optional[str] = None
    icl_mode: str = "none"  # "none" | "one_shot"
    history: list[DseRound] = field(default_factory=list)

    def __post_init__(self) -> None:
        if self.objective not in ("power", "clock", "area"):
            raise ValueError(f"unknown objective {self.objective!r}")
        if self.icl_mode not in ("none", "one_shot"):
            raise ValueError(f"unknown icl_mode {self.icl_mode!r}")

    def record(self, round_: DseRound) -> None:
        self.history.append(round_)


def evaluate_config(cfg: DesignConfig, tpl: TemplateDef, dfg: KernelDfg) -> list[str]:
    """All rule conflicts for this config; empty means ok.

    Pure and order-insensitive: the verdict set never depends on rule
    order. Unknown or missing parameter names are malformed input, raised
    rather than returned.
    """
    if cfg.template != tpl.name:
        raise MalformedConfig(f"config targets template {cfg.template!r}, not {tpl.name!r}")
    declared = set(tpl.parameter_names())
    unknown = sorted(set(cfg.assignment) - declared)
    if unknown:
        raise MalformedConfig(f"unknown parameter name(s): {', '.join(unknown)}")
    missing = sorted(declared - set(cfg.assignment))
    if missing:
        raise MalformedConfig(f"missing parameter(s): {', '.join(missing)}")

    conflicts: list[str] = []
    for param in tpl.parameters:
        value = cfg.assignment[param.name]
        if not param.domain.contains(value):
            shown = value if isinstance(value, int) else sorted(value)
            conflicts.append(f"parameter {param.name} value {shown} outside domain: {param.domain.describe()}")
    for rule in tpl.design_rules:
        conflicts.extend(rule.check(cfg.assignment, dfg))
    return conflicts


def enhance_prompt(cfg: DesignConfig, tpl: TemplateDef) -> HierarchicalPrompt:
    """Deterministic skeleton expansion into a hierarchical prompt.

    Callers must have run evaluate_config first; this only re-checks that
    every placeholder is assigned.
    """
    return expand_skeleton(tpl, cfg.assignment)


# -- explorer prompts ------------------------------------------------------

DSE_SYSTEM_PROMPT = (
    "You are a hardware design-space explorer for parameterized accelerator"
    " templates. Choose configuration parameters that satisfy the design"
    " rules and improve the stated objective, learning from the feedback of"
    " previous rounds. Reply with a single JSON object of the form"
    ' {"template": "<name>", "assignment": {"<parameter>": <value>, ...}}'
    " and nothing else. Operation-set parameters take a JSON list of"
    " operation names."
)

SIMPLE_SYSTEM_PROMPT = (
    "You are a hardware design planner. Break the requested design into a"
    " hierarchy of Verilog modules small enough to generate one at a time."
    " Reply with a single JSON object of the form"
    ' {"design": "<name>", "modules": [{"name", "description", "ports":'
    ' [{"name", "direction", "width"}], "parameters": {}, "instances":'
    ' [{"module_name", "instance_name"}]}]} and nothing else. List every'
    " module exactly once, leaf modules first, the top module last."
)


def _render_history(history: Sequence[DseRound]) -> str:
    if not history:
        return "No previous rounds."
    lines = []
    for idx, round_ in enumerate(history):
        lines.append(f"Round {idx}: config {json.dumps(round_.config.to_json(), sort_keys=True)}")
        for conflict in round_.conflicts:
            lines.append(f"  rule conflict: {conflict}")
        if round_.ppa is not None:
            verdict = "met requirements" if round_.ppa.passed else "did not meet requirements"
            lines.append(
                f"  PPA: power {round_.ppa.power_mw} mW, clock {round_.ppa.clock_ns} ns,"
                f" area {round_.ppa.area_um2} um2 ({verdict})"
            )
    return "\n".join(lines)


def build_config_prompt(tpl: TemplateDef, dfg: KernelDfg, state: ExplorerState) -> str:
    """The explorer's user prompt: kernel facts, schema, history, goals."""
    parts = [
        "Kernel properties:",
        f"- operations used: {render_ops(sorted(dfg.op_set)) or 'none'}",
        f"- operation count: {dfg.node_count}",
        "",
        f"Template: {tpl.name}",
        "Parameters:",
        tpl.describe_parameters(),
        "",
        f"Objective: minimize {state.objective}.",
    ]
    if state.strategy_hint:
        parts.append(f"Suggested strategy: {state.strategy_hint}.")
    if state.icl_mode == "one_shot" and tpl.one_shot_example is not None:
        parts += ["", "Example configuration:", json.dumps(tpl.one_shot_example, sort_keys=True)]
    parts += ["", "Previous rounds:", _render_history(state.history)]
    return "\n".join(parts)


def build_simple_prompt(nl_description: str, state: ExplorerState) -> str:
    parts = [
        "Design request:",
        nl_description.strip(),
        "",
        f"Objective: minimize {state.objective}.",
    ]
    if state.strategy_hint:
        parts.append(f"Suggested strategy: {state.strategy_hint}.")
    parts += ["", "Previous rounds:", _render_history(state.history)]
    return "\n".join(parts)


_FENCE_RE = re.compile(r"^```[a-zA-Z]*\n|\n```$")


def _extract_json(text: str) -> dict:
    cleaned = text.strip()
    cleaned = _FENCE_RE.sub("", cleaned).strip()
    start = cleaned.find("{")
    end = cleaned.rfind("}")
    if start < 0 or end <= start:
        raise ValueError("no JSON object found")
    return json.loads(cleaned[start : end + 1])


def propose_config(
    tpl: TemplateDef,
    dfg: KernelDfg,
    state: ExplorerState,
    llm: LlmBackend,
    params: LlmParams = LlmParams(),
    max_retries: int = 3,
) -> DesignConfig:
    """Ask the explorer for a configuration, with bounded JSON repair.

    Each repair attempt re-asks with the parse error attached; after
    max_retries failures the raw output travels with ProposalFailed.
    """
    base_user = build_config_prompt(tpl, dfg, state)
    user = base_user
    raw = ""
    for attempt in range(1, max_retries + 1):
        response = llm.complete(ChatRequest(system=DSE_SYSTEM_PROMPT, user=user, params=params))
        raw = response.text
        try:
            data = _extract_json(raw)
            if "template" not in data or not isinstance(data.get("assignment"), dict):
                raise ValueError("missing template or assignment")
            return DesignConfig.from_json(data)
        except (ValueError, KeyError, TypeError, json.JSONDecodeError) as exc:
            user = (
                base_user
                + f"\n\nRepair attempt {attempt}: the previous output was not a valid"
                + f" configuration JSON ({exc}). Output only the JSON object."
            )
    raise ProposalFailed(f"no valid configuration after {max_retries} attempts", raw)


def propose_prompt(
    nl_description: str,
    state: ExplorerState,
    llm: LlmBackend,
    params: LlmParams = LlmParams(),
    max_retries: int = 3,
) -> HierarchicalPrompt:
    """Simple-design path: the model emits the hierarchical prompt directly."""
    if not nl_description.strip():
        raise InputError("empty design description")
    base_user = build_simple_prompt(nl_description, state)
    user = base_user
    raw = ""
    for attempt in range(1, max_retries + 1):
        response = llm.complete(ChatRequest(system=SIMPLE_SYSTEM_PROMPT, user=user, params=params))
        raw = response.text
        try:
            data = _extract_json(raw)
            prompt = HierarchicalPrompt.from_json(data)
            if not prompt.modules:
                raise ValueError("empty module list")
            return prompt
        except (ValueError, KeyError, TypeError, json.JSONDecodeError) as exc:
            user = (
                base_user
                + f"\n\nRepair attempt {attempt}: the previous output was not a valid"
                + f" hierarchy JSON ({exc}). Output only the JSON object."
            )
    raise ProposalFailed(f"no valid hierarchical prompt after {max_retries} attempts", raw)


def explore_config(
    tpl: TemplateDef,
    dfg: KernelDfg,
    state: ExplorerState,
    llm: LlmBackend,
    params: LlmParams = LlmParams(),
    max_retries: int = 3,
    rule_attempts: int = 3,
) -> DesignConfig:
    """Propose-and-evaluate loop; only rule-clean configs leave the engine.

    Conflicting rounds are recorded into the state (their text reaches the
    next prompt verbatim) and retried up to rule_attempts times.
    """
    last_conflicts: list[str] = []
    for _ in range(rule_attempts):
        cfg = propose_config(tpl, dfg, state, llm, params=params, max_retries=max_retries)
        conflicts = evaluate_config(cfg, tpl, dfg)
        if not conflicts:
            return cfg
        last_conflicts = conflicts
        state.record(DseRound(config=cfg, conflicts=tuple(conflicts)))
    raise ProposalFailed(
        f"no rule-clean configuration after {rule_attempts} rounds;"
        f" last conflicts: {'; '.join(last_conflicts)}",
        raw_output="",
    )
