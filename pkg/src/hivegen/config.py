"""Run configuration: retry/chance/gc knobs plus flat config-file loading.

Config files are simple ``key = value`` lines (strings, ints, floats,
booleans; ``#`` comments), covering backend choice, fixture and library
paths, the simulator command, worker count, and thresholds.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Optional, Union

from .library import LibraryPolicy
from .llm import LlmParams
from .model import HivegenError


@dataclass(frozen=True)
class GenerationConfig:
    max_retries: int = 3  # attempts per module before it fails
    second_chance_trigger: int = 10  # sibling retrievals before a starved block competes
    garbage_mark: int = 30  # retrievals after which a still-poor block is marked
    retrieval_threshold: float = 0.45
    llm_params: LlmParams = LlmParams()
    worker_count: int = 4
    deterministic_mode: bool = False
    round_budget: int = 5

    def __post_init__(self) -> None:
        if min(self.max_retries, self.second_chance_trigger, self.garbage_mark) < 1:
            raise ValueError("max_retries, second_chance_trigger, garbage_mark must all be >= 1")
        if self.worker_count < 1:
            raise ValueError("worker_count must be >= 1")
        if not 0.0 <= self.retrieval_threshold <= 1.0:
            raise ValueError("retrieval_threshold must lie in [0, 1]")

    def effective_workers(self) -> int:
        return 1 if self.deterministic_mode else self.worker_count

    def library_policy(self) -> LibraryPolicy:
        return LibraryPolicy(
            retrieval_threshold=self.retrieval_threshold,
            m=self.second_chance_trigger,
            j=self.garbage_mark,
        )


def _coerce(raw: str) -> Union[str, int, float, bool]:
    text = raw.strip()
    if len(text) >= 2 and text[0] == text[-1] and text[0] in "\"'":
        return text[1:-1]
    lowered = text.lower()
    if lowered in ("true", "false"):
        return lowered == "true"
    try:
        return int(text)
    except ValueError:
        pass
    try:
        return float(text)
    except ValueError:
        pass
    return text


def load_config_file(path: Union[str, Path]) -> dict[str, Union[str, int, float, bool]]:
    values: dict[str, Union[str, int, float, bool]] = {}
    for lineno, raw in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise HivegenError(f"{path}:{lineno}: expected 'key = value', got {raw!r}")
        key, value = line.split("=", 1)
        values[key.strip()] = _coerce(value)
    return values


def generation_config_from_mapping(values: Mapping[str, object]) -> GenerationConfig:
    kwargs: dict = {}
    for key in (
        "max_retries",
        "second_chance_trigger",
        "garbage_mark",
        "retrieval_threshold",
        "worker_count",
        "deterministic_mode",
        "round_budget",
    ):
        if key in values:
            kwargs[key] = values[key]
    llm_kwargs: dict = {}
    for key, target in (("model_id", "model_id"), ("temperature", "temperature"), ("top_p", "top_p")):
        if key in values:
            llm_kwargs[target] = values[key]
    if llm_kwargs:
        kwargs["llm_params"] = LlmParams(**llm_kwargs)
    return GenerationConfig(**kwargs)
