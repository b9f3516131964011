"""Evaluation arithmetic: pass@k, token savings, and time aggregation.

pass@k uses the unbiased estimator 1 - C(n-c, k)/C(n, k): the probability
that a uniformly random k-subset of n attempts contains at least one of the
c successful ones. Binomials are evaluated as exact integers, so results
are exact rationals converted to float at the end.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from math import comb
from statistics import mean, median
from typing import Iterable, Mapping, Optional, Sequence


@dataclass(frozen=True)
class TokenUsage:
    prompt_tokens: int = 0
    completion_tokens: int = 0

    @property
    def total_tokens(self) -> int:
        return self.prompt_tokens + self.completion_tokens

    def __add__(self, other: "TokenUsage") -> "TokenUsage":
        return TokenUsage(
            self.prompt_tokens + other.prompt_tokens,
            self.completion_tokens + other.completion_tokens,
        )

    def to_json(self) -> dict:
        return {
            "prompt_tokens": self.prompt_tokens,
            "completion_tokens": self.completion_tokens,
            "total_tokens": self.total_tokens,
        }

    @classmethod
    def from_json(cls, data: Mapping) -> "TokenUsage":
        return cls(int(data.get("prompt_tokens", 0)), int(data.get("completion_tokens", 0)))


@dataclass(frozen=True)
class TrialRecord:
    """Attempt counts and costs for one benchmark design."""

    design: str
    n: int
    c: int
    times: tuple[float, ...] = ()
    tokens: TokenUsage = TokenUsage()

    def __post_init__(self) -> None:
        if not 0 <= self.c <= self.n:
            raise ValueError(f"{self.design}: need 0 <= c <= n, got c={self.c}, n={self.n}")


def pass_at_k(n: int, c: int, k: int) -> float:
    """Unbiased estimate of the probability that one of k samples passes.

    Exact rational evaluation; returns 1.0 outright when fewer than k
    failures exist (every k-subset must then contain a success).
    """
    if not 0 <= c <= n:
        raise ValueError(f"need 0 <= c <= n, got c={c}, n={n}")
    if not 1 <= k <= n:
        raise ValueError(f"need 1 <= k <= n, got k={k}, n={n}")
    if n - c < k:
        return 1.0
    return float(1 - Fraction(comb(n - c, k), comb(n, k)))


def token_savings(baseline_tokens: int, ours_tokens: int) -> float:
    """Percent of baseline tokens saved, to two decimals; negative if we used more."""
    if baseline_tokens <= 0:
        raise ValueError(f"baseline_tokens must be > 0, got {baseline_tokens}")
    return round(100.0 * (baseline_tokens - ours_tokens) / baseline_tokens, 2)


@dataclass(frozen=True)
class TimeReport:
    mean: Optional[float]
    median: Optional[float]
    per_stage: Mapping[str, float] = field(default_factory=dict)

    def to_json(self) -> dict:
        return {"mean": self.mean, "median": self.median, "per_stage": dict(self.per_stage)}


def aggregate_times(
    records: Sequence[TrialRecord],
    stage_times: Optional[Mapping[str, Iterable[float]]] = None,
) -> TimeReport:
    """Mean/median wall time over all trials plus a per-stage mean breakdown.

    Empty input yields an empty report rather than an error.
    """
    samples = [t for rec in records for t in rec.times]
    per_stage = {}
    if stage_times:
        for stage, values in stage_times.items():
            values = list(values)
            if values:
                per_stage[stage] = mean(values)
    if not samples:
        return TimeReport(mean=None, median=None, per_stage=per_stage)
    return TimeReport(mean=mean(samples), median=median(samples), per_stage=per_stage)


def trial_report(record: TrialRecord, ks: Sequence[int] = (1, 5)) -> dict:
    """The per-session metrics.json payload for one trial record."""
    return {
        "design": record.design,
        "n": record.n,
        "c": record.c,
        "pass_at": {str(k): round(pass_at_k(record.n, record.c, k), 3) for k in ks if k <= record.n},
        "tokens": record.tokens.to_json(),
        "times": list(record.times),
    }
