"""Proxy power/clock/area model over the structural parse.

This is deliberately not synthesis: estimates come from a committed
calibration table and are labeled method="proxy" everywhere. Only ordinal
comparisons (bigger vs smaller design, pipelined vs not) are meaningful.

Formulas, with constants from the calibration file:

    area  = sum over elaborated leaf instances of their table area
    power = alpha * area + beta * (number of elaborated register bits rows)
    clock = gamma * combinational depth of the top module

Depth of a leaf comes from the table (register primitives count 0); the
depth of a composite is the maximum, over maximal register-free runs of
its instance list, of the sum of the instantiated modules' depths. A
register instance therefore cuts the combinational path, which is what
makes pipelined variants clock faster under the proxy.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Mapping, Optional, Sequence, Union

from .verilog import ParsedModule, ToolError, parse_design


@dataclass(frozen=True)
class PrimitiveInfo:
    area_um2: float
    regs: int
    depth: int
    register: bool = False


@dataclass(frozen=True)
class Calibration:
    alpha_mw_per_um2: float
    beta_mw_per_reg: float
    gamma_ns_per_depth: float
    default: PrimitiveInfo
    primitives: Mapping[str, PrimitiveInfo]

    def leaf(self, name: str) -> PrimitiveInfo:
        return self.primitives.get(name, self.default)

    @classmethod
    def from_json(cls, data: Mapping) -> "Calibration":
        return cls(
            alpha_mw_per_um2=float(data["alpha_mw_per_um2"]),
            beta_mw_per_reg=float(data["beta_mw_per_reg"]),
            gamma_ns_per_depth=float(data["gamma_ns_per_depth"]),
            default=PrimitiveInfo(**data["default"]),
            primitives={k: PrimitiveInfo(**v) for k, v in data["primitives"].items()},
        )


def load_default_calibration() -> Calibration:
    text = resources.files("hivegen").joinpath("data/calibration.json").read_text(encoding="utf-8")
    return Calibration.from_json(json.loads(text))


def load_calibration(path: Union[str, Path, None]) -> Calibration:
    if path is None:
        return load_default_calibration()
    return Calibration.from_json(json.loads(Path(path).read_text(encoding="utf-8")))


@dataclass(frozen=True)
class PpaEstimate:
    power_mw: float
    clock_ns: float
    area_um2: float
    method: str = "proxy"

    def to_json(self) -> dict:
        return {
            "power_mw": self.power_mw,
            "clock_ns": self.clock_ns,
            "area_um2": self.area_um2,
            "method": self.method,
        }


class _Analyzer:
    def __init__(self, modules: Mapping[str, ParsedModule], cal: Calibration):
        self.modules = modules
        self.cal = cal
        self._area: dict[str, float] = {}
        self._regs: dict[str, int] = {}
        self._depth: dict[str, int] = {}

    def is_register(self, name: str) -> bool:
        mod = self.modules.get(name)
        if mod is not None and mod.instances:
            return False
        return self.cal.leaf(name).register

    def area(self, name: str) -> float:
        if name not in self._area:
            mod = self.modules.get(name)
            if mod is None or not mod.instances:
                self._area[name] = self.cal.leaf(name).area_um2
            else:
                self._area[name] = sum(self.area(i.module_name) for i in mod.instances)
        return self._area[name]

    def regs(self, name: str) -> int:
        if name not in self._regs:
            mod = self.modules.get(name)
            if mod is None or not mod.instances:
                self._regs[name] = self.cal.leaf(name).regs
            else:
                self._regs[name] = sum(self.regs(i.module_name) for i in mod.instances)
        return self._regs[name]

    def depth(self, name: str) -> int:
        if name not in self._depth:
            mod = self.modules.get(name)
            if mod is None or not mod.instances:
                self._depth[name] = self.cal.leaf(name).depth
            else:
                best = 0
                run = 0
                for inst in mod.instances:
                    if self.is_register(inst.module_name):
                        best = max(best, run)
                        run = 0
                    else:
                        run += self.depth(inst.module_name)
                self._depth[name] = max(best, run)
        return self._depth[name]


def estimate_ppa(
    sources: Union[Mapping[str, str], Sequence[str]],
    calibration: Optional[Calibration] = None,
) -> PpaEstimate:
    """Proxy estimate for a full design source set; empty designs cost zero."""
    texts = list(sources.values()) if isinstance(sources, Mapping) else list(sources)
    if not any(t.strip() for t in texts):
        return PpaEstimate(power_mw=0.0, clock_ns=0.0, area_um2=0.0)
    cal = calibration or load_default_calibration()
    try:
        modules = parse_design(sources)
    except Exception as exc:
        raise ToolError(f"cannot parse design for PPA estimation: {exc}") from exc
    instantiated = {i.module_name for m in modules.values() for i in m.instances}
    roots = [name for name in modules if name not in instantiated] or list(modules)[:1]
    analyzer = _Analyzer(modules, cal)
    area = sum(analyzer.area(r) for r in roots)
    regs = sum(analyzer.regs(r) for r in roots)
    depth = max(analyzer.depth(r) for r in roots)
    return PpaEstimate(
        power_mw=round(cal.alpha_mw_per_um2 * area + cal.beta_mw_per_reg * regs, 6),
        clock_ns=round(cal.gamma_ns_per_depth * depth, 6),
        area_um2=round(area, 6),
    )
