"""Session reports: delimited tables plus matplotlib figures on disk.

Reads a persisted session directory (session.json / metrics.json) and
renders rounds, task outcomes, and optionally the library weight
distribution. All PPA values plotted here are proxy estimates and the
figures say so.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path
from typing import Optional, Union

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

from .library import CodeLibrary
from .model import HivegenError


def _load_session(session_dir: Path) -> dict:
    path = session_dir / "session.json"
    if not path.exists():
        raise HivegenError(f"no session.json under {session_dir}")
    return json.loads(path.read_text(encoding="utf-8"))


def _write_rounds_csv(data: dict, out_dir: Path) -> Path:
    path = out_dir / "rounds.csv"
    with path.open("w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle)
        writer.writerow(["round", "power_mw", "clock_ns", "area_um2", "passed", "conflicts"])
        for idx, round_ in enumerate(data.get("rounds", [])):
            ppa = round_.get("ppa") or {}
            writer.writerow(
                [
                    idx,
                    ppa.get("power_mw", ""),
                    ppa.get("clock_ns", ""),
                    ppa.get("area_um2", ""),
                    ppa.get("passed", ""),
                    "; ".join(round_.get("conflicts", [])),
                ]
            )
    return path


def _write_tasks_csv(data: dict, out_dir: Path) -> Path:
    path = out_dir / "tasks.csv"
    tasks = (data.get("tasks") or {}).get("tasks", [])
    provenance = data.get("provenance", {})
    attempts = data.get("attempts", {})
    verification = data.get("verification", {})
    with path.open("w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle)
        writer.writerow(["module", "status", "provenance", "attempts", "verification"])
        for task in tasks:
            name = task["module_name"]
            writer.writerow(
                [
                    name,
                    task["status"],
                    provenance.get(name, ""),
                    attempts.get(name, 0),
                    verification.get(name, ""),
                ]
            )
    return path


def _write_summary_csv(data: dict, out_dir: Path) -> Path:
    path = out_dir / "summary.csv"
    usage = data.get("usage", {})
    with path.open("w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle)
        writer.writerow(["design", "status", "prompt_tokens", "completion_tokens", "total_tokens", "wall_time_ms"])
        writer.writerow(
            [
                data.get("design", ""),
                data.get("status", ""),
                usage.get("prompt_tokens", 0),
                usage.get("completion_tokens", 0),
                usage.get("total_tokens", 0),
                data.get("wall_time_ms", 0.0),
            ]
        )
    return path


def _plot_rounds(data: dict, out_dir: Path) -> Optional[Path]:
    rounds = [r for r in data.get("rounds", []) if r.get("ppa")]
    if not rounds:
        return None
    xs = list(range(len(rounds)))
    power = [r["ppa"]["power_mw"] for r in rounds]
    clock = [r["ppa"]["clock_ns"] for r in rounds]
    area = [r["ppa"]["area_um2"] for r in rounds]

    fig, axes = plt.subplots(1, 3, figsize=(10.5, 3.2))
    for ax, series, label in zip(axes, (power, clock, area), ("power (mW)", "clock (ns)", "area (um2)")):
        ax.plot(xs, series, marker="o")
        ax.set_xlabel("round")
        ax.set_ylabel(label)
        ax.set_xticks(xs)
        ax.grid(True, alpha=0.3)
    fig.suptitle(f"{data.get('design', 'design')} rounds (proxy estimates)")
    fig.tight_layout()
    path = out_dir / "ppa_rounds.png"
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def _plot_tasks(data: dict, out_dir: Path) -> Optional[Path]:
    tasks = (data.get("tasks") or {}).get("tasks", [])
    if not tasks:
        return None
    names = [t["module_name"] for t in tasks]
    attempts = [data.get("attempts", {}).get(n, 0) for n in names]
    colors = {
        "done": "#2a9d8f",
        "failed": "#e76f51",
        "pending": "#bbbbbb",
        "generating": "#e9c46a",
    }
    bar_colors = [colors.get(t["status"], "#888888") for t in tasks]

    fig, ax = plt.subplots(figsize=(max(4.0, 0.7 * len(names)), 3.2))
    ax.bar(names, attempts, color=bar_colors)
    ax.set_ylabel("generation attempts")
    ax.set_title(f"{data.get('design', 'design')} tasks (color = final status)")
    plt.setp(ax.get_xticklabels(), rotation=35, ha="right")
    fig.tight_layout()
    path = out_dir / "task_attempts.png"
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def _plot_library_weights(library_path: Path, out_dir: Path) -> Optional[Path]:
    library = CodeLibrary.load(library_path)
    weights = [entry.weight for entry in library.entries()]
    if not weights:
        return None
    fig, ax = plt.subplots(figsize=(5.0, 3.2))
    ax.hist(weights, bins=20, color="#264653")
    ax.axvline(0.5, color="#e9c46a", linestyle="--", label="initial weight")
    ax.axvline(0.2, color="#e76f51", linestyle=":", label="collection floor")
    ax.set_xlabel("entry weight")
    ax.set_ylabel("count")
    ax.legend()
    ax.set_title("library weight distribution")
    fig.tight_layout()
    path = out_dir / "library_weights.png"
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def write_report(
    session_dir: Union[str, Path],
    out_dir: Union[str, Path],
    library_path: Optional[Union[str, Path]] = None,
) -> list[Path]:
    """Render every table and figure for one session; returns written paths."""
    session_dir = Path(session_dir)
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    data = _load_session(session_dir)

    written = [
        _write_rounds_csv(data, out_dir),
        _write_tasks_csv(data, out_dir),
        _write_summary_csv(data, out_dir),
    ]
    for maybe in (
        _plot_rounds(data, out_dir),
        _plot_tasks(data, out_dir),
        _plot_library_weights(Path(library_path), out_dir) if library_path else None,
    ):
        if maybe is not None:
            written.append(maybe)
    return written
