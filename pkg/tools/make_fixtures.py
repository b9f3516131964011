#!/usr/bin/env python3
"""Record the bundled replay fixtures.

Runs every demo session against the scripted design playbooks with a
stand-in simulator attached (so testbench exchanges get recorded too) and
writes all request/response pairs into one replayable fixture file.
"""

from __future__ import annotations

import sys
from pathlib import Path

ROOT = Path(__file__).resolve().parent.parent
sys.path.insert(0, str(ROOT / "src"))
sys.path.insert(0, str(ROOT / "tests"))

import support  # noqa: E402

from hivegen.config import GenerationConfig  # noqa: E402
from hivegen.library import CodeLibrary  # noqa: E402
from hivegen.llm import MockBackend, RecordingBackend, record_fixtures  # noqa: E402
from hivegen.orchestrator import Orchestrator, SessionStatus, SimulatorAdapter  # noqa: E402

FIXTURES = ROOT / "src" / "hivegen" / "fixtures"


def stub_simulator() -> SimulatorAdapter:
    stub = ROOT / "tools" / "stub_sim.py"
    return SimulatorAdapter(command_template=f"{sys.executable} {stub} {{out}} {{files}}")


def main() -> int:
    config = GenerationConfig(deterministic_mode=True)
    transcript = []

    runs = [
        (support.mux64_playbook(), lambda orch: support.run_mux64_session(orch)),
        (support.fig3_playbook(), lambda orch: support.run_fig3_session(orch)),
        (
            support.cgra_playbook(),
            lambda orch: support.run_cgra_session(
                orch, (FIXTURES / "kernels" / "fft_stage.kdsl").read_text()
            ),
        ),
        (
            support.systolic_playbook(),
            lambda orch: support.run_systolic_session(
                orch, (FIXTURES / "kernels" / "mac4.kdsl").read_text()
            ),
        ),
    ]
    for playbook, run in runs:
        backend = RecordingBackend(MockBackend(responder=playbook.respond), FIXTURES / "replay" / "unused.jsonl")
        library = CodeLibrary(policy=config.library_policy())
        orch = Orchestrator(backend, library, config, simulator=stub_simulator())
        session = run(orch)
        if session.status is not SessionStatus.SUCCEEDED:
            print(f"{playbook.name}: {session.status.value} ({session.failure_detail})", file=sys.stderr)
            return 1
        print(f"{playbook.name}: {session.status.value}, {len(backend.transcript)} exchanges")
        transcript.extend(backend.transcript)

    out = record_fixtures(transcript, FIXTURES / "replay" / "e2e.jsonl")
    print(f"wrote {out} ({len(transcript)} exchanges)")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
