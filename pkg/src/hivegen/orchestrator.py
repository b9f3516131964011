"""End-to-end generation pipeline: retrieve-or-generate per module, testbench
gating, top assembly, validation, proxy PPA, and the feedback round loop.

The session document has a single writer (this orchestrator); workers are
stateless over immutable task inputs and report through the session lock.
Subscribers (CLI progress, the HTTP event stream) receive ordered events.
"""

from __future__ import annotations

import json
import queue
import shutil
import subprocess
import tempfile
import threading
import time
from concurrent.futures import FIRST_COMPLETED, ThreadPoolExecutor, wait
from dataclasses import dataclass, field, replace
from enum import Enum
from pathlib import Path
from typing import Callable, Mapping, Optional, Sequence, Union

from . import dse
from .config import GenerationConfig
from .kernel_dsl import KernelDfg, extract_dfg
from .library import CodeLibrary, embed
from .llm import ChatRequest, ChatResponse, LlmBackend
from .metrics import TokenUsage, TrialRecord, trial_report
from .model import (
    BodyState,
    CodeBlock,
    DesignHierarchy,
    HierarchicalPrompt,
    HivegenError,
    ModuleSpec,
    hash_block,
    new_block_id,
    validate_hierarchy,
)
from .parsing import (
    EditCommand,
    LsTree,
    SketchDoc,
    TaskList,
    TaskStatus,
    apply_edit,
    build_task_list,
    make_sketch_set,
    parse_command,
    render_sketch,
    sketch_to_spec,
)
from .ppa import Calibration, PpaEstimate, estimate_ppa, load_default_calibration
from .templates import TemplateDef
from .verilog import ToolError, parse_design, parse_modules, render_structural_module


class ModuleFailed(HivegenError):
    def __init__(self, name: str, detail: str = ""):
        super().__init__(f"module {name} failed generation" + (f": {detail}" if detail else ""))
        self.module_name = name


class AssemblyError(HivegenError):
    pass


class SessionStatus(str, Enum):
    RUNNING = "running"
    AWAITING_USER = "awaiting_user"
    SUCCEEDED = "succeeded"
    FAILED = "failed"


@dataclass(frozen=True)
class VerificationResult:
    kind: str  # "syntax" | "functional"
    passed: bool
    log: str = ""


@dataclass(frozen=True)
class PpaTarget:
    """Optional requirement gate; a round passes when all bounds hold."""

    max_power_mw: Optional[float] = None
    max_clock_ns: Optional[float] = None
    max_area_um2: Optional[float] = None

    def met_by(self, estimate: PpaEstimate) -> bool:
        checks = (
            (self.max_power_mw, estimate.power_mw),
            (self.max_clock_ns, estimate.clock_ns),
            (self.max_area_um2, estimate.area_um2),
        )
        return all(limit is None or value <= limit for limit, value in checks)


@dataclass(frozen=True)
class Event:
    kind: str  # "task" | "revision" | "round" | "status"
    payload: dict
    seq: int = 0

    def to_json(self) -> dict:
        return {"kind": self.kind, "seq": self.seq, **self.payload}


class EventBus:
    """Per-session fan-out with sequence numbers; slow subscribers drop
    their oldest events (documented best-effort delivery)."""

    def __init__(self, buffer_size: int = 256):
        self._subscribers: list[queue.Queue] = []
        self._lock = threading.Lock()
        self._buffer_size = buffer_size
        self._next_seq = 0
        self.log: list[Event] = []

    def subscribe(self) -> tuple[queue.Queue, list[Event]]:
        """A live queue plus the backlog; replay backlog, then drain the
        queue skipping seq numbers at or below the backlog's last."""
        q: queue.Queue = queue.Queue(maxsize=self._buffer_size)
        with self._lock:
            backlog = list(self.log)
            self._subscribers.append(q)
        return q, backlog

    def unsubscribe(self, q: queue.Queue) -> None:
        with self._lock:
            if q in self._subscribers:
                self._subscribers.remove(q)

    def publish(self, event: Event) -> None:
        with self._lock:
            stamped = Event(kind=event.kind, payload=event.payload, seq=self._next_seq)
            self._next_seq += 1
            self.log.append(stamped)
            for q in self._subscribers:
                try:
                    q.put_nowait(stamped)
                except queue.Full:
                    try:
                        q.get_nowait()
                    except queue.Empty:
                        pass
                    q.put_nowait(stamped)


@dataclass
class GenerationSession:
    """One end-to-end run and everything it produced."""

    id: str
    mode: str  # "simple" | "template"
    design_name: str = "design"
    prompt: Optional[HierarchicalPrompt] = None
    tasks: Optional[TaskList] = None
    sketches: dict[str, SketchDoc] = field(default_factory=dict)
    blocks: dict[str, CodeBlock] = field(default_factory=dict)
    testbenches: dict[str, str] = field(default_factory=dict)
    rounds: list[dse.DseRound] = field(default_factory=list)
    usage: TokenUsage = TokenUsage()
    wall_time_ms: float = 0.0
    status: SessionStatus = SessionStatus.RUNNING
    failure_stage: Optional[str] = None
    revision: int = 0
    provenance: dict[str, str] = field(default_factory=dict)  # module -> reused|generated|assembled
    llm_calls: dict[str, int] = field(default_factory=dict)
    attempts: dict[str, int] = field(default_factory=dict)
    stage_seconds: dict[str, float] = field(default_factory=dict)
    verification: dict[str, str] = field(default_factory=dict)  # module -> result kind
    aborted: bool = False
    failure_detail: str = ""
    # template-mode state
    kernel_source: str = ""
    template: Optional[TemplateDef] = None
    explorer: Optional[dse.ExplorerState] = None
    ppa_target: Optional["PpaTarget"] = None
    current_config: Optional[dse.DesignConfig] = None
    nl_description: str = ""

    def __post_init__(self) -> None:
        self.lock = threading.RLock()
        self.events = EventBus()
        self.reused_entries: dict[str, str] = {}  # module -> library entry id
        self.rejected_entries: dict[str, list[str]] = {}
        self.outcome_recorded = False

    def task_statuses(self) -> list[dict]:
        if self.tasks is None:
            return []
        return [{"module_name": t.module_name, "status": t.status.value} for t in self.tasks.tasks]

    def to_json(self) -> dict:
        return {
            "id": self.id,
            "mode": self.mode,
            "design": self.design_name,
            "status": self.status.value,
            "failure_stage": self.failure_stage,
            "failure_detail": self.failure_detail,
            "revision": self.revision,
            "tasks": self.tasks.to_json() if self.tasks else None,
            "prompt": self.prompt.to_json() if self.prompt else None,
            "rounds": [r.to_json() for r in self.rounds],
            "usage": self.usage.to_json(),
            "wall_time_ms": self.wall_time_ms,
            "provenance": dict(self.provenance),
            "attempts": dict(self.attempts),
            "verification": dict(self.verification),
            "blocks": {name: block.to_json() for name, block in sorted(self.blocks.items())},
        }


def module_query_text(spec: ModuleSpec) -> str:
    """Canonical retrieval key for a module role: its rendered sketch."""
    from .parsing import make_sketch

    return render_sketch(make_sketch(spec))


def testbench_query_text(spec: ModuleSpec) -> str:
    return "testbench\n" + module_query_text(spec)


MODULE_SYSTEM_PROMPT = (
    "You are a Verilog RTL engineer. Implement exactly one module matching"
    " the given interface sketch. Keep the port list identical, use only the"
    " listed submodules, and reply with Verilog source only."
)

TESTBENCH_SYSTEM_PROMPT = (
    "You are a Verilog verification engineer. Write a self-checking"
    " testbench for the given module. On success it must print the exact"
    ' line "ALL TESTS PASSED" and finish. Reply with Verilog source only.'
)


def build_module_prompt(spec: ModuleSpec, sketch: SketchDoc, children: Mapping[str, ModuleSpec], description: str = "") -> str:
    parts = [f"Implement Verilog module `{spec.name}`."]
    if description:
        parts += ["", f"Description: {description}"]
    parts += ["", "Interface sketch:", render_sketch(sketch)]
    child_names = sorted({i.module_name for i in sketch.instance_lines})
    if child_names:
        parts += ["", "Submodule interfaces:"]
        for name in child_names:
            child = children.get(name)
            ports = ", ".join(p.render() for p in child.ports) if child else ""
            parts.append(f"- module {name} ({ports});")
    return "\n".join(parts)


def build_testbench_prompt(spec: ModuleSpec) -> str:
    ports = ", ".join(p.render() for p in spec.ports)
    return (
        f"Write a self-checking testbench for Verilog module `{spec.name}`"
        f" with interface:\nmodule {spec.name} ({ports});\n"
        'It must print "ALL TESTS PASSED" when every check passes.'
    )


def build_assembly_prompt(spec: ModuleSpec, sketch: SketchDoc, children: Mapping[str, ModuleSpec]) -> str:
    counts: dict[str, int] = {}
    for inst in sketch.instance_lines:
        counts[inst.module_name] = counts.get(inst.module_name, 0) + 1
    parts = [
        f"Implement the top Verilog module `{spec.name}`.",
        "",
        "Interface sketch:",
        render_sketch(sketch),
        "",
        "It must instantiate these submodules, each exactly the listed number of times:",
    ]
    for name in sorted(counts):
        child = children.get(name)
        ports = ", ".join(p.render() for p in child.ports) if child else ""
        parts.append(f"- {counts[name]} x module {name} ({ports});")
    return "\n".join(parts)


def extract_verilog(text: str) -> str:
    cleaned = text.strip()
    if cleaned.startswith("```"):
        lines = cleaned.splitlines()
        lines = lines[1:]
        if lines and lines[-1].strip().startswith("```"):
            lines = lines[:-1]
        cleaned = "\n".join(lines).strip()
    start = cleaned.find("module")
    if start > 0:
        cleaned = cleaned[start:]
    return cleaned


@dataclass(frozen=True)
class SimulatorAdapter:
    """External simulator hook; pass/fail needs exit 0 plus the sentinel."""

    command_template: str = "iverilog -o {out} {files} && vvp {out}"
    sentinel: str = "ALL TESTS PASSED"
    timeout_s: float = 60.0

    def run(self, files: Sequence[Path], workdir: Path) -> tuple[bool, str]:
        out = workdir / "sim.out"
        command = self.command_template.format(
            out=str(out), files=" ".join(str(f) for f in files)
        )
        try:
            proc = subprocess.run(
                command,
                shell=True,
                capture_output=True,
                text=True,
                timeout=self.timeout_s,
                cwd=str(workdir),
            )
        except (OSError, subprocess.TimeoutExpired) as exc:
            raise ToolError(f"simulator launch failed: {exc}") from exc
        log = proc.stdout + proc.stderr
        return proc.returncode == 0 and self.sentinel in proc.stdout, log


def detect_simulator() -> Optional[SimulatorAdapter]:
    if shutil.which("iverilog") and shutil.which("vvp"):
        return SimulatorAdapter()
    return None


class Orchestrator:
    """Drives sessions against one backend, library, and configuration."""

    def __init__(
        self,
        backend: LlmBackend,
        library: CodeLibrary,
        config: GenerationConfig = GenerationConfig(),
        simulator: Optional[SimulatorAdapter] = None,
        calibration: Optional[Calibration] = None,
        sessions_dir: Optional[Union[str, Path]] = None,
    ):
        self.backend = backend
        self.library = library
        self.config = config
        self.simulator = simulator
        self.calibration = calibration or load_default_calibration()
        self.sessions_dir = Path(sessions_dir) if sessions_dir else None

    # -- session lifecycle -------------------------------------------------

    def new_simple_session(self, nl_description: str, design_name: str = "") -> GenerationSession:
        name = design_name or "design"
        return GenerationSession(
            id=self._session_id("simple", nl_description),
            mode="simple",
            design_name=name,
        )

    def new_template_session(
        self,
        kernel_source: str,
        template: TemplateDef,
        explorer: Optional[dse.ExplorerState] = None,
        ppa_target: Optional[PpaTarget] = None,
    ) -> GenerationSession:
        session = GenerationSession(
            id=self._session_id("template", template.name + "\x1e" + kernel_source),
            mode="template",
            design_name=template.name,
        )
        session.kernel_source = kernel_source
        session.template = template
        session.explorer = explorer or dse.ExplorerState()
        session.ppa_target = ppa_target
        return session

    def _session_id(self, mode: str, seed_text: str) -> str:
        if self.config.deterministic_mode:
            return f"sess-{hash_block(mode + chr(30) + seed_text)[:12]}"
        return f"sess-{hash_block(mode + chr(30) + seed_text + chr(30) + str(time.time_ns()))[:12]}"

    # -- interactive window --------------------------------------------------

    def start_session(self, session: GenerationSession, nl_description: str = "") -> GenerationSession:
        """Run up to the interactive window: prompt, task list, sketches."""
        started = time.monotonic()
        try:
            if session.mode == "simple":
                session.nl_description = nl_description
                prompt = dse.propose_prompt(
                    nl_description,
                    dse.ExplorerState(),
                    self._session_backend(session, "prompt"),
                    params=self.config.llm_params,
                    max_retries=self.config.max_retries,
                )
                self._install_prompt(session, prompt)
            else:
                self._next_template_round(session)
        except HivegenError as exc:
            self._finalize(session, SessionStatus.FAILED, stage="dse", detail=str(exc))
            return session
        finally:
            self._add_stage_time(session, "plan", time.monotonic() - started)
        self._set_status(session, SessionStatus.AWAITING_USER)
        self._persist(session)
        return session

    def apply_session_edit(self, session: GenerationSession, sentence: str) -> tuple[LsTree, EditCommand]:
        """Parse and apply one user edit; only legal while awaiting approval."""
        if session.status is not SessionStatus.AWAITING_USER:
            raise HivegenError(f"session {session.id} is not awaiting user input")
        tree, command = parse_command(sentence)
        with session.lock:
            sketches, tasks = apply_edit(session.sketches, session.tasks, command)
            session.sketches = sketches
            session.tasks = tasks
            session.revision += 1
            session.events.publish(Event("revision", {"revision": session.revision}))
        return tree, command

    def approve_session(self, session: GenerationSession) -> GenerationSession:
        """Leave the interactive window and run generation to a terminal state."""
        if session.status is not SessionStatus.AWAITING_USER:
            raise HivegenError(f"session {session.id} is not awaiting user input")
        self._set_status(session, SessionStatus.RUNNING)
        return self._run_to_completion(session)

    def run_generation(self, session: GenerationSession, nl_description: str = "") -> GenerationSession:
        """Non-interactive end-to-end run (the --no-interact path)."""
        self.start_session(session, nl_description)
        if session.status is SessionStatus.AWAITING_USER:
            self._set_status(session, SessionStatus.RUNNING)
            return self._run_to_completion(session)
        return session

    # -- pipeline ------------------------------------------------------------

    def _install_prompt(self, session: GenerationSession, prompt: HierarchicalPrompt) -> None:
        session.prompt = prompt
        if prompt.design and session.design_name == "design":
            session.design_name = prompt.design
        session.tasks = build_task_list(prompt)
        session.sketches = make_sketch_set(prompt)
        session.blocks = {}  # each round produces a fresh design; reuse goes via the library
        for task in session.tasks.tasks:
            session.events.publish(
                Event("task", {"module": task.module_name, "status": task.status.value})
            )

    def _next_template_round(self, session: GenerationSession) -> None:
        tpl: TemplateDef = session.template
        dfg = extract_dfg(session.kernel_source)
        session.dfg = dfg
        cfg = dse.explore_config(
            tpl,
            dfg,
            session.explorer,
            self._session_backend(session, "dse"),
            params=self.config.llm_params,
            max_retries=self.config.max_retries,
            rule_attempts=self.config.round_budget,
        )
        session.current_config = cfg
        self._install_prompt(session, dse.enhance_prompt(cfg, tpl))

    def _run_to_completion(self, session: GenerationSession) -> GenerationSession:
        started = time.monotonic()
        budget = self.config.round_budget if session.mode == "template" else 1
        try:
            while True:
                estimate = self._run_single_round(session)
                if session.mode != "template":
                    self._finalize(session, SessionStatus.SUCCEEDED)
                    break
                target: Optional[PpaTarget] = session.ppa_target
                passed = target.met_by(estimate) if target else True
                feedback = dse.PpaFeedback(
                    power_mw=estimate.power_mw,
                    clock_ns=estimate.clock_ns,
                    area_um2=estimate.area_um2,
                    passed=passed,
                )
                round_record = dse.DseRound(config=session.current_config, ppa=feedback)
                session.rounds.append(round_record)
                session.explorer.record(round_record)
                session.events.publish(Event("round", {"round": round_record.to_json()}))
                if passed:
                    self._finalize(session, SessionStatus.SUCCEEDED)
                    break
                if len(session.rounds) >= budget:
                    self._finalize(session, SessionStatus.FAILED, stage="ppa", detail="round budget exhausted")
                    break
                self._next_template_round(session)
        except ModuleFailed as exc:
            self._finalize(session, SessionStatus.FAILED, stage="generate", detail=str(exc))
        except AssemblyError as exc:
            self._finalize(session, SessionStatus.FAILED, stage="assemble", detail=str(exc))
        except dse.ProposalFailed as exc:
            self._finalize(session, SessionStatus.FAILED, stage="dse", detail=str(exc))
        except HivegenError as exc:
            self._finalize(session, SessionStatus.FAILED, stage="pipeline", detail=str(exc))
        finally:
            if not self.config.deterministic_mode:
                session.wall_time_ms = (time.monotonic() - started) * 1000.0
            self._persist(session)
        return session

    def _run_single_round(self, session: GenerationSession) -> PpaEstimate:
        gen_started = time.monotonic()
        self._generate_all(session)
        self._add_stage_time(session, "generate", time.monotonic() - gen_started)

        asm_started = time.monotonic()
        self.assemble_top(session)
        self._add_stage_time(session, "assemble", time.monotonic() - asm_started)

        self._validate_session(session)
        ppa_started = time.monotonic()
        estimate = self.estimate_session_ppa(session)
        self._add_stage_time(session, "ppa", time.monotonic() - ppa_started)
        return estimate

    def _generate_all(self, session: GenerationSession) -> None:
        """Run generate_module over every non-top task, dependency-safe."""
        top = session.prompt.top_module()
        top_has_children = bool(session.sketches[top].instance_lines)
        todo = [
            t.module_name
            for t in session.tasks.tasks
            if t.status is not TaskStatus.DONE and (t.module_name != top or not top_has_children)
        ]
        if not todo:
            return
        workers = min(self.config.effective_workers(), len(todo))
        if workers == 1:
            for name in todo:
                if session.aborted:
                    raise ModuleFailed(name, "session aborted")
                self._generate_one(session, name)
            return

        done: set[str] = {
            t.module_name for t in session.tasks.tasks if t.status is TaskStatus.DONE
        }
        pending = list(todo)
        failures: list[ModuleFailed] = []
        in_flight: dict = {}
        with ThreadPoolExecutor(max_workers=workers) as pool:
            while (pending or in_flight) and not failures:
                ready = [
                    name
                    for name in pending
                    if all(dep in done or dep not in todo for dep in session.tasks.dependencies_of(name))
                ]
                for name in ready:
                    pending.remove(name)
                    in_flight[pool.submit(self._generate_one, session, name)] = name
                if not in_flight:
                    break
                finished, _ = wait(list(in_flight), return_when=FIRST_COMPLETED)
                for future in finished:
                    name = in_flight.pop(future)
                    error = future.exception()
                    if error is not None:
                        failures.append(
                            error if isinstance(error, ModuleFailed) else ModuleFailed(name, str(error))
                        )
                    else:
                        done.add(name)
        if failures:
            raise failures[0]
        if pending:
            raise ModuleFailed(pending[0], "dependencies never completed")

    def _generate_one(self, session: GenerationSession, name: str) -> None:
        spec = sketch_to_spec(session.sketches[name])
        self._set_task_status(session, name, TaskStatus.GENERATING)
        try:
            block = self.generate_module(name, spec, session)
        except ModuleFailed:
            self._set_task_status(session, name, TaskStatus.FAILED)
            raise
        with session.lock:
            session.blocks[name] = block
            sketch = session.sketches[name]
            session.sketches[name] = replace(sketch, body_state=BodyState.FILLED, revision=sketch.revision + 1)
        self._set_task_status(session, name, TaskStatus.DONE)

    def generate_module(self, name: str, spec: ModuleSpec, session: GenerationSession) -> CodeBlock:
        """Retrieve-or-generate one module, gated by verification.

        A library hit whose block matches the requested role and passes
        verification is reused without any model call. Otherwise up to
        max_retries fresh generations run, each verified before entering
        the library.
        """
        query = embed(module_query_text(spec))
        with session.lock:
            support = {n: b.source for n, b in session.blocks.items()}
        hit = self.library.retrieve(query, name)
        if hit is not None and hit.module_name == name:
            result = self.verify_block(hit.block, spec, support)
            if result.passed:
                with session.lock:
                    session.reused_entries[name] = hit.id
                    session.provenance[name] = "reused"
                    session.verification[name] = result.kind
                return hit.block
            with session.lock:
                session.rejected_entries.setdefault(name, []).append(hit.id)
        elif hit is not None:
            # Role mismatch: the library-wide best match is some other
            # module; treat as a miss without penalizing the entry.
            pass

        children = self._child_specs(session, spec)
        description = self._brief_description(session, name)
        base_prompt = build_module_prompt(spec, session.sketches[name], children, description)
        user = base_prompt
        last_log = ""
        for attempt in range(1, self.config.max_retries + 1):
            with session.lock:
                session.attempts[name] = attempt
            response = self._complete(session, name, MODULE_SYSTEM_PROMPT, user)
            source = extract_verilog(response.text)
            block = CodeBlock(id=new_block_id(name, source), module_name=name, source=source)
            result = self.verify_block(block, spec, support)
            if result.passed:
                verified = CodeBlock(
                    id=block.id, module_name=name, source=source, verified=True
                )
                self.library.insert(verified, query)
                with session.lock:
                    session.provenance[name] = "generated"
                    session.verification[name] = result.kind
                return verified
            last_log = result.log
            user = (
                base_prompt
                + f"\n\nAttempt {attempt} failed verification:\n{result.log}\n"
                + "Fix the issues and output the full module."
            )
        self._record_rejected(session, name)
        raise ModuleFailed(name, last_log)

    def _record_rejected(self, session: GenerationSession, name: str) -> None:
        with session.lock:
            rejected = session.rejected_entries.pop(name, [])
        if rejected:
            self.library.record_outcome(rejected, success=False)

    def verify_block(
        self,
        block: CodeBlock,
        spec: ModuleSpec,
        support_sources: Optional[Mapping[str, str]] = None,
    ) -> VerificationResult:
        """Structural check always; functional simulation when available.

        support_sources carry already-generated dependency modules into the
        simulation. Without a simulator the result is explicitly
        syntax-only, never presented as functional.
        """
        try:
            modules = parse_modules(block.source)
        except HivegenError as exc:
            return VerificationResult(kind="syntax", passed=False, log=str(exc))
        target = next((m for m in modules if m.name == spec.name), None)
        if target is None:
            return VerificationResult(
                kind="syntax", passed=False, log=f"no module named {spec.name} in source"
            )
        want = {(p.name, p.direction, p.width) for p in spec.ports}
        got = {(p.name, p.direction, p.width) for p in target.ports}
        if want != got:
            missing = sorted(name for name, _, _ in want - got)
            surplus = sorted(name for name, _, _ in got - want)
            log = f"port mismatch on {spec.name}:"
            if missing:
                log += f" missing/changed {', '.join(missing)};"
            if surplus:
                log += f" unexpected {', '.join(surplus)};"
            return VerificationResult(kind="syntax", passed=False, log=log)
        if self.simulator is None:
            return VerificationResult(kind="syntax", passed=True, log="structural checks passed (no simulator)")
        return self._run_functional(block, spec, support_sources or {})

    def _run_functional(
        self, block: CodeBlock, spec: ModuleSpec, support_sources: Mapping[str, str]
    ) -> VerificationResult:
        testbench = self._testbench_for(spec)
        with tempfile.TemporaryDirectory(prefix="hivegen-sim-") as tmp:
            workdir = Path(tmp)
            dut = workdir / f"{spec.name}.v"
            dut.write_text(block.source, encoding="utf-8")
            files = [dut]
            for name, source in sorted(support_sources.items()):
                if name == spec.name:
                    continue
                dep = workdir / f"{name}.v"
                dep.write_text(source, encoding="utf-8")
                files.append(dep)
            tb = workdir / f"{spec.name}_tb.v"
            tb.write_text(testbench, encoding="utf-8")
            files.append(tb)
            passed, log = self.simulator.run(files, workdir)
        return VerificationResult(kind="functional", passed=passed, log=log)

    def _testbench_for(self, spec: ModuleSpec) -> str:
        tb_role = f"{spec.name}__tb"
        query = embed(testbench_query_text(spec))
        hit = self.library.retrieve(query, tb_role)
        if hit is not None and hit.module_name == tb_role:
            return hit.block.source
        response = self.backend.complete(
            ChatRequest(
                system=TESTBENCH_SYSTEM_PROMPT,
                user=build_testbench_prompt(spec),
                params=self.config.llm_params,
            )
        )
        source = extract_verilog(response.text)
        tb_block = CodeBlock(
            id=new_block_id(tb_role, source), module_name=tb_role, source=source, verified=True
        )
        self.library.insert(tb_block, query)
        return source

    def assemble_top(self, session: GenerationSession) -> CodeBlock:
        """Produce the top module: template expansion or model assembly.

        Single-module designs pass through; everything else must
        instantiate each direct child exactly as often as the hierarchy
        says.
        """
        top = session.prompt.top_module()
        sketch = session.sketches[top]
        spec = sketch_to_spec(sketch)
        if not sketch.instance_lines:
            block = session.blocks.get(top)
            if block is None:
                raise AssemblyError(f"single-module design but no block for {top}")
            session.provenance.setdefault(top, "generated")
            return block

        required: dict[str, int] = {}
        for inst in sketch.instance_lines:
            required[inst.module_name] = required.get(inst.module_name, 0) + 1
        children = self._child_specs(session, spec)
        for child_name in required:
            if child_name not in session.blocks:
                raise AssemblyError(f"missing child block {child_name}")
            child_spec = children.get(child_name)
            if child_spec is not None and not child_spec.ports:
                raise AssemblyError(f"child module {child_name} has no ports; nothing to connect")

        self._set_task_status(session, top, TaskStatus.GENERATING)
        if session.mode == "template":
            source = render_structural_module(spec, children)
        else:
            prompt = build_assembly_prompt(spec, sketch, children)
            response = self._complete(session, top, MODULE_SYSTEM_PROMPT, prompt)
            source = extract_verilog(response.text)

        try:
            parsed = {m.name: m for m in parse_modules(source)}
        except HivegenError as exc:
            raise AssemblyError(f"top source unparseable: {exc}")
        if top not in parsed:
            raise AssemblyError(f"assembled source does not define {top}")
        counts = parsed[top].instance_counts()
        for child_name, count in required.items():
            if counts.get(child_name, 0) != count:
                raise AssemblyError(
                    f"{top} must instantiate {child_name} exactly {count} times, found {counts.get(child_name, 0)}"
                )
        block = CodeBlock(id=new_block_id(top, source), module_name=top, source=source, verified=True)
        self.library.insert(block, embed(module_query_text(spec)))
        with session.lock:
            session.blocks[top] = block
            session.provenance[top] = "assembled"
            session.sketches[top] = replace(
                sketch, body_state=BodyState.FILLED, revision=sketch.revision + 1
            )
        self._set_task_status(session, top, TaskStatus.DONE)
        return block

    def _validate_session(self, session: GenerationSession) -> None:
        sources = {name: block.source for name, block in session.blocks.items()}
        modules = parse_design(sources)
        hierarchy = DesignHierarchy(
            root=session.prompt.top_module(),
            modules={name: mod.to_spec() for name, mod in modules.items()},
        )
        violations = [
            v
            for v in validate_hierarchy(hierarchy)
            if v.kind in ("cycle", "duplicate_instance", "missing_root")
        ]
        if violations:
            raise AssemblyError(f"validation failed: {violations[0].message}")

    def estimate_session_ppa(self, session: GenerationSession) -> PpaEstimate:
        sources = {name: block.source for name, block in session.blocks.items()}
        return estimate_ppa(sources, self.calibration)

    # -- bookkeeping -----------------------------------------------------------

    def _child_specs(self, session: GenerationSession, spec: ModuleSpec) -> dict[str, ModuleSpec]:
        out = {}
        for inst in spec.instances:
            sketch = session.sketches.get(inst.module_name)
            if sketch is not None:
                out[inst.module_name] = sketch_to_spec(sketch)
        return out

    def _brief_description(self, session: GenerationSession, name: str) -> str:
        if session.prompt is None:
            return ""
        for brief in session.prompt.modules:
            if brief.name == name:
                return brief.description
        return ""

    def _complete(self, session: GenerationSession, module: str, system: str, user: str) -> ChatResponse:
        response = self.backend.complete(
            ChatRequest(system=system, user=user, params=self.config.llm_params)
        )
        with session.lock:
            session.llm_calls[module] = session.llm_calls.get(module, 0) + 1
            session.usage = session.usage + response.usage
        return response

    def _session_backend(self, session: GenerationSession, label: str) -> LlmBackend:
        orchestrator = self

        class _Counting(LlmBackend):
            def complete(self, request: ChatRequest) -> ChatResponse:
                response = orchestrator.backend.complete(request)
                with session.lock:
                    session.llm_calls[label] = session.llm_calls.get(label, 0) + 1
                    session.usage = session.usage + response.usage
                return response

        return _Counting()

    def _set_task_status(self, session: GenerationSession, name: str, status: TaskStatus) -> None:
        with session.lock:
            session.tasks = session.tasks.with_status(name, status)
            payload = {"module": name, "status": status.value}
            origin = session.provenance.get(name)
            if status is TaskStatus.DONE and origin:
                payload["origin"] = origin
            session.events.publish(Event("task", payload))

    def _set_status(self, session: GenerationSession, status: SessionStatus) -> None:
        with session.lock:
            session.status = status
            session.events.publish(Event("status", {"status": status.value}))

    def _add_stage_time(self, session: GenerationSession, stage: str, seconds: float) -> None:
        if self.config.deterministic_mode:
            seconds = 0.0
        with session.lock:
            session.stage_seconds[stage] = session.stage_seconds.get(stage, 0.0) + seconds

    def _finalize(
        self,
        session: GenerationSession,
        status: SessionStatus,
        stage: Optional[str] = None,
        detail: str = "",
    ) -> None:
        with session.lock:
            if session.status in (SessionStatus.SUCCEEDED, SessionStatus.FAILED):
                return
            session.failure_stage = stage
            if detail:
                session.failure_detail = detail
        self._set_status(session, status)
        self._record_session_outcome(session)

    def _record_session_outcome(self, session: GenerationSession) -> None:
        """Exactly one outcome batch over every reused entry, at termination."""
        with session.lock:
            if session.outcome_recorded:
                return
            session.outcome_recorded = True
            entry_ids = sorted(set(session.reused_entries.values()))
            success = session.status is SessionStatus.SUCCEEDED
        if entry_ids:
            self.library.record_outcome(entry_ids, success=success)

    def abort(self, session: GenerationSession) -> None:
        """Mark running work failed and finalize outcome recording."""
        with session.lock:
            session.aborted = True
            if session.tasks is not None:
                for task in session.tasks.tasks:
                    if task.status is TaskStatus.GENERATING:
                        session.tasks = session.tasks.with_status(task.module_name, TaskStatus.FAILED)
        self._finalize(session, SessionStatus.FAILED, stage="aborted")
        self._persist(session)

    # -- artifacts ---------------------------------------------------------------

    def _persist(self, session: GenerationSession) -> Optional[Path]:
        if self.sessions_dir is None:
            return None
        return write_session_artifacts(session, self.sessions_dir, deterministic=self.config.deterministic_mode)


def write_session_artifacts(
    session: GenerationSession, sessions_dir: Union[str, Path], deterministic: bool = False
) -> Path:
    """sessions/<id>/ with design/*.v, session.json, and metrics.json."""
    root = Path(sessions_dir) / session.id
    design_dir = root / "design"
    design_dir.mkdir(parents=True, exist_ok=True)
    for name, block in session.blocks.items():
        (design_dir / f"{name}.v").write_text(block.source + "\n", encoding="utf-8")
    (root / "session.json").write_text(
        json.dumps(session.to_json(), indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    wall_s = 0.0 if deterministic else session.wall_time_ms / 1000.0
    record = TrialRecord(
        design=session.design_name,
        n=1,
        c=1 if session.status is SessionStatus.SUCCEEDED else 0,
        times=(wall_s,),
        tokens=session.usage,
    )
    payload = trial_report(record)
    payload["stage_seconds"] = dict(session.stage_seconds)
    payload["status"] = session.status.value
    (root / "metrics.json").write_text(
        json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    return root
