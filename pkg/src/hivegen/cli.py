"""Command-line entry points.

Exit codes: 0 success, 1 pipeline failure, 2 usage error.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path
from typing import Optional

from .config import GenerationConfig, generation_config_from_mapping, load_config_file
from .dse import ExplorerState, explore_config
from .kernel_dsl import extract_dfg
from .library import CodeLibrary
from .llm import LlmParams, MockBackend, RecordingBackend, RemoteBackend, ReplayBackend
from .metrics import pass_at_k
from .model import HivegenError
from .orchestrator import (
    Orchestrator,
    PpaTarget,
    SessionStatus,
    SimulatorAdapter,
    detect_simulator,
)
from .parsing import ParseError
from .templates import builtin_template_names, load_builtin_template, load_template


def _add_backend_args(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--backend", choices=("replay", "mock", "remote"), default=None)
    parser.add_argument("--fixtures", type=Path, help="replay fixture file (JSON lines)")
    parser.add_argument("--record", type=Path, help="record exchanges to this fixture file")
    parser.add_argument("--model", default=None, help="model id for the remote backend")


def _add_run_args(parser: argparse.ArgumentParser) -> None:
    _add_backend_args(parser)
    parser.add_argument("--library", type=Path, default=None)
    parser.add_argument("--sessions-dir", type=Path, default=None)
    parser.add_argument("--config", type=Path, help="key = value configuration file")
    parser.add_argument("--workers", type=int, default=None)
    parser.add_argument("--deterministic", action="store_true")
    parser.add_argument("--simulator", default=None, help="simulator command template, or 'none'")
    parser.add_argument("--no-interact", action="store_true")


def _file_settings(args) -> dict:
    if getattr(args, "config", None):
        return load_config_file(args.config)
    return {}


def _setting(args, settings: dict, flag: str, key: str, default=None):
    """CLI flag wins; config-file key next; then the default."""
    value = getattr(args, flag, None)
    if value is not None:
        return value
    if key in settings:
        return settings[key]
    return default


def _build_config(args, settings: Optional[dict] = None) -> GenerationConfig:
    values: dict = dict(settings if settings is not None else _file_settings(args))
    if getattr(args, "workers", None) is not None:
        values["worker_count"] = args.workers
    if getattr(args, "deterministic", False):
        values["deterministic_mode"] = True
    if getattr(args, "model", None):
        values["model_id"] = args.model
    return generation_config_from_mapping(values)


def _build_backend(args, settings: Optional[dict] = None):
    settings = settings if settings is not None else _file_settings(args)
    kind = _setting(args, settings, "backend", "backend", "replay")
    fixtures = _setting(args, settings, "fixtures", "fixtures")
    if kind == "replay":
        if not fixtures:
            raise HivegenError("--backend replay requires --fixtures")
        backend = ReplayBackend(fixtures)
    elif kind == "remote":
        backend = RemoteBackend()
    else:
        backend = MockBackend(responder=lambda req: "")
    if getattr(args, "record", None):
        backend = RecordingBackend(backend, args.record)
    return backend


def _build_simulator(args, settings: dict) -> Optional[SimulatorAdapter]:
    spec = _setting(args, settings, "simulator", "simulator")
    if spec == "none":
        return None
    if spec:
        return SimulatorAdapter(command_template=str(spec))
    return detect_simulator()


def _build_orchestrator(args) -> tuple[Orchestrator, GenerationConfig]:
    settings = _file_settings(args)
    config = _build_config(args, settings)
    backend = _build_backend(args, settings)
    library_path = Path(_setting(args, settings, "library", "library", "library.jsonl"))
    sessions_dir = Path(_setting(args, settings, "sessions_dir", "sessions_dir", "sessions"))
    args.library = library_path
    args.sessions_dir = sessions_dir
    library = CodeLibrary.load(library_path, policy=config.library_policy())
    orch = Orchestrator(
        backend,
        library,
        config,
        simulator=_build_simulator(args, settings),
        sessions_dir=sessions_dir,
    )
    return orch, config


def _load_template_arg(name: str):
    if name.endswith(".json"):
        return load_template(name)
    return load_builtin_template(name)


def _explorer_from_args(args) -> ExplorerState:
    return ExplorerState(
        objective=args.objective,
        strategy_hint=args.strategy,
        icl_mode="one_shot" if args.icl else "none",
    )


def _ppa_target_from_args(args) -> Optional[PpaTarget]:
    if args.max_clock is None and args.max_power is None and args.max_area is None:
        return None
    return PpaTarget(max_power_mw=args.max_power, max_clock_ns=args.max_clock, max_area_um2=args.max_area)


def cmd_generate(args) -> int:
    orch, config = _build_orchestrator(args)
    if bool(args.prompt) == bool(args.kernel):
        print("error: provide exactly one of --prompt or --kernel", file=sys.stderr)
        return 2
    if args.kernel and not args.template:
        print("error: --kernel requires --template", file=sys.stderr)
        return 2

    if args.prompt:
        description = Path(args.prompt).read_text(encoding="utf-8")
        session = orch.new_simple_session(description, Path(args.prompt).stem)
        orch.start_session(session, description)
    else:
        kernel = Path(args.kernel).read_text(encoding="utf-8")
        template = _load_template_arg(args.template)
        session = orch.new_template_session(
            kernel, template, _explorer_from_args(args), ppa_target=_ppa_target_from_args(args)
        )
        orch.start_session(session)

    if session.status is SessionStatus.AWAITING_USER:
        if args.no_interact:
            orch.approve_session(session)
        else:
            _interactive_loop(orch, session)

    if getattr(args, "record", None):
        orch.backend.flush()
    orch.library.save(args.library)
    root = (args.sessions_dir / session.id) if args.sessions_dir else None
    print(f"session {session.id}: {session.status.value}")
    if session.failure_stage:
        print(f"  failed at stage: {session.failure_stage} ({session.failure_detail})")
    for task in session.tasks.tasks if session.tasks else []:
        origin = session.provenance.get(task.module_name, "")
        print(f"  {task.module_name}: {task.status.value}" + (f" ({origin})" if origin else ""))
    if root:
        print(f"  artifacts: {root}")
    return 0 if session.status is SessionStatus.SUCCEEDED else 1


def _interactive_loop(orch: Orchestrator, session) -> None:
    print("interactive window open; enter edit commands, or 'approve' to continue.")
    for task in session.tasks.tasks:
        print(f"  task: {task.module_name}")
    while session.status is SessionStatus.AWAITING_USER:
        try:
            line = input("edit> ").strip()
        except EOFError:
            line = "approve"
        if not line:
            continue
        if line.lower() in ("approve", "go", "run"):
            orch.approve_session(session)
            return
        try:
            tree, command = orch.apply_session_edit(session, line)
        except (ParseError, HivegenError) as exc:
            print(f"  rejected: {exc}")
            continue
        roles = ", ".join(f"{t.text}/{t.role.value}" for t in tree.tokens)
        print(f"  applied {type(command).__name__} [{roles}] (revision {session.revision})")


def cmd_dse(args) -> int:
    config = _build_config(args)
    backend = _build_backend(args)
    template = _load_template_arg(args.template)
    dfg = extract_dfg(Path(args.kernel).read_text(encoding="utf-8"))
    state = _explorer_from_args(args)
    cfg = explore_config(
        template,
        dfg,
        state,
        backend,
        params=config.llm_params,
        max_retries=config.max_retries,
        rule_attempts=config.round_budget,
    )
    print(json.dumps(cfg.to_json(), indent=2, sort_keys=True))
    return 0


def cmd_library(args) -> int:
    config = _build_config(args)
    library = CodeLibrary.load(args.library, policy=config.library_policy())
    if args.library_cmd == "ls":
        entries = sorted(library.entries(), key=lambda e: e.id)
        if not entries:
            print("library is empty")
            return 0
        for entry in entries:
            flags = []
            if not entry.second_chance:
                flags.append("chance-used")
            if entry.gc_marked:
                flags.append("gc-marked")
            print(
                f"{entry.id}  module={entry.module_name}  w={entry.weight:.6f}"
                f"  retrievals={entry.retrieval_count}  skips={entry.sibling_skip_count}"
                + (f"  [{', '.join(flags)}]" if flags else "")
            )
        print(f"{len(entries)} entries, {len(library.avoidance_hashes())} avoided hashes")
        return 0
    if args.library_cmd == "verify":
        from .verilog import parse_modules

        bad = 0
        for entry in sorted(library.entries(), key=lambda e: e.id):
            try:
                mods = parse_modules(entry.block.source)
                ok = any(m.name == entry.module_name for m in mods) or entry.module_name.endswith("__tb")
            except HivegenError:
                ok = False
            if not ok:
                bad += 1
                print(f"{entry.id}: structural check failed")
        print(f"{len(library.entries()) - bad}/{len(library.entries())} entries pass structural checks")
        return 0 if bad == 0 else 1
    if args.library_cmd == "gc":
        backend = _build_backend(args)

        def structural_gate(module_name: str, source: str) -> bool:
            from .verilog import parse_modules

            try:
                return any(m.name == module_name for m in parse_modules(source))
            except HivegenError:
                return False

        report = library.run_gc(backend, verifier=structural_gate)
        library.save(args.library)
        print(f"refined: {len(report.refined)}, removed: {len(report.removed)}, deferred: {len(report.deferred)}")
        return 0
    return 2


def cmd_edit(args) -> int:
    import requests

    url = f"{args.url.rstrip('/')}/sessions/{args.session}/edits"
    try:
        resp = requests.post(url, json={"sentence": args.sentence}, timeout=30)
    except requests.RequestException as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    if resp.status_code in (404, 409):
        body = resp.json()
        print(f"error: {body.get('message', resp.reason)}", file=sys.stderr)
        return 1
    body = resp.json()
    if body.get("accepted"):
        roles = ", ".join(f"{t['text']}/{t['role']}" for t in body["ls_tree"]["tokens"])
        print(f"applied (revision {body['new_revision']}): {roles}")
        return 0
    print(f"rejected: {body.get('error')}", file=sys.stderr)
    return 1


def cmd_metrics(args) -> int:
    if args.metrics_cmd == "pass-at-k":
        value = pass_at_k(args.n, args.c, args.k)
        print(f"{value:.3f}")
        return 0
    return 2


def cmd_serve(args) -> int:
    from .service import SessionHost, serve

    orch, _config = _build_orchestrator(args)
    host = SessionHost(orch)
    static_dir = Path(args.static) if args.static else None
    print(f"serving on http://127.0.0.1:{args.port}")
    serve(host, port=args.port, static_dir=static_dir)
    return 0


def cmd_replay(args) -> int:
    if args.replay_cmd != "record":
        return 2
    args.backend = "remote"
    args.record = args.out
    return cmd_generate(args)


def cmd_report(args) -> int:
    from .report import write_report

    written = write_report(args.session, args.out, library_path=args.library)
    for path in written:
        print(path)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hivegen", description="Hierarchical Verilog generation pipeline")
    sub = parser.add_subparsers(dest="command")

    p_gen = sub.add_parser("generate", help="run one generation session")
    p_gen.add_argument("--prompt", type=Path, help="natural-language design description file")
    p_gen.add_argument("--kernel", type=Path, help="kernel source file (.kdsl)")
    p_gen.add_argument("--template", help=f"template name ({', '.join(builtin_template_names())}) or JSON path")
    p_gen.add_argument("--objective", choices=("power", "clock", "area"), default="clock")
    p_gen.add_argument("--strategy", default=None)
    p_gen.add_argument("--icl", action="store_true", help="include the one-shot example configuration")
    p_gen.add_argument("--max-clock", type=float, default=None)
    p_gen.add_argument("--max-power", type=float, default=None)
    p_gen.add_argument("--max-area", type=float, default=None)
    _add_run_args(p_gen)
    p_gen.set_defaults(func=cmd_generate)

    p_dse = sub.add_parser("dse", help="explore one rule-clean configuration")
    p_dse.add_argument("--kernel", type=Path, required=True)
    p_dse.add_argument("--template", required=True)
    p_dse.add_argument("--objective", choices=("power", "clock", "area"), default="clock")
    p_dse.add_argument("--strategy", default=None)
    p_dse.add_argument("--icl", action="store_true")
    p_dse.add_argument("--config", type=Path)
    _add_backend_args(p_dse)
    p_dse.set_defaults(func=cmd_dse)

    p_lib = sub.add_parser("library", help="inspect or maintain the code library")
    p_lib.add_argument("library_cmd", choices=("ls", "gc", "verify"))
    p_lib.add_argument("--library", type=Path, default=Path("library.jsonl"))
    p_lib.add_argument("--config", type=Path)
    _add_backend_args(p_lib)
    p_lib.set_defaults(func=cmd_library)

    p_edit = sub.add_parser("edit", help="apply a natural-language edit to a live session")
    p_edit.add_argument("--session", required=True, help="session id on the running service")
    p_edit.add_argument("--url", default="http://127.0.0.1:8787")
    p_edit.add_argument("sentence")
    p_edit.set_defaults(func=cmd_edit)

    p_met = sub.add_parser("metrics", help="evaluation arithmetic")
    p_met.add_argument("metrics_cmd", choices=("pass-at-k",))
    p_met.add_argument("--n", type=int, required=True)
    p_met.add_argument("--c", type=int, required=True)
    p_met.add_argument("--k", type=int, required=True)
    p_met.set_defaults(func=cmd_metrics)

    p_srv = sub.add_parser("serve", help="HTTP service with event stream")
    p_srv.add_argument("--port", type=int, default=8787)
    p_srv.add_argument("--static", default=None, help="directory of UI assets to serve at /")
    _add_run_args(p_srv)
    p_srv.set_defaults(func=cmd_serve)

    p_rep = sub.add_parser("replay", help="fixture recording")
    p_rep.add_argument("replay_cmd", choices=("record",))
    p_rep.add_argument("--out", type=Path, required=True)
    p_rep.add_argument("--prompt", type=Path)
    p_rep.add_argument("--kernel", type=Path)
    p_rep.add_argument("--template")
    p_rep.add_argument("--objective", choices=("power", "clock", "area"), default="clock")
    p_rep.add_argument("--strategy", default=None)
    p_rep.add_argument("--icl", action="store_true")
    p_rep.add_argument("--max-clock", type=float, default=None)
    p_rep.add_argument("--max-power", type=float, default=None)
    p_rep.add_argument("--max-area", type=float, default=None)
    _add_run_args(p_rep)
    p_rep.set_defaults(func=cmd_replay)

    p_report = sub.add_parser("report", help="render session figures and CSV tables")
    p_report.add_argument("--session", type=Path, required=True, help="session directory (sessions/<id>)")
    p_report.add_argument("--out", type=Path, required=True)
    p_report.add_argument("--library", type=Path, default=None)
    p_report.set_defaults(func=cmd_report)

    return parser


def main(argv: Optional[list[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if not getattr(args, "command", None):
        parser.print_help(sys.stderr)
        return 2
    try:
        return args.func(args)
    except (HivegenError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    raise SystemExit(main())
