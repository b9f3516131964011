"""HTTP facade: sessions, edits, sketches, events, library endpoints."""

import json
import time
from pathlib import Path

import pytest
from fastapi.testclient import TestClient

import support
from hivegen.config import GenerationConfig
from hivegen.library import CodeLibrary
from hivegen.llm import ReplayBackend
from hivegen.orchestrator import Orchestrator
from hivegen.service import SessionHost, create_app

FIXTURES = Path(__file__).resolve().parent.parent / "src" / "hivegen" / "fixtures"
REPLAY = FIXTURES / "replay" / "e2e.jsonl"


@pytest.fixture()
def client(tmp_path):
    config = GenerationConfig(deterministic_mode=True)
    orch = Orchestrator(
        ReplayBackend(REPLAY),
        CodeLibrary(policy=config.library_policy()),
        config,
        sessions_dir=tmp_path / "sessions",
    )
    host = SessionHost(orch)
    return TestClient(create_app(host)), host


def wait_terminal(client: TestClient, session_id: str, timeout_s: float = 10.0) -> dict:
    deadline = time.monotonic() + timeout_s
    while time.monotonic() < deadline:
        view = client.get(f"/sessions/{session_id}").json()
        if view["status"] in ("succeeded", "failed"):
            return view
        time.sleep(0.02)
    raise AssertionError("session did not reach a terminal state in time")


class TestSessions:
    def test_create_pauses_awaiting_user(self, client):
        api, _host = client
        resp = api.post("/sessions", json={"prompt": support.MUX64_PROMPT_TEXT})
        assert resp.status_code == 200
        view = resp.json()
        assert view["status"] == "awaiting_user"
        assert [t["module_name"] for t in view["tasks"]] == ["mux_2", "mux_4", "mux_64"]

    def test_unknown_session_404_with_error_shape(self, client):
        api, _host = client
        resp = api.get("/sessions/nope")
        assert resp.status_code == 404
        body = resp.json()
        assert body["code"] == "not_found" and "message" in body

    def test_create_requires_input(self, client):
        api, _host = client
        assert api.post("/sessions", json={}).status_code == 422

    def test_approve_runs_to_success(self, client):
        api, _host = client
        view = api.post("/sessions", json={"prompt": support.MUX64_PROMPT_TEXT}).json()
        assert api.post(f"/sessions/{view['id']}/approve").status_code == 200
        final = wait_terminal(api, view["id"])
        assert final["status"] == "succeeded"
        assert all(t["status"] == "done" for t in final["tasks"])

    def test_no_interact_runs_immediately(self, client):
        api, _host = client
        view = api.post(
            "/sessions", json={"prompt": support.MUX64_PROMPT_TEXT, "no_interact": True}
        ).json()
        final = wait_terminal(api, view["id"])
        assert final["status"] == "succeeded"


class TestEdits:
    def test_fig3_edit_round_trip(self, client):
        api, _host = client
        view = api.post("/sessions", json={"prompt": support.FIG3_PROMPT_TEXT}).json()
        session_id = view["id"]
        resp = api.post(f"/sessions/{session_id}/edits", json={"sentence": support.FIG3_EDIT_SENTENCE})
        assert resp.status_code == 200
        body = resp.json()
        assert body["accepted"] is True
        assert body["command"] == {
            "type": "AddInstance",
            "module": "mux_4",
            "instance": "MUX_1",
            "parent": "GPE_4",
        }
        roles = {t["text"]: t["role"] for t in body["ls_tree"]["tokens"]}
        assert roles["Add"] == "root_verb"
        assert roles["instance"] == "dobj"
        assert roles["MUX_1"] == "np_modifier"
        assert body["new_revision"] == 1

        sketch = api.get(f"/sessions/{session_id}/sketch/GPE_4").json()
        assert "mux_4 MUX_1 (.port(port));" in sketch["text"]

    def test_unparseable_sentence_rejected_not_500(self, client):
        api, _host = client
        view = api.post("/sessions", json={"prompt": support.FIG3_PROMPT_TEXT}).json()
        resp = api.post(f"/sessions/{view['id']}/edits", json={"sentence": "Frobnicate the flux"})
        assert resp.status_code == 200
        body = resp.json()
        assert body["accepted"] is False
        assert "UnrecognizedVerb" in body["error"]

    def test_edit_after_approval_conflicts(self, client):
        api, _host = client
        view = api.post("/sessions", json={"prompt": support.MUX64_PROMPT_TEXT}).json()
        api.post(f"/sessions/{view['id']}/approve")
        wait_terminal(api, view["id"])
        resp = api.post(f"/sessions/{view['id']}/edits", json={"sentence": support.FIG3_EDIT_SENTENCE})
        assert resp.status_code == 409
        assert resp.json()["code"] == "conflict"

    def test_full_fig3_session_through_service(self, client):
        api, _host = client
        view = api.post("/sessions", json={"prompt": support.FIG3_PROMPT_TEXT}).json()
        api.post(f"/sessions/{view['id']}/edits", json={"sentence": support.FIG3_EDIT_SENTENCE})
        api.post(f"/sessions/{view['id']}/approve")
        final = wait_terminal(api, view["id"])
        assert final["status"] == "succeeded"
        sketch = api.get(f"/sessions/{view['id']}/sketch/GPE_4").json()
        assert sketch["source"] is not None
        assert "MUX_1" in sketch["source"]


class TestEvents:
    def test_stream_replays_ordered_task_transitions(self, client):
        api, _host = client
        view = api.post("/sessions", json={"prompt": support.MUX64_PROMPT_TEXT}).json()
        api.post(f"/sessions/{view['id']}/approve")
        wait_terminal(api, view["id"])

        events = []
        with api.stream("GET", f"/sessions/{view['id']}/events") as resp:
            assert resp.status_code == 200
            for line in resp.iter_lines():
                if line.startswith("data: "):
                    events.append(json.loads(line[len("data: ") :]))

        seqs = [e["seq"] for e in events]
        assert seqs == sorted(seqs) and len(seqs) == len(set(seqs))
        per_task: dict = {}
        for event in events:
            if "module" in event:
                per_task.setdefault(event["module"], []).append(event["status"])
        for module, statuses in per_task.items():
            assert statuses[0] == "pending"
            assert statuses.index("generating") < statuses.index("done")
        # dependency order is visible in the stream
        order = [e["module"] for e in events if e.get("status") == "done"]
        assert order.index("mux_2") < order.index("mux_4") < order.index("mux_64")
        assert events[-1].get("status") in ("succeeded", "failed")

    def test_revision_events_on_edit(self, client):
        api, _host = client
        view = api.post("/sessions", json={"prompt": support.FIG3_PROMPT_TEXT}).json()
        api.post(f"/sessions/{view['id']}/edits", json={"sentence": support.FIG3_EDIT_SENTENCE})
        api.post(f"/sessions/{view['id']}/approve")
        wait_terminal(api, view["id"])
        with api.stream("GET", f"/sessions/{view['id']}/events") as resp:
            revisions = [
                json.loads(line[len("data: ") :])
                for line in resp.iter_lines()
                if line.startswith("data: ")
            ]
        assert any(e.get("revision") == 1 for e in revisions)


class TestLibraryEndpoints:
    def test_library_listing_after_run(self, client):
        api, _host = client
        view = api.post(
            "/sessions", json={"prompt": support.MUX64_PROMPT_TEXT, "no_interact": True}
        ).json()
        wait_terminal(api, view["id"])
        body = api.get("/library").json()
        modules = {e["module_name"] for e in body["entries"]}
        assert {"mux_2", "mux_4", "mux_64"} <= modules
        assert all(e["weight"] == 0.5 for e in body["entries"])

    def test_gc_endpoint_runs(self, client):
        api, host = client
        view = api.post(
            "/sessions", json={"prompt": support.MUX64_PROMPT_TEXT, "no_interact": True}
        ).json()
        wait_terminal(api, view["id"])
        entry = next(e for e in host.orchestrator.library.entries() if e.module_name == "mux_2")
        entry.weight = 0.15
        entry.gc_marked = True
        resp = api.post("/library/gc")
        assert resp.status_code == 200
        body = resp.json()
        assert entry.id in body["removed"] or entry.id in body["refined"] or entry.id in body["deferred"]


class TestStatelessness:
    def test_restart_reproduces_get_view(self, tmp_path):
        config = GenerationConfig(deterministic_mode=True)
        sessions_dir = tmp_path / "sessions"

        def new_host():
            orch = Orchestrator(
                ReplayBackend(REPLAY),
                CodeLibrary(policy=config.library_policy()),
                config,
                sessions_dir=sessions_dir,
            )
            return SessionHost(orch)

        first = TestClient(create_app(new_host()))
        view = first.post(
            "/sessions", json={"prompt": support.MUX64_PROMPT_TEXT, "no_interact": True}
        ).json()
        final = wait_terminal(first, view["id"])

        reborn = TestClient(create_app(new_host()))
        replayed = reborn.get(f"/sessions/{view['id']}").json()
        assert replayed["status"] == final["status"]
        assert replayed["tasks"] == final["tasks"]
        assert replayed["usage"] == final["usage"]
        assert replayed["rounds"] == final["rounds"]

    def test_template_session_via_service(self, client):
        api, _host = client
        kernel = (FIXTURES / "kernels" / "fft_stage.kdsl").read_text()
        view = api.post(
            "/sessions",
            json={"kernel": kernel, "template": "cgra", "objective": "clock", "icl": True, "no_interact": True},
        ).json()
        final = wait_terminal(api, view["id"])
        assert final["status"] == "succeeded"
        assert final["rounds"][0]["ppa"]["passed"] is True
