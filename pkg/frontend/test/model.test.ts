import assert from "node:assert/strict";
import test from "node:test";

import {
  SessionView,
  UiEvent,
  applyEvent,
  applyEvents,
  diffLines,
  initialState,
  ppaHistory,
  roleLabel,
  setSketch,
} from "../src/model.js";

function sampleSession(): SessionView {
  return {
    id: "sess-1",
    mode: "simple",
    design: "mux64",
    status: "awaiting_user",
    failure_stage: null,
    revision: 0,
    tasks: [
      { module_name: "mux_2", status: "pending" },
      { module_name: "mux_4", status: "pending" },
      { module_name: "mux_64", status: "pending" },
    ],
    rounds: [],
    usage: {},
    provenance: {},
  };
}

test("task events update exactly one task", () => {
  const state = initialState(sampleSession());
  const next = applyEvent(state, { kind: "task", seq: 0, module: "mux_2", status: "generating" });
  assert.equal(next.session.tasks[0].status, "generating");
  assert.equal(next.session.tasks[1].status, "pending");
});

test("duplicate seq is ignored with no state change", () => {
  const state = initialState(sampleSession());
  const once = applyEvent(state, { kind: "task", seq: 3, module: "mux_2", status: "done" });
  const twice = applyEvent(once, { kind: "task", seq: 3, module: "mux_2", status: "failed" });
  assert.equal(twice, once);
});

test("revision events advance monotonically", () => {
  const state = initialState(sampleSession());
  const up = applyEvent(state, { kind: "revision", seq: 0, revision: 1 });
  assert.equal(up.session.revision, 1);
  const stale = applyEvent(up, { kind: "revision", seq: 1, revision: 1 });
  assert.equal(stale.session.revision, 1);
});

test("round events append to the ppa history", () => {
  const state = initialState(sampleSession());
  const next = applyEvent(state, {
    kind: "round",
    seq: 0,
    round: { config: {}, ppa: { power_mw: 1, clock_ns: 0.8, area_um2: 640, passed: false }, conflicts: [] },
  });
  assert.equal(ppaHistory(next).length, 1);
  assert.equal(ppaHistory(next)[0].clock_ns, 0.8);
});

test("replaying a captured event log reproduces the final model", () => {
  const log: UiEvent[] = [
    { kind: "task", seq: 0, module: "mux_2", status: "generating" },
    { kind: "task", seq: 1, module: "mux_2", status: "done" },
    { kind: "task", seq: 2, module: "mux_4", status: "generating" },
    { kind: "task", seq: 3, module: "mux_4", status: "done" },
    { kind: "task", seq: 4, module: "mux_64", status: "generating" },
    { kind: "task", seq: 5, module: "mux_64", status: "done" },
    { kind: "status", seq: 6, status: "succeeded" },
  ];
  const replayedOnce = applyEvents(initialState(sampleSession()), log);
  const replayedTwice = applyEvents(initialState(sampleSession()), [...log, ...log]);
  assert.deepEqual(replayedOnce.session, replayedTwice.session);
  assert.equal(replayedOnce.session.status, "succeeded");
  assert.ok(replayedOnce.session.tasks.every((t) => t.status === "done"));
});

test("setSketch keeps the previous revision text for diffing", () => {
  let state = initialState(sampleSession());
  state = setSketch(state, { module: "mux_4", revision: 0, text: "module mux_4 ();\nendmodule", source: null });
  state = setSketch(state, {
    module: "mux_4",
    revision: 1,
    text: "module mux_4 ();\n  mux_2 m0 (.port(port));\nendmodule",
    source: null,
  });
  assert.equal(state.previousSketchText["mux_4"], "module mux_4 ();\nendmodule");
});

test("diffLines marks inserted lines as additions", () => {
  const before = "module m ();\n  /* body block */\nendmodule";
  const after = "module m ();\n  mux_4 MUX_1 (.port(port));\n  /* body block */\nendmodule";
  const diff = diffLines(before, after);
  const added = diff.filter((l) => l.kind === "add").map((l) => l.text);
  assert.deepEqual(added, ["  mux_4 MUX_1 (.port(port));"]);
  assert.ok(diff.every((l) => l.kind !== "del"));
});

test("role labels match the displayed chip vocabulary", () => {
  assert.equal(roleLabel("root_verb"), "root");
  assert.equal(roleLabel("np_modifier"), "NP");
  assert.equal(roleLabel("dobj"), "dobj");
});
