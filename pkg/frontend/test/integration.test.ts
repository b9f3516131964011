// Round trip against a live service running the bundled replay fixtures:
// submit the interactive edit sentence through the client, watch the event
// stream, and check that replaying the captured log reproduces the final
// rendered model.

import assert from "node:assert/strict";
import { spawn, ChildProcess } from "node:child_process";
import { mkdtempSync, rmSync } from "node:fs";
import { tmpdir } from "node:os";
import { join, resolve } from "node:path";
import test, { after, before } from "node:test";

import { approveSession, createSession, getSession, getSketch, postEdit, streamEvents } from "../src/api.js";
import { UiEvent, applyEvents, initialState, isTerminal, setSketch } from "../src/model.js";
import { renderApp, renderSketchPane } from "../src/render.js";
import { selectModule } from "../src/model.js";

// compiled test lives at frontend/dist/test/, the repo root is three up
const REPO_ROOT = resolve(import.meta.dirname ?? ".", "..", "..", "..");
const FIXTURES = join(REPO_ROOT, "src", "hivegen", "fixtures", "replay", "e2e.jsonl");
const PORT = 8931 + (process.pid % 500);
const BASE = `http://127.0.0.1:${PORT}`;

const EDIT_SENTENCE = "Add an instance MUX_1 of module mux_4 within GPE_4";
const GPE_PROMPT =
  "Design a grid processing element GPE_4 with a 4-bit data input, a 2-bit" +
  " select, and one output, with a 4-to-1 multiplexer module mux_4 available" +
  " as a building block.";
const MUX64_PROMPT =
  "Design a 64-to-1 single-bit multiplexer named mux_64, built hierarchically" +
  " from 4-to-1 multiplexers (mux_4), which are themselves built from 2-to-1" +
  " multiplexers (mux_2). 64 data inputs, a 6-bit select, one output y.";

let server: ChildProcess | null = null;
let workdir: string;

async function waitForServer(): Promise<void> {
  const deadline = Date.now() + 30_000;
  for (;;) {
    try {
      const response = await fetch(`${BASE}/library`);
      if (response.ok) return;
    } catch {
      // not up yet
    }
    if (Date.now() > deadline) throw new Error("service did not come up");
    await new Promise((resolveSleep) => setTimeout(resolveSleep, 150));
  }
}

before(async () => {
  workdir = mkdtempSync(join(tmpdir(), "hivegen-ui-"));
  server = spawn(
    "python3",
    [
      "-m", "hivegen.cli", "serve",
      "--port", String(PORT),
      "--backend", "replay",
      "--fixtures", FIXTURES,
      "--library", join(workdir, "library.jsonl"),
      "--sessions-dir", join(workdir, "sessions"),
      "--deterministic",
      "--simulator", "none",
    ],
    { cwd: REPO_ROOT, stdio: ["ignore", "pipe", "pipe"] },
  );
  server.stderr?.on("data", (chunk) => process.stderr.write(`[serve] ${chunk}`));
  await waitForServer();
});

after(() => {
  server?.kill("SIGTERM");
  rmSync(workdir, { recursive: true, force: true });
});

async function waitTerminal(id: string): Promise<void> {
  const deadline = Date.now() + 30_000;
  for (;;) {
    const view = await getSession(BASE, id);
    if (isTerminal(view.status)) return;
    if (Date.now() > deadline) throw new Error("session never finished");
    await new Promise((resolveSleep) => setTimeout(resolveSleep, 100));
  }
}

test("edit round trip: accepted, instantiation line visible, log replay matches", async () => {
  const created = await createSession(BASE, { prompt: GPE_PROMPT });
  assert.equal(created.status, "awaiting_user");

  // capture the event stream the way the live page does
  const captured: UiEvent[] = [];
  const stream = streamEvents(
    BASE,
    created.id,
    (event) => captured.push(event),
    async () => true,
  );

  const edit = await postEdit(BASE, created.id, EDIT_SENTENCE);
  assert.equal(edit.accepted, true);
  assert.deepEqual(edit.command, {
    type: "AddInstance",
    module: "mux_4",
    instance: "MUX_1",
    parent: "GPE_4",
  });
  assert.equal(edit.new_revision, 1);
  const roles = Object.fromEntries((edit.ls_tree?.tokens ?? []).map((t) => [t.text, t.role]));
  assert.equal(roles["Add"], "root_verb");
  assert.equal(roles["MUX_1"], "np_modifier");

  // the sketch pane shows the byte-exact instantiation line
  let state = selectModule(initialState(created), "GPE_4");
  state = setSketch(state, await getSketch(BASE, created.id, "GPE_4"));
  assert.ok(renderSketchPane(state).includes("mux_4 MUX_1 (.port(port));"));

  await approveSession(BASE, created.id);
  await waitTerminal(created.id);
  await stream.done; // server closes the stream at the terminal status

  // replaying the captured log over the initial snapshot reproduces the
  // final rendered model
  const replayed = applyEvents(initialState(created), captured);
  const finalView = await getSession(BASE, created.id);
  const fresh = initialState(finalView);
  assert.equal(replayed.session.status, finalView.status);
  assert.equal(replayed.session.revision, finalView.revision);
  assert.deepEqual(replayed.session.tasks, finalView.tasks);
  assert.equal(renderApp(replayed), renderApp(fresh));

  // after completion the generated source carries the instance
  const finalSketch = await getSketch(BASE, created.id, "GPE_4");
  assert.ok(finalSketch.source !== null && finalSketch.source.includes("MUX_1"));
});

test("rejected sentences keep the error inline and accepted=false", async () => {
  const created = await createSession(BASE, { prompt: GPE_PROMPT });
  const edit = await postEdit(BASE, created.id, "Frobnicate the flux");
  assert.equal(edit.accepted, false);
  assert.ok(edit.error !== undefined && edit.error.includes("UnrecognizedVerb"));
});

test("mux64 fixture session streams ordered task transitions", async () => {
  const created = await createSession(BASE, { prompt: MUX64_PROMPT });
  const captured: UiEvent[] = [];
  const stream = streamEvents(BASE, created.id, (e) => captured.push(e), async () => true);
  await approveSession(BASE, created.id);
  await waitTerminal(created.id);
  await stream.done;

  const replayed = applyEvents(initialState(created), captured);
  assert.equal(replayed.session.status, "succeeded");
  const doneOrder = captured
    .filter((e) => e.kind === "task" && e.status === "done")
    .map((e) => e.module);
  assert.ok(doneOrder.indexOf("mux_2") < doneOrder.indexOf("mux_4"));
  assert.ok(doneOrder.indexOf("mux_4") < doneOrder.indexOf("mux_64"));

  const seqs = captured.map((e) => e.seq);
  assert.deepEqual(seqs, [...seqs].sort((a, b) => a - b));
  assert.equal(new Set(seqs).size, seqs.length);
});
