// Browser wiring: bootstraps from a full GET, applies ordered stream
// events, and routes every user action through the documented endpoints.

import {
  ApiStatusError,
  approveSession,
  createSession,
  getSession,
  getSketch,
  postEdit,
  streamEvents,
} from "./api.js";
import { UiState, applyEvent, initialState, isTerminal, selectModule, setSketch } from "./model.js";
import { renderApp } from "./render.js";

const base = "";
let state: UiState | null = null;
let sessionId: string | null = null;

function mount(): void {
  const root = document.getElementById("app");
  if (root === null || state === null) return;
  root.innerHTML = renderApp(state);
  wire(root);
}

function update(next: UiState): void {
  state = next;
  mount();
}

async function refreshSketch(module: string): Promise<void> {
  if (state === null || sessionId === null) return;
  try {
    const sketch = await getSketch(base, sessionId, module);
    update(setSketch(state, sketch));
  } catch (error) {
    console.warn(`sketch fetch failed for ${module}`, error);
  }
}

function wire(root: HTMLElement): void {
  root.querySelectorAll<HTMLElement>(".tree li").forEach((item) => {
    item.addEventListener("click", () => {
      const module = item.dataset.module;
      if (module && state !== null) {
        update(selectModule(state, module));
        void refreshSketch(module);
      }
    });
  });

  const input = root.querySelector<HTMLInputElement>("#command");
  input?.addEventListener("input", () => {
    if (state !== null) state.pendingCommand = input.value;
  });

  root.querySelector<HTMLButtonElement>("#submit-edit")?.addEventListener("click", () => {
    void submitEdit();
  });
  root.querySelector<HTMLButtonElement>("#approve")?.addEventListener("click", () => {
    if (sessionId !== null) void approveSession(base, sessionId);
  });
  root.querySelector<HTMLButtonElement>("#retry")?.addEventListener("click", () => {
    void bootstrap();
  });
}

async function submitEdit(): Promise<void> {
  if (state === null || sessionId === null) return;
  const sentence = state.pendingCommand.trim();
  if (sentence.length === 0) return;
  try {
    const response = await postEdit(base, sessionId, sentence);
    if (response.accepted) {
      update({
        ...state,
        pendingCommand: "",
        editError: null,
        lsTree: response.ls_tree?.tokens ?? null,
      });
      if (state.selectedModule !== null) await refreshSketch(state.selectedModule);
    } else {
      // rejected: keep the typed text, surface the parser error inline
      update({ ...state, editError: response.error ?? "rejected", lsTree: null });
    }
  } catch (error) {
    if (error instanceof ApiStatusError && error.status === 409) {
      update({ ...state, inputDisabled: true, editError: error.message });
    } else {
      // network failure: no optimistic mutation, offer a retry banner
      update({ ...state, banner: `edit failed: ${String(error)}` });
    }
  }
}

async function bootstrap(): Promise<void> {
  const params = new URLSearchParams(window.location.search);
  sessionId = params.get("session");
  if (sessionId === null) {
    const promptText = params.get("prompt") ?? "";
    if (promptText.length === 0) {
      document.getElementById("app")!.innerHTML =
        `<div class="banner">open with ?session=<id> or ?prompt=<description></div>`;
      return;
    }
    const created = await createSession(base, { prompt: promptText });
    sessionId = created.id;
  }

  let view;
  try {
    view = await getSession(base, sessionId);
  } catch (error) {
    document.getElementById("app")!.innerHTML =
      `<div class="banner error">session fetch failed: ${String(error)} <button onclick="location.reload()">retry</button></div>`;
    return;
  }
  update(initialState(view));
  if (state !== null && state.selectedModule !== null) void refreshSketch(state.selectedModule);

  streamEvents(
    base,
    sessionId,
    (event) => {
      if (state === null) return;
      const next = applyEvent(state, event);
      if (event.kind === "status" && typeof event.status === "string" && isTerminal(event.status)) {
        update({ ...next, inputDisabled: true });
        if (next.selectedModule !== null) void refreshSketch(next.selectedModule);
      } else {
        update(next);
      }
    },
    async () => {
      // dropped stream: full resync, flag staleness until it lands
      if (state !== null) update({ ...state, stale: true });
      try {
        const fresh = await getSession(base, sessionId!);
        if (state !== null) {
          update({ ...initialState(fresh), sketches: state.sketches, selectedModule: state.selectedModule });
        }
        return !isTerminal(fresh.status);
      } catch {
        return true; // keep retrying; the banner already shows staleness
      }
    },
  );
}

void bootstrap();
