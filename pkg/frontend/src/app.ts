import { StudioClient, StudioApiError } from "./api.js";
import { buildGridViewModel, renderGrid } from "./gridView.js";
import { pollRun } from "./poll.js";
import { buildReviewModel, renderReview } from "./review.js";
import type { RunReport, SessionView, Weights } from "./types.js";

interface AppState {
  client: StudioClient;
  bankId: string | null;
  session: SessionView | null;
  report: RunReport | null;
  weights: Weights;
  /** One entry per turn: engine pick and, when different, the user's pick. */
  turnLog: { runId: string; enginePick: number; userPick: number }[];
  pinTarget: [number, number] | null;
  busy: boolean;
  message: string;
}

const $ = (id: string) => document.getElementById(id)!;

export function createApp(root: HTMLElement, baseUrl: string): void {
  const state: AppState = {
    client: new StudioClient(baseUrl),
    bankId: null,
    session: null,
    report: null,
    weights: { w_text: 0.5, w_image: 0.5, w_quality: 0 },
    turnLog: [],
    pinTarget: null,
    busy: false,
    message: "",
  };

  root.innerHTML = `
<header class="topbar"><h1>dvp<span> studio</span></h1><span id="status" class="status-text"></span></header>
<main class="container">
  <section class="setup">
    <input id="bank-dir" placeholder="bank directory on the server">
    <input id="theme" placeholder="theme name">
    <button id="create-bank">load bank</button>
    <input id="prompt" placeholder="what should happen on the canvas?">
    <button id="create-session" disabled>extract elements</button>
  </section>
  <section id="grid-panel" class="panel"></section>
  <section class="controls">
    <label>text <input id="w-text" type="range" min="0" max="1" step="0.05" value="0.5"></label>
    <label>image <input id="w-image" type="range" min="0" max="1" step="0.05" value="0.5"></label>
    <label>quality <input id="w-quality" type="range" min="0" max="1" step="0.05" value="0"></label>
    <button id="launch" disabled>generate</button>
  </section>
  <section id="review-panel" class="panel"></section>
  <section id="turn-log" class="panel"></section>
</main>`;

  const status = (text: string) => {
    state.message = text;
    $("status").textContent = text;
  };

  const surface = (err: unknown) => {
    if (err instanceof StudioApiError) {
      status(`${err.code}: ${err.message}${err.retryable ? " — retry in a moment" : ""}`);
    } else {
      status(String(err));
    }
  };

  const renderGridPanel = () => {
    const session = state.session;
    if (!session) return;
    const assignment = { placements: {}, pins: session.pins };
    const model = buildGridViewModel(session.grid, assignment, session.stars, (id) =>
      state.client.imageUrl(session.bank_id, id),
    );
    $("grid-panel").innerHTML = renderGrid(model);
    for (const el of $("grid-panel").querySelectorAll<HTMLElement>(".cell")) {
      el.addEventListener("click", () => onCellClick(el.dataset["cell"]!));
    }
  };

  const renderReviewPanel = () => {
    if (!state.report) return;
    const model = buildReviewModel(state.report, (p) => state.client.artifactUrl(p), state.weights);
    $("review-panel").innerHTML = renderReview(model);
    for (const btn of $("review-panel").querySelectorAll<HTMLElement>(".select-candidate")) {
      btn.addEventListener("click", () => {
        const turn = state.turnLog[state.turnLog.length - 1];
        if (turn) turn.userPick = Number(btn.dataset["arrangement"]);
        renderTurnLog();
      });
    }
  };

  const renderTurnLog = () => {
    $("turn-log").innerHTML = state.turnLog
      .map(
        (t) =>
          `<div class="turn">run ${t.runId}: engine #${t.enginePick}` +
          (t.userPick !== t.enginePick ? ` → user chose #${t.userPick}` : "") +
          `</div>`,
      )
      .join("");
  };

  const onCellClick = async (cellKey: string) => {
    const session = state.session;
    if (!session || state.busy) return;
    const [row, col] = cellKey.split(",").map(Number) as [number, number];
    try {
      if (cellKey in session.pins) {
        const update = await state.client.unpinImage(session.session_id, [row, col]);
        session.pins = update.pins;
        status(`unpinned ${cellKey}`);
      } else {
        const imageId = window.prompt("image id to pin here:");
        if (!imageId) return;
        const update = await state.client.pinImage(session.session_id, [row, col], imageId);
        session.pins = update.pins;
        status(`pinned ${imageId.slice(0, 8)}… at ${cellKey}`);
      }
      renderGridPanel();
    } catch (err) {
      surface(err);
    }
  };

  $("create-bank").addEventListener("click", async () => {
    try {
      const bank = await state.client.createBank(
        ($("bank-dir") as HTMLInputElement).value,
        ($("theme") as HTMLInputElement).value || "theme",
      );
      state.bankId = bank.bank_id;
      ($("create-session") as HTMLButtonElement).disabled = false;
      status(`bank loaded: ${bank.size} images${bank.warnings.length ? ` (${bank.warnings.join("; ")})` : ""}`);
    } catch (err) {
      surface(err);
    }
  });

  $("create-session").addEventListener("click", async () => {
    if (!state.bankId) return;
    try {
      state.session = await state.client.createSession(
        state.bankId,
        ($("prompt") as HTMLInputElement).value,
      );
      ($("launch") as HTMLButtonElement).disabled = false;
      status(`elements: ${state.session.elements.map((e) => e.phrase).join(", ")}`);
      renderGridPanel();
    } catch (err) {
      surface(err);
    }
  });

  for (const id of ["w-text", "w-image", "w-quality"] as const) {
    $(id).addEventListener("input", () => {
      state.weights = {
        w_text: Number(($("w-text") as HTMLInputElement).value),
        w_image: Number(($("w-image") as HTMLInputElement).value),
        w_quality: Number(($("w-quality") as HTMLInputElement).value),
      };
      renderReviewPanel(); // re-rank only; no re-generation
    });
  }

  $("launch").addEventListener("click", async () => {
    const session = state.session;
    if (!session || state.busy) return;
    state.busy = true;
    try {
      const { run_id } = await state.client.startRun(session.session_id, {
        weights: state.weights,
      });
      status(`run ${run_id}…`);
      const done = await pollRun(state.client, run_id, {
        onUpdate: (s) => status(`run ${run_id}: ${s.status}`),
      });
      if (done.status === "failed") {
        status(`run failed: ${done.error}`);
        return;
      }
      state.report = done.report!;
      state.turnLog.push({
        runId: run_id,
        enginePick: state.report.selected_arrangement_id,
        userPick: state.report.selected_arrangement_id,
      });
      renderReviewPanel();
      renderTurnLog();
      status(`run ${run_id} done`);
    } catch (err) {
      surface(err);
    } finally {
      state.busy = false;
    }
  });
}

if (typeof document !== "undefined" && document.getElementById("app")) {
  createApp(
    document.getElementById("app")!,
    (document.getElementById("app")!.dataset["server"] ?? "http://127.0.0.1:8765").replace(/\/$/, ""),
  );
}
