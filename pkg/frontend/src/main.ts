/** DOM wiring for the scenario editor; all logic lives in the sibling modules. */

import { ApiClient, ApiError } from "./api.js";
import { bboxFromDrag, bboxToScreenRect, profileColumn } from "./bbox.js";
import { drawProfileChart } from "./chart.js";
import { initialState, submitAndPoll } from "./editor.js";
import type { EditorState } from "./editor.js";
import type { ProfilePoint, ResultStats, ScenarioKind } from "./types.js";

const api = new ApiClient();
const state: EditorState = initialState();

const el = <T extends HTMLElement>(id: string): T => {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing #${id}`);
  return node as T;
};

const mapCanvas = el<HTMLCanvasElement>("map-canvas");
const chartCanvas = el<HTMLCanvasElement>("profile-canvas");
const sceneSelect = el<HTMLSelectElement>("scene-select");
const kindSelect = el<HTMLSelectElement>("kind-select");
const statusLine = el<HTMLDivElement>("status-line");
const statsCard = el<HTMLDivElement>("stats-card");
const historyList = el<HTMLUListElement>("run-history");
const overlayToggle = el<HTMLInputElement>("overlay-toggle");

let baseImage: HTMLImageElement | null = null;
let diffImage: HTMLImageElement | null = null;
let dragStart: { x: number; y: number } | null = null;

function setStatus(text: string, isError = false) {
  statusLine.textContent = text;
  statusLine.className = isError ? "status error" : "status";
}

function canvasPoint(event: MouseEvent) {
  const rect = mapCanvas.getBoundingClientRect();
  return { x: event.clientX - rect.left, y: event.clientY - rect.top };
}

function redrawMap() {
  const ctx = mapCanvas.getContext("2d");
  if (!ctx) return;
  ctx.imageSmoothingEnabled = false;
  ctx.clearRect(0, 0, mapCanvas.width, mapCanvas.height);
  const z = state.view.zoom;
  if (baseImage) {
    ctx.drawImage(baseImage, state.view.offsetX, state.view.offsetY,
      baseImage.width * z, baseImage.height * z);
  }
  if (diffImage && overlayToggle.checked) {
    ctx.globalAlpha = 0.55;
    ctx.drawImage(diffImage, state.view.offsetX, state.view.offsetY,
      diffImage.width * z, diffImage.height * z);
    ctx.globalAlpha = 1.0;
  }
  if (state.draftBbox) {
    const rect = bboxToScreenRect(state.draftBbox, state.view);
    ctx.strokeStyle = "#ff2222";
    ctx.lineWidth = 2;
    ctx.strokeRect(rect.x, rect.y, rect.w, rect.h);
    const col = profileColumn(state.draftBbox);
    const x = col * z + state.view.offsetX + z / 2;
    ctx.strokeStyle = "#2244ff";
    ctx.lineWidth = 1;
    ctx.beginPath();
    ctx.moveTo(x, state.view.offsetY);
    ctx.lineTo(x, state.view.offsetY + state.sceneDims.height * z);
    ctx.stroke();
  }
}

async function loadScene(sceneId: string) {
  state.activeSceneId = sceneId;
  state.draftBbox = null;
  diffImage = null;
  const img = new Image();
  img.onload = () => {
    baseImage = img;
    state.sceneDims = { height: img.height, width: img.width };
    const fit = Math.max(1, Math.floor(
      Math.min(mapCanvas.width / img.width, mapCanvas.height / img.height)));
    state.view = { zoom: fit, offsetX: 0, offsetY: 0 };
    redrawMap();
    setStatus(`scene ${sceneId}: ${img.width}x${img.height} px`);
  };
  img.onerror = () => setStatus(`could not load LST image for ${sceneId}`, true);
  img.src = api.sceneLstUrl(sceneId) + `?t=${Date.now()}`;
}

function renderStats(outcome: { result: { stats: ResultStats; clamped_fraction: number } }) {
  const stats = outcome.result.stats;
  statsCard.innerHTML = "";
  const rows: [string, string][] = [
    ["mean Δ inside", `${stats.mean_delta_inside.toFixed(3)} °C`],
    ["mean Δ ring", `${stats.mean_delta_outside_ring.toFixed(3)} °C`],
    ["max |Δ|", `${stats.max_abs_delta.toFixed(3)} °C`],
  ];
  if (outcome.result.clamped_fraction > 0) {
    rows.push(["clamped", `${(outcome.result.clamped_fraction * 100).toFixed(1)} %`]);
  }
  for (const [label, value] of rows) {
    const div = document.createElement("div");
    div.className = "stat";
    div.innerHTML = `<span class="label">${label}</span><span class="value">${value}</span>`;
    statsCard.appendChild(div);
  }
}

function renderHistory() {
  historyList.innerHTML = "";
  for (const entry of [...state.runHistory].reverse()) {
    const li = document.createElement("li");
    li.textContent = `${entry.scenario_id} [${entry.kind}] ` +
      `Δin ${entry.stats.mean_delta_inside.toFixed(2)} °C, ` +
      `max|Δ| ${entry.stats.max_abs_delta.toFixed(2)} °C`;
    historyList.appendChild(li);
  }
}

function renderProfile(points: ProfilePoint[]) {
  const ctx = chartCanvas.getContext("2d");
  if (ctx) {
    drawProfileChart(ctx, points, {
      width: chartCanvas.width, height: chartCanvas.height,
      marginLeft: 48, marginBottom: 28, marginTop: 8, marginRight: 8,
    });
  }
}

function syncFormVisibility() {
  const kind = kindSelect.value as ScenarioKind;
  state.form.kind = kind;
  el("swap-fields").style.display = kind === "pixel_swap" ? "" : "none";
  el("retarget-fields").style.display = kind === "index_retarget" ? "" : "none";
  el("forcing-fields").style.display = kind === "forcing" ? "" : "none";
}

async function onRun() {
  state.form.donor = (el<HTMLSelectElement>("donor-select").value as "forest" | "urban");
  state.form.indexKind = el<HTMLSelectElement>("index-select").value as never;
  state.form.targetValue = el<HTMLInputElement>("target-input").value;
  state.form.adjustedBand = el<HTMLSelectElement>("band-select").value;
  state.form.rcp = el<HTMLSelectElement>("rcp-select").value as never;
  state.form.horizonYear = parseInt(el<HTMLSelectElement>("year-select").value, 10);

  setStatus("running scenario…");
  try {
    const outcome = await submitAndPoll(state, api);
    const diff = new Image();
    diff.onload = () => {
      diffImage = diff;
      overlayToggle.checked = true;
      redrawMap();
    };
    diff.src = api.diffPngUrl(outcome.scenarioId) + `?t=${Date.now()}`;
    renderStats(outcome);
    renderProfile(outcome.profile);
    renderHistory();
    setStatus(`scenario ${outcome.scenarioId} ${outcome.cached ? "(cached)" : "done"}`);
  } catch (err) {
    if (err instanceof ApiError) {
      setStatus(state.formError ?? err.message, true);
    } else {
      setStatus(`unexpected failure: ${err}`, true);
    }
  }
}

async function boot() {
  syncFormVisibility();
  kindSelect.addEventListener("change", syncFormVisibility);
  overlayToggle.addEventListener("change", redrawMap);
  el<HTMLButtonElement>("run-button").addEventListener("click", () => void onRun());

  mapCanvas.addEventListener("mousedown", (e) => {
    dragStart = canvasPoint(e);
  });
  mapCanvas.addEventListener("mousemove", (e) => {
    if (!dragStart) return;
    state.draftBbox = bboxFromDrag(dragStart, canvasPoint(e), state.view,
      state.sceneDims);
    redrawMap();
  });
  window.addEventListener("mouseup", (e) => {
    if (!dragStart) return;
    state.draftBbox = bboxFromDrag(dragStart, canvasPoint(e as MouseEvent),
      state.view, state.sceneDims);
    dragStart = null;
    redrawMap();
  });
  el<HTMLButtonElement>("zoom-in").addEventListener("click", () => {
    state.view.zoom = Math.min(state.view.zoom * 2, 32);
    redrawMap();
  });
  el<HTMLButtonElement>("zoom-out").addEventListener("click", () => {
    state.view.zoom = Math.max(state.view.zoom / 2, 1);
    redrawMap();
  });

  try {
    const scenes = await api.listScenes();
    sceneSelect.innerHTML = "";
    for (const scene of scenes) {
      const option = document.createElement("option");
      option.value = scene.scene_id;
      option.textContent = `${scene.scene_id} (${scene.date})`;
      sceneSelect.appendChild(option);
    }
    sceneSelect.addEventListener("change", () => void loadScene(sceneSelect.value));
    if (scenes.length > 0) {
      sceneSelect.value = scenes[0].scene_id;
      await loadScene(scenes[0].scene_id);
    } else {
      setStatus("no scenes in the store; run the ingest or demo-data command", true);
    }
  } catch (err) {
    setStatus(`cannot reach the scenario service: ${err}`, true);
  }
}

void boot();
