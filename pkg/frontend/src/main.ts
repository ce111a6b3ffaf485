/* main.ts

Wires the pieces together: upload, viewport picking, tolerance slider,
query chips, material assignment, and export downloads. All selection
state lives in the store; this file only reflects it into the DOM. */

import { ApiError, PartMatchClient, type PartInfo } from "./api.js";
import { SelectionStore, type SelectionSnapshot } from "./state.js";
import {
  BASE_COLOR,
  CHIP_COLOR,
  PartViewer,
  SELECTED_COLOR,
  materialColor,
} from "./viewer.js";

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing element #${id}`);
  return node as T;
}

// Same-origin by default; `?api=http://host:port` points at a service on
// another origin (which must then allow this page via --cors-origin).
const apiBase =
  new URLSearchParams(window.location.search).get("api") ?? window.location.origin;
const client = new PartMatchClient(apiBase);
const toast = el<HTMLDivElement>("toast");

function showToast(message: string): void {
  toast.textContent = message;
  toast.classList.add("visible");
  setTimeout(() => toast.classList.remove("visible"), 4000);
}

function describeError(error: unknown): string {
  if (error instanceof ApiError) return `server error ${error.status}: ${error.message}`;
  return error instanceof Error ? error.message : String(error);
}

const store = new SelectionStore(client, {
  onError: (error) => showToast(describeError(error)),
});

const viewer = new PartViewer(el<HTMLCanvasElement>("viewport"), {
  onPick: (partId) => {
    const snap = store.snapshot();
    if (snap.chips.includes(partId)) store.removeChip(partId);
    else store.addChip(partId);
  },
});

let meshId: string | null = null;
let parts: PartInfo[] = [];

function repaint(snap: SelectionSnapshot): void {
  viewer.paint((partId) => {
    if (snap.chips.includes(partId)) return CHIP_COLOR;
    if (snap.selectedIds.has(partId)) return SELECTED_COLOR;
    const material = snap.assignments[partId];
    return material ? materialColor(material) : BASE_COLOR;
  });
}

function renderPanels(snap: SelectionSnapshot): void {
  const chipsBox = el<HTMLDivElement>("chips");
  chipsBox.replaceChildren(
    ...snap.chips.map((pid) => {
      const chip = document.createElement("button");
      chip.className = "chip";
      chip.textContent = `part ${pid} ×`;
      chip.addEventListener("click", () => store.removeChip(pid));
      return chip;
    }),
  );
  el<HTMLSpanElement>("selection-size").textContent = String(snap.selected.length);
  el<HTMLButtonElement>("assign").disabled =
    snap.selected.length === 0 || !el<HTMLInputElement>("material").value.trim();

  const list = el<HTMLUListElement>("parts");
  list.replaceChildren(
    ...parts.map((p) => {
      const item = document.createElement("li");
      const material = snap.assignments[p.part_id];
      item.textContent =
        `part ${p.part_id} (${p.material_name}, ${p.face_count} faces)` +
        (material ? ` → ${material}` : "");
      if (snap.selectedIds.has(p.part_id)) item.classList.add("selected");
      if (snap.chips.includes(p.part_id)) item.classList.add("chip-row");
      return item;
    }),
  );
}

store.subscribe((snap) => {
  repaint(snap);
  renderPanels(snap);
});

el<HTMLInputElement>("upload").addEventListener("change", async (event) => {
  const input = event.target as HTMLInputElement;
  const file = input.files?.[0];
  if (!file) return;
  try {
    el<HTMLSpanElement>("status").textContent = "uploading";
    const ingest = await client.uploadMesh(await file.arrayBuffer());
    meshId = ingest.mesh_id;
    el<HTMLSpanElement>("status").textContent = "ingesting";
    await client.waitUntilReady(meshId);
    const [partsResponse, geometry] = await Promise.all([
      client.parts(meshId),
      client.geometry(meshId),
    ]);
    parts = partsResponse.parts;
    viewer.load(geometry);
    store.setMesh(meshId);
    el<HTMLSpanElement>("status").textContent = `ready (${parts.length} parts)`;
  } catch (error) {
    el<HTMLSpanElement>("status").textContent = "failed";
    showToast(describeError(error));
  }
});

el<HTMLInputElement>("lambda").addEventListener("input", (event) => {
  const percent = Number((event.target as HTMLInputElement).value);
  el<HTMLSpanElement>("lambda-value").textContent = `${percent}%`;
  store.setLambdaPercent(percent);
});

el<HTMLInputElement>("material").addEventListener("input", () => {
  renderPanels(store.snapshot());
});

el<HTMLButtonElement>("assign").addEventListener("click", async () => {
  const material = el<HTMLInputElement>("material").value.trim();
  try {
    await store.assignSelected(material);
    showToast(`assigned ${material}`);
  } catch (error) {
    showToast(describeError(error));
  }
});

function download(name: string, body: BlobPart, type: string): void {
  const blob = new Blob([body], { type });
  const url = URL.createObjectURL(blob);
  const link = document.createElement("a");
  link.href = url;
  link.download = name;
  link.click();
  URL.revokeObjectURL(url);
}

el<HTMLButtonElement>("export-json").addEventListener("click", async () => {
  if (meshId === null) return;
  try {
    const data = await client.exportJson(meshId);
    download("export.json", JSON.stringify(data, null, 2), "application/json");
  } catch (error) {
    showToast(describeError(error));
  }
});

el<HTMLButtonElement>("export-obj").addEventListener("click", async () => {
  if (meshId === null) return;
  try {
    download("export.obj", await client.exportObj(meshId), "text/plain");
  } catch (error) {
    showToast(describeError(error));
  }
});
