/** Viewer bootstrap: wires the four surfaces (point cloud, parameter panel,
 * query dialog, preview) to the service API.
 *
 * Interaction contract: drag orbits (3D) or pans (2D); wheel zooms; plain
 * click picks; shift+drag sweeps the selector; shift+wheel resizes it; keys
 * 1..9 pick the active label; Enter applies it to the current selection.
 * Selection membership always comes from the server response.
 */

import * as THREE from "three";

import { ApiClient } from "./api.js";
import { OrbitRig } from "./camera.js";
import { labelColor, UNLABELED } from "./colors.js";
import { pixelToNdc, rayThroughNdc, selectorCenter, worldPerPixel } from "./picking.js";
import { LabelPoller } from "./poll.js";
import { renderPreview, renderPreviewError } from "./preview.js";
import {
  applyPose,
  boundsOf,
  buildScene,
  placeQueryMarker,
  placeSelector,
  recolor,
  setPoints,
} from "./scene.js";
import { ViewStateStore } from "./state.js";
import type { LayoutInfo, Neighbor } from "./types.js";

const api = new ApiClient("");
const store = new ViewStateStore();

const canvas = document.getElementById("view") as HTMLCanvasElement;
const projectSelect = document.getElementById("project-select") as HTMLSelectElement;
const reducerSelect = document.getElementById("reducer-select") as HTMLSelectElement;
const dimSelect = document.getElementById("dim-select") as HTMLSelectElement;
const fitButton = document.getElementById("fit-button") as HTMLButtonElement;
const labelList = document.getElementById("label-list") as HTMLDivElement;
const pointScaleInput = document.getElementById("point-scale") as HTMLInputElement;
const selectorRadiusInput = document.getElementById("selector-radius") as HTMLInputElement;
const statusLine = document.getElementById("status") as HTMLDivElement;
const queryInput = document.getElementById("query-input") as HTMLInputElement;
const queryButton = document.getElementById("query-button") as HTMLButtonElement;
const neighborList = document.getElementById("neighbor-list") as HTMLUListElement;
const previewPane = document.getElementById("preview") as HTMLDivElement;
const selectionBadge = document.getElementById("selection-badge") as HTMLDivElement;

const handles = buildScene(60, canvas.clientWidth / Math.max(1, canvas.clientHeight));
const rig = new OrbitRig();
let renderer: THREE.WebGLRenderer | null = null;

let layoutInfo: LayoutInfo | null = null;
let positions: Float32Array | null = null;
let selection: string[] = [];
let selectorPos: number[] | null = null;

function status(message: string, isError = false): void {
  statusLine.textContent = message;
  statusLine.classList.toggle("error", isError);
}

function toast(message: string, retry?: () => void): void {
  status(message, true);
  if (retry) {
    const button = document.createElement("button");
    button.textContent = "retry";
    button.onclick = () => {
      status("");
      retry();
    };
    statusLine.appendChild(button);
  }
}

function render(): void {
  applyPose(handles, rig);
  if (renderer) renderer.render(handles.scene, handles.camera);
}

function labelOfRow(row: number): number | undefined {
  if (!layoutInfo) return undefined;
  const rid = layoutInfo.record_ids[row];
  return layoutInfo.labels[rid];
}

async function refreshProjects(): Promise<void> {
  const projects = await api.listProjects();
  projectSelect.replaceChildren(
    ...projects.map((p) => {
      const option = document.createElement("option");
      option.value = p.project_id;
      option.textContent = `${p.name} (${p.records})`;
      return option;
    }),
  );
}

function renderLabelPicker(): void {
  labelList.replaceChildren();
  if (!layoutInfo) return;
  const active = store.get().activeLabel;
  layoutInfo.label_schema.forEach((name, i) => {
    const chip = document.createElement("button");
    chip.className = "label-chip" + (active === name ? " active" : "");
    const [r, g, b] = labelColor(i);
    chip.style.setProperty("--chip", `rgb(${r * 255},${g * 255},${b * 255})`);
    chip.textContent = `${i + 1} ${name}`;
    chip.onclick = () => {
      store.setActiveLabel(name);
      renderLabelPicker();
    };
    labelList.appendChild(chip);
  });
  const none = document.createElement("span");
  const [r, g, b] = UNLABELED;
  none.className = "label-chip";
  none.style.setProperty("--chip", `rgb(${r * 255},${g * 255},${b * 255})`);
  none.textContent = "unlabeled";
  labelList.appendChild(none);
}

async function loadLayout(layoutId: string): Promise<void> {
  layoutInfo = await api.layoutInfo(layoutId);
  const cloud = await api.layoutPoints(layoutId);
  positions = setPoints(handles, cloud, labelOfRow, store.get().pointScale);
  const bounds = boundsOf(positions);
  rig.planar = cloud.outDim === 2;
  rig.frame(bounds.min, bounds.max);
  store.setLayout(layoutId, cloud.outDim);
  store.setSelectorRadius(
    Math.max(
      1e-3,
      0.06 *
        Math.max(
          bounds.max.x - bounds.min.x,
          bounds.max.y - bounds.min.y,
          bounds.max.z - bounds.min.z,
        ),
    ),
  );
  selectorRadiusInput.value = store.get().selectorRadius.toFixed(3);
  renderLabelPicker();
  status(`layout ${layoutId}: ${cloud.count} points, ${cloud.outDim}D`);
  render();
}

async function fitAndLoad(): Promise<void> {
  const projectId = projectSelect.value;
  if (!projectId) return;
  const reducer = reducerSelect.value;
  const outDim = Number(dimSelect.value);
  status(`fitting ${reducer} (${outDim}D)…`);
  try {
    const jobId = await api.requestLayout(projectId, reducer, outDim);
    const ticket = await api.waitForJob(jobId);
    if (ticket.state === "failed" || !ticket.result_ref) {
      toast(`fit failed: ${ticket.error}`, fitAndLoad);
      return;
    }
    await loadLayout(ticket.result_ref);
  } catch (err) {
    toast(`fit failed: ${String(err)}`, fitAndLoad);
  }
}

const poller = new LabelPoller(async () => {
  const state = store.get();
  if (!state.activeLayoutId || !layoutInfo) return;
  layoutInfo = await api.layoutInfo(state.activeLayoutId);
  recolor(handles, layoutInfo.record_ids.length, labelOfRow);
  render();
});

async function showPreview(recordId: string): Promise<void> {
  if (!layoutInfo) return;
  try {
    const preview = await api.preview(layoutInfo.project_id, recordId);
    renderPreview(previewPane, recordId, preview);
  } catch (err) {
    renderPreviewError(previewPane, recordId, String(err));
  }
}

function perspective() {
  return {
    fovYRadians: (handles.camera.fov * Math.PI) / 180,
    aspect: canvas.clientWidth / Math.max(1, canvas.clientHeight),
  };
}

async function pickAt(px: number, py: number): Promise<void> {
  const state = store.get();
  if (!state.activeLayoutId || !layoutInfo) return;
  const [nx, ny] = pixelToNdc(px, py, canvas.clientWidth, canvas.clientHeight);
  try {
    let picked: string | null;
    if (state.mode === "2D") {
      const ray = rayThroughNdc(rig.pose(), perspective(), nx, ny);
      const t = -ray.origin[2] / ray.direction[2];
      const point = [ray.origin[0] + t * ray.direction[0], ray.origin[1] + t * ray.direction[1]];
      const radius = 6 * worldPerPixel(perspective(), rig.distance, canvas.clientHeight);
      picked = await api.pick2d(state.activeLayoutId, point, radius);
    } else {
      const ray = rayThroughNdc(rig.pose(), perspective(), nx, ny);
      picked = await api.pick(state.activeLayoutId, ray.origin, ray.direction, 0.015);
    }
    if (picked) {
      selection = [picked];
      selectionBadge.textContent = `selected: 1`;
      await showPreview(picked);
    }
  } catch (err) {
    if ((err as Error).name !== "AbortError") toast(`pick failed: ${String(err)}`);
  }
}

async function sweepSelect(px: number, py: number): Promise<void> {
  const state = store.get();
  if (!state.activeLayoutId) return;
  const [nx, ny] = pixelToNdc(px, py, canvas.clientWidth, canvas.clientHeight);
  const ray = rayThroughNdc(rig.pose(), perspective(), nx, ny);
  let center = selectorCenter(rig.pose(), ray);
  if (state.mode === "2D") {
    const t = -ray.origin[2] / ray.direction[2];
    center = [ray.origin[0] + t * ray.direction[0], ray.origin[1] + t * ray.direction[1]];
  }
  selectorPos = center;
  placeSelector(handles, [center[0], center[1], center[2] ?? 0], state.selectorRadius);
  render();
  try {
    selection = await api.select(state.activeLayoutId, center, state.selectorRadius);
    selectionBadge.textContent = `selected: ${selection.length}`;
  } catch (err) {
    if ((err as Error).name !== "AbortError") toast(`select failed: ${String(err)}`);
  }
}

async function applyLabel(): Promise<void> {
  const state = store.get();
  if (!layoutInfo || !state.activeLabel || selection.length === 0) return;
  try {
    const result = await api.annotate(layoutInfo.project_id, selection, state.activeLabel);
    status(`labeled ${result.changed} records as ${state.activeLabel} (rev ${result.revision})`);
    layoutInfo = await api.layoutInfo(state.activeLayoutId!);
    recolor(handles, layoutInfo.record_ids.length, labelOfRow);
    render();
  } catch (err) {
    toast(`annotate failed: ${String(err)}`, applyLabel);
  }
}

async function runQuery(): Promise<void> {
  const state = store.get();
  const text = queryInput.value.trim();
  if (!state.activeLayoutId || !text) return;
  try {
    const result = await api.query(state.activeLayoutId, text, 10);
    const scale = positions ? Math.max(...positions.map(Math.abs)) / 80 : 1;
    placeQueryMarker(handles, result.position, Math.max(scale, 1e-3));
    render();
    neighborList.replaceChildren(
      ...result.neighbors.map((n: Neighbor) => {
        const item = document.createElement("li");
        const link = document.createElement("a");
        link.textContent = `${n.record_id} (${n.distance.toFixed(3)})`;
        link.href = "#";
        link.onclick = (ev) => {
          ev.preventDefault();
          void showPreview(n.record_id);
        };
        item.appendChild(link);
        return item;
      }),
    );
  } catch (err) {
    toast(`query failed: ${String(err)}`);
  }
}

function bindInteractions(): void {
  let dragging = false;
  let sweeping = false;
  let moved = false;
  let lastX = 0;
  let lastY = 0;

  canvas.addEventListener("pointerdown", (ev) => {
    dragging = true;
    sweeping = ev.shiftKey;
    moved = false;
    lastX = ev.offsetX;
    lastY = ev.offsetY;
    canvas.setPointerCapture(ev.pointerId);
  });

  canvas.addEventListener("pointermove", (ev) => {
    if (!dragging) return;
    const dx = ev.offsetX - lastX;
    const dy = ev.offsetY - lastY;
    if (Math.abs(dx) + Math.abs(dy) > 2) moved = true;
    lastX = ev.offsetX;
    lastY = ev.offsetY;
    if (sweeping) {
      void sweepSelect(ev.offsetX, ev.offsetY);
      return;
    }
    if (ev.buttons === 2 || ev.ctrlKey || rig.planar) {
      const scale = worldPerPixel(perspective(), rig.distance, canvas.clientHeight);
      rig.pan(dx * scale, dy * scale);
    } else {
      rig.orbit(-dx * 0.005, dy * 0.005);
    }
    render();
  });

  canvas.addEventListener("pointerup", (ev) => {
    const wasSweeping = sweeping;
    const wasMoved = moved;
    dragging = false;
    sweeping = false;
    if (!wasSweeping && !wasMoved) void pickAt(ev.offsetX, ev.offsetY);
  });

  canvas.addEventListener("contextmenu", (ev) => ev.preventDefault());

  canvas.addEventListener(
    "wheel",
    (ev) => {
      ev.preventDefault();
      const factor = ev.deltaY > 0 ? 1.1 : 1 / 1.1;
      if (ev.shiftKey) {
        store.scaleSelector(factor);
        selectorRadiusInput.value = store.get().selectorRadius.toFixed(3);
        if (selectorPos) {
          placeSelector(
            handles,
            [selectorPos[0], selectorPos[1], selectorPos[2] ?? 0],
            store.get().selectorRadius,
          );
        }
      } else {
        rig.zoom(factor);
      }
      render();
    },
    { passive: false },
  );

  window.addEventListener("keydown", (ev) => {
    if (ev.target instanceof HTMLInputElement) return;
    if (!layoutInfo) return;
    const digit = Number(ev.key);
    if (digit >= 1 && digit <= layoutInfo.label_schema.length) {
      store.setActiveLabel(layoutInfo.label_schema[digit - 1]);
      renderLabelPicker();
    } else if (ev.key === "Enter") {
      void applyLabel();
    }
  });

  pointScaleInput.addEventListener("input", () => {
    store.setPointScale(Number(pointScaleInput.value));
    if (handles.points) {
      const material = handles.points.material as THREE.PointsMaterial;
      material.size = material.size;
    }
    const state = store.get();
    if (state.activeLayoutId) void loadLayout(state.activeLayoutId);
  });

  selectorRadiusInput.addEventListener("change", () => {
    store.setSelectorRadius(Number(selectorRadiusInput.value));
  });

  fitButton.addEventListener("click", () => void fitAndLoad());
  queryButton.addEventListener("click", () => void runQuery());
  queryInput.addEventListener("keydown", (ev) => {
    if (ev.key === "Enter") void runQuery();
  });
  projectSelect.addEventListener("change", () => {
    layoutInfo = null;
    neighborList.replaceChildren();
  });
}

async function boot(): Promise<void> {
  renderer = new THREE.WebGLRenderer({ canvas, antialias: true });
  const resize = () => {
    renderer!.setSize(canvas.clientWidth, canvas.clientHeight, false);
    handles.camera.aspect = canvas.clientWidth / Math.max(1, canvas.clientHeight);
    handles.camera.updateProjectionMatrix();
    render();
  };
  window.addEventListener("resize", resize);
  resize();
  bindInteractions();
  if (!(await api.health())) {
    toast("service unreachable; is embedscope serve running?");
    return;
  }
  await refreshProjects();
  poller.start();
  status("pick a project, choose a reducer, hit fit");
}

void boot();
