/**
 * Studio entry point: wires the session, the paint canvas, the controls, and
 * the before/after result panel to the DOM. Kept thin; everything stateful
 * lives in CanvasSession so it stays testable without a browser.
 */

import { ApiClient, JobInfo } from "../api";
import { MaskRaster, StrokePoint } from "../mask";
import { CanvasSession, HistoryEntry, SessionError } from "../session";
import { createCompareSlider } from "./slider";

const session = new CanvasSession();
const client = new ApiClient("");

function el<T extends HTMLElement>(id: string): T {
  const found = document.getElementById(id);
  if (!found) throw new Error(`missing element #${id}`);
  return found as T;
}

const imageInput = el<HTMLInputElement>("image-input");
const maskInput = el<HTMLInputElement>("mask-input");
const canvasWrap = el<HTMLDivElement>("canvas-wrap");
const baseCanvas = el<HTMLCanvasElement>("base-canvas");
const maskCanvas = el<HTMLCanvasElement>("mask-canvas");
const brushSize = el<HTMLInputElement>("brush-size");
const eraserToggle = el<HTMLInputElement>("eraser-toggle");
const modeSelect = el<HTMLSelectElement>("mode-select");
const dilationInput = el<HTMLInputElement>("dilation-input");
const stepsInput = el<HTMLInputElement>("steps-input");
const seedInput = el<HTMLInputElement>("seed-input");
const submitBtn = el<HTMLButtonElement>("submit-btn");
const undoBtn = el<HTMLButtonElement>("undo-btn");
const redoBtn = el<HTMLButtonElement>("redo-btn");
const clearBtn = el<HTMLButtonElement>("clear-btn");
const fillBtn = el<HTMLButtonElement>("fill-btn");
const addLayerBtn = el<HTMLButtonElement>("add-layer-btn");
const layerList = el<HTMLDivElement>("layer-list");
const exportBtn = el<HTMLButtonElement>("export-mask-btn");
const progressBar = el<HTMLProgressElement>("progress-bar");
const statusLine = el<HTMLSpanElement>("status-line");
const banner = el<HTMLDivElement>("error-banner");
const bannerText = el<HTMLSpanElement>("error-text");
const bannerClose = el<HTMLButtonElement>("error-close");
const resultPanel = el<HTMLDivElement>("result-panel");
const historyStrip = el<HTMLDivElement>("history-strip");

const slider = createCompareSlider();
resultPanel.appendChild(slider.root);

function showError(message: string) {
  bannerText.textContent = message;
  banner.hidden = false;
}
bannerClose.addEventListener("click", () => (banner.hidden = true));

function redrawMask() {
  if (!session.image) return;
  const { width, height } = session.image;
  const ctx = maskCanvas.getContext("2d")!;
  const union = session.unionMask();
  const active = session.layers[session.activeLayer];
  const img = ctx.createImageData(width, height);
  for (let i = 0; i < union.data.length; i++) {
    if (union.data[i]) {
      const isActive = active.data[i] > 0;
      img.data[i * 4] = 255;
      img.data[i * 4 + 1] = isActive ? 64 : 128;
      img.data[i * 4 + 2] = isActive ? 64 : 128;
      img.data[i * 4 + 3] = 110;
    }
  }
  ctx.clearRect(0, 0, width, height);
  ctx.putImageData(img, 0, 0);
  renderLayerList();
}

function renderLayerList() {
  layerList.replaceChildren();
  session.layers.forEach((layer, i) => {
    const btn = document.createElement("button");
    btn.textContent = `layer ${i + 1} (${layer.count()}px)`;
    btn.className = i === session.activeLayer ? "layer active" : "layer";
    btn.addEventListener("click", () => {
      session.setActiveLayer(i);
      redrawMask();
    });
    layerList.appendChild(btn);
  });
}

async function loadImageFile(file: File) {
  const bytes = new Uint8Array(await file.arrayBuffer());
  const url = URL.createObjectURL(file);
  const img = new Image();
  await new Promise((resolve, reject) => {
    img.onload = resolve;
    img.onerror = () => reject(new Error("could not decode image"));
    img.src = url;
  });
  session.setImage(bytes, img.naturalWidth, img.naturalHeight);
  baseCanvas.width = maskCanvas.width = img.naturalWidth;
  baseCanvas.height = maskCanvas.height = img.naturalHeight;
  baseCanvas.getContext("2d")!.drawImage(img, 0, 0);
  URL.revokeObjectURL(url);
  canvasWrap.hidden = false;
  redrawMask();
  statusLine.textContent = `${img.naturalWidth}x${img.naturalHeight} loaded`;
}

imageInput.addEventListener("change", () => {
  const file = imageInput.files?.[0];
  if (file) loadImageFile(file).catch((e) => showError(String(e)));
});

maskInput.addEventListener("change", async () => {
  const file = maskInput.files?.[0];
  if (!file) return;
  try {
    session.importMask(new Uint8Array(await file.arrayBuffer()));
    redrawMask();
  } catch (e) {
    showError(e instanceof Error ? e.message : String(e));
  }
});

// painting
let stroke: StrokePoint[] | null = null;

function canvasPoint(ev: MouseEvent): StrokePoint {
  const rect = maskCanvas.getBoundingClientRect();
  return {
    x: ((ev.clientX - rect.left) / rect.width) * maskCanvas.width,
    y: ((ev.clientY - rect.top) / rect.height) * maskCanvas.height,
  };
}

maskCanvas.addEventListener("mousedown", (ev) => {
  if (!session.image) return;
  stroke = [canvasPoint(ev)];
});
maskCanvas.addEventListener("mousemove", (ev) => {
  if (!stroke) return;
  stroke.push(canvasPoint(ev));
  // live preview: paint incrementally on a copy-free path
  const preview = new MaskRaster(maskCanvas.width, maskCanvas.height, session.layers[session.activeLayer].data);
  preview.paintStroke(stroke.slice(-2), Number(brushSize.value), eraserToggle.checked);
  session.layers[session.activeLayer].data = preview.data;
  redrawMask();
});
window.addEventListener("mouseup", () => {
  if (!stroke) return;
  session.paint(stroke.slice(-1), Number(brushSize.value), eraserToggle.checked); // commit snapshot
  stroke = null;
  redrawMask();
});

undoBtn.addEventListener("click", () => {
  session.undo();
  redrawMask();
});
redoBtn.addEventListener("click", () => {
  session.redo();
  redrawMask();
});
clearBtn.addEventListener("click", () => {
  session.clearActiveLayer();
  redrawMask();
});
fillBtn.addEventListener("click", () => {
  session.fillActiveLayer();
  redrawMask();
});
addLayerBtn.addEventListener("click", () => {
  session.addLayer();
  redrawMask();
});

exportBtn.addEventListener("click", () => {
  try {
    const png = session.exportMask();
    const blob = new Blob([png.buffer as ArrayBuffer], { type: "image/png" });
    const a = document.createElement("a");
    a.href = URL.createObjectURL(blob);
    a.download = "mask.png";
    a.click();
    URL.revokeObjectURL(a.href);
  } catch (e) {
    showError(e instanceof Error ? e.message : String(e));
  }
});

function renderHistory() {
  historyStrip.replaceChildren();
  session.history.forEach((entry) => {
    const thumb = document.createElement("img");
    thumb.className = "history-thumb";
    thumb.title = `${entry.mode} seed=${entry.seed}`;
    thumb.src = URL.createObjectURL(new Blob([entry.resultBytes.buffer as ArrayBuffer], { type: "image/png" }));
    thumb.addEventListener("click", () => showResult(entry));
    historyStrip.appendChild(thumb);
  });
}

function showResult(entry: HistoryEntry) {
  if (!session.image) return;
  const beforeUrl = URL.createObjectURL(
    new Blob([session.image.pngBytes.buffer as ArrayBuffer], { type: "image/png" }),
  );
  const afterUrl = URL.createObjectURL(
    new Blob([entry.resultBytes.buffer as ArrayBuffer], { type: "image/png" }),
  );
  slider.setImages(beforeUrl, afterUrl);
  resultPanel.hidden = false;
}

submitBtn.addEventListener("click", async () => {
  banner.hidden = true;
  try {
    session.mode = modeSelect.value === "quick" ? "quick" : "full";
    session.setDilation(Number(dilationInput.value));
    session.steps = Number(stepsInput.value);
    session.seed = Number(seedInput.value);
  } catch (e) {
    showError(e instanceof Error ? e.message : String(e));
    return;
  }
  submitBtn.disabled = true;
  statusLine.textContent = "submitting";
  try {
    const entry = await session.submit(client, {
      onUpdate(job: JobInfo) {
        statusLine.textContent = job.state;
        progressBar.value = job.progress;
      },
    });
    statusLine.textContent = "done";
    renderHistory();
    showResult(entry);
  } catch (e) {
    showError(e instanceof SessionError || e instanceof Error ? e.message : String(e));
    statusLine.textContent = "failed";
  } finally {
    submitBtn.disabled = false;
  }
});

client
  .health()
  .then((h) => (statusLine.textContent = `service ok (${h.checkpoint_id.slice(0, 8)})`))
  .catch(() => (statusLine.textContent = "service unreachable"));
