/**
 * Studio session state: source image, editable per-instance mask layers with
 * undo/redo, removal parameters, submission lifecycle, and job history.
 * One in-flight submission at a time.
 */

import { ApiClient, JobInfo, SubmitParams } from "./api";
import { UndoStack } from "./history";
import { MaskRaster, StrokePoint } from "./mask";

export interface SourceImage {
  pngBytes: Uint8Array;
  width: number;
  height: number;
}

export interface HistoryEntry {
  jobId: string;
  mode: "full" | "quick";
  seed: number;
  resultBytes: Uint8Array;
  submittedAt: number;
}

interface LayerSnapshot {
  layers: Uint8Array[];
  active: number;
}

export class SessionError extends Error {}

export class CanvasSession {
  image: SourceImage | null = null;
  layers: MaskRaster[] = [];
  activeLayer = 0;
  dilation = 21;
  mode: "full" | "quick" = "full";
  steps = 50;
  seed = 0;
  history: HistoryEntry[] = [];
  inFlight = false;

  private undoStack: UndoStack<LayerSnapshot> | null = null;
  private abort: AbortController | null = null;

  setImage(pngBytes: Uint8Array, width: number, height: number): void {
    this.image = { pngBytes, width, height };
    this.layers = [new MaskRaster(width, height)];
    this.activeLayer = 0;
    this.undoStack = new UndoStack(this.snapshot());
  }

  setDilation(k: number): void {
    if (k < 1 || k % 2 === 0) throw new SessionError("dilation must be odd and >= 1");
    this.dilation = k;
  }

  private snapshot(): LayerSnapshot {
    return { layers: this.layers.map((l) => l.data.slice()), active: this.activeLayer };
  }

  private restore(snap: LayerSnapshot): void {
    if (!this.image) return;
    this.layers = snap.layers.map(
      (d) => new MaskRaster(this.image!.width, this.image!.height, d),
    );
    this.activeLayer = Math.min(snap.active, this.layers.length - 1);
  }

  private requireImage(): SourceImage {
    if (!this.image) throw new SessionError("no source image loaded");
    return this.image;
  }

  private commit(): void {
    this.undoStack?.push(this.snapshot());
  }

  addLayer(): number {
    const img = this.requireImage();
    this.layers.push(new MaskRaster(img.width, img.height));
    this.activeLayer = this.layers.length - 1;
    this.commit();
    return this.activeLayer;
  }

  setActiveLayer(i: number): void {
    if (i < 0 || i >= this.layers.length) throw new SessionError(`no layer ${i}`);
    this.activeLayer = i;
  }

  paint(points: StrokePoint[], radius: number, erase = false): void {
    this.requireImage();
    this.layers[this.activeLayer].paintStroke(points, radius, erase);
    this.commit();
  }

  fillActiveLayer(): void {
    this.requireImage();
    this.layers[this.activeLayer].fill();
    this.commit();
  }

  clearActiveLayer(): void {
    this.requireImage();
    this.layers[this.activeLayer].clear();
    this.commit();
  }

  undo(): boolean {
    const prev = this.undoStack?.undo();
    if (!prev) return false;
    this.restore(prev);
    return true;
  }

  redo(): boolean {
    const next = this.undoStack?.redo();
    if (!next) return false;
    this.restore(next);
    return true;
  }

  /** Per-instance layers are unioned into the single mask the server takes. */
  unionMask(): MaskRaster {
    this.requireImage();
    return MaskRaster.union(this.layers);
  }

  exportMask(): Uint8Array {
    return this.unionMask().toPNG();
  }

  importMask(bytes: Uint8Array): void {
    const img = this.requireImage();
    const mask = MaskRaster.fromPNG(bytes);
    if (mask.width !== img.width || mask.height !== img.height) {
      throw new SessionError(
        `mask ${mask.width}x${mask.height} does not match image ${img.width}x${img.height}`,
      );
    }
    this.layers.push(mask);
    this.activeLayer = this.layers.length - 1;
    this.commit();
  }

  submitParams(): SubmitParams {
    return { mode: this.mode, dilation: this.dilation, steps: this.steps, seed: this.seed };
  }

  cancelPolling(): void {
    this.abort?.abort();
  }

  /** Submit the current image+mask, poll to completion, record history. */
  async submit(
    client: ApiClient,
    opts: { intervalMs?: number; onUpdate?: (job: JobInfo) => void } = {},
  ): Promise<HistoryEntry> {
    const img = this.requireImage();
    if (this.inFlight) throw new SessionError("a submission is already in flight");
    this.inFlight = true;
    this.abort = new AbortController();
    try {
      const jobId = await client.submitRemoval(img.pngBytes, this.exportMask(), this.submitParams());
      const job = await client.pollUntilDone(jobId, {
        intervalMs: opts.intervalMs,
        onUpdate: opts.onUpdate,
        signal: this.abort.signal,
      });
      if (job.state === "failed") {
        throw new SessionError(job.error ?? "removal failed");
      }
      const resultBytes = await client.fetchResult(jobId);
      const entry: HistoryEntry = {
        jobId,
        mode: this.mode,
        seed: this.seed,
        resultBytes,
        submittedAt: Date.now(),
      };
      this.history.push(entry);
      return entry;
    } finally {
      this.inFlight = false;
      this.abort = null;
    }
  }
}
