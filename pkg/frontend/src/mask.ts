/**
 * Editable binary mask raster (white = shadow, matching the datasets' mask
 * convention). All operations are pure array math so they are testable
 * without a canvas.
 */

import { decodeMaskPNG, encodeGrayPNG } from "./png";

export interface StrokePoint {
  x: number;
  y: number;
}

export class MaskRaster {
  readonly width: number;
  readonly height: number;
  data: Uint8Array; // 0 or 255 per pixel

  constructor(width: number, height: number, data?: Uint8Array) {
    if (width < 1 || height < 1) throw new Error(`invalid mask size ${width}x${height}`);
    if (data && data.length !== width * height) {
      throw new Error(`data length ${data.length} does not match ${width}x${height}`);
    }
    this.width = width;
    this.height = height;
    this.data = data ? data.slice() : new Uint8Array(width * height);
  }

  clone(): MaskRaster {
    return new MaskRaster(this.width, this.height, this.data);
  }

  clear(): void {
    this.data.fill(0);
  }

  fill(): void {
    this.data.fill(255);
  }

  isEmpty(): boolean {
    return this.data.every((v) => v === 0);
  }

  count(): number {
    let n = 0;
    for (const v of this.data) if (v) n++;
    return n;
  }

  equals(other: MaskRaster): boolean {
    if (other.width !== this.width || other.height !== this.height) return false;
    for (let i = 0; i < this.data.length; i++) {
      if (this.data[i] !== other.data[i]) return false;
    }
    return true;
  }

  private stampDisc(cx: number, cy: number, radius: number, value: number): void {
    const r2 = radius * radius;
    const lo = Math.max(0, Math.floor(cy - radius));
    const hi = Math.min(this.height - 1, Math.ceil(cy + radius));
    for (let y = lo; y <= hi; y++) {
      const dy = y - cy;
      const span = Math.sqrt(Math.max(r2 - dy * dy, 0));
      const x0 = Math.max(0, Math.round(cx - span));
      const x1 = Math.min(this.width - 1, Math.round(cx + span));
      this.data.fill(value, y * this.width + x0, y * this.width + x1 + 1);
    }
  }

  /** Rasterize a brush stroke: discs stamped along each segment. */
  paintStroke(points: StrokePoint[], radius: number, erase = false): void {
    if (points.length === 0) return;
    const value = erase ? 0 : 255;
    let prev = points[0];
    this.stampDisc(prev.x, prev.y, radius, value);
    for (const p of points.slice(1)) {
      const dist = Math.hypot(p.x - prev.x, p.y - prev.y);
      const steps = Math.max(1, Math.ceil(dist));
      for (let s = 1; s <= steps; s++) {
        const t = s / steps;
        this.stampDisc(prev.x + (p.x - prev.x) * t, prev.y + (p.y - prev.y) * t, radius, value);
      }
      prev = p;
    }
  }

  unionInPlace(other: MaskRaster): void {
    if (other.width !== this.width || other.height !== this.height) {
      throw new Error("mask dimensions differ");
    }
    for (let i = 0; i < this.data.length; i++) {
      if (other.data[i]) this.data[i] = 255;
    }
  }

  static union(masks: MaskRaster[]): MaskRaster {
    if (masks.length === 0) throw new Error("no masks to union");
    const out = masks[0].clone();
    for (const m of masks.slice(1)) out.unionInPlace(m);
    return out;
  }

  toPNG(): Uint8Array {
    return encodeGrayPNG(this.width, this.height, this.data);
  }

  static fromPNG(bytes: Uint8Array): MaskRaster {
    const { width, height, data } = decodeMaskPNG(bytes);
    return new MaskRaster(width, height, data);
  }
}
