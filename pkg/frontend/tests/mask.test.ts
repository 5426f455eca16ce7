import { describe, expect, it } from "vitest";

import { MaskRaster } from "../src/mask";

describe("MaskRaster", () => {
  it("starts empty and exports an all-zero mask", () => {
    const m = new MaskRaster(16, 16);
    expect(m.isEmpty()).toBe(true);
    const back = MaskRaster.fromPNG(m.toPNG());
    expect(back.isEmpty()).toBe(true);
    expect(back.equals(m)).toBe(true);
  });

  it("full-canvas fill exports all ones", () => {
    const m = new MaskRaster(8, 8);
    m.fill();
    const back = MaskRaster.fromPNG(m.toPNG());
    expect(back.count()).toBe(64);
  });

  it("paints discs along a stroke", () => {
    const m = new MaskRaster(32, 32);
    m.paintStroke([{ x: 8, y: 16 }, { x: 24, y: 16 }], 3);
    expect(m.count()).toBeGreaterThan(0);
    expect(m.data[16 * 32 + 16]).toBe(255); // on the path
    expect(m.data[2 * 32 + 2]).toBe(0); // far away untouched
  });

  it("eraser removes painted pixels", () => {
    const m = new MaskRaster(16, 16);
    m.paintStroke([{ x: 8, y: 8 }], 5);
    const before = m.count();
    m.paintStroke([{ x: 8, y: 8 }], 2, true);
    expect(m.count()).toBeLessThan(before);
  });

  it("union combines layers", () => {
    const a = new MaskRaster(8, 8);
    a.paintStroke([{ x: 2, y: 2 }], 1);
    const b = new MaskRaster(8, 8);
    b.paintStroke([{ x: 6, y: 6 }], 1);
    const u = MaskRaster.union([a, b]);
    expect(u.count()).toBeGreaterThanOrEqual(a.count() + b.count() - 1);
    expect(u.data[2 * 8 + 2]).toBe(255);
    expect(u.data[6 * 8 + 6]).toBe(255);
  });

  it("round-trips through PNG with an identical raster", () => {
    const m = new MaskRaster(24, 17);
    m.paintStroke([{ x: 3, y: 4 }, { x: 20, y: 12 }], 4);
    const back = MaskRaster.fromPNG(m.toPNG());
    expect(back.equals(m)).toBe(true);
    // and the re-export is byte-identical
    expect(Buffer.from(back.toPNG())).toEqual(Buffer.from(m.toPNG()));
  });

  it("rejects mismatched unions", () => {
    expect(() => new MaskRaster(4, 4).unionInPlace(new MaskRaster(5, 5))).toThrow(/differ/);
  });
});
