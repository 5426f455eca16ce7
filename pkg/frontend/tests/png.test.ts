import { readFileSync } from "node:fs";
import { join } from "node:path";
import { describe, expect, it } from "vitest";

import { decodeMaskPNG, decodePNG, encodeGrayPNG } from "../src/png";

const FIXTURES = join(__dirname, "fixtures");

function fixture(name: string): Uint8Array {
  return new Uint8Array(readFileSync(join(FIXTURES, name)));
}

function expected(name: string): number[][][] | number[][] {
  return JSON.parse(readFileSync(join(FIXTURES, name), "utf8"));
}

describe("encodeGrayPNG", () => {
  it("round-trips rasters byte for byte", () => {
    const data = new Uint8Array(64).map((_, i) => (i * 37) % 256);
    const png = encodeGrayPNG(8, 8, data);
    const back = decodePNG(png);
    expect(back.width).toBe(8);
    expect(back.height).toBe(8);
    expect(back.channels).toBe(1);
    expect(Array.from(back.data)).toEqual(Array.from(data));
    // encoding is deterministic
    expect(Buffer.from(encodeGrayPNG(8, 8, data))).toEqual(Buffer.from(png));
  });

  it("rejects mismatched buffer sizes", () => {
    expect(() => encodeGrayPNG(4, 4, new Uint8Array(5))).toThrow(/does not match/);
  });
});

describe("decodePNG on reference files", () => {
  it("decodes 4x4 RGB exactly", () => {
    const img = decodePNG(fixture("rgb_4x4.png"));
    const want = expected("rgb_4x4.json") as number[][][];
    expect([img.width, img.height, img.channels]).toEqual([4, 4, 3]);
    for (let y = 0; y < 4; y++) {
      for (let x = 0; x < 4; x++) {
        for (let c = 0; c < 3; c++) {
          expect(img.data[(y * 4 + x) * 3 + c]).toBe(want[y][x][c]);
        }
      }
    }
  });

  it("decodes a 16x16 gradient (non-trivial scanline filters)", () => {
    const img = decodePNG(fixture("rgb_16x16_gradient.png"));
    const want = expected("rgb_16x16_gradient.json") as number[][][];
    for (let y = 0; y < 16; y++) {
      for (let x = 0; x < 16; x++) {
        for (let c = 0; c < 3; c++) {
          expect(img.data[(y * 16 + x) * 3 + c]).toBe(want[y][x][c]);
        }
      }
    }
  });

  it("decodes RGBA", () => {
    const img = decodePNG(fixture("rgba_4x4.png"));
    const want = expected("rgba_4x4.json") as number[][][];
    expect(img.channels).toBe(4);
    for (let y = 0; y < 4; y++) {
      for (let x = 0; x < 4; x++) {
        for (let c = 0; c < 4; c++) {
          expect(img.data[(y * 4 + x) * 4 + c]).toBe(want[y][x][c]);
        }
      }
    }
  });

  it("decodes grayscale and binarizes as a mask", () => {
    const mask = decodeMaskPNG(fixture("gray_8x8.png"));
    const want = expected("gray_8x8.json") as number[][];
    for (let y = 0; y < 8; y++) {
      for (let x = 0; x < 8; x++) {
        expect(mask.data[y * 8 + x]).toBe(want[y][x]);
      }
    }
  });

  it("rejects non-PNG bytes", () => {
    expect(() => decodePNG(new Uint8Array([1, 2, 3, 4, 5, 6, 7, 8]))).toThrow(/not a PNG/);
  });
});
