// @vitest-environment jsdom
/**
 * Live end-to-end test against a running removal service (toy checkpoint).
 * Start one with `deshadow serve --checkpoint <toy.pt> --port 8765` and run
 * `STUDIO_E2E_URL=http://127.0.0.1:8765 npm run test:e2e`.
 */

import { describe, expect, it } from "vitest";

import { ApiClient } from "../src/api";
import { decodePNG, encodeGrayPNG } from "../src/png";
import { CanvasSession } from "../src/session";
import { createCompareSlider } from "../src/ui/slider";

const BASE = process.env.STUDIO_E2E_URL ?? "";
const SIZE = Number(process.env.STUDIO_E2E_SIZE ?? 64);

function gradientImage(size: number): Uint8Array {
  const px = new Uint8Array(size * size);
  for (let y = 0; y < size; y++) {
    for (let x = 0; x < size; x++) {
      px[y * size + x] = Math.floor(((x + y) / (2 * size - 2)) * 200) + 30;
    }
  }
  return encodeGrayPNG(size, size, px);
}

function sessionWithImage(): CanvasSession {
  const s = new CanvasSession();
  s.setImage(gradientImage(SIZE), SIZE, SIZE);
  s.steps = 8; // keep the live run quick
  s.setDilation(7);
  return s;
}

function toDataUrl(bytes: Uint8Array): string {
  return `data:image/png;base64,${Buffer.from(bytes).toString("base64")}`;
}

describe.skipIf(!BASE)("studio against a live toy service", () => {
  const client = new ApiClient(BASE);

  it("reports a healthy checkpoint", async () => {
    const health = await client.health();
    expect(health.status).toBe("ok");
    expect(health.checkpoint_id).toMatch(/^[0-9a-f]{16}$/);
  });

  it("completes a full-mode removal and displays before/after", async () => {
    const session = sessionWithImage();
    session.mode = "full";
    session.paint(
      [{ x: SIZE / 4, y: SIZE / 2 }, { x: (3 * SIZE) / 4, y: SIZE / 2 }],
      Math.max(3, SIZE / 8),
    );
    const states: string[] = [];
    const entry = await session.submit(client, { intervalMs: 250, onUpdate: (j) => states.push(j.state) });
    expect(states).toContain("done");
    const img = decodePNG(entry.resultBytes);
    expect([img.width, img.height]).toEqual([SIZE, SIZE]);
    expect(session.history).toHaveLength(1);

    // render the comparison slider with source and result
    const slider = createCompareSlider(document);
    document.body.appendChild(slider.root);
    slider.setImages(toDataUrl(session.image!.pngBytes), toDataUrl(entry.resultBytes));
    slider.setPosition(0.3);
    const before = slider.root.querySelector<HTMLImageElement>(".compare-before")!;
    const after = slider.root.querySelector<HTMLImageElement>(".compare-after")!;
    expect(before.src.startsWith("data:image/png")).toBe(true);
    expect(after.src.startsWith("data:image/png")).toBe(true);
    expect(after.style.clipPath).toBe("inset(0 0 0 30%)");
  });

  it("completes a quick-mode removal", async () => {
    const session = sessionWithImage();
    session.mode = "quick";
    session.paint([{ x: SIZE / 2, y: SIZE / 2 }], Math.max(3, SIZE / 6));
    const entry = await session.submit(client, { intervalMs: 250 });
    expect(entry.mode).toBe("quick");
    const img = decodePNG(entry.resultBytes);
    expect([img.width, img.height]).toEqual([SIZE, SIZE]);
  });

  it("returns a pixel-identical image for an empty mask", async () => {
    const session = sessionWithImage();
    session.mode = "quick";
    const entry = await session.submit(client, { intervalMs: 250 });
    const source = decodePNG(session.image!.pngBytes);
    const result = decodePNG(entry.resultBytes);
    expect([result.width, result.height]).toEqual([source.width, source.height]);
    let diffs = 0;
    for (let i = 0; i < source.width * source.height; i++) {
      const s = source.channels === 1 ? source.data[i] : source.data[i * source.channels];
      const r = result.channels === 1 ? result.data[i] : result.data[i * result.channels];
      if (s !== r) diffs++;
    }
    expect(diffs).toBe(0);
  });
});
