import { describe, expect, it } from "vitest";

import { ApiClient, ApiError } from "../src/api";
import { MaskRaster } from "../src/mask";
import { encodeGrayPNG } from "../src/png";
import { CanvasSession, SessionError } from "../src/session";

interface Submission {
  fields: Record<string, string>;
  imageBytes: Uint8Array;
  maskBytes: Uint8Array;
}

function createMockBackend(opts: {
  pollsUntilDone?: number;
  resultFor?: (sub: Submission) => Uint8Array;
  submitFailure?: { status: number; detail: string };
} = {}) {
  const pollsUntilDone = opts.pollsUntilDone ?? 2;
  const submissions: Submission[] = [];
  const jobs = new Map<string, { polls: number; sub: Submission }>();

  const fetchFn: typeof fetch = async (input, init) => {
    const url = String(input);
    const json = (body: unknown, status = 200) =>
      new Response(JSON.stringify(body), { status, headers: { "content-type": "application/json" } });

    if (url.endsWith("/api/health")) {
      return json({ status: "ok", checkpoint_id: "mock0000" });
    }
    if (url.endsWith("/api/remove") && init?.method === "POST") {
      if (opts.submitFailure) {
        return json({ detail: opts.submitFailure.detail }, opts.submitFailure.status);
      }
      const form = init.body as FormData;
      const sub: Submission = {
        fields: Object.fromEntries(
          [...form.entries()].filter(([, v]) => typeof v === "string") as [string, string][],
        ),
        imageBytes: new Uint8Array(await (form.get("image") as Blob).arrayBuffer()),
        maskBytes: new Uint8Array(await (form.get("mask") as Blob).arrayBuffer()),
      };
      submissions.push(sub);
      const id = `job${submissions.length}`;
      jobs.set(id, { polls: 0, sub });
      return json({ job_id: id });
    }
    const jobMatch = url.match(/\/api\/jobs\/(\w+)$/);
    if (jobMatch) {
      const job = jobs.get(jobMatch[1]);
      if (!job) return json({ detail: "unknown job" }, 404);
      job.polls += 1;
      const state = job.polls <= 1 ? "queued" : job.polls <= pollsUntilDone ? "running" : "done";
      return json({
        id: jobMatch[1],
        state,
        progress: state === "done" ? 1 : job.polls / (pollsUntilDone + 1),
        result_ref: state === "done" ? `/api/results/${jobMatch[1]}.png` : null,
        error: null,
      });
    }
    const resMatch = url.match(/\/api\/results\/(\w+)\.png$/);
    if (resMatch) {
      const job = jobs.get(resMatch[1]);
      if (!job) return new Response("missing", { status: 404 });
      const bytes = opts.resultFor ? opts.resultFor(job.sub) : job.sub.imageBytes;
      return new Response(bytes.buffer as ArrayBuffer, {
        status: 200,
        headers: { "content-type": "image/png" },
      });
    }
    return new Response("not found", { status: 404 });
  };

  return { fetchFn, submissions };
}

function sessionWithImage(size = 16): CanvasSession {
  const s = new CanvasSession();
  const gradient = new Uint8Array(size * size).map((_, i) => i % 256);
  s.setImage(encodeGrayPNG(size, size, gradient), size, size);
  return s;
}

describe("mask editing in a session", () => {
  it("no strokes -> exported mask is all zeros", () => {
    const s = sessionWithImage();
    const mask = MaskRaster.fromPNG(s.exportMask());
    expect(mask.isEmpty()).toBe(true);
  });

  it("fill -> exported mask is all ones", () => {
    const s = sessionWithImage(8);
    s.fillActiveLayer();
    expect(MaskRaster.fromPNG(s.exportMask()).count()).toBe(64);
  });

  it("undo after one stroke restores the pre-stroke mask", () => {
    const s = sessionWithImage();
    const before = s.exportMask();
    s.paint([{ x: 8, y: 8 }], 4);
    expect(MaskRaster.fromPNG(s.exportMask()).isEmpty()).toBe(false);
    expect(s.undo()).toBe(true);
    expect(Buffer.from(s.exportMask())).toEqual(Buffer.from(before));
  });

  it("export -> reimport round-trips the raster exactly", () => {
    const s = sessionWithImage();
    s.paint([{ x: 3, y: 3 }, { x: 12, y: 9 }], 3);
    const exported = s.exportMask();
    s.importMask(exported);
    const reimported = s.layers[s.activeLayer];
    expect(reimported.equals(MaskRaster.fromPNG(exported))).toBe(true);
  });

  it("per-instance layers union before submission", () => {
    const s = sessionWithImage();
    s.paint([{ x: 2, y: 2 }], 1);
    s.addLayer();
    s.paint([{ x: 12, y: 12 }], 1);
    const union = MaskRaster.fromPNG(s.exportMask());
    expect(union.data[2 * 16 + 2]).toBe(255);
    expect(union.data[12 * 16 + 12]).toBe(255);
  });

  it("rejects masks that do not match the image size", () => {
    const s = sessionWithImage(16);
    const wrong = new MaskRaster(8, 8);
    expect(() => s.importMask(wrong.toPNG())).toThrow(SessionError);
  });
});

describe("submission lifecycle against the mock backend", () => {
  it("empty-mask submit renders a byte-identical result and grows history", async () => {
    const { fetchFn } = createMockBackend();
    const client = new ApiClient("", fetchFn);
    const s = sessionWithImage();
    const states: string[] = [];
    const entry = await s.submit(client, { intervalMs: 1, onUpdate: (j) => states.push(j.state) });
    expect(s.history).toHaveLength(1);
    expect(Buffer.from(entry.resultBytes)).toEqual(Buffer.from(s.image!.pngBytes));
    const order = { queued: 0, running: 1, done: 2 } as Record<string, number>;
    const ranks = states.map((st) => order[st]);
    expect(ranks).toEqual([...ranks].sort((a, b) => a - b));
    expect(states.at(-1)).toBe("done");
  });

  it("mode toggle resubmits with only the mode field changed", async () => {
    const backend = createMockBackend();
    const client = new ApiClient("", backend.fetchFn);
    const s = sessionWithImage();
    s.paint([{ x: 8, y: 8 }], 3);
    await s.submit(client, { intervalMs: 1 });
    s.mode = "quick";
    await s.submit(client, { intervalMs: 1 });
    const [a, b] = backend.submissions;
    expect(a.fields.mode).toBe("full");
    expect(b.fields.mode).toBe("quick");
    const rest = (f: Record<string, string>) => {
      const { mode, ...others } = f;
      return others;
    };
    expect(rest(a.fields)).toEqual(rest(b.fields));
    expect(Buffer.from(a.maskBytes)).toEqual(Buffer.from(b.maskBytes));
  });

  it("server errors surface the reason string", async () => {
    const backend = createMockBackend({ submitFailure: { status: 400, detail: "mask not co-registered" } });
    const client = new ApiClient("", backend.fetchFn);
    const s = sessionWithImage();
    await expect(s.submit(client, { intervalMs: 1 })).rejects.toThrowError(ApiError);
    await expect(s.submit(client, { intervalMs: 1 })).rejects.toThrow(/mask not co-registered/);
    expect(s.inFlight).toBe(false);
  });

  it("only one submission may be in flight", async () => {
    const backend = createMockBackend({ pollsUntilDone: 5 });
    const client = new ApiClient("", backend.fetchFn);
    const s = sessionWithImage();
    const first = s.submit(client, { intervalMs: 5 });
    await expect(s.submit(client, { intervalMs: 1 })).rejects.toThrow(/in flight/);
    await first;
    expect(s.history).toHaveLength(1);
  });

  it("mock server returning a known PNG lands in history", async () => {
    const known = encodeGrayPNG(4, 4, new Uint8Array(16).fill(200));
    const backend = createMockBackend({ resultFor: () => known });
    const client = new ApiClient("", backend.fetchFn);
    const s = sessionWithImage();
    const entry = await s.submit(client, { intervalMs: 1 });
    expect(Buffer.from(entry.resultBytes)).toEqual(Buffer.from(known));
    expect(s.history.at(-1)).toBe(entry);
  });

  it("dilation validation rejects even kernels", () => {
    const s = sessionWithImage();
    expect(() => s.setDilation(4)).toThrow(/odd/);
    s.setDilation(7);
    expect(s.dilation).toBe(7);
  });
});
