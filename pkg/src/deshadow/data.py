"""Dataset ingestion, mask morphology, and synthetic shadow triplet generation.

Images live on disk as 8-bit PNGs and in memory as float arrays in [0, 1]
(HWC for color, HW for masks). Conversion to the [-1, 1] diffusion domain
happens at the training/inference boundary, not here.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image
from scipy.ndimage import distance_transform_edt, maximum_filter

IMAGE_EXTENSIONS = (".png", ".jpg", ".jpeg", ".bmp")


class DataError(ValueError):
    pass


# ---------------------------------------------------------------------------
# image file helpers
# ---------------------------------------------------------------------------


def load_image(path) -> np.ndarray:
    with Image.open(path) as im:
        arr = np.asarray(im.convert("RGB"), dtype=np.float32)
    return arr / 255.0


def load_mask(path) -> np.ndarray:
    with Image.open(path) as im:
        arr = np.asarray(im.convert("L"), dtype=np.float32)
    return (arr > 127.0).astype(np.float32)


def save_image(img: np.ndarray, path):
    arr = np.clip(np.asarray(img) * 255.0, 0, 255).round().astype(np.uint8)
    Image.fromarray(arr).save(path)


def save_mask(mask: np.ndarray, path):
    arr = (np.asarray(mask) > 0.5).astype(np.uint8) * 255
    Image.fromarray(arr, mode="L").save(path)


def resize_image(img: np.ndarray, size: tuple[int, int]) -> np.ndarray:
    """Bilinear resize of a float image to (width, height), channel by channel."""
    chans = [
        np.asarray(Image.fromarray(np.ascontiguousarray(img[..., c]), mode="F").resize(size, Image.BILINEAR))
        for c in range(img.shape[-1])
    ]
    return np.stack(chans, axis=-1).astype(np.float32)


def resize_mask(mask: np.ndarray, size: tuple[int, int]) -> np.ndarray:
    out = Image.fromarray(np.ascontiguousarray(mask), mode="F").resize(size, Image.NEAREST)
    return np.asarray(out).astype(np.float32)


def list_image_stems(directory) -> dict[str, Path]:
    directory = Path(directory)
    if not directory.is_dir():
        raise DataError(f"not a directory: {directory}")
    out: dict[str, Path] = {}
    for p in sorted(directory.iterdir()):
        if p.suffix.lower() in IMAGE_EXTENSIONS:
            out[p.stem] = p
    return out


# ---------------------------------------------------------------------------
# mask morphology
# ---------------------------------------------------------------------------


def dilate_mask(mask: np.ndarray, k: int) -> np.ndarray:
    """Morphological dilation with a k x k square structuring element (k odd)."""
    if k < 1 or k % 2 == 0:
        raise DataError(f"kernel size must be odd and >= 1, got {k}")
    if k == 1:
        return mask.astype(np.float32).copy()
    out = maximum_filter(mask.astype(np.float32), size=k, mode="constant", cval=0.0)
    return (out > 0.5).astype(np.float32)


# ---------------------------------------------------------------------------
# triplets
# ---------------------------------------------------------------------------


@dataclass
class ShadowTriplet:
    """Co-registered (shadow image, binary mask, shadow-free image)."""

    x: np.ndarray  # (H, W, 3) in [0, 1]
    m: np.ndarray  # (H, W) in {0, 1}
    y0: np.ndarray  # (H, W, 3) in [0, 1]
    id: str

    def __post_init__(self):
        if self.x.shape != self.y0.shape or self.m.shape != self.x.shape[:2]:
            raise DataError(
                f"triplet {self.id}: co-registration violated "
                f"(x {self.x.shape}, m {self.m.shape}, y0 {self.y0.shape})"
            )


class TripletDataset:
    """In-memory triplet collection; pixel data kept as uint8 to stay small."""

    def __init__(self, ids, xs, ms, y0s, warnings=None):
        self.ids = list(ids)
        self._xs = xs
        self._ms = ms
        self._y0s = y0s
        self.warnings = list(warnings or [])

    def __len__(self):
        return len(self.ids)

    def __getitem__(self, i: int) -> ShadowTriplet:
        return ShadowTriplet(
            x=self._xs[i].astype(np.float32) / 255.0,
            m=(self._ms[i] > 127).astype(np.float32),
            y0=self._y0s[i].astype(np.float32) / 255.0,
            id=self.ids[i],
        )

    @staticmethod
    def from_triplets(triplets: list[ShadowTriplet]) -> "TripletDataset":
        return TripletDataset(
            ids=[t.id for t in triplets],
            xs=[np.clip(t.x * 255, 0, 255).round().astype(np.uint8) for t in triplets],
            ms=[(t.m * 255).astype(np.uint8) for t in triplets],
            y0s=[np.clip(t.y0 * 255, 0, 255).round().astype(np.uint8) for t in triplets],
        )


def load_triplets(root) -> TripletDataset:
    """Load a shadow/ mask/ shadow_free/ directory layout, matching by stem."""
    root = Path(root)
    dirs = {}
    for name in ("shadow", "mask", "shadow_free"):
        d = root / name
        if not d.is_dir():
            raise DataError(f"missing required directory: {d}")
        dirs[name] = list_image_stems(d)

    common = sorted(set(dirs["shadow"]) & set(dirs["mask"]) & set(dirs["shadow_free"]))
    warnings = []
    for name, stems in dirs.items():
        for orphan in sorted(set(stems) - set(common)):
            warnings.append(f"unmatched {name}/{stems[orphan].name}: no counterpart, skipped")
    if not common:
        raise DataError(f"no filename-matched triplets under {root}")

    ids, xs, ms, y0s = [], [], [], []
    for stem in common:
        try:
            x = load_image(dirs["shadow"][stem])
            m = load_mask(dirs["mask"][stem])
            y0 = load_image(dirs["shadow_free"][stem])
        except Exception as exc:  # unreadable file: skip, keep going
            warnings.append(f"unreadable triplet {stem}: {exc}")
            continue
        if x.shape != y0.shape or m.shape != x.shape[:2]:
            warnings.append(
                f"triplet {stem} rejected: mixed resolutions "
                f"(shadow {x.shape[:2]}, mask {m.shape}, shadow_free {y0.shape[:2]})"
            )
            continue
        ids.append(stem)
        xs.append((x * 255).round().astype(np.uint8))
        ms.append((m * 255).astype(np.uint8))
        y0s.append((y0 * 255).round().astype(np.uint8))
    if not ids:
        raise DataError(f"all triplets under {root} were rejected")
    return TripletDataset(ids, xs, ms, y0s, warnings)


# ---------------------------------------------------------------------------
# synthetic shadow generation
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SynthParams:
    dark_rate: float  # percent mean-intensity attenuation inside the mask
    feather_px: int = 2
    color_shift: float = 0.02  # per-channel additive offset range
    seed: int = 0

    def __post_init__(self):
        if not 0.0 < self.dark_rate < 100.0:
            raise DataError(f"dark_rate must be in (0, 100), got {self.dark_rate}")
        if self.feather_px < 0:
            raise DataError(f"feather_px must be >= 0, got {self.feather_px}")


def _feather_weight(mask: np.ndarray, feather_px: int) -> np.ndarray:
    """Linear ramp from 0 at the mask boundary to 1 at depth >= feather_px.

    The ramp lives strictly inside the mask, so pixels outside the mask are
    untouched by construction.
    """
    if feather_px <= 0 or not mask.any():
        return mask.astype(np.float64)
    inside = mask > 0.5
    depth = distance_transform_edt(inside)
    return np.where(inside, np.minimum(depth / feather_px, 1.0), 0.0)


def synth_shadow(y0: np.ndarray, instance_masks: list[np.ndarray], params: SynthParams, id: str = "synth") -> ShadowTriplet:
    """Darken y0 inside the (feathered) union of instance masks.

    Inside: x = clamp(a*y0 + b) with a = 1 - dark_rate/100 and a small seeded
    per-channel shift b; outside the mask support x equals y0 exactly.
    """
    if not instance_masks:
        return ShadowTriplet(x=y0.copy(), m=np.zeros(y0.shape[:2], np.float32), y0=y0.copy(), id=id)
    union = np.zeros(y0.shape[:2], dtype=np.float32)
    for m in instance_masks:
        if m.shape != y0.shape[:2]:
            raise DataError(f"instance mask shape {m.shape} exceeds image {y0.shape[:2]}")
        union = np.maximum(union, (m > 0.5).astype(np.float32))

    rng = np.random.default_rng(params.seed)
    a = 1.0 - params.dark_rate / 100.0
    b = rng.uniform(-params.color_shift, params.color_shift, size=3) if params.color_shift > 0 else np.zeros(3)
    shadowed = np.clip(a * y0 + b, 0.0, 1.0)
    w = _feather_weight(union, params.feather_px)[..., None]
    x = (w * shadowed + (1.0 - w) * y0).astype(np.float32)
    # outside the support the blend must be bit-exact, not just close
    x[union < 0.5] = y0[union < 0.5]
    return ShadowTriplet(x=x, m=union, y0=y0.astype(np.float32), id=id)


# ---------------------------------------------------------------------------
# procedural toy scenes
# ---------------------------------------------------------------------------

TOY_BENCH_SIZES = (32, 64, 128)


def _rot_coords(h, w, cx, cy, theta):
    yy, xx = np.mgrid[0:h, 0:w].astype(np.float64)
    u = (xx - cx) * math.cos(theta) + (yy - cy) * math.sin(theta)
    v = -(xx - cx) * math.sin(theta) + (yy - cy) * math.cos(theta)
    return u, v


def _shape_mask(rng: np.random.Generator, h: int, w: int) -> np.ndarray:
    kind = rng.choice(["ellipse", "rect", "triangle"])
    cx, cy = rng.uniform(0.15, 0.85) * w, rng.uniform(0.15, 0.85) * h
    theta = rng.uniform(0, 2 * math.pi)
    scale = rng.uniform(0.12, 0.35) * min(h, w)
    if kind == "ellipse":
        rx, ry = scale, scale * rng.uniform(0.4, 1.0)
        u, v = _rot_coords(h, w, cx, cy, theta)
        return ((u / rx) ** 2 + (v / ry) ** 2 <= 1.0).astype(np.float32)
    if kind == "rect":
        rx, ry = scale, scale * rng.uniform(0.4, 1.0)
        u, v = _rot_coords(h, w, cx, cy, theta)
        return ((np.abs(u) <= rx) & (np.abs(v) <= ry)).astype(np.float32)
    # triangle: three points around the center, orientation-agnostic half-plane test
    ang = np.sort(rng.uniform(0, 2 * math.pi, size=3))
    pts = np.stack([cx + scale * np.cos(ang), cy + scale * np.sin(ang)], axis=1)
    yy, xx = np.mgrid[0:h, 0:w].astype(np.float64)
    crosses = []
    for i in range(3):
        x1, y1 = pts[i]
        x2, y2 = pts[(i + 1) % 3]
        crosses.append((x2 - x1) * (yy - y1) - (y2 - y1) * (xx - x1))
    pos = np.logical_and.reduce([c >= 0 for c in crosses])
    neg = np.logical_and.reduce([c <= 0 for c in crosses])
    return (pos | neg).astype(np.float32)


def make_toy_scene(seed: int, size) -> np.ndarray:
    """Seeded procedural scene: gradient background plus 2-5 colored shapes.

    ``size`` is a side length or an (H, W) pair; the benchmark substrate uses
    TOY_BENCH_SIZES but larger canvases are allowed for windowed inference.
    """
    h, w = (size, size) if isinstance(size, int) else size
    if min(h, w) < 16:
        raise DataError(f"scene size too small: {(h, w)}")
    rng = np.random.default_rng(seed)

    c0 = rng.uniform(0.15, 0.9, size=3)
    c1 = rng.uniform(0.15, 0.9, size=3)
    theta = rng.uniform(0, 2 * math.pi)
    yy, xx = np.mgrid[0:h, 0:w].astype(np.float64)
    u = xx * math.cos(theta) + yy * math.sin(theta)
    u = (u - u.min()) / max(u.max() - u.min(), 1e-9)
    img = c0[None, None, :] + u[..., None] * (c1 - c0)[None, None, :]

    # mild periodic texture so scenes are not piecewise constant
    freq = rng.uniform(2.0, 6.0)
    phase = rng.uniform(0, 2 * math.pi)
    tex = 0.04 * np.sin(2 * math.pi * freq * (xx / w + yy / h) + phase)
    img += tex[..., None] * rng.uniform(0.3, 1.0, size=3)

    for _ in range(int(rng.integers(2, 6))):
        mask = _shape_mask(rng, h, w)
        color = rng.uniform(0.05, 0.95, size=3)
        textured = rng.random() < 0.5
        fill = np.broadcast_to(color, (h, w, 3)).copy()
        if textured:
            f2 = rng.uniform(4.0, 10.0)
            fill += 0.08 * np.sin(2 * math.pi * f2 * (xx / w) + rng.uniform(0, 6.28))[..., None]
        img = np.where(mask[..., None] > 0.5, fill, img)

    return np.clip(img, 0.0, 1.0).astype(np.float32)


def make_instance_masks(seed: int, size, n_min: int = 1, n_max: int = 3) -> list[np.ndarray]:
    """Seeded random instance masks for synthetic shadow casting."""
    h, w = (size, size) if isinstance(size, int) else size
    rng = np.random.default_rng(seed)
    return [_shape_mask(rng, h, w) for _ in range(int(rng.integers(n_min, n_max + 1)))]


def write_triplet_dataset(
    out_dir,
    count: int,
    size: int,
    dark_rate_min: float,
    dark_rate_max: float,
    seed: int,
    feather_px: int = 2,
    color_shift: float = 0.02,
) -> int:
    """Generate `count` synthetic triplets into the standard directory layout.

    Byte-identical across runs with the same arguments.
    """
    out_dir = Path(out_dir)
    for name in ("shadow", "mask", "shadow_free"):
        (out_dir / name).mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)
    min_area = 0.02 * size * size  # every generated triplet carries a real shadow
    written = 0
    for i in range(count):
        scene_seed = int(rng.integers(0, 2**31 - 1))
        shadow_seed = int(rng.integers(0, 2**31 - 1))
        dark = float(rng.uniform(dark_rate_min, dark_rate_max))
        y0 = make_toy_scene(scene_seed, size)
        while True:
            masks = make_instance_masks(int(rng.integers(0, 2**31 - 1)), size)
            if np.maximum.reduce(masks).sum() >= min_area:
                break
        params = SynthParams(dark_rate=dark, feather_px=feather_px, color_shift=color_shift, seed=shadow_seed)
        trip = synth_shadow(y0, masks, params, id=f"{i:05d}")
        save_image(trip.x, out_dir / "shadow" / f"{trip.id}.png")
        save_mask(trip.m, out_dir / "mask" / f"{trip.id}.png")
        save_image(trip.y0, out_dir / "shadow_free" / f"{trip.id}.png")
        written += 1
    return written


# ---------------------------------------------------------------------------
# dark-rate statistics
# ---------------------------------------------------------------------------


def estimate_dark_rate(triplet: ShadowTriplet) -> float:
    """Percent mean-intensity attenuation inside the mask: 100*(1 - mean(x)/mean(y0))."""
    sel = triplet.m > 0.5
    if not sel.any():
        raise DataError(f"triplet {triplet.id}: zero-area mask")
    mx = float(triplet.x[sel].mean())
    my = float(triplet.y0[sel].mean())
    if my <= 0:
        raise DataError(f"triplet {triplet.id}: shadow-free mask region is black")
    return 100.0 * (1.0 - mx / my)


def dark_rate_histogram(
    dataset: TripletDataset, bin_width: float = 2.0, lo: float = 0.0, hi: float = 100.0
):
    """Histogram of per-triplet dark rates; returns (edges, counts, warnings)."""
    edges = np.arange(lo, hi + bin_width, bin_width)
    rates = []
    warnings = []
    for i in range(len(dataset)):
        try:
            rates.append(estimate_dark_rate(dataset[i]))
        except DataError as exc:
            warnings.append(str(exc))
    counts, _ = np.histogram(rates, bins=edges)
    return edges, counts, warnings


def write_histogram_csv(edges: np.ndarray, counts: np.ndarray, path):
    import csv

    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["bin_lo", "bin_hi", "count"])
        for lo, hi, c in zip(edges[:-1], edges[1:], counts):
            w.writerow([f"{lo:.2f}", f"{hi:.2f}", int(c)])
