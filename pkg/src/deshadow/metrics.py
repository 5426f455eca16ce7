"""Region-masked image metrics and the latent-collapse scatter diagnostic.

Convention: images are float arrays (H, W, 3) in [0, 1]; region masks are
(H, W) arrays in {0, 1}. PSNR and SSIM are computed on the 0-255 scale in RGB;
RMSE (and the MAE variant) in CIELAB.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Iterable, Sequence

import numpy as np
from scipy.ndimage import correlate

from .colorspace import srgb_to_lab

PSNR_CAP_DB = 99.0  # reported for identical inputs instead of +inf

SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_K1 = 0.01
SSIM_K2 = 0.03


class MetricError(ValueError):
    pass


@dataclass(frozen=True)
class RegionMetrics:
    region: str  # shadow | non_shadow | all
    rmse_lab: float
    psnr_db: float
    ssim: float
    pixel_count: int


def _check_pair(pred: np.ndarray, gt: np.ndarray, mask: np.ndarray):
    if pred.shape != gt.shape:
        raise MetricError(f"pred/gt shape mismatch: {pred.shape} vs {gt.shape}")
    if mask.shape != pred.shape[:2]:
        raise MetricError(f"mask shape {mask.shape} does not match image {pred.shape[:2]}")
    if not mask.any():
        raise MetricError("region mask is empty")


def rmse_lab(pred: np.ndarray, gt: np.ndarray, region_mask: np.ndarray) -> float:
    """Root mean square CIELAB difference over masked pixels (all 3 channels)."""
    _check_pair(pred, gt, region_mask)
    diff = srgb_to_lab(pred) - srgb_to_lab(gt)
    sel = region_mask.astype(bool)
    return float(np.sqrt(np.mean(diff[sel] ** 2)))


def mae_lab(pred: np.ndarray, gt: np.ndarray, region_mask: np.ndarray) -> float:
    """Mean absolute CIELAB difference (the value much of the shadow-removal
    literature reports under the name RMSE)."""
    _check_pair(pred, gt, region_mask)
    diff = srgb_to_lab(pred) - srgb_to_lab(gt)
    sel = region_mask.astype(bool)
    return float(np.mean(np.abs(diff[sel])))


def psnr_region(pred: np.ndarray, gt: np.ndarray, region_mask: np.ndarray) -> float:
    """PSNR in dB on the 0-255 scale over masked pixels; capped at PSNR_CAP_DB."""
    _check_pair(pred, gt, region_mask)
    sel = region_mask.astype(bool)
    mse = float(np.mean(((pred[sel] - gt[sel]) * 255.0) ** 2))
    if mse == 0.0:
        return PSNR_CAP_DB
    return min(20.0 * math.log10(255.0 / math.sqrt(mse)), PSNR_CAP_DB)


def _gaussian_kernel(size: int = SSIM_WINDOW, sigma: float = SSIM_SIGMA) -> np.ndarray:
    half = (size - 1) / 2.0
    x = np.arange(size) - half
    g1 = np.exp(-(x**2) / (2 * sigma**2))
    k = np.outer(g1, g1)
    return k / k.sum()


def ssim_map(pred: np.ndarray, gt: np.ndarray) -> np.ndarray:
    """Per-pixel SSIM with an 11x11 Gaussian window (sigma 1.5), symmetric
    boundary padding, averaged over channels. Inputs in [0, 1]."""
    a = np.asarray(pred, dtype=np.float64) * 255.0
    b = np.asarray(gt, dtype=np.float64) * 255.0
    if a.ndim == 2:
        a = a[..., None]
        b = b[..., None]
    kernel = _gaussian_kernel()
    c1 = (SSIM_K1 * 255.0) ** 2
    c2 = (SSIM_K2 * 255.0) ** 2

    def filt(img):
        return correlate(img, kernel, mode="reflect")

    maps = []
    for ch in range(a.shape[-1]):
        x, y = a[..., ch], b[..., ch]
        mu_x, mu_y = filt(x), filt(y)
        var_x = filt(x * x) - mu_x**2
        var_y = filt(y * y) - mu_y**2
        cov = filt(x * y) - mu_x * mu_y
        num = (2 * mu_x * mu_y + c1) * (2 * cov + c2)
        den = (mu_x**2 + mu_y**2 + c1) * (var_x + var_y + c2)
        maps.append(num / den)
    return np.mean(maps, axis=0)


def ssim_region(pred: np.ndarray, gt: np.ndarray, region_mask: np.ndarray) -> float:
    """Mean SSIM over windows whose center lies in the mask."""
    _check_pair(pred, gt, region_mask)
    smap = ssim_map(pred, gt)
    return float(smap[region_mask.astype(bool)].mean())


def region_metrics(
    pred: np.ndarray, gt: np.ndarray, region_mask: np.ndarray, region: str, lab_metric: str = "rmse"
) -> RegionMetrics:
    err_fn = rmse_lab if lab_metric == "rmse" else mae_lab
    return RegionMetrics(
        region=region,
        rmse_lab=err_fn(pred, gt, region_mask),
        psnr_db=psnr_region(pred, gt, region_mask),
        ssim=ssim_region(pred, gt, region_mask),
        pixel_count=int(region_mask.astype(bool).sum()),
    )


# ---------------------------------------------------------------------------
# benchmark evaluation protocol
# ---------------------------------------------------------------------------

EVAL_RESOLUTION = 256


@dataclass
class EvaluationReport:
    rows: list[dict]  # one per (image, region)
    aggregates: dict[str, RegionMetrics]
    excluded: list[str]  # stems skipped because of missing counterparts

    @property
    def excluded_fraction(self) -> float:
        n_eval = len({r["image_id"] for r in self.rows})
        total = n_eval + len(self.excluded)
        return len(self.excluded) / total if total else 0.0


def evaluate_dataset(
    results_dir,
    gt_dir,
    mask_dir,
    dilation_k: int = 21,
    lab_metric: str = "rmse",
    out_csv=None,
) -> EvaluationReport:
    """Benchmark protocol: resize result and GT to 256x256 (bilinear), masks
    nearest-neighbor then dilated; score shadow / non_shadow / all regions."""
    from .data import dilate_mask, list_image_stems, load_image, load_mask, resize_image, resize_mask

    results_dir, gt_dir, mask_dir = Path(results_dir), Path(gt_dir), Path(mask_dir)
    res = list_image_stems(results_dir)
    gts = list_image_stems(gt_dir)
    masks = list_image_stems(mask_dir)
    common = sorted(set(res) & set(gts) & set(masks))
    excluded = sorted((set(res) | set(gts) | set(masks)) - set(common))
    if not common:
        raise MetricError("no filename-matched (result, gt, mask) triples found")

    rows: list[dict] = []
    per_region_vals: dict[str, list[RegionMetrics]] = {"shadow": [], "non_shadow": [], "all": []}
    size = (EVAL_RESOLUTION, EVAL_RESOLUTION)
    for stem in common:
        pred = resize_image(load_image(res[stem]), size)
        gt = resize_image(load_image(gts[stem]), size)
        mask = resize_mask(load_mask(masks[stem]), size)
        mask = dilate_mask(mask, dilation_k)
        regions = {
            "shadow": mask,
            "non_shadow": 1.0 - mask,
            "all": np.ones_like(mask),
        }
        for name, rmask in regions.items():
            if not rmask.any():  # fully-covering mask leaves an empty complement
                continue
            m = region_metrics(pred, gt, rmask, name, lab_metric)
            per_region_vals[name].append(m)
            rows.append(
                {
                    "image_id": stem,
                    "region": name,
                    "rmse_lab": m.rmse_lab,
                    "psnr_db": m.psnr_db,
                    "ssim": m.ssim,
                    "pixel_count": m.pixel_count,
                    "lab_metric": lab_metric,
                }
            )

    aggregates = {}
    for name, vals in per_region_vals.items():
        if not vals:
            continue
        aggregates[name] = RegionMetrics(
            region=name,
            rmse_lab=float(np.mean([v.rmse_lab for v in vals])),
            psnr_db=float(np.mean([v.psnr_db for v in vals])),
            ssim=float(np.mean([v.ssim for v in vals])),
            pixel_count=int(np.sum([v.pixel_count for v in vals])),
        )

    report = EvaluationReport(rows=rows, aggregates=aggregates, excluded=excluded)
    if out_csv is not None:
        write_report_csv(report, out_csv)
    return report


def write_report_csv(report: EvaluationReport, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["image_id", "region", "rmse_lab", "psnr_db", "ssim"])
        for r in report.rows:
            w.writerow([r["image_id"], r["region"], f"{r['rmse_lab']:.6f}", f"{r['psnr_db']:.4f}", f"{r['ssim']:.6f}"])
        for name, agg in report.aggregates.items():
            w.writerow(["__mean__", name, f"{agg.rmse_lab:.6f}", f"{agg.psnr_db:.4f}", f"{agg.ssim:.6f}"])


# ---------------------------------------------------------------------------
# posterior-collapse scatter diagnostic
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CollapsePoint:
    mean_y_t: float
    mean_y_t_minus_1: float
    t: int


def pearson_r(xs: Sequence[float], ys: Sequence[float]) -> float:
    """Pearson correlation; 0.0 when either coordinate has (near-)zero variance."""
    x = np.asarray(xs, dtype=np.float64)
    y = np.asarray(ys, dtype=np.float64)
    if x.size < 2:
        raise MetricError("need at least 2 points")
    sx, sy = x.std(), y.std()
    if sx < 1e-12 or sy < 1e-12:
        return 0.0
    return float(np.mean((x - x.mean()) * (y - y.mean())) / (sx * sy))


def collapse_scatter(
    step_fn: Callable[[np.ndarray, int, int], np.ndarray],
    images: Sequence[np.ndarray],
    schedule,
    n_points: int,
    seed: int,
) -> tuple[list[CollapsePoint], float]:
    """Sample (image, t) pairs, forward-noise to y_t, apply one reverse step,
    and record (mean y_t, mean predicted y_{t-1}) per point.

    ``step_fn(y_t, t, image_index) -> y_{t-1}`` operates on a single [-1, 1]
    CHW array; ``images`` are clean [-1, 1] CHW arrays. The index lets real
    models look up the conditioning that belongs to the drawn image; stubs
    ignore it.
    """
    from .schedule import q_sample

    if n_points < 2:
        raise MetricError("n_points must be >= 2")
    rng = np.random.default_rng(seed)
    points = []
    for _ in range(n_points):
        idx = int(rng.integers(len(images)))
        img = images[idx]
        t = int(rng.integers(1, schedule.T + 1))
        eps = rng.standard_normal(img.shape)
        y_t = q_sample(img, t, eps, schedule)
        y_prev = step_fn(y_t, t, idx)
        points.append(CollapsePoint(float(np.mean(y_t)), float(np.mean(y_prev)), t))
    r = pearson_r([p.mean_y_t for p in points], [p.mean_y_t_minus_1 for p in points])
    return points, r


def write_scatter_csv(points: Iterable[CollapsePoint], path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "mean_yt", "mean_ytm1"])
        for p in points:
            w.writerow([p.t, f"{p.mean_y_t:.8f}", f"{p.mean_y_t_minus_1:.8f}"])
