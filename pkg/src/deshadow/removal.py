"""Inference orchestration: DDIM sampling chains, full-resolution sliding-window
removal, fast downsampled removal, and batch evaluation helpers.

The mask-composite guarantee holds in every mode: pixels where the dilated
mask is zero are bit-identical to the input (unless composite_only_mask is
explicitly turned off to inspect raw model output).
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from pathlib import Path
from typing import Callable, Optional

import numpy as np
import torch

from .checkpoint import load_checkpoint
from .data import TripletDataset, dilate_mask, resize_image, resize_mask
from .metrics import CollapsePoint, collapse_scatter
from .nets import DiffusionModel, GuidanceBundle, image_to_tensor, mask_to_tensor, tensor_to_image
from .profiles import get_profile
from .schedule import NoiseSchedule, ddim_step, ddim_time_grid, posterior_mean_from_eps


class RemovalError(ValueError):
    pass


REMOVAL_MODES = ("full", "quick")


@dataclass
class RemovalRequest:
    image: np.ndarray  # (H, W, 3) in [0, 1]
    mask: np.ndarray  # (H, W) in {0, 1}
    mode: str = "full"
    dilation_k: int = 21
    steps: int = 50
    seed: int = 0
    eta: float = 0.0
    composite_only_mask: bool = True

    def __post_init__(self):
        if self.mode not in REMOVAL_MODES:
            raise RemovalError(f"mode must be one of {REMOVAL_MODES}, got {self.mode!r}")
        if self.image.shape[:2] != self.mask.shape:
            raise RemovalError(
                f"image {self.image.shape[:2]} and mask {self.mask.shape} are not co-registered"
            )
        if self.steps < 1:
            raise RemovalError(f"steps must be >= 1, got {self.steps}")


# ---------------------------------------------------------------------------
# DDIM chain
# ---------------------------------------------------------------------------


def ddim_denoise_batch(
    model: DiffusionModel,
    schedule: NoiseSchedule,
    x: torch.Tensor,
    m: torch.Tensor,
    steps: int,
    eta: float = 0.0,
    generator: Optional[torch.Generator] = None,
    clamp_y0: bool = True,
    progress_cb: Optional[Callable[[float], None]] = None,
) -> torch.Tensor:
    """Run the full reverse chain from pure noise under (x, m) conditioning.

    x, m are [-1, 1] / {0, 1} tensors of shape (B, 3, H, W) / (B, 1, H, W);
    returns the predicted clean batch in [-1, 1].
    """
    model.eval()
    with torch.no_grad():
        g = model.make_guidance(x, m)
        bundle = GuidanceBundle(x=x, m=m, g=g)
        y = torch.randn(x.shape, generator=generator)
        grid = ddim_time_grid(schedule.T, steps)
        t_pairs = list(zip(reversed(grid), reversed([0] + grid[:-1])))
        for i, (t, t_prev) in enumerate(t_pairs):
            tt = torch.full((x.shape[0],), t, dtype=torch.long)
            eps_hat = model.denoise(y, bundle, tt)
            noise = torch.randn(x.shape, generator=generator) if eta > 0 else None
            y = ddim_step(y, eps_hat, t, t_prev, eta, schedule, noise=noise, clamp_y0=clamp_y0)
            if progress_cb is not None:
                progress_cb((i + 1) / len(t_pairs))
    return y


# ---------------------------------------------------------------------------
# compositing and window blending
# ---------------------------------------------------------------------------


def composite(original: np.ndarray, model_out: np.ndarray, dilated_mask: np.ndarray, only_mask: bool) -> np.ndarray:
    if not only_mask:
        return model_out.astype(np.float32)
    out = original.astype(np.float32).copy()
    sel = dilated_mask > 0.5
    out[sel] = model_out[sel]
    return out


def window_positions(extent: int, window: int, stride: int) -> list[int]:
    if extent <= window:
        return [0]
    positions = list(range(0, extent - window + 1, stride))
    if positions[-1] != extent - window:
        positions.append(extent - window)
    return positions


def feather_profile(window: int, overlap: int) -> np.ndarray:
    """Separable linear feather: weight ramps from 1/overlap at the window edge
    to 1 in the interior, so overlapping windows cross-fade."""
    if overlap <= 0:
        return np.ones((window, window))
    p = np.arange(window, dtype=np.float64)
    ramp = np.minimum(1.0, np.minimum((p + 1) / overlap, (window - p) / overlap))
    return np.outer(ramp, ramp)


# ---------------------------------------------------------------------------
# removal modes
# ---------------------------------------------------------------------------


def remove_sliding(
    req: RemovalRequest,
    model: DiffusionModel,
    schedule: NoiseSchedule,
    stride: Optional[int] = None,
    window_batch: int = 8,
    progress_cb: Optional[Callable[[float], None]] = None,
) -> np.ndarray:
    """Window-by-window removal at the model's native resolution; windows that
    contain no mask pixels are copied through untouched."""
    window = model.denoiser_config.image_size
    stride = stride or window // 2
    dil = dilate_mask(req.mask, req.dilation_k)
    if not dil.any():
        return req.image.copy()

    h, w = req.image.shape[:2]
    pad_h, pad_w = max(0, window - h), max(0, window - w)
    img = req.image
    msk = dil
    if pad_h or pad_w:
        img = np.pad(img, ((0, pad_h), (0, pad_w), (0, 0)), mode="reflect")
        msk = np.pad(msk, ((0, pad_h), (0, pad_w)), mode="reflect")
    ph, pw = img.shape[:2]

    boxes = [
        (top, left)
        for top in window_positions(ph, window, stride)
        for left in window_positions(pw, window, stride)
        if msk[top : top + window, left : left + window].any()
    ]
    weight = feather_profile(window, window - stride)
    accum = np.zeros((ph, pw, 3), dtype=np.float64)
    wsum = np.zeros((ph, pw), dtype=np.float64)

    gen = torch.Generator().manual_seed(req.seed)
    done = 0
    for start in range(0, len(boxes), window_batch):
        chunk = boxes[start : start + window_batch]
        xs = torch.stack(
            [image_to_tensor(img[t : t + window, l : l + window]) for t, l in chunk]
        )
        ms = torch.stack(
            [mask_to_tensor(msk[t : t + window, l : l + window]) for t, l in chunk]
        )
        y = ddim_denoise_batch(model, schedule, xs, ms, req.steps, req.eta, gen)
        for (top, left), out in zip(chunk, y):
            accum[top : top + window, left : left + window] += weight[..., None] * tensor_to_image(out)
            wsum[top : top + window, left : left + window] += weight
        done += len(chunk)
        if progress_cb is not None:
            progress_cb(done / len(boxes))

    blended = np.where(wsum[..., None] > 0, accum / np.maximum(wsum, 1e-12)[..., None], img)
    blended = blended[:h, :w].astype(np.float32)
    return composite(req.image, blended, dil, req.composite_only_mask)


def remove_quick(
    req: RemovalRequest,
    model: DiffusionModel,
    schedule: NoiseSchedule,
    quick_resolution: int = 512,
    progress_cb: Optional[Callable[[float], None]] = None,
) -> np.ndarray:
    """Downsample, run one whole-frame denoising pass, upsample, composite."""
    dil = dilate_mask(req.mask, req.dilation_k)
    if not dil.any():
        return req.image.copy()
    h, w = req.image.shape[:2]
    size = (quick_resolution, quick_resolution)
    img_small = resize_image(req.image, size)
    msk_small = resize_mask(dil, size)
    x = image_to_tensor(img_small).unsqueeze(0)
    m = mask_to_tensor(msk_small).unsqueeze(0)
    gen = torch.Generator().manual_seed(req.seed)
    y = ddim_denoise_batch(model, schedule, x, m, req.steps, req.eta, gen, progress_cb=progress_cb)
    out_small = tensor_to_image(y[0])
    out = resize_image(out_small, (w, h))
    return composite(req.image, out, dil, req.composite_only_mask)


def default_quick_resolution(model: DiffusionModel, schedule: NoiseSchedule) -> int:
    from .profiles import PROFILES

    if schedule.profile in PROFILES:
        return PROFILES[schedule.profile].quick_resolution
    return 2 * model.denoiser_config.image_size


def remove(
    req: RemovalRequest,
    model: DiffusionModel,
    schedule: NoiseSchedule,
    quick_resolution: Optional[int] = None,
    progress_cb: Optional[Callable[[float], None]] = None,
) -> np.ndarray:
    if req.mode == "quick":
        if quick_resolution is None:
            quick_resolution = default_quick_resolution(model, schedule)
        return remove_quick(req, model, schedule, quick_resolution, progress_cb=progress_cb)
    return remove_sliding(req, model, schedule, progress_cb=progress_cb)


# ---------------------------------------------------------------------------
# batch helpers (evaluation-scale removal over a dataset)
# ---------------------------------------------------------------------------


def remove_dataset(
    checkpoint_path,
    dataset: TripletDataset,
    out_dir,
    steps: int = 50,
    seed: int = 0,
    dilation_k: int = 7,
    batch: int = 25,
) -> Path:
    """Run removal over every triplet (images must match the model's native
    size) and write PNG results named by triplet id."""
    from .data import save_image

    model, schedule, _ = load_checkpoint(checkpoint_path)
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    size = model.denoiser_config.image_size
    gen = torch.Generator().manual_seed(seed)
    for start in range(0, len(dataset), batch):
        idxs = range(start, min(start + batch, len(dataset)))
        trips = [dataset[i] for i in idxs]
        for tr in trips:
            if tr.x.shape[:2] != (size, size):
                raise RemovalError(f"triplet {tr.id} is {tr.x.shape[:2]}, model expects {(size, size)}")
        dils = [dilate_mask(tr.m, dilation_k) for tr in trips]
        xs = torch.stack([image_to_tensor(tr.x) for tr in trips])
        ms = torch.stack([mask_to_tensor(d) for d in dils])
        y = ddim_denoise_batch(model, schedule, xs, ms, steps, 0.0, gen)
        for tr, d, out in zip(trips, dils, y):
            final = composite(tr.x, tensor_to_image(out), d, True)
            save_image(final, out_dir / f"{tr.id}.png")
    return out_dir


# ---------------------------------------------------------------------------
# collapse diagnostic on a real checkpoint
# ---------------------------------------------------------------------------


def collapse_scatter_from_checkpoint(
    checkpoint_path,
    dataset: TripletDataset,
    n_points: int,
    seed: int,
    max_images: int = 32,
) -> tuple[list[CollapsePoint], float]:
    """Fig.-style diagnostic: one DDPM posterior-mean reverse step per point."""
    model, schedule, _ = load_checkpoint(checkpoint_path)
    model.eval()
    take = min(len(dataset), max_images)
    trips = [dataset[i] for i in range(take)]
    images = [image_to_tensor(tr.y0).numpy() for tr in trips]
    conds = [(image_to_tensor(tr.x).unsqueeze(0), mask_to_tensor(tr.m).unsqueeze(0)) for tr in trips]

    def step_fn(y_t_np: np.ndarray, t: int, idx: int) -> np.ndarray:
        x, m = conds[idx]
        y_t = torch.from_numpy(np.asarray(y_t_np, dtype=np.float32)).unsqueeze(0)
        with torch.no_grad():
            g = model.make_guidance(x, m)
            eps_hat = model.denoise(y_t, GuidanceBundle(x=x, m=m, g=g), torch.tensor([t]))
            mu = posterior_mean_from_eps(y_t, eps_hat, t, schedule)
        return mu[0].numpy()

    return collapse_scatter(step_fn, images, schedule, n_points, seed)
