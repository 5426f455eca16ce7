"""Two-stage optimization: shadow-free pretraining, then guided finetuning with
the invariant loss, plus the lagged-posterior ablation loop.

Stage-1 trains denoiser and latent encoder jointly on shadow-free images under
their own latent guidance (zero mask). Stage-2 resumes from the pretrain
checkpoint and adds the invariant term tying the shadowed encoding to the
shadow-free one; gradients flow through both encoder call sites.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, asdict, field, replace
from pathlib import Path

import numpy as np
import torch

from .checkpoint import load_checkpoint, save_checkpoint
from .data import TripletDataset
from .nets import DiffusionModel, GuidanceBundle, image_to_tensor, mask_to_tensor
from .profiles import get_profile
from .schedule import NoiseSchedule


class TrainingError(RuntimeError):
    pass


class TrainingDiverged(TrainingError):
    """Raised when a non-finite loss is seen; training never silently continues."""


STAGES = ("pretrain", "finetune")


@dataclass
class TrainConfig:
    stage: str = "pretrain"
    lr: float = 2.5e-5
    batch_size: int = 4
    max_steps: int = 1000
    p2_gamma: float = 1.0
    p2_k: float = 1.0
    inv_loss_weight: float = 1.0
    seed: int = 0
    dlvf_enabled: bool = True
    guidance_mode: str = "latent"
    lagged_posterior: bool = False
    lagged_k: int = 4
    profile: str = "toy"
    ema: bool = False
    ema_decay: float = 0.999
    checkpoint_every: int = 0  # 0: final checkpoint only
    allow_finetune_from_scratch: bool = False
    pretrain_mask: str = "zero"  # "dataset" feeds real masks (robustness variant)

    def __post_init__(self):
        if self.stage not in STAGES:
            raise TrainingError(f"stage must be one of {STAGES}, got {self.stage!r}")
        if self.pretrain_mask not in ("zero", "dataset"):
            raise TrainingError(f"pretrain_mask must be 'zero' or 'dataset', got {self.pretrain_mask!r}")
        if self.lr <= 0:
            raise TrainingError(f"lr must be positive, got {self.lr}")
        if self.inv_loss_weight < 0 or self.p2_gamma < 0 or self.p2_k <= 0:
            raise TrainingError("loss weights must be non-negative (p2_k positive)")
        if self.batch_size < 1 or self.max_steps < 1:
            raise TrainingError("batch_size and max_steps must be >= 1")


# keys accepted in the flat key=value config file; exactly the TrainConfig fields
_CONFIG_PARSERS = {
    "stage": str,
    "lr": float,
    "batch_size": int,
    "max_steps": int,
    "p2_gamma": float,
    "p2_k": float,
    "inv_loss_weight": float,
    "seed": int,
    "dlvf_enabled": lambda v: v.lower() in ("1", "true", "yes"),
    "guidance_mode": str,
    "lagged_posterior": lambda v: v.lower() in ("1", "true", "yes"),
    "lagged_k": int,
    "profile": str,
    "ema": lambda v: v.lower() in ("1", "true", "yes"),
    "ema_decay": float,
    "checkpoint_every": int,
    "allow_finetune_from_scratch": lambda v: v.lower() in ("1", "true", "yes"),
    "pretrain_mask": str,
}


def parse_train_config(path) -> TrainConfig:
    """Flat `key = value` document, '#' comments allowed."""
    values = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise TrainingError(f"{path}:{lineno}: expected key = value, got {raw!r}")
        key, _, val = line.partition("=")
        key, val = key.strip(), val.strip()
        if key not in _CONFIG_PARSERS:
            raise TrainingError(f"{path}:{lineno}: unknown key {key!r}")
        values[key] = _CONFIG_PARSERS[key](val)
    return TrainConfig(**values)


def write_train_config(config: TrainConfig, path):
    lines = [f"{k} = {v}" for k, v in asdict(config).items()]
    Path(path).write_text("\n".join(lines) + "\n")


@dataclass(frozen=True)
class LossReport:
    loss_simple: float
    loss_invariant: float
    loss_total: float
    step: int


def gather_alpha_bars(schedule: NoiseSchedule, t: torch.Tensor) -> torch.Tensor:
    ab = torch.from_numpy(schedule.alpha_bars).to(torch.float32)
    return ab[t - 1]


class Trainer:
    """Single-writer training driver over a DiffusionModel.

    Per-step randomness is drawn in a fixed order (batch indices from the
    numpy generator, then t, then eps from the torch generator) so runs are
    reproducible and traceable against hand-built loops.
    """

    def __init__(self, config: TrainConfig, model: DiffusionModel, schedule: NoiseSchedule):
        self.config = config
        self.model = model
        self.schedule = schedule
        self.opt = torch.optim.Adam(model.parameters(), lr=config.lr)
        self.data_rng = np.random.default_rng(config.seed)
        self.gen = torch.Generator().manual_seed(config.seed + 1)
        self.step = 0
        self.n_denoiser_only = 0
        self.n_joint = 0
        self._denoiser_params = list(model.denoiser.parameters()) + list(
            model.noise_encoder.parameters()
        )
        self._encoder_params = (
            list(model.latent_encoder.parameters()) if model.latent_encoder is not None else []
        )
        self._ema = None
        if config.ema:
            self._ema = {k: v.detach().clone() for k, v in model.state_dict().items()}

    # -- randomness ---------------------------------------------------------

    def draw_batch_indices(self, n_items: int) -> np.ndarray:
        take = min(self.config.batch_size, n_items)
        return self.data_rng.choice(n_items, size=take, replace=False)

    def draw_t_eps(self, shape) -> tuple[torch.Tensor, torch.Tensor]:
        t = torch.randint(1, self.schedule.T + 1, (shape[0],), generator=self.gen)
        eps = torch.randn(shape, generator=self.gen)
        return t, eps

    # -- losses --------------------------------------------------------------

    def _weighted_simple_loss(self, eps, eps_hat, t) -> torch.Tensor:
        per_sample = ((eps - eps_hat) ** 2).mean(dim=(1, 2, 3))
        ab = gather_alpha_bars(self.schedule, t)
        snr = ab / (1.0 - ab)
        weights = 1.0 / (self.config.p2_k + snr) ** self.config.p2_gamma
        return (weights * per_sample).mean()

    def _forward_losses(self, x, m, y0, pretrain: bool):
        t, eps = self.draw_t_eps(y0.shape)
        ab = gather_alpha_bars(self.schedule, t)[:, None, None, None]
        y_t = torch.sqrt(ab) * y0 + torch.sqrt(1.0 - ab) * eps

        loss_inv = torch.zeros((), dtype=y0.dtype)
        if self.model.guidance_mode == "latent":
            g_cond = self.model.encode_latent(x, m)
            if pretrain:
                g = g_cond
            else:
                g_free = self.model.encode_latent(y0, torch.zeros_like(m))
                loss_inv = ((g_free - g_cond) ** 2).mean()
                g = g_cond
        else:
            g = self.model.make_guidance(x, m)

        eps_hat = self.model.denoise(y_t, GuidanceBundle(x=x, m=m, g=g), t)
        loss_simple = self._weighted_simple_loss(eps, eps_hat, t)
        return loss_simple, loss_inv

    def _finish_step(self, loss_simple, loss_inv, joint: bool) -> LossReport:
        loss_total = loss_simple + self.config.inv_loss_weight * loss_inv
        if not torch.isfinite(loss_total.detach()):
            self._dump_divergence(loss_simple, loss_inv)
            raise TrainingDiverged(
                f"non-finite loss at step {self.step + 1}: "
                f"simple={float(loss_simple.detach())}, invariant={float(loss_inv.detach())}"
            )
        self.opt.zero_grad(set_to_none=True)
        loss_total.backward()
        if not joint:
            # lagged-posterior denoiser-only update: encoder params keep no grad,
            # so Adam skips them entirely (state untouched)
            for p in self._encoder_params:
                p.grad = None
        self.opt.step()
        if joint:
            self.n_joint += 1
        else:
            self.n_denoiser_only += 1
        if self._ema is not None:
            with torch.no_grad():
                for k, v in self.model.state_dict().items():
                    if v.dtype.is_floating_point:
                        self._ema[k].mul_(self.config.ema_decay).add_(v, alpha=1 - self.config.ema_decay)
                    else:
                        self._ema[k] = v.detach().clone()
        self.step += 1
        # reported total recomputed in float64 so the decomposition identity
        # loss_total == loss_simple + w * loss_invariant holds exactly
        simple = float(loss_simple.detach())
        inv = float(loss_inv.detach())
        return LossReport(
            loss_simple=simple,
            loss_invariant=inv,
            loss_total=simple + self.config.inv_loss_weight * inv,
            step=self.step,
        )

    def _dump_divergence(self, loss_simple, loss_inv):
        dump = {
            "step": self.step + 1,
            "loss_simple": float(loss_simple.detach()),
            "loss_invariant": float(loss_inv.detach()),
            "config": asdict(self.config),
            "param_norm": float(
                torch.sqrt(sum((p.detach() ** 2).sum() for p in self.model.parameters()))
            ),
        }
        path = Path("diverged_dump.json")
        try:
            path.write_text(json.dumps(dump, indent=2))
        except OSError:
            pass

    # -- public step API ------------------------------------------------------

    def pretrain_step(self, y0: torch.Tensor, m: torch.Tensor) -> LossReport:
        """Stage-1 step: the conditioning image is the clean image itself; the
        mask input is zero by default ("dataset" feeds the real masks)."""
        mask = m if self.config.pretrain_mask == "dataset" else torch.zeros_like(m)
        loss_simple, _ = self._forward_losses(x=y0, m=mask, y0=y0, pretrain=True)
        return self._finish_step(loss_simple, torch.zeros(()), joint=True)

    def finetune_step(self, x: torch.Tensor, m: torch.Tensor, y0: torch.Tensor, joint: bool = True) -> LossReport:
        loss_simple, loss_inv = self._forward_losses(x=x, m=m, y0=y0, pretrain=False)
        return self._finish_step(loss_simple, loss_inv, joint=joint)

    def final_state_dict(self):
        if self._ema is not None:
            return self._ema
        return self.model.state_dict()


def triplet_batch(dataset: TripletDataset, idxs) -> tuple[torch.Tensor, torch.Tensor, torch.Tensor]:
    xs, ms, y0s = [], [], []
    for i in idxs:
        trip = dataset[int(i)]
        xs.append(image_to_tensor(trip.x))
        ms.append(mask_to_tensor(trip.m))
        y0s.append(image_to_tensor(trip.y0))
    return torch.stack(xs), torch.stack(ms), torch.stack(y0s)


def run_stage(
    config: TrainConfig,
    dataset: TripletDataset,
    out_dir,
    resume=None,
    log_every: int = 1,
) -> Path:
    """Run one training stage to completion; returns the final checkpoint path.

    Deterministic given (config, dataset, resume) on a fixed platform. Appends
    the loss stream to `<out_dir>/loss_<stage>.csv`.
    """
    if len(dataset) == 0:
        raise TrainingError("dataset is empty")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    profile = get_profile(config.profile)

    # shape sanity before the first step
    probe = dataset[0]
    if probe.x.shape[:2] != (profile.image_size, profile.image_size):
        raise TrainingError(
            f"dataset images are {probe.x.shape[:2]}, profile {config.profile!r} "
            f"expects {(profile.image_size, profile.image_size)}"
        )

    if resume is not None:
        model, schedule, manifest = load_checkpoint(resume)
        if config.stage == "finetune" and manifest["stage"] not in ("pretrain", "finetune"):
            raise TrainingError(
                f"finetune must start from a pretrain checkpoint, got stage={manifest['stage']!r}"
            )
        if manifest["guidance_mode"] != config.guidance_mode or manifest["dlvf_enabled"] != config.dlvf_enabled:
            raise TrainingError(
                "checkpoint guidance/dlvf settings do not match the requested config"
            )
        model.train()
    else:
        if config.stage == "finetune" and not config.allow_finetune_from_scratch:
            raise TrainingError(
                "finetune requires a pretrain checkpoint (--resume); "
                "set allow_finetune_from_scratch to override for ablations"
            )
        torch.manual_seed(config.seed + 2)
        model = DiffusionModel(
            profile.denoiser,
            profile.latent,
            profile.noise,
            guidance_mode=config.guidance_mode,
            dlvf_enabled=config.dlvf_enabled,
        )
        schedule = profile.make_schedule()

    trainer = Trainer(config, model, schedule)
    csv_path = out_dir / f"loss_{config.stage}.csv"
    new_csv = not csv_path.exists()
    extra = {"train_config": asdict(config)}

    with open(csv_path, "a") as log:
        if new_csv:
            log.write("step,loss_simple,loss_invariant,loss_total\n")
        while trainer.step < config.max_steps:
            idxs = trainer.draw_batch_indices(len(dataset))
            x, m, y0 = triplet_batch(dataset, idxs)
            if config.stage == "pretrain":
                report = trainer.pretrain_step(y0, m)
            elif config.lagged_posterior:
                for _ in range(config.lagged_k):
                    if trainer.step >= config.max_steps:
                        break
                    report = trainer.finetune_step(x, m, y0, joint=False)
                    log.write(
                        f"{report.step},{report.loss_simple:.8f},{report.loss_invariant:.8f},{report.loss_total:.8f}\n"
                    )
                    idxs = trainer.draw_batch_indices(len(dataset))
                    x, m, y0 = triplet_batch(dataset, idxs)
                if trainer.step >= config.max_steps:
                    break
                report = trainer.finetune_step(x, m, y0, joint=True)
            else:
                report = trainer.finetune_step(x, m, y0)
            log.write(
                f"{report.step},{report.loss_simple:.8f},{report.loss_invariant:.8f},{report.loss_total:.8f}\n"
            )
            if config.checkpoint_every and trainer.step % config.checkpoint_every == 0:
                save_checkpoint(
                    out_dir / f"{config.stage}_step{trainer.step:06d}.pt",
                    model,
                    schedule,
                    stage=config.stage,
                    step=trainer.step,
                    extra=extra,
                )

    final = out_dir / f"{config.stage}_final.pt"
    state = trainer.final_state_dict()
    model.load_state_dict(state)
    save_checkpoint(final, model, schedule, stage=config.stage, step=trainer.step, extra=extra)
    return final
