"""Checkpoint format: a torch weight blob plus a plain-text JSON manifest.

`<name>.pt` holds the state dict; `<name>.json` beside it records format
version, stage, step, all network configs, and the schedule, so a checkpoint
is self-describing and loadable without external context.
"""

from __future__ import annotations

import hashlib
import json
from pathlib import Path

import torch

from .nets import (
    DiffusionModel,
    config_to_dict,
    denoiser_config_from_dict,
    latent_config_from_dict,
    noise_config_from_dict,
)
from .schedule import NoiseSchedule

FORMAT_VERSION = 1


class CheckpointError(RuntimeError):
    pass


def manifest_path(weights_path) -> Path:
    return Path(weights_path).with_suffix(".json")


def save_checkpoint(
    path,
    model: DiffusionModel,
    schedule: NoiseSchedule,
    stage: str,
    step: int,
    extra: dict | None = None,
) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    torch.save(model.state_dict(), path)
    manifest = {
        "format_version": FORMAT_VERSION,
        "stage": stage,
        "step": step,
        "denoiser_config": config_to_dict(model.denoiser_config),
        "latent_config": config_to_dict(model.latent_config),
        "noise_config": config_to_dict(model.noise_config),
        "schedule": schedule.to_manifest(),
        "guidance_mode": model.guidance_mode,
        "dlvf_enabled": model.dlvf_enabled,
    }
    if extra:
        manifest["extra"] = extra
    with open(manifest_path(path), "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
    return path


def load_checkpoint(path) -> tuple[DiffusionModel, NoiseSchedule, dict]:
    path = Path(path)
    if not path.exists():
        raise CheckpointError(f"checkpoint not found: {path}")
    mpath = manifest_path(path)
    if not mpath.exists():
        raise CheckpointError(f"manifest sidecar not found: {mpath}")
    with open(mpath) as fh:
        manifest = json.load(fh)
    if manifest.get("format_version") != FORMAT_VERSION:
        raise CheckpointError(f"unsupported format_version {manifest.get('format_version')}")
    model = DiffusionModel(
        denoiser_config=denoiser_config_from_dict(manifest["denoiser_config"]),
        latent_config=latent_config_from_dict(manifest["latent_config"]),
        noise_config=noise_config_from_dict(manifest["noise_config"]),
        guidance_mode=manifest["guidance_mode"],
        dlvf_enabled=bool(manifest["dlvf_enabled"]),
    )
    state = torch.load(path, map_location="cpu", weights_only=True)
    model.load_state_dict(state)
    model.eval()
    schedule = NoiseSchedule.from_manifest(manifest["schedule"])
    return model, schedule, manifest


def checkpoint_id(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()[:16]
