"""Learnable components: conditional denoiser, latent guidance encoder, noise
embedding encoder, and the dense latent-variable fusion rule that links them.

The denoiser is a multi-head-attention U-Net taking the channel-wise concat
[y_t, g, x, m] (8 channels under latent guidance, 7 for the no-guidance
baseline). The latent encoder reuses the same architecture without a timestep
embedding and emits a single-channel map at input resolution. The noise
encoder turns y_t into a length-N vector whose per-level pooled copies are
added point-wise into every residual block.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, asdict
from typing import Optional, Sequence

import torch
import torch.nn as nn
import torch.nn.functional as F


class ConfigError(ValueError):
    pass


# ---------------------------------------------------------------------------
# configs
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class DenoiserConfig:
    image_size: int = 64
    base_channels: int = 32
    channel_mults: tuple[int, ...] = (1, 2, 2)
    attn_levels: tuple[int, ...] = (2,)
    heads: int = 2
    time_embed_dim: int = 128
    blocks_per_level: int = 1
    fusion_mode: str = "sum"  # "sum" per the fusion formula; "modulate" for ablation

    @property
    def levels(self) -> int:
        return len(self.channel_mults)

    def __post_init__(self):
        if self.image_size % (2 ** (self.levels - 1)) != 0:
            raise ConfigError(
                f"image_size {self.image_size} not divisible by 2^{self.levels - 1}"
            )
        if min(self.base_channels, self.heads, self.time_embed_dim, self.blocks_per_level) < 1:
            raise ConfigError("all counts must be positive")
        if any(l < 0 or l >= self.levels for l in self.attn_levels):
            raise ConfigError(f"attn_levels {self.attn_levels} outside [0, {self.levels})")
        if self.fusion_mode not in ("sum", "modulate"):
            raise ConfigError(f"unknown fusion_mode {self.fusion_mode!r}")
        for mult in self.channel_mults:
            ch = self.base_channels * mult
            if ch % self.heads != 0:
                raise ConfigError(f"heads {self.heads} must divide channels {ch}")


@dataclass(frozen=True)
class LatentEncoderConfig:
    """Same structure as the denoiser, minus the timestep embedding; output is
    always a single channel."""

    image_size: int = 64
    base_channels: int = 16
    channel_mults: tuple[int, ...] = (1, 2, 2)
    attn_levels: tuple[int, ...] = ()
    heads: int = 1
    blocks_per_level: int = 1

    @property
    def levels(self) -> int:
        return len(self.channel_mults)

    def __post_init__(self):
        if self.image_size % (2 ** (self.levels - 1)) != 0:
            raise ConfigError(
                f"image_size {self.image_size} not divisible by 2^{self.levels - 1}"
            )


@dataclass(frozen=True)
class NoiseEncoderConfig:
    vector_size: int = 512
    mlp_layers: int = 3
    pooling: str = "adaptive-average"

    def __post_init__(self):
        if self.vector_size < 1:
            raise ConfigError("vector_size must be positive")
        if self.mlp_layers != 3:
            raise ConfigError("embedding MLP depth is fixed at 3")
        if self.pooling != "adaptive-average":
            raise ConfigError(f"unsupported pooling {self.pooling!r}")


GUIDANCE_MODES = ("latent", "none", "coarse", "colormap")


def guidance_channels(mode: str) -> int:
    if mode == "latent":
        return 1
    if mode == "none":
        return 0
    if mode in ("coarse", "colormap"):
        return 3
    raise ConfigError(f"unknown guidance mode {mode!r}")


@dataclass
class GuidanceBundle:
    """Conditioning pack fed to the denoiser: shadow image, mask, latent map."""

    x: torch.Tensor  # (B, 3, H, W) in [-1, 1]
    m: torch.Tensor  # (B, 1, H, W) in {0, 1}
    g: Optional[torch.Tensor]  # (B, C_g, H, W) or None for the baseline

    def __post_init__(self):
        if self.x.shape[-2:] != self.m.shape[-2:]:
            raise ConfigError(f"x/m spatial mismatch: {tuple(self.x.shape)} vs {tuple(self.m.shape)}")
        if self.g is not None and self.g.shape[-2:] != self.x.shape[-2:]:
            raise ConfigError(f"g spatial mismatch: {tuple(self.g.shape)} vs {tuple(self.x.shape)}")


# ---------------------------------------------------------------------------
# dense latent variable fusion
# ---------------------------------------------------------------------------


def dlvf_fuse(h: torch.Tensor, v: torch.Tensor) -> torch.Tensor:
    """Pool the noise vector to the feature channel count, broadcast over
    space, and add point-wise. Output shape equals input shape."""
    pooled = F.adaptive_avg_pool1d(v.unsqueeze(1), h.shape[1]).squeeze(1)
    return h + pooled[:, :, None, None]


def dlvf_modulate(h: torch.Tensor, v: torch.Tensor) -> torch.Tensor:
    """Scale-and-shift variant (parameter-free) kept for ablation."""
    pooled = F.adaptive_avg_pool1d(v.unsqueeze(1), 2 * h.shape[1]).squeeze(1)
    scale, shift = pooled.chunk(2, dim=1)
    return h * (1.0 + scale[:, :, None, None]) + shift[:, :, None, None]


# ---------------------------------------------------------------------------
# building blocks
# ---------------------------------------------------------------------------


def _norm_groups(ch: int) -> int:
    for g in (8, 4, 2, 1):
        if ch % g == 0:
            return g
    return 1


def timestep_embedding(t: torch.Tensor, dim: int) -> torch.Tensor:
    """Sinusoidal embedding of integer timesteps, shape (B, dim)."""
    half = dim // 2
    freqs = torch.exp(-math.log(10000.0) * torch.arange(half, dtype=torch.float64) / max(half - 1, 1))
    args = t.double()[:, None] * freqs[None, :]
    emb = torch.cat([torch.cos(args), torch.sin(args)], dim=-1)
    if dim % 2 == 1:
        emb = F.pad(emb, (0, 1))
    return emb


class ResBlock(nn.Module):
    """Residual block; the timestep embedding and the DLVF summand enter after
    the first normalization+convolution and before the second."""

    def __init__(self, c_in: int, c_out: int, time_dim: Optional[int], fusion_mode: str = "sum"):
        super().__init__()
        self.norm1 = nn.GroupNorm(_norm_groups(c_in), c_in)
        self.conv1 = nn.Conv2d(c_in, c_out, 3, padding=1)
        self.emb_proj = nn.Linear(time_dim, c_out) if time_dim else None
        self.norm2 = nn.GroupNorm(_norm_groups(c_out), c_out)
        self.conv2 = nn.Conv2d(c_out, c_out, 3, padding=1)
        self.skip = nn.Conv2d(c_in, c_out, 1) if c_in != c_out else nn.Identity()
        self._fuse = dlvf_fuse if fusion_mode == "sum" else dlvf_modulate

    def forward(self, x, t_emb=None, noise_vec=None):
        h = self.conv1(F.silu(self.norm1(x)))
        if self.emb_proj is not None and t_emb is not None:
            h = h + self.emb_proj(F.silu(t_emb))[:, :, None, None]
        if noise_vec is not None:
            h = self._fuse(h, noise_vec)
        h = self.conv2(F.silu(self.norm2(h)))
        return h + self.skip(x)


class AttentionBlock(nn.Module):
    def __init__(self, channels: int, heads: int):
        super().__init__()
        if channels % heads != 0:
            raise ConfigError(f"heads {heads} must divide channels {channels}")
        self.heads = heads
        self.norm = nn.GroupNorm(_norm_groups(channels), channels)
        self.qkv = nn.Conv2d(channels, channels * 3, 1)
        self.proj = nn.Conv2d(channels, channels, 1)

    def forward(self, x):
        b, c, h, w = x.shape
        qkv = self.qkv(self.norm(x)).reshape(b, 3, self.heads, c // self.heads, h * w)
        q, k, v = qkv.unbind(1)
        scale = (c // self.heads) ** -0.5
        attn = torch.softmax(torch.einsum("bhcn,bhcm->bhnm", q * scale, k), dim=-1)
        out = torch.einsum("bhnm,bhcm->bhcn", attn, v).reshape(b, c, h, w)
        return x + self.proj(out)


class Downsample(nn.Module):
    def __init__(self, channels):
        super().__init__()
        self.op = nn.Conv2d(channels, channels, 3, stride=2, padding=1)

    def forward(self, x):
        return self.op(x)


class Upsample(nn.Module):
    def __init__(self, channels):
        super().__init__()
        self.conv = nn.Conv2d(channels, channels, 3, padding=1)

    def forward(self, x):
        return self.conv(F.interpolate(x, scale_factor=2, mode="nearest"))


class UNetCore(nn.Module):
    """Shared U-Net body. With time_dim=None this is the latent encoder shape;
    with a time embedding and fusion enabled it is the denoiser."""

    def __init__(
        self,
        in_channels: int,
        out_channels: int,
        base_channels: int,
        channel_mults: Sequence[int],
        attn_levels: Sequence[int],
        heads: int,
        time_dim: Optional[int],
        blocks_per_level: int = 1,
        fusion_mode: str = "sum",
    ):
        super().__init__()
        chs = [base_channels * m for m in channel_mults]
        levels = len(chs)
        self.time_dim = time_dim
        if time_dim:
            self.time_mlp = nn.Sequential(
                nn.Linear(time_dim, time_dim), nn.SiLU(), nn.Linear(time_dim, time_dim)
            )
        self.stem = nn.Conv2d(in_channels, chs[0], 3, padding=1)

        self.down_blocks = nn.ModuleList()
        self.down_attns = nn.ModuleList()
        self.downsamples = nn.ModuleList()
        cur = chs[0]
        for i, ch in enumerate(chs):
            blocks = nn.ModuleList()
            for _ in range(blocks_per_level):
                blocks.append(ResBlock(cur, ch, time_dim, fusion_mode))
                cur = ch
            self.down_blocks.append(blocks)
            self.down_attns.append(AttentionBlock(ch, heads) if i in attn_levels else None)
            self.downsamples.append(Downsample(ch) if i < levels - 1 else None)

        self.mid1 = ResBlock(cur, cur, time_dim, fusion_mode)
        self.mid2 = ResBlock(cur, cur, time_dim, fusion_mode)

        self.up_blocks = nn.ModuleList()
        self.up_attns = nn.ModuleList()
        self.upsamples = nn.ModuleList()
        for i in reversed(range(levels)):
            ch = chs[i]
            blocks = nn.ModuleList()
            blocks.append(ResBlock(cur + ch, ch, time_dim, fusion_mode))
            for _ in range(blocks_per_level - 1):
                blocks.append(ResBlock(ch, ch, time_dim, fusion_mode))
            cur = ch
            self.up_blocks.append(blocks)
            self.up_attns.append(AttentionBlock(ch, heads) if i in attn_levels else None)
            self.upsamples.append(Upsample(ch) if i > 0 else None)

        self.out_norm = nn.GroupNorm(_norm_groups(cur), cur)
        self.out_conv = nn.Conv2d(cur, out_channels, 3, padding=1)

    def forward(self, x, t=None, noise_vec=None):
        t_emb = None
        if self.time_dim and t is not None:
            t_emb = self.time_mlp(timestep_embedding(t, self.time_dim).to(x.dtype))

        h = self.stem(x)
        skips = []
        for blocks, attn, down in zip(self.down_blocks, self.down_attns, self.downsamples):
            for blk in blocks:
                h = blk(h, t_emb, noise_vec)
            if attn is not None:
                h = attn(h)
            skips.append(h)
            if down is not None:
                h = down(h)

        h = self.mid1(h, t_emb, noise_vec)
        h = self.mid2(h, t_emb, noise_vec)

        for blocks, attn, up in zip(self.up_blocks, self.up_attns, self.upsamples):
            h = torch.cat([h, skips.pop()], dim=1)
            for blk in blocks:
                h = blk(h, t_emb, noise_vec)
            if attn is not None:
                h = attn(h)
            if up is not None:
                h = up(h)

        return self.out_conv(F.silu(self.out_norm(h)))


class NoiseEncoder(nn.Module):
    """Noise-to-vector embedding: per-pixel fully-connected stack, adaptive
    average pooling to a length-N vector, then a three-layer MLP."""

    def __init__(self, config: NoiseEncoderConfig, in_channels: int = 3):
        super().__init__()
        n = config.vector_size
        hidden = max(n // 2, 8)
        self.pixel_fc = nn.Sequential(
            nn.Conv2d(in_channels, hidden, 1), nn.SiLU(), nn.Conv2d(hidden, n, 1)
        )
        self.pool = nn.AdaptiveAvgPool2d(1)
        self.mlp = nn.Sequential(
            nn.Linear(n, n), nn.SiLU(), nn.Linear(n, n), nn.SiLU(), nn.Linear(n, n)
        )

    def forward(self, y_t):
        v = self.pool(self.pixel_fc(y_t)).flatten(1)
        return self.mlp(v)


# ---------------------------------------------------------------------------
# classical guidance approximations (ablation support only)
# ---------------------------------------------------------------------------


def coarse_deshadow_guidance(x: torch.Tensor, m: torch.Tensor) -> torch.Tensor:
    """Cheap coarse de-shadowed estimate: scale masked pixels per channel so
    their mean matches the unmasked mean. Inputs/outputs in [-1, 1]."""
    xs = (x + 1.0) / 2.0
    out = xs.clone()
    for b in range(xs.shape[0]):
        sel = m[b, 0] > 0.5
        if not sel.any() or sel.all():
            continue
        for c in range(xs.shape[1]):
            mean_in = xs[b, c][sel].mean()
            mean_out = xs[b, c][~sel].mean()
            if mean_in > 1e-4:
                out[b, c][sel] = (xs[b, c][sel] * (mean_out / mean_in)).clamp(0, 1)
    return out * 2.0 - 1.0


def colormap_guidance(x: torch.Tensor) -> torch.Tensor:
    """Shadow-invariant color map approximation: normalized chromaticity."""
    xs = (x + 1.0) / 2.0
    chrom = xs / (xs.sum(dim=1, keepdim=True) + 1e-6)
    return chrom * 2.0 - 1.0


# ---------------------------------------------------------------------------
# full model
# ---------------------------------------------------------------------------


class DiffusionModel(nn.Module):
    """Denoiser + latent encoder + noise encoder under one roof.

    Parameters are immutable during inference; training mutates them under a
    single-writer contract.
    """

    def __init__(
        self,
        denoiser_config: DenoiserConfig,
        latent_config: LatentEncoderConfig,
        noise_config: NoiseEncoderConfig,
        guidance_mode: str = "latent",
        dlvf_enabled: bool = True,
    ):
        super().__init__()
        if guidance_mode not in GUIDANCE_MODES:
            raise ConfigError(f"unknown guidance mode {guidance_mode!r}")
        self.denoiser_config = denoiser_config
        self.latent_config = latent_config
        self.noise_config = noise_config
        self.guidance_mode = guidance_mode
        self.dlvf_enabled = dlvf_enabled

        in_ch = 3 + 3 + 1 + guidance_channels(guidance_mode)
        self.denoiser = UNetCore(
            in_channels=in_ch,
            out_channels=3,
            base_channels=denoiser_config.base_channels,
            channel_mults=denoiser_config.channel_mults,
            attn_levels=denoiser_config.attn_levels,
            heads=denoiser_config.heads,
            time_dim=denoiser_config.time_embed_dim,
            blocks_per_level=denoiser_config.blocks_per_level,
            fusion_mode=denoiser_config.fusion_mode,
        )
        # the latent encoder exists only under learned-latent guidance
        self.latent_encoder = (
            UNetCore(
                in_channels=4,
                out_channels=1,
                base_channels=latent_config.base_channels,
                channel_mults=latent_config.channel_mults,
                attn_levels=latent_config.attn_levels,
                heads=latent_config.heads,
                time_dim=None,
                blocks_per_level=latent_config.blocks_per_level,
            )
            if guidance_mode == "latent"
            else None
        )
        # built unconditionally so checkpoints are layout-stable across ablations
        self.noise_encoder = NoiseEncoder(noise_config)

    def encode_latent(self, x: torch.Tensor, m: torch.Tensor) -> torch.Tensor:
        if self.latent_encoder is None:
            raise ConfigError(f"guidance mode {self.guidance_mode!r} has no latent encoder")
        if x.shape[-2:] != m.shape[-2:]:
            raise ConfigError(f"x/m spatial mismatch: {tuple(x.shape)} vs {tuple(m.shape)}")
        return self.latent_encoder(torch.cat([x, m], dim=1))

    def encode_noise(self, y_t: torch.Tensor) -> torch.Tensor:
        return self.noise_encoder(y_t)

    def make_guidance(self, x: torch.Tensor, m: torch.Tensor) -> Optional[torch.Tensor]:
        if self.guidance_mode == "latent":
            return self.encode_latent(x, m)
        if self.guidance_mode == "none":
            return None
        if self.guidance_mode == "coarse":
            return coarse_deshadow_guidance(x, m)
        return colormap_guidance(x)

    def denoise(self, y_t: torch.Tensor, bundle: GuidanceBundle, t: torch.Tensor) -> torch.Tensor:
        if y_t.shape[-2:] != bundle.x.shape[-2:]:
            raise ConfigError(
                f"y_t spatial {tuple(y_t.shape)} does not match conditioning {tuple(bundle.x.shape)}"
            )
        parts = [y_t]
        if bundle.g is not None:
            parts.append(bundle.g)
        parts.extend([bundle.x, bundle.m])
        z = torch.cat(parts, dim=1)
        noise_vec = self.encode_noise(y_t) if self.dlvf_enabled else None
        return self.denoiser(z, t, noise_vec)

    def param_count(self) -> int:
        return sum(p.numel() for p in self.parameters())

    def component_param_counts(self) -> dict[str, int]:
        out = {"denoiser": sum(p.numel() for p in self.denoiser.parameters())}
        out["latent_encoder"] = (
            sum(p.numel() for p in self.latent_encoder.parameters()) if self.latent_encoder else 0
        )
        out["noise_encoder"] = sum(p.numel() for p in self.noise_encoder.parameters())
        return out


# ---------------------------------------------------------------------------
# numpy <-> torch boundary: [0,1] HWC images vs [-1,1] CHW tensors
# ---------------------------------------------------------------------------


def image_to_tensor(img) -> torch.Tensor:
    """(H, W, 3) float [0, 1] -> (3, H, W) float32 [-1, 1]."""
    import numpy as np

    arr = np.asarray(img, dtype=np.float32)
    return torch.from_numpy(arr.transpose(2, 0, 1).copy()) * 2.0 - 1.0


def mask_to_tensor(mask) -> torch.Tensor:
    """(H, W) float {0, 1} -> (1, H, W) float32."""
    import numpy as np

    arr = np.asarray(mask, dtype=np.float32)
    return torch.from_numpy(arr.copy()).unsqueeze(0)


def tensor_to_image(t: torch.Tensor):
    """(3, H, W) [-1, 1] -> (H, W, 3) float32 [0, 1], clipped."""
    arr = ((t.detach().cpu().float() + 1.0) / 2.0).clamp(0, 1).numpy()
    return arr.transpose(1, 2, 0)


def config_to_dict(cfg) -> dict:
    d = asdict(cfg)
    for k, v in d.items():
        if isinstance(v, tuple):
            d[k] = list(v)
    return d


def denoiser_config_from_dict(d: dict) -> DenoiserConfig:
    return DenoiserConfig(
        image_size=int(d["image_size"]),
        base_channels=int(d["base_channels"]),
        channel_mults=tuple(d["channel_mults"]),
        attn_levels=tuple(d["attn_levels"]),
        heads=int(d["heads"]),
        time_embed_dim=int(d["time_embed_dim"]),
        blocks_per_level=int(d.get("blocks_per_level", 1)),
        fusion_mode=d.get("fusion_mode", "sum"),
    )


def latent_config_from_dict(d: dict) -> LatentEncoderConfig:
    return LatentEncoderConfig(
        image_size=int(d["image_size"]),
        base_channels=int(d["base_channels"]),
        channel_mults=tuple(d["channel_mults"]),
        attn_levels=tuple(d["attn_levels"]),
        heads=int(d["heads"]),
        blocks_per_level=int(d.get("blocks_per_level", 1)),
    )


def noise_config_from_dict(d: dict) -> NoiseEncoderConfig:
    return NoiseEncoderConfig(
        vector_size=int(d["vector_size"]),
        mlp_layers=int(d.get("mlp_layers", 3)),
        pooling=d.get("pooling", "adaptive-average"),
    )
