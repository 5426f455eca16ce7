"""Command-line entry points: synth, train, remove, evaluate, scatter, serve."""

from __future__ import annotations

import sys
from pathlib import Path

import click
import numpy as np

from . import data as datamod
from .checkpoint import load_checkpoint
from .metrics import evaluate_dataset, write_scatter_csv
from .removal import RemovalRequest, collapse_scatter_from_checkpoint, remove as run_removal
from .training import TrainConfig, parse_train_config, run_stage


@click.group()
@click.version_option()
def main():
    """Latent-feature-guided diffusion shadow removal toolkit."""


@main.command()
@click.option("--out", "out_dir", required=True, type=click.Path(path_type=Path))
@click.option("--count", default=100, show_default=True, type=int)
@click.option("--size", default=64, show_default=True, type=int)
@click.option("--dark-rate-min", default=5.0, show_default=True, type=float)
@click.option("--dark-rate-max", default=40.0, show_default=True, type=float)
@click.option("--seed", default=0, show_default=True, type=int)
@click.option("--feather", default=2, show_default=True, type=int)
@click.option("--color-shift", default=0.02, show_default=True, type=float)
@click.option("--histogram", type=click.Path(path_type=Path), help="also write a dark-rate histogram CSV")
def synth(out_dir, count, size, dark_rate_min, dark_rate_max, seed, feather, color_shift, histogram):
    """Generate a synthetic shadow triplet dataset."""
    try:
        n = datamod.write_triplet_dataset(
            out_dir, count, size, dark_rate_min, dark_rate_max, seed,
            feather_px=feather, color_shift=color_shift,
        )
    except datamod.DataError as exc:
        raise click.ClickException(str(exc))
    click.echo(f"wrote {n} triplets to {out_dir}")
    if histogram is not None:
        ds = datamod.load_triplets(out_dir)
        edges, counts, warnings = datamod.dark_rate_histogram(ds)
        datamod.write_histogram_csv(edges, counts, histogram)
        for w in warnings:
            click.echo(f"warning: {w}", err=True)
        click.echo(f"histogram written to {histogram}")


@main.command()
@click.option("--config", "config_path", type=click.Path(exists=True, path_type=Path), help="flat key=value TrainConfig file")
@click.option("--stage", type=click.Choice(["pretrain", "finetune"]), help="overrides the config file stage")
@click.option("--resume", type=click.Path(exists=True, path_type=Path), help="checkpoint to resume/finetune from")
@click.option("--data", "data_root", required=True, type=click.Path(exists=True, path_type=Path))
@click.option("--out", "out_dir", required=True, type=click.Path(path_type=Path))
def train(config_path, stage, resume, data_root, out_dir):
    """Run one training stage over a triplet dataset directory."""
    from .training import TrainingError

    try:
        cfg = parse_train_config(config_path) if config_path else TrainConfig()
        if stage is not None:
            from dataclasses import replace

            cfg = replace(cfg, stage=stage)
        dataset = datamod.load_triplets(data_root)
        for w in dataset.warnings:
            click.echo(f"warning: {w}", err=True)
        final = run_stage(cfg, dataset, out_dir, resume=resume)
    except (TrainingError, datamod.DataError) as exc:
        raise click.ClickException(str(exc))
    click.echo(f"final checkpoint: {final}")


@main.command()
@click.option("--image", "image_path", required=True, type=click.Path(exists=True, path_type=Path))
@click.option("--mask", "mask_path", required=True, type=click.Path(exists=True, path_type=Path))
@click.option("--out", "out_path", required=True, type=click.Path(path_type=Path))
@click.option("--checkpoint", envvar="LFG_CHECKPOINT", required=True, type=click.Path(exists=True, path_type=Path),
              help="model checkpoint (.pt); defaults to $LFG_CHECKPOINT")
@click.option("--mode", type=click.Choice(["full", "quick"]), default="full", show_default=True)
@click.option("--dilation", default=21, show_default=True, type=int)
@click.option("--steps", default=50, show_default=True, type=int)
@click.option("--seed", default=0, show_default=True, type=int)
@click.option("--eta", default=0.0, show_default=True, type=float)
@click.option("--raw", is_flag=True, help="disable mask compositing, keep raw model output")
def remove(image_path, mask_path, out_path, checkpoint, mode, dilation, steps, seed, eta, raw):
    """Remove shadows from one image file."""
    from .removal import RemovalError

    try:
        img = datamod.load_image(image_path)
        msk = datamod.load_mask(mask_path)
        model, schedule, _ = load_checkpoint(checkpoint)
        req = RemovalRequest(
            image=img, mask=msk, mode=mode, dilation_k=dilation,
            steps=steps, seed=seed, eta=eta, composite_only_mask=not raw,
        )
        out = run_removal(req, model, schedule)
    except (RemovalError, datamod.DataError) as exc:
        raise click.ClickException(str(exc))
    datamod.save_image(out, out_path)
    click.echo(f"wrote {out_path}")


@main.command()
@click.option("--results", required=True, type=click.Path(exists=True, path_type=Path))
@click.option("--gt", required=True, type=click.Path(exists=True, path_type=Path))
@click.option("--masks", required=True, type=click.Path(exists=True, path_type=Path))
@click.option("--dilate", default=21, show_default=True, type=int)
@click.option("--out", "out_csv", type=click.Path(path_type=Path), default=Path("report.csv"), show_default=True)
@click.option("--metric", type=click.Choice(["rmse", "mae-lab"]), default="rmse", show_default=True,
              help="LAB error flavor reported in the rmse_lab column")
def evaluate(results, gt, masks, dilate, out_csv, metric):
    """Region-masked benchmark evaluation (resizes to 256x256, dilates masks)."""
    from .metrics import MetricError

    try:
        report = evaluate_dataset(
            results, gt, masks, dilation_k=dilate,
            lab_metric="rmse" if metric == "rmse" else "mae",
            out_csv=out_csv,
        )
    except (MetricError, datamod.DataError) as exc:
        raise click.ClickException(str(exc))
    for name, agg in report.aggregates.items():
        click.echo(
            f"{name}: {metric}={agg.rmse_lab:.4f} psnr={agg.psnr_db:.2f}dB ssim={agg.ssim:.4f}"
        )
    if report.excluded:
        click.echo(f"excluded {len(report.excluded)} unmatched stems: {report.excluded}", err=True)
        if report.excluded_fraction > 0.10:
            click.echo("more than 10% of files unmatched", err=True)
            sys.exit(1)
    click.echo(f"report written to {out_csv}")


@main.command()
@click.option("--checkpoint", envvar="LFG_CHECKPOINT", required=True, type=click.Path(exists=True, path_type=Path))
@click.option("--data", "data_root", required=True, type=click.Path(exists=True, path_type=Path))
@click.option("--n-points", default=200, show_default=True, type=int)
@click.option("--seed", default=0, show_default=True, type=int)
@click.option("--out", "out_csv", type=click.Path(path_type=Path), default=Path("scatter.csv"), show_default=True)
def scatter(checkpoint, data_root, n_points, seed, out_csv):
    """Posterior-collapse diagnostic: mean(y_t) vs mean(predicted y_{t-1})."""
    from .metrics import MetricError

    try:
        dataset = datamod.load_triplets(data_root)
        points, r = collapse_scatter_from_checkpoint(checkpoint, dataset, n_points, seed)
    except (MetricError, datamod.DataError) as exc:
        raise click.ClickException(str(exc))
    write_scatter_csv(points, out_csv)
    click.echo(f"pearson_r={r:.4f}")
    click.echo(f"scatter written to {out_csv}")


@main.command()
@click.option("--checkpoint", envvar="LFG_CHECKPOINT", required=True, type=click.Path(exists=True, path_type=Path))
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", default=8765, show_default=True, type=int)
@click.option("--queue-size", default=8, show_default=True, type=int)
@click.option("--static", "static_dir", type=click.Path(exists=True, path_type=Path),
              help="also serve a built studio UI from this directory")
def serve(checkpoint, host, port, queue_size, static_dir):
    """Start the HTTP removal service."""
    from .service import serve as run_server

    run_server(checkpoint, host=host, port=port, queue_size=queue_size, static_dir=static_dir)


if __name__ == "__main__":
    main()
