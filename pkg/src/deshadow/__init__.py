"""Latent-feature-guided conditional diffusion for shadow removal."""

__version__ = "0.1.0"

from .schedule import (
    NoiseSchedule,
    PosteriorCoefficients,
    ScheduleError,
    ddim_step,
    ddim_time_grid,
    make_linear_schedule,
    p2_weight,
    posterior_coefficients,
    posterior_params,
    predict_y0_from_eps,
    q_sample,
)

__all__ = [
    "NoiseSchedule",
    "PosteriorCoefficients",
    "ScheduleError",
    "ddim_step",
    "ddim_time_grid",
    "make_linear_schedule",
    "p2_weight",
    "posterior_coefficients",
    "posterior_params",
    "predict_y0_from_eps",
    "q_sample",
]
