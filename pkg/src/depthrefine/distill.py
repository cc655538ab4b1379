"""Noise schedule, score-distillation gradient, weighted reconstruction loss and EMA."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Protocol

import numpy as np

from .core_depth import DepthMap, DifferenceMap
from .errors import DataError, DimensionMismatch, EmptyMask
from .gating import LatentGrid

DEFAULT_T = 1000
DEFAULT_BETA_MIN = 1e-4
DEFAULT_BETA_MAX = 2e-2
DEFAULT_EMA_DECAY = 0.999


@dataclass(frozen=True)
class NoiseSchedule:
    """``betas[k-1]`` is the increment of step ``k``; ``alpha_bars[t]`` for ``t = 0..T``."""

    betas: np.ndarray
    alpha_bars: np.ndarray

    @property
    def T(self) -> int:
        return len(self.betas)


@dataclass(frozen=True)
class TimestepWeighting:
    weights: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=np.float64)
        if not (np.all(np.isfinite(w)) and np.all(w >= 0)):
            raise DataError("timestep weights must be finite and nonnegative")
        object.__setattr__(self, "weights", w)

    @classmethod
    def constant(cls, T: int, value: float = 1.0) -> "TimestepWeighting":
        return cls(np.full(T + 1, value))

    def __getitem__(self, t: int) -> float:
        return float(self.weights[t])


@dataclass(frozen=True)
class LossWeights:
    lambda_sds: float = 1.0
    lambda_recons: float = 0.3

    def __post_init__(self):
        for v in (self.lambda_sds, self.lambda_recons):
            if not (np.isfinite(v) and v >= 0):
                raise DataError("loss weights must be finite and nonnegative")


@dataclass(frozen=True)
class EmaState:
    values: np.ndarray
    decay: float = DEFAULT_EMA_DECAY

    def __post_init__(self):
        if not 0.0 <= self.decay <= 1.0:
            raise DataError("EMA decay must lie in [0, 1]")


class TeacherOracle(Protocol):
    """An x0-predicting denoiser: returns the predicted clean latent."""

    def denoise(self, z_noisy: LatentGrid, z_image: LatentGrid, t: int) -> LatentGrid: ...


def make_schedule(T: int = DEFAULT_T, beta_min: float = DEFAULT_BETA_MIN, beta_max: float = DEFAULT_BETA_MAX) -> NoiseSchedule:
    if T < 1:
        raise DataError("schedule needs T >= 1")
    if not 0.0 < beta_min <= beta_max < 1.0:
        raise DataError(f"need 0 < beta_min <= beta_max < 1, got ({beta_min}, {beta_max})")
    betas = np.linspace(beta_min, beta_max, T)
    alpha_bars = np.concatenate([[1.0], np.cumprod(1.0 - betas)])
    return NoiseSchedule(betas, alpha_bars)


def q_sample(z: LatentGrid, t: int, eps: LatentGrid, s: NoiseSchedule) -> LatentGrid:
    if not 0 <= t <= s.T:
        raise DataError(f"timestep {t} outside [0, {s.T}]")
    if z.values.shape != eps.values.shape:
        raise DimensionMismatch("latent and noise shapes differ")
    ab = s.alpha_bars[t]
    return z.like(np.sqrt(ab) * z.values + np.sqrt(1.0 - ab) * eps.values)


def sample_timestep(rng: np.random.Generator, s: NoiseSchedule) -> int:
    return int(rng.integers(1, s.T + 1))


def sds_gradient(
    z_hat: LatentGrid,
    z_image: LatentGrid,
    t: int,
    eps: LatentGrid,
    teacher: TeacherOracle,
    w: TimestepWeighting,
    s: NoiseSchedule,
) -> np.ndarray:
    """One Monte-Carlo sample of ``w_t * (z_hat - teacher(q_sample(z_hat)))``.

    No gradient flows through the teacher.
    """
    pred = teacher.denoise(q_sample(z_hat, t, eps, s), z_image, t)
    if pred.values.shape != z_hat.values.shape:
        raise DimensionMismatch(f"teacher returned {pred.values.shape}, expected {z_hat.values.shape}")
    return w[t] * (z_hat.values - pred.values)


def recon_loss_and_grad(d_hat: DepthMap, d: DepthMap, e: DifferenceMap, norm: str = "l1") -> tuple[float, np.ndarray]:
    """Difference-weighted reconstruction loss and its gradient w.r.t. ``d_hat``.

    ``l1``: mean of ``|e * (d_hat - d)|``; ``l2``: mean of ``(e * (d_hat - d))**2``.
    """
    if not (d_hat.shape == d.shape == e.shape):
        raise DimensionMismatch("reconstruction inputs differ in shape")
    m = d_hat.valid & d.valid
    n = int(m.sum())
    if n == 0:
        raise EmptyMask("no valid pixels for the reconstruction loss")
    diff = np.where(m, d_hat.values - d.values, 0.0)
    weighted = e.values * diff
    if norm == "l1":
        loss = np.abs(weighted[m]).sum() / n
        grad = e.values * np.sign(diff) / n
    elif norm == "l2":
        loss = np.square(weighted[m]).sum() / n
        grad = 2.0 * e.values * weighted / n
    else:
        raise DataError(f"unknown reconstruction norm {norm!r}")
    grad[~m] = 0.0
    return float(loss), grad


def total_gradient(sds_grad: np.ndarray, recon_grad: np.ndarray, lw: LossWeights) -> np.ndarray:
    return lw.lambda_sds * sds_grad + lw.lambda_recons * recon_grad


def ema_update(ema: EmaState, params: np.ndarray) -> EmaState:
    params = np.asarray(params, dtype=np.float64)
    if params.shape != np.shape(ema.values):
        raise DimensionMismatch(f"EMA holds {np.shape(ema.values)}, got {params.shape}")
    return EmaState(ema.decay * ema.values + (1.0 - ema.decay) * params, ema.decay)
