"""Desk-scale refinement loop on synthetic scenes with an oracle teacher.

The optimized variable is the latent grid itself. Each round computes a
difference map against the current reference, initializes the latent as a
gate-weighted blend of noise and the clean metric latent, runs gradient
descent on the combined distillation/reconstruction objective, decodes, and
re-aligns the result to the metric input on low-difference pixels.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy import ndimage

from .core_depth import (
    DEFAULT_EPS_DIV,
    DEFAULT_QUANTILE,
    DEFAULT_TAU,
    DepthMap,
    DifferenceMap,
    denormalize,
    difference_map,
    masked_fit_scale_shift,
    minmax_normalize,
)
from .distill import (
    DEFAULT_BETA_MAX,
    DEFAULT_BETA_MIN,
    DEFAULT_T,
    LossWeights,
    TeacherOracle,
    TimestepWeighting,
    make_schedule,
    recon_loss_and_grad,
    sample_timestep,
    sds_gradient,
    total_gradient,
)
from .errors import DataError, NonFinite
from .gating import (
    LatentGrid,
    blend,
    decode_adjoint,
    decode_latent,
    decode_unclamped,
    downsample_gate,
    encode_latent,
    sample_noise,
)

MIN_DEPTH = 1e-3


@dataclass
class SyntheticScene:
    gt: Optional[DepthMap]
    metric_input: DepthMap
    teacher_target: DepthMap
    image: LatentGrid
    seed: int
    affine: Optional[tuple] = None  # (a, b) with teacher_target = a * gt + b


@dataclass
class RefineConfig:
    steps: int = 300
    learning_rate: float = 0.05
    loss_weights: LossWeights = field(default_factory=LossWeights)
    rounds: int = 2
    schedule_T: int = DEFAULT_T
    beta_min: float = DEFAULT_BETA_MIN
    beta_max: float = DEFAULT_BETA_MAX
    latent_factor: int = 1
    latent_channels: int = 4
    tau: float = DEFAULT_TAU
    diff_quantile: float = DEFAULT_QUANTILE
    diff_eps: float = DEFAULT_EPS_DIV
    recon_norm: str = "l1"
    gate_sds: bool = True
    align_teacher: bool = True
    replace_teacher: bool = True
    masked_rediff: bool = True
    seed: int = 0

    def __post_init__(self):
        if self.steps < 1 or self.rounds < 1:
            raise DataError("steps and rounds must be >= 1")
        if not (np.isfinite(self.learning_rate) and self.learning_rate > 0):
            raise DataError("learning rate must be finite and positive")
        if isinstance(self.loss_weights, dict):
            self.loss_weights = LossWeights(**self.loss_weights)


@dataclass
class RefineResult:
    refined: DepthMap
    rounds: list = field(default_factory=list)  # per-round refined maps
    unaligned: list = field(default_factory=list)  # per-round decodes before re-alignment
    difference_maps: list = field(default_factory=list)
    loss_trace: list = field(default_factory=list)


class OracleTeacher:
    """Idealized x0-predictor: always answers with a fixed clean latent."""

    def __init__(self, target: LatentGrid):
        self.target = target

    def denoise(self, z_noisy: LatentGrid, z_image: LatentGrid, t: int) -> LatentGrid:
        return self.target.like(self.target.values.copy())


class _FrameAlignedTeacher:
    """Maps a teacher's prediction into the metric latent's affine frame.

    The scale/shift is fit on latent sites whose gate is below ``tau``.
    """

    def __init__(self, teacher: TeacherOracle, z_d: LatentGrid, gate: np.ndarray, tau: float):
        self.teacher = teacher
        self.ref = z_d.values.mean(axis=0)
        self.mask = gate < tau

    def denoise(self, z_noisy, z_image, t):
        pred = self.teacher.denoise(z_noisy, z_image, t)
        x = pred.values.mean(axis=0)[self.mask]
        y = self.ref[self.mask]
        if x.size < 2 or x.min() == x.max():
            return pred
        xc = x - x.mean()
        s = np.dot(xc, y - y.mean()) / np.dot(xc, xc)
        return pred.like(s * pred.values + (y.mean() - s * x.mean()))


def _plane(rng, H, W, base, slope):
    yy, xx = np.mgrid[0:H, 0:W]
    gx, gy = rng.uniform(-slope, slope, 2)
    return base + gx * (xx - W / 2) + gy * (yy - H / 2)


def gen_scene(seed: int, width: int = 128, height: int = 128) -> SyntheticScene:
    """Piecewise-planar scene with thin structures, plus its degraded views."""
    if width < 16 or height < 16:
        raise DataError("synthetic scenes need at least 16x16 pixels")
    rng = np.random.default_rng(seed)
    H, W = height, width
    gt = _plane(rng, H, W, rng.uniform(7.0, 9.0), 0.01)

    for _ in range(3):
        h = int(rng.integers(H // 5, H // 2))
        w = int(rng.integers(W // 5, W // 2))
        y0 = int(rng.integers(0, H - h))
        x0 = int(rng.integers(0, W - w))
        gt[y0:y0 + h, x0:x0 + w] = _plane(rng, H, W, rng.uniform(3.0, 6.0), 0.005)[y0:y0 + h, x0:x0 + w]

    # thin poles and wires
    for i in range(4):
        thick = int(rng.integers(1, 3))
        depth = rng.uniform(1.5, 3.0)
        if i % 2 == 0:
            x = int(rng.integers(2, W - 4))
            y0 = int(rng.integers(0, H // 3))
            gt[y0:, x:x + thick] = depth
        else:
            y = int(rng.integers(2, H - 4))
            x0 = int(rng.integers(0, W // 3))
            gt[y:y + thick, x0:] = depth

    drange = gt.max() - gt.min()
    yy, xx = np.mgrid[0:H, 0:W]
    amp = rng.uniform(0.01, 0.02) * drange
    f1, f2 = rng.uniform(0.5, 1.5, 2)
    p1, p2 = rng.uniform(0, 2 * np.pi, 2)
    bias = amp * 0.5 * (np.sin(2 * np.pi * f1 * xx / W + p1) + np.cos(2 * np.pi * f2 * yy / H + p2))
    metric = ndimage.gaussian_filter(gt, 2.0, mode="nearest") + bias

    a = float(rng.uniform(0.5, 2.0))
    b = float(rng.uniform(-1.0, 1.0))

    gy, gx = np.gradient(gt)
    edge = np.hypot(gx, gy)
    edge = 2.0 * edge / edge.max() - 1.0 if edge.max() > 0 else np.zeros_like(gt)
    image = LatentGrid(edge[None], 1, (H, W))

    return SyntheticScene(
        gt=DepthMap(gt, None, "metric"),
        metric_input=DepthMap(metric, None, "metric"),
        teacher_target=DepthMap(a * gt + b, None, "affine_invariant"),
        image=image,
        seed=seed,
        affine=(a, b),
    )


def scene_from_maps(metric_input: DepthMap, relative: DepthMap) -> SyntheticScene:
    """Wrap a real metric/relative prediction pair for :func:`refine` (no ground truth)."""
    if metric_input.shape != relative.shape:
        raise DataError(f"metric {metric_input.shape} and relative {relative.shape} differ in shape")
    H, W = metric_input.shape
    rel = DepthMap(relative.values, relative.valid, "affine_invariant")
    return SyntheticScene(None, metric_input, rel, LatentGrid(np.zeros((1, H, W)), 1, (H, W)), seed=-1)


def make_oracle_teacher(scene: SyntheticScene, factor: int = 1, channels: int = 4) -> OracleTeacher:
    normalized, _ = minmax_normalize(scene.teacher_target)
    return OracleTeacher(encode_latent(normalized, factor, channels))


def _normalized_teacher(reference: DepthMap, factor: int, channels: int) -> OracleTeacher:
    normalized, _ = minmax_normalize(reference)
    return OracleTeacher(encode_latent(normalized, factor, channels))


def roundtrip_error(d: DepthMap, factor: int, channels: int) -> np.ndarray:
    """Per-pixel |d - denormalize(decode(encode(normalize(d))))|, zero on invalid pixels."""
    n, rec = minmax_normalize(d)
    back = denormalize(decode_latent(encode_latent(n, factor, channels)), rec)
    return np.where(d.valid, np.abs(back.values - d.values), 0.0)


def refine(
    scene: SyntheticScene,
    config: RefineConfig = RefineConfig(),
    diff_hook: Optional[Callable[[int, DifferenceMap], DifferenceMap]] = None,
    teacher: Optional[TeacherOracle] = None,
) -> RefineResult:
    """Run ``config.rounds`` refinement rounds and return the last round's output.

    ``diff_hook(round, e)`` may replace the difference map of a round (used to
    force regions clean or uncertain). ``teacher`` overrides the oracle built
    from the scene for the first round.
    """
    rng = np.random.default_rng(config.seed)
    f, c = config.latent_factor, config.latent_channels
    sched = make_schedule(config.schedule_T, config.beta_min, config.beta_max)
    w = TimestepWeighting.constant(sched.T)
    lw = config.loss_weights
    metric = scene.metric_input

    n_metric, rec = minmax_normalize(metric)
    z_d = encode_latent(n_metric, f, c)
    half_range = 0.5 * (rec.max_value - rec.min_value)
    image_map = DepthMap(np.clip(scene.image.values.mean(axis=0), -1, 1), None, "normalized")
    z_image = encode_latent(image_map, f, c)

    result = RefineResult(refined=metric)
    reference = scene.teacher_target
    round_teacher = teacher if teacher is not None else make_oracle_teacher(scene, f, c)

    for r in range(config.rounds):
        fit_mask = None
        if r > 0 and config.masked_rediff:
            prev = result.difference_maps[-1]
            fit_mask = prev.valid & (prev.values < config.tau)
        e = difference_map(reference, metric, config.diff_quantile, config.diff_eps, fit_mask)
        if diff_hook is not None:
            e = diff_hook(r, e)
        gate = downsample_gate(e, (z_d.height, z_d.width))
        z = blend(z_d, sample_noise(rng, z_d), gate)

        active = round_teacher
        if config.align_teacher:
            active = _FrameAlignedTeacher(round_teacher, z_d, gate.values, config.tau)
        site_gate = gate.values[None] if config.gate_sds else 1.0

        values = z.values
        for _ in range(config.steps):
            t = sample_timestep(rng, sched)
            eps = sample_noise(rng, z)
            raw = sds_gradient(z, z_image, t, eps, active, w, sched)
            g_sds = raw * site_gate
            # surrogate whose gradient is exactly g_sds (teacher output is held fixed)
            sds_value = 0.5 * float(np.sum(site_gate * raw * raw))

            x = decode_unclamped(z)
            d_hat = denormalize(DepthMap(np.clip(x, -1.0, 1.0), metric.valid, "normalized"), rec)
            loss_rec, grad_img = recon_loss_and_grad(d_hat, metric, e, config.recon_norm)
            grad_img = grad_img * half_range * (np.abs(x) <= 1.0)
            g_rec = decode_adjoint(grad_img, z)

            g = total_gradient(g_sds, g_rec, lw)
            result.loss_trace.append(lw.lambda_sds * sds_value + lw.lambda_recons * loss_rec)
            values = values - config.learning_rate * g
            if not np.all(np.isfinite(values)):
                raise NonFinite(f"latent diverged in round {r + 1}")
            z = z.like(values)

        d_hat = denormalize(decode_latent(z), rec)
        d_hat = DepthMap(d_hat.values, metric.valid, "metric")
        a = masked_fit_scale_shift(d_hat, metric, e, config.tau)
        aligned = a.scale * d_hat.values + a.shift
        refined = DepthMap(np.where(metric.valid, np.maximum(aligned, MIN_DEPTH), 0.0), metric.valid.copy(), "metric")

        result.rounds.append(refined)
        result.unaligned.append(d_hat)
        result.difference_maps.append(e)
        result.refined = refined
        reference = refined
        if config.replace_teacher:
            round_teacher = _normalized_teacher(refined, f, c)

    return result
