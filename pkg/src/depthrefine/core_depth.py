"""Depth maps, min-max normalization, scale/shift alignment and difference maps."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import DataError, DegenerateRange, DimensionMismatch, EmptyMask, SingularSystem

KINDS = ("metric", "affine_invariant", "normalized")

DEFAULT_TAU = 0.2
DEFAULT_QUANTILE = 0.95
DEFAULT_EPS_DIV = 1e-8


@dataclass
class DepthMap:
    values: np.ndarray
    valid: Optional[np.ndarray] = None
    kind: str = "metric"

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 2:
            raise DataError(f"depth map must be 2-D, got shape {self.values.shape}")
        if self.valid is None:
            self.valid = np.isfinite(self.values)
        else:
            self.valid = np.asarray(self.valid, dtype=bool)
        if self.valid.shape != self.values.shape:
            raise DimensionMismatch(f"mask shape {self.valid.shape} != values shape {self.values.shape}")
        if self.kind not in KINDS:
            raise DataError(f"unknown depth kind {self.kind!r}")
        v = self.values[self.valid]
        if not np.all(np.isfinite(v)):
            raise DataError("non-finite values on valid pixels")
        if self.kind == "metric" and np.any(v <= 0):
            raise DataError("metric depth must be positive on valid pixels")
        if self.kind == "normalized" and v.size and (v.min() < -1.0 or v.max() > 1.0):
            raise DataError("normalized depth must lie in [-1, 1]")

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]

    @property
    def shape(self) -> tuple:
        return self.values.shape


@dataclass(frozen=True)
class AffineTransform:
    scale: float
    shift: float

    def __post_init__(self):
        if not (np.isfinite(self.scale) and self.scale != 0 and np.isfinite(self.shift)):
            raise SingularSystem(f"invalid affine transform ({self.scale}, {self.shift})")


@dataclass(frozen=True)
class NormalizationRecord:
    min_value: float
    max_value: float

    def __post_init__(self):
        if not self.max_value > self.min_value:
            raise DegenerateRange(f"max {self.max_value} must exceed min {self.min_value}")


@dataclass
class DifferenceMap:
    """Per-pixel disagreement in [0, 1].

    ``raw`` keeps the un-normalized absolute residuals (meters) when known.
    """

    values: np.ndarray
    valid: np.ndarray
    raw: Optional[np.ndarray] = field(default=None, repr=False)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        self.valid = np.asarray(self.valid, dtype=bool)
        if self.values.shape != self.valid.shape:
            raise DimensionMismatch("difference map values and mask differ in shape")
        v = self.values[self.valid]
        if v.size and (v.min() < 0.0 or v.max() > 1.0):
            raise DataError("difference map values must lie in [0, 1]")

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]

    @property
    def shape(self) -> tuple:
        return self.values.shape


def minmax_normalize(d: DepthMap) -> tuple[DepthMap, NormalizationRecord]:
    v = d.values[d.valid]
    if v.size < 2 or v.min() == v.max():
        raise DegenerateRange("need at least two distinct valid values to normalize")
    rec = NormalizationRecord(float(v.min()), float(v.max()))
    out = np.zeros_like(d.values)
    out[d.valid] = 2.0 * (v - rec.min_value) / (rec.max_value - rec.min_value) - 1.0
    return DepthMap(out, d.valid.copy(), "normalized"), rec


def denormalize(n: DepthMap, rec: NormalizationRecord) -> DepthMap:
    out = np.zeros_like(n.values)
    v = n.values[n.valid]
    out[n.valid] = (v + 1.0) / 2.0 * (rec.max_value - rec.min_value) + rec.min_value
    return DepthMap(out, n.valid.copy(), "metric")


def _check_same_shape(*maps):
    shapes = {m.shape for m in maps}
    if len(shapes) != 1:
        raise DimensionMismatch(f"shape mismatch: {sorted(shapes)}")


def fit_scale_shift(source: DepthMap, target: DepthMap, mask: Optional[np.ndarray] = None) -> AffineTransform:
    """Least-squares ``(s, t)`` minimizing ``sum((s*source + t - target)**2)`` over the mask.

    Solves the 2x2 normal equations in closed form (centered, which is the
    same system after eliminating ``t``).
    """
    _check_same_shape(source, target)
    m = source.valid & target.valid
    if mask is not None:
        if mask.shape != m.shape:
            raise DimensionMismatch("alignment mask has the wrong shape")
        m &= mask
    x = source.values[m]
    y = target.values[m]
    if x.size < 2:
        raise EmptyMask(f"alignment needs >= 2 pixels, got {x.size}")
    if x.min() == x.max():
        raise SingularSystem("source is constant on the alignment mask")
    mx = x.mean()
    my = y.mean()
    xc = x - mx
    sxx = np.dot(xc, xc)
    if sxx == 0.0:
        raise SingularSystem("source variance vanishes on the alignment mask")
    s = np.dot(xc, y - my) / sxx
    t = my - s * mx
    return AffineTransform(float(s), float(t))


def masked_fit_scale_shift(
    source: DepthMap, target: DepthMap, e: DifferenceMap, tau: float = DEFAULT_TAU
) -> AffineTransform:
    """Align only where the difference map is below ``tau``."""
    if e.shape != source.shape:
        raise DimensionMismatch("difference map shape differs from source")
    return fit_scale_shift(source, target, e.valid & (e.values < tau))


def apply_affine(m: DepthMap, a: AffineTransform, kind: Optional[str] = None) -> DepthMap:
    if kind is None:
        kind = "affine_invariant" if m.kind == "normalized" else m.kind
    out = np.zeros_like(m.values)
    out[m.valid] = a.scale * m.values[m.valid] + a.shift
    return DepthMap(out, m.valid.copy(), kind)


def alignment_residual(source: DepthMap, target: DepthMap, a: AffineTransform, mask=None) -> float:
    m = source.valid & target.valid
    if mask is not None:
        m &= mask
    r = a.scale * source.values[m] + a.shift - target.values[m]
    return float(np.dot(r, r))


def normalize_difference(
    raw: np.ndarray, valid: np.ndarray, quantile: float = DEFAULT_QUANTILE, eps_div: float = DEFAULT_EPS_DIV
) -> np.ndarray:
    """Scale residuals by their upper quantile and clamp to [0, 1]; invalid pixels get 1."""
    out = np.ones_like(raw, dtype=np.float64)
    v = raw[valid]
    if v.size:
        q = np.quantile(v, quantile)
        out[valid] = np.clip(v / (q + eps_div), 0.0, 1.0)
    return out


def difference_map(
    d_rel: DepthMap,
    d_metric: DepthMap,
    quantile: float = DEFAULT_QUANTILE,
    eps_div: float = DEFAULT_EPS_DIV,
    mask: Optional[np.ndarray] = None,
) -> DifferenceMap:
    """Absolute residual between ``d_rel`` aligned onto ``d_metric`` and ``d_metric``.

    ``mask`` optionally restricts the pixels used for the alignment fit;
    residuals are reported on every jointly valid pixel.
    """
    _check_same_shape(d_rel, d_metric)
    a = fit_scale_shift(d_rel, d_metric, mask)
    valid = d_rel.valid & d_metric.valid
    raw = np.zeros_like(d_metric.values)
    raw[valid] = np.abs(a.scale * d_rel.values[valid] + a.shift - d_metric.values[valid])
    return DifferenceMap(normalize_difference(raw, valid, quantile, eps_div), valid, raw)
