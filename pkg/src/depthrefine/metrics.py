"""Depth accuracy metrics and depth-boundary errors built on Canny edges."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .core_depth import DepthMap
from .errors import DataError, DimensionMismatch, EmptyMask, NonPositiveDepth

DELTA1_THRESHOLD = 1.25
DEFAULT_TRUNCATION = 10.0


@dataclass(frozen=True)
class DepthMetrics:
    a_rel: float
    rmse: float
    si_log: float
    delta1: float

    def to_dict(self) -> dict:
        return {"a_rel": self.a_rel, "rmse": self.rmse, "si_log": self.si_log, "delta1": self.delta1}


@dataclass(frozen=True)
class BoundaryMetrics:
    """Truncated mean edge distances in pixels.

    An empty edge set makes its mean undefined; it is then reported as 0 and
    flagged rather than NaN.
    """

    acc: float
    compl: float
    acc_undefined: bool = False
    compl_undefined: bool = False

    def to_dict(self) -> dict:
        return {"dbe_acc": self.acc, "dbe_compl": self.compl}


@dataclass(frozen=True)
class CannyConfig:
    gaussian_sigma: float = 1.0
    low_threshold: float = 0.1
    high_threshold: float = 0.2
    normalize_input: bool = True

    def __post_init__(self):
        if not 0.0 < self.low_threshold <= self.high_threshold:
            raise DataError("Canny thresholds need 0 < low <= high")
        if self.gaussian_sigma < 0:
            raise DataError("Canny sigma must be nonnegative")


@dataclass
class EdgeMap:
    edges: np.ndarray

    def __post_init__(self):
        self.edges = np.asarray(self.edges, dtype=bool)

    @property
    def height(self) -> int:
        return self.edges.shape[0]

    @property
    def width(self) -> int:
        return self.edges.shape[1]


def depth_metrics(pred: DepthMap, gt: DepthMap, mask=None, delta_threshold: float = DELTA1_THRESHOLD) -> DepthMetrics:
    if pred.shape != gt.shape:
        raise DimensionMismatch(f"pred {pred.shape} vs gt {gt.shape}")
    m = pred.valid & gt.valid
    if mask is not None:
        m &= np.asarray(mask, dtype=bool)
    if not m.any():
        raise EmptyMask("no pixels to evaluate")
    p = pred.values[m]
    g = gt.values[m]
    if np.any(p <= 0) or np.any(g <= 0):
        raise NonPositiveDepth("depth metrics need positive depths on the mask")
    diff = p - g
    ratio = np.maximum(p / g, g / p)
    log_diff = np.log(p) - np.log(g)
    si_log = 100.0 * np.sqrt(np.mean(np.square(log_diff - log_diff.mean())))
    return DepthMetrics(
        a_rel=float(np.mean(np.abs(diff) / g)),
        rmse=float(np.sqrt(np.mean(np.square(diff)))),
        si_log=float(si_log),
        delta1=float(np.mean(ratio < delta_threshold)),
    )


# neighbour offsets (dy, dx) along the quantized gradient direction
_DIRECTIONS = ((0, 1), (1, 1), (1, 0), (1, -1))


def _shift(a: np.ndarray, dy: int, dx: int) -> np.ndarray:
    """``out[y, x] = a[y + dy, x + dx]``, clamped to the border."""
    H, W = a.shape
    ys = np.clip(np.arange(H) + dy, 0, H - 1)
    xs = np.clip(np.arange(W) + dx, 0, W - 1)
    return a[np.ix_(ys, xs)]


def canny(grid: np.ndarray, cfg: CannyConfig = CannyConfig()) -> EdgeMap:
    img = np.asarray(grid, dtype=np.float64)
    if not np.all(np.isfinite(img)):
        raise DataError("canny needs a finite grid")
    if cfg.normalize_input:
        lo, hi = img.min(), img.max()
        img = (img - lo) / (hi - lo) if hi > lo else np.zeros_like(img)
    if cfg.gaussian_sigma > 0:
        img = ndimage.gaussian_filter(img, cfg.gaussian_sigma, mode="nearest")

    p = np.pad(img, 1, mode="edge")
    gx = 0.5 * (p[1:-1, 2:] - p[1:-1, :-2])
    gy = 0.5 * (p[2:, 1:-1] - p[:-2, 1:-1])
    mag = np.hypot(gx, gy)
    peak = mag.max()
    if peak <= 0:
        return EdgeMap(np.zeros(img.shape, dtype=bool))

    # angle in [0, 180) quantized to 0/45/90/135 degrees
    angle = np.rad2deg(np.arctan2(gy, gx)) % 180.0
    sector = np.round(angle / 45.0).astype(int) % 4

    # >= on one side and > on the other keeps plateau ridges one pixel wide
    keep = np.zeros(img.shape, dtype=bool)
    for k, (dy, dx) in enumerate(_DIRECTIONS):
        sel = sector == k
        ahead = _shift(mag, dy, dx)
        behind = _shift(mag, -dy, -dx)
        keep |= sel & (mag >= behind) & (mag > ahead)
    keep &= mag > 0

    strong = keep & (mag >= cfg.high_threshold * peak)
    weak = keep & (mag >= cfg.low_threshold * peak)
    labels, n = ndimage.label(weak, structure=np.ones((3, 3), dtype=bool))
    if n == 0:
        return EdgeMap(np.zeros(img.shape, dtype=bool))
    has_strong = np.zeros(n + 1, dtype=bool)
    has_strong[labels[strong]] = True
    has_strong[0] = False
    return EdgeMap(has_strong[labels])


def distance_transform(edges: EdgeMap) -> np.ndarray:
    """Exact Euclidean distance from every pixel to its nearest edge pixel (inf if none)."""
    e = edges.edges
    if not e.any():
        return np.full(e.shape, np.inf)
    return ndimage.distance_transform_edt(~e)


def dbe(pred_edges: EdgeMap, gt_edges: EdgeMap, truncation: float = DEFAULT_TRUNCATION) -> BoundaryMetrics:
    if pred_edges.edges.shape != gt_edges.edges.shape:
        raise DimensionMismatch("edge maps differ in shape")
    p, g = pred_edges.edges, gt_edges.edges

    def _mean_truncated(src: np.ndarray, dist_to: np.ndarray) -> tuple[float, bool]:
        if not src.any():
            return 0.0, True
        return float(np.mean(np.minimum(dist_to[src], truncation))), False

    acc, acc_undef = _mean_truncated(p, distance_transform(gt_edges))
    compl, compl_undef = _mean_truncated(g, distance_transform(pred_edges))
    return BoundaryMetrics(acc, compl, acc_undef, compl_undef)


def _filled(d: DepthMap) -> np.ndarray:
    if d.valid.all():
        return d.values
    fill = d.values[d.valid].mean() if d.valid.any() else 0.0
    return np.where(d.valid, d.values, fill)


def pdbe(pred: DepthMap, gt: DepthMap, cfg: CannyConfig = CannyConfig(), truncation: float = DEFAULT_TRUNCATION) -> BoundaryMetrics:
    """Boundary error using Canny edges of the ground truth as pseudo-annotations."""
    if pred.shape != gt.shape:
        raise DimensionMismatch(f"pred {pred.shape} vs gt {gt.shape}")
    both = pred.valid & gt.valid
    pe = EdgeMap(canny(_filled(pred), cfg).edges & both)
    ge = EdgeMap(canny(_filled(gt), cfg).edges & both)
    return dbe(pe, ge, truncation)
