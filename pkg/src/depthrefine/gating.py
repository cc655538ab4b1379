"""Latent-grid stand-ins for the depth autoencoder, and noise-aware blending.

The encoder is an area average over ``factor x factor`` blocks with the
value replicated over channels; the decoder averages channels and upsamples
bilinearly (pixel-center aligned, edge-clamped). Both are linear, so the
decoder's adjoint is available in closed form for gradient pull-back.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .core_depth import DepthMap, DifferenceMap
from .errors import DataError, DimensionMismatch

DEFAULT_FACTOR = 4
DEFAULT_CHANNELS = 4


@dataclass
class LatentGrid:
    """``values`` has shape ``(channels, h, w)``.

    ``source_shape`` is the un-padded image size the grid decodes to.
    """

    values: np.ndarray
    factor: int = 1
    source_shape: tuple = None

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 3:
            raise DataError(f"latent must be (channels, h, w), got {self.values.shape}")
        if self.factor < 1:
            raise DataError("downsample factor must be >= 1")
        if not np.all(np.isfinite(self.values)):
            raise DataError("latent values must be finite")
        c, h, w = self.values.shape
        if self.source_shape is None:
            self.source_shape = (h * self.factor, w * self.factor)
        self.source_shape = tuple(int(s) for s in self.source_shape)
        H, W = self.source_shape
        if -(-H // self.factor) != h or -(-W // self.factor) != w:
            raise DimensionMismatch(f"latent {h}x{w} at factor {self.factor} cannot cover image {H}x{W}")

    @property
    def channels(self) -> int:
        return self.values.shape[0]

    @property
    def height(self) -> int:
        return self.values.shape[1]

    @property
    def width(self) -> int:
        return self.values.shape[2]

    def like(self, values) -> "LatentGrid":
        return LatentGrid(values, self.factor, self.source_shape)


@dataclass
class GateMap:
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 2:
            raise DataError("gate map must be 2-D")
        if self.values.size and (self.values.min() < 0.0 or self.values.max() > 1.0):
            raise DataError("gate values must lie in [0, 1]")

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]


def _area_downsample(grid: np.ndarray, factor: int) -> np.ndarray:
    H, W = grid.shape
    h, w = -(-H // factor), -(-W // factor)
    padded = np.pad(grid, ((0, h * factor - H), (0, w * factor - W)), mode="edge")
    return padded.reshape(h, factor, w, factor).mean(axis=(1, 3))


@lru_cache(maxsize=64)
def _upsample_matrix(n_coarse: int, factor: int) -> np.ndarray:
    """Bilinear interpolation weights, shape ``(n_coarse * factor, n_coarse)``."""
    n_fine = n_coarse * factor
    x = (np.arange(n_fine) + 0.5) / factor - 0.5
    x = np.clip(x, 0.0, n_coarse - 1)
    i0 = np.floor(x).astype(int)
    i1 = np.minimum(i0 + 1, n_coarse - 1)
    frac = x - i0
    U = np.zeros((n_fine, n_coarse))
    rows = np.arange(n_fine)
    U[rows, i0] += 1.0 - frac
    U[rows, i1] += frac
    U.setflags(write=False)
    return U


def upsample(grid: np.ndarray, factor: int, out_shape: tuple) -> np.ndarray:
    if factor == 1:
        return grid[: out_shape[0], : out_shape[1]].copy()
    h, w = grid.shape
    Uy = _upsample_matrix(h, factor)
    Ux = _upsample_matrix(w, factor)
    return (Uy @ grid @ Ux.T)[: out_shape[0], : out_shape[1]]


def upsample_adjoint(grad: np.ndarray, factor: int, coarse_shape: tuple) -> np.ndarray:
    """Transpose of :func:`upsample` applied to an image-sized gradient."""
    h, w = coarse_shape
    padded = np.zeros((h * factor, w * factor))
    padded[: grad.shape[0], : grad.shape[1]] = grad
    if factor == 1:
        return padded
    Uy = _upsample_matrix(h, factor)
    Ux = _upsample_matrix(w, factor)
    return Uy.T @ padded @ Ux


def encode_latent(m: DepthMap, factor: int = DEFAULT_FACTOR, channels: int = DEFAULT_CHANNELS) -> LatentGrid:
    if factor < 1 or channels < 1:
        raise DataError("factor and channels must be >= 1")
    pooled = _area_downsample(m.values, factor)
    return LatentGrid(np.repeat(pooled[None], channels, axis=0), factor, m.shape)


def decode_unclamped(z: LatentGrid) -> np.ndarray:
    return upsample(z.values.mean(axis=0), z.factor, z.source_shape)


def decode_latent(z: LatentGrid) -> DepthMap:
    return DepthMap(np.clip(decode_unclamped(z), -1.0, 1.0), None, "normalized")


def decode_adjoint(grad: np.ndarray, z: LatentGrid) -> np.ndarray:
    """Pull an image-space gradient back to latent space through the linear decode."""
    g = upsample_adjoint(grad, z.factor, (z.height, z.width)) / z.channels
    return np.broadcast_to(g, z.values.shape).copy()


def downsample_gate(e: DifferenceMap, latent_dims: tuple) -> GateMap:
    h, w = latent_dims
    H, W = e.shape
    factor = -(-H // h)
    if -(-W // factor) != w or -(-H // factor) != h:
        raise DimensionMismatch(f"latent dims {latent_dims} inconsistent with image {e.shape}")
    return GateMap(np.clip(_area_downsample(e.values, factor), 0.0, 1.0))


def sample_noise(rng: np.random.Generator, like: LatentGrid) -> LatentGrid:
    return like.like(rng.standard_normal(like.values.shape))


def blend(z_d: LatentGrid, noise: LatentGrid, gate: GateMap) -> LatentGrid:
    """Per-site convex mix: ``gate * noise + (1 - gate) * z_d``."""
    if z_d.values.shape != noise.values.shape:
        raise DimensionMismatch(f"latent {z_d.values.shape} vs noise {noise.values.shape}")
    if gate.values.shape != z_d.values.shape[1:]:
        raise DimensionMismatch(f"gate {gate.values.shape} vs latent {z_d.values.shape[1:]}")
    g = gate.values[None]
    return z_d.like(g * noise.values + (1.0 - g) * z_d.values)
