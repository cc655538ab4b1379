"""Pinhole unprojection, point clouds and TSDF fusion."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .core_depth import DepthMap
from .errors import BehindCamera, DataError

DEFAULT_SURFACE_BAND = 0.2


@dataclass(frozen=True)
class CameraIntrinsics:
    fx: float
    fy: float
    cx: float
    cy: float

    def __post_init__(self):
        if not (self.fx > 0 and self.fy > 0):
            raise DataError("focal lengths must be positive")

    @classmethod
    def from_list(cls, values) -> "CameraIntrinsics":
        values = [float(v) for v in values]
        if len(values) != 4:
            raise DataError("intrinsics need exactly 4 numbers: fx fy cx cy")
        return cls(*values)


@dataclass(frozen=True)
class Pose:
    """Camera-to-world rigid transform: ``x_world = rotation @ x_cam + translation``."""

    rotation: np.ndarray = field(default_factory=lambda: np.eye(3))
    translation: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        R = np.asarray(self.rotation, dtype=np.float64)
        t = np.asarray(self.translation, dtype=np.float64).reshape(3)
        if R.shape != (3, 3):
            raise DataError("rotation must be 3x3")
        if not np.allclose(R.T @ R, np.eye(3), atol=1e-9, rtol=0) or not np.isclose(np.linalg.det(R), 1.0, atol=1e-9):
            raise DataError("rotation must be orthonormal with det +1")
        object.__setattr__(self, "rotation", R)
        object.__setattr__(self, "translation", t)

    @classmethod
    def from_row_major(cls, values) -> "Pose":
        """Twelve numbers: the top 3x4 block of the camera-to-world matrix."""
        m = np.asarray([float(v) for v in values])
        if m.size != 12:
            raise DataError("pose needs 12 numbers (row-major 3x4)")
        m = m.reshape(3, 4)
        return cls(m[:, :3], m[:, 3])

    def world_to_camera(self, points: np.ndarray) -> np.ndarray:
        return (points - self.translation) @ self.rotation


@dataclass
class PointCloud:
    points: np.ndarray
    attribute: Optional[np.ndarray] = None

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=np.float64).reshape(-1, 3)
        if not np.all(np.isfinite(self.points)):
            raise DataError("point coordinates must be finite")

    def __len__(self) -> int:
        return len(self.points)


@dataclass
class TsdfVolume:
    """Voxel grid of truncation-normalized signed distances (``+1`` when unobserved)."""

    origin: np.ndarray
    voxel_size: float
    dims: tuple
    truncation: float
    sdf: np.ndarray = None
    weight: np.ndarray = None

    def __post_init__(self):
        self.origin = np.asarray(self.origin, dtype=np.float64).reshape(3)
        self.dims = tuple(int(d) for d in self.dims)
        if self.voxel_size <= 0 or self.truncation <= 0:
            raise DataError("voxel size and truncation must be positive")
        if self.sdf is None:
            self.sdf = np.ones(self.dims)
        if self.weight is None:
            self.weight = np.zeros(self.dims)

    @classmethod
    def from_bounds(cls, lower, upper, voxel_size: float, truncation: float) -> "TsdfVolume":
        lower = np.asarray(lower, dtype=np.float64)
        upper = np.asarray(upper, dtype=np.float64)
        dims = np.ceil((upper - lower) / voxel_size - 1e-9).astype(int)
        return cls(lower, voxel_size, tuple(dims), truncation)

    def voxel_centers(self) -> np.ndarray:
        idx = np.indices(self.dims).reshape(3, -1).T
        return self.origin + (idx + 0.5) * self.voxel_size


def unproject(d: DepthMap, k: CameraIntrinsics, mask=None) -> PointCloud:
    m = d.valid.copy()
    if mask is not None:
        m &= np.asarray(mask, dtype=bool)
    v, u = np.nonzero(m)
    z = d.values[m]
    x = (u - k.cx) * z / k.fx
    y = (v - k.cy) * z / k.fy
    return PointCloud(np.stack([x, y, z], axis=1))


def project(p, k: CameraIntrinsics) -> tuple[float, float, float]:
    X, Y, Z = (float(c) for c in p)
    if Z <= 0:
        raise BehindCamera(f"point has non-positive depth {Z}")
    return k.fx * X / Z + k.cx, k.fy * Y / Z + k.cy, Z


def tsdf_integrate(vol: TsdfVolume, d: DepthMap, k: CameraIntrinsics, pose: Pose) -> TsdfVolume:
    """Fuse one depth frame into ``vol`` in place (and return it)."""
    cam = pose.world_to_camera(vol.voxel_centers())
    z = cam[:, 2]
    front = z > 0
    zs = np.where(front, z, 1.0)
    u = np.rint(k.fx * cam[:, 0] / zs + k.cx).astype(np.int64)
    v = np.rint(k.fy * cam[:, 1] / zs + k.cy).astype(np.int64)
    inside = front & (u >= 0) & (u < d.width) & (v >= 0) & (v < d.height)
    ui = np.where(inside, u, 0)
    vi = np.where(inside, v, 0)
    ok = inside & d.valid[vi, ui]
    dist = d.values[vi, ui] - z
    ok &= dist >= -vol.truncation
    obs = np.clip(dist / vol.truncation, -1.0, 1.0)

    sdf = vol.sdf.reshape(-1)
    w = vol.weight.reshape(-1)
    sdf[ok] = (w[ok] * sdf[ok] + obs[ok]) / (w[ok] + 1.0)
    w[ok] += 1.0
    return vol


def tsdf_extract_points(vol: TsdfVolume, surface_band: float = DEFAULT_SURFACE_BAND) -> PointCloud:
    sel = (vol.weight.reshape(-1) > 0) & (np.abs(vol.sdf.reshape(-1)) < surface_band)
    return PointCloud(vol.voxel_centers()[sel], vol.sdf.reshape(-1)[sel])


def write_ply(cloud: PointCloud, path) -> None:
    with open(path, "w") as f:
        f.write("ply\nformat ascii 1.0\n")
        f.write(f"element vertex {len(cloud)}\n")
        f.write("property float x\nproperty float y\nproperty float z\n")
        if cloud.attribute is not None:
            f.write("property float value\n")
        f.write("end_header\n")
        if cloud.attribute is None:
            for x, y, z in cloud.points:
                f.write(f"{x:.6f} {y:.6f} {z:.6f}\n")
        else:
            for (x, y, z), a in zip(cloud.points, cloud.attribute):
                f.write(f"{x:.6f} {y:.6f} {z:.6f} {a:.6f}\n")


def read_ply(path) -> PointCloud:
    with open(path) as f:
        if f.readline().strip() != "ply":
            raise DataError(f"{path}: not a PLY file")
        n = 0
        props = 0
        for line in f:
            parts = line.split()
            if parts[:2] == ["element", "vertex"]:
                n = int(parts[2])
            elif parts and parts[0] == "property":
                props += 1
            elif parts == ["end_header"]:
                break
        data = np.loadtxt(f, ndmin=2) if n else np.zeros((0, max(props, 3)))
    if len(data) != n:
        raise DataError(f"{path}: expected {n} vertices, found {len(data)}")
    attr = data[:, 3] if data.shape[1] > 3 else None
    return PointCloud(data[:, :3], attr)
