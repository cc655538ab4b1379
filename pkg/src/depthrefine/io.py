"""Depth file formats: PFM, 16-bit PNG and raw float32."""

from __future__ import annotations

import os
import re
import warnings
from dataclasses import dataclass
from typing import Optional

import numpy as np
from PIL import Image

from .core_depth import DepthMap
from .errors import ClampWarning, DataError, MalformedHeader, TruncatedPayload, UnsupportedVariant

PNG16_MAX = 65535


@dataclass(frozen=True)
class DepthFileFormat:
    variant: str  # "pfm", "png16" or "raw"
    scale: float = 0.001  # meters per PNG16 unit
    width: Optional[int] = None
    height: Optional[int] = None

    def __post_init__(self):
        if self.variant not in ("pfm", "png16", "raw"):
            raise UnsupportedVariant(f"unknown depth format {self.variant!r}")
        if self.variant == "png16" and not self.scale > 0:
            raise DataError("PNG16 scale must be positive")


def format_for_path(path, variant=None, scale: float = 0.001, width=None, height=None) -> DepthFileFormat:
    if variant is None:
        ext = os.path.splitext(str(path))[1].lower()
        variant = {".pfm": "pfm", ".png": "png16", ".raw": "raw", ".f32": "raw", ".bin": "raw"}.get(ext)
        if variant is None:
            raise UnsupportedVariant(f"{path}: cannot infer depth format from extension {ext!r}")
    return DepthFileFormat(variant, scale, width, height)


def _mark_valid(values: np.ndarray, kind: str) -> np.ndarray:
    valid = np.isfinite(values)
    if kind == "metric":
        valid &= np.where(valid, values, 0) > 0
    return valid


def _read_token_line(f) -> str:
    line = f.readline()
    if not line:
        raise MalformedHeader("unexpected end of PFM header")
    return line.decode("ascii", errors="replace").strip()


def read_pfm(path, kind: str = "metric") -> DepthMap:
    with open(path, "rb") as f:
        magic = _read_token_line(f)
        if magic == "PF":
            raise UnsupportedVariant(f"{path}: 3-channel PFM is not a depth map")
        if magic != "Pf":
            raise MalformedHeader(f"{path}: bad PFM magic {magic!r}")
        dims = _read_token_line(f)
        m = re.fullmatch(r"(\d+)\s+(\d+)", dims)
        if not m:
            raise MalformedHeader(f"{path}: bad PFM dimensions line {dims!r}")
        width, height = int(m.group(1)), int(m.group(2))
        try:
            scale = float(_read_token_line(f))
        except ValueError as exc:
            raise MalformedHeader(f"{path}: bad PFM scale line") from exc
        if scale == 0:
            raise MalformedHeader(f"{path}: PFM scale must be nonzero")
        dtype = "<f4" if scale < 0 else ">f4"
        payload = f.read()
    n = width * height
    if len(payload) < 4 * n:
        raise TruncatedPayload(f"{path}: expected {4 * n} bytes, got {len(payload)}")
    data = np.frombuffer(payload[: 4 * n], dtype=dtype).reshape(height, width)
    values = np.flipud(data).astype(np.float64)
    return DepthMap(values, _mark_valid(values, kind), kind)


def write_pfm(d: DepthMap, path) -> None:
    values = np.where(d.valid, d.values, np.nan).astype("<f4")
    with open(path, "wb") as f:
        f.write(f"Pf\n{d.width} {d.height}\n-1.0\n".encode("ascii"))
        f.write(np.flipud(values).tobytes())


def read_png16(path, scale: float, kind: str = "metric") -> DepthMap:
    with Image.open(path) as im:
        raw = np.array(im)
    if raw.ndim != 2:
        raise UnsupportedVariant(f"{path}: expected a single-channel 16-bit PNG")
    raw = raw.astype(np.float64)
    valid = raw > 0
    return DepthMap(np.where(valid, raw * scale, 0.0), valid, kind)


def write_png16(d: DepthMap, path, scale: float) -> list[str]:
    """Returns warnings raised while quantizing (values clipped to the PNG range)."""
    notes = []
    units = np.rint(np.where(d.valid, d.values, 0.0) / scale)
    over = d.valid & (units > PNG16_MAX)
    under = d.valid & (units < 1)
    if over.any() or under.any():
        msg = (f"{path}: {int(over.sum())} pixels above {PNG16_MAX * scale:g} m and "
               f"{int(under.sum())} below {scale:g} m clipped to the PNG16 range")
        warnings.warn(msg, ClampWarning, stacklevel=2)
        notes.append(msg)
    units = np.where(d.valid, np.clip(units, 1, PNG16_MAX), 0).astype(np.uint16)
    Image.fromarray(units).save(path)
    return notes


def read_raw(path, width: int, height: int, kind: str = "metric") -> DepthMap:
    if not width or not height:
        raise DataError(f"{path}: raw float32 input needs width and height")
    data = np.fromfile(path, dtype="<f4")
    if data.size < width * height:
        raise TruncatedPayload(f"{path}: expected {width * height} floats, got {data.size}")
    values = data[: width * height].reshape(height, width).astype(np.float64)
    return DepthMap(values, _mark_valid(values, kind), kind)


def write_raw(d: DepthMap, path) -> None:
    np.where(d.valid, d.values, np.nan).astype("<f4").tofile(path)


def read_depth(path, fmt: Optional[DepthFileFormat] = None, kind: str = "metric") -> DepthMap:
    if not os.path.exists(path):
        raise FileNotFoundError(f"no such file: {path}")
    fmt = fmt or format_for_path(path)
    if fmt.variant == "pfm":
        return read_pfm(path, kind)
    if fmt.variant == "png16":
        return read_png16(path, fmt.scale, kind)
    return read_raw(path, fmt.width, fmt.height, kind)


def write_depth(d: DepthMap, path, fmt: Optional[DepthFileFormat] = None) -> list[str]:
    fmt = fmt or format_for_path(path)
    if fmt.variant == "pfm":
        write_pfm(d, path)
        return []
    if fmt.variant == "png16":
        return write_png16(d, path, fmt.scale)
    write_raw(d, path)
    return []


def write_edges_png(edges: np.ndarray, path) -> None:
    Image.fromarray(np.where(edges, 255, 0).astype(np.uint8)).save(path)
