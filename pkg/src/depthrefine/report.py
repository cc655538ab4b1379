"""Evaluation reports: per-image metrics plus dataset means, serialized as JSON."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Optional

from . import __version__
from .metrics import BoundaryMetrics, DepthMetrics

DEPTH_KEYS = ("a_rel", "rmse", "si_log", "delta1")
BOUNDARY_KEYS = ("dbe_acc", "dbe_compl")
DECIMALS = 6


@dataclass
class ReportEntry:
    name: str
    depth: DepthMetrics
    boundary: Optional[BoundaryMetrics] = None

    def to_dict(self) -> dict:
        out = {"name": self.name}
        out.update({k: round(v, DECIMALS) for k, v in self.depth.to_dict().items()})
        if self.boundary is not None:
            b = self.boundary
            out["dbe_acc"] = round(b.acc, DECIMALS)
            out["dbe_compl"] = round(b.compl, DECIMALS)
            out["dbe_acc_undefined"] = b.acc_undefined
            out["dbe_compl_undefined"] = b.compl_undefined
        return out


def aggregate(rows: list[dict]) -> dict:
    """Mean of each metric over entries where it is defined.

    Computed from the already-rounded per-image values so a reader can
    recompute it exactly from the JSON.
    """
    agg = {}
    for key in DEPTH_KEYS + BOUNDARY_KEYS:
        vals = [r[key] for r in rows if key in r and not r.get(f"{key}_undefined", False)]
        agg[key] = sum(vals) / len(vals) if vals else None
        agg[f"{key}_count"] = len(vals)
    return agg


@dataclass
class EvalReport:
    entries: list = field(default_factory=list)
    config: dict = field(default_factory=dict)
    notes: list = field(default_factory=list)

    def to_dict(self) -> dict:
        rows = [e.to_dict() for e in self.entries]
        return {
            "tool": "depthrefine",
            "version": __version__,
            "images": rows,
            "aggregate": aggregate(rows),
            "notes": list(self.notes),
            "config": self.config,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True, allow_nan=False, default=_jsonable)


def _jsonable(obj):
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    if hasattr(obj, "tolist"):
        return obj.tolist()
    raise TypeError(f"not JSON serializable: {type(obj).__name__}")
