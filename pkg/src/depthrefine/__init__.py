"""Depth-map refinement with noise-aware gating and score distillation, plus
depth accuracy/boundary evaluation and point-cloud/TSDF geometry."""

__version__ = "0.1.0"

from .core_depth import (
    AffineTransform,
    DepthMap,
    DifferenceMap,
    NormalizationRecord,
    apply_affine,
    denormalize,
    difference_map,
    fit_scale_shift,
    masked_fit_scale_shift,
    minmax_normalize,
)
from .distill import LossWeights, make_schedule, q_sample, recon_loss_and_grad, sds_gradient
from .gating import GateMap, LatentGrid, blend, decode_latent, downsample_gate, encode_latent
from .metrics import CannyConfig, canny, dbe, depth_metrics, distance_transform, pdbe
from .refine import RefineConfig, gen_scene, make_oracle_teacher, refine
