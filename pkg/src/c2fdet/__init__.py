"""Coarse-to-fine object detection for high-resolution images.

A coarse detector runs on a downsampled copy of the image and a light
center-localization network marks small objects. Their boxes are expanded,
merged into cluster regions, packed into square mosaic chips, detected again
at higher resolution and fused back with the coarse results.
"""

from .chips import ChipLayout, Placement, plan_chips, render_chip, transfer_ground_truth
from .config import PROFILES, PipelineConfig, load_config
from .estimators import ChipRequest, ClusterChipper, CoarseToFineDetector, ResultFuser
from .evaluation import EvalReport, average_precision, dataset_stats, evaluate, recall_rate, size_bucketed_ap
from .fusion import FusionConfig, filter_boundary, fuse, fuse_image, nms, remap_detections
from .geom import Box, ImageDims, Transform2D, apply_transform, clamp_box, invert, iou, union_box
from .heatmap import CenterPoint, GaussianParams, Heatmap, build_target, decode_centers, focal_loss
from .nmm import ClusterRegion, NmmConfig, non_max_merge, pad_small_region
from .proposal import Detection, ProposalConfig, expand_proposal, generate_proposals

__version__ = "0.1.0"

__all__ = [
    "Box",
    "CenterPoint",
    "ChipLayout",
    "ChipRequest",
    "ClusterChipper",
    "ClusterRegion",
    "CoarseToFineDetector",
    "Detection",
    "EvalReport",
    "FusionConfig",
    "GaussianParams",
    "Heatmap",
    "ImageDims",
    "NmmConfig",
    "PROFILES",
    "PipelineConfig",
    "Placement",
    "ProposalConfig",
    "ResultFuser",
    "Transform2D",
    "apply_transform",
    "average_precision",
    "build_target",
    "clamp_box",
    "dataset_stats",
    "decode_centers",
    "evaluate",
    "expand_proposal",
    "filter_boundary",
    "focal_loss",
    "fuse",
    "fuse_image",
    "generate_proposals",
    "invert",
    "iou",
    "load_config",
    "nms",
    "non_max_merge",
    "pad_small_region",
    "plan_chips",
    "recall_rate",
    "remap_detections",
    "render_chip",
    "size_bucketed_ap",
    "transfer_ground_truth",
    "union_box",
]
