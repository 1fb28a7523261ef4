"""Coarse-to-fine multi-oriented text line detection.

Pipeline stages: pixel-labeling saliency -> text blocks -> MSER character
components -> projection orientation -> line candidates -> centroid
filtering -> rotated-box evaluation.
"""

from .imaging import (
    BinaryMask,
    GrayImage,
    PixelRegion,
    ProbabilityMap,
    connected_components,
    load_image,
    save_image,
)
from .geometry import (
    OrientedRect,
    min_area_oriented_rect,
    rect_intersection_area,
    rotated_iou,
    wrap_half_pi,
)
from .saliency import (
    PixelNet,
    PixelNetConfig,
    create_net,
    load_model,
    multi_scale_saliency,
    predict,
    save_model,
    train,
)
from .blocks import TextBlock, extract_blocks
from .mser import Component, MserParams, extract_components
from .orientation import build_profile, estimate_orientation
from .candidates import LineCandidate, generate_all
from .filtering import CentroidSet, Detection, FilterParams, filter_pipeline
from .evaluate import (
    EvalReport,
    GroundTruthEntry,
    load_ground_truth,
    match_axis_aligned,
    match_rotated,
    report,
    save_ground_truth,
)
from .synth import SynthSpec, SynthScene, generate_scene, write_corpus
from .config import RunConfig, load_config, save_config
from .cli import main

__all__ = [
    "BinaryMask",
    "CentroidSet",
    "Component",
    "Detection",
    "EvalReport",
    "FilterParams",
    "GrayImage",
    "GroundTruthEntry",
    "LineCandidate",
    "MserParams",
    "OrientedRect",
    "PixelNet",
    "PixelNetConfig",
    "PixelRegion",
    "ProbabilityMap",
    "RunConfig",
    "SynthScene",
    "SynthSpec",
    "TextBlock",
    "build_profile",
    "connected_components",
    "create_net",
    "estimate_orientation",
    "extract_blocks",
    "extract_components",
    "filter_pipeline",
    "generate_all",
    "generate_scene",
    "load_config",
    "load_ground_truth",
    "load_image",
    "load_model",
    "main",
    "match_axis_aligned",
    "match_rotated",
    "min_area_oriented_rect",
    "multi_scale_saliency",
    "predict",
    "rect_intersection_area",
    "report",
    "rotated_iou",
    "save_config",
    "save_ground_truth",
    "save_image",
    "save_model",
    "train",
    "wrap_half_pi",
    "write_corpus",
]

__version__ = "0.1.0"
