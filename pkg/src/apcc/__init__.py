"""Point cloud codec: octree / predictive-tree geometry, transform / prediction attributes."""
from .codec import AttrBranch, CodecConfig, EncodeResult, GeomBranch, decode, encode
from .core import RawPointCloud, VoxelCloud, color_forward, color_inverse, devoxelize, recolor, voxelize
from .curves import CurveConfig, CurveOrder
from .errors import (
    BitstreamUnderrun,
    CodecError,
    ContextIndexError,
    CorruptStream,
    EmptyInput,
    MissingAttributes,
    NotAPCCStream,
    ParseError,
    RangeError,
    TruncatedInput,
    VersionError,
)
from .metrics import compute_metrics
from .octree import ContextSet, OctreeConfig
from .ply import load_ply, read_ply, save_ply, write_ply
from .predict import PredictConfig
from .predtree import PredTreeConfig
from .transform import TransformConfig

__version__ = "0.1.0"

__all__ = [
    "AttrBranch",
    "BitstreamUnderrun",
    "CodecConfig",
    "CodecError",
    "ContextIndexError",
    "ContextSet",
    "CorruptStream",
    "CurveConfig",
    "CurveOrder",
    "EmptyInput",
    "EncodeResult",
    "GeomBranch",
    "MissingAttributes",
    "NotAPCCStream",
    "OctreeConfig",
    "ParseError",
    "PredTreeConfig",
    "PredictConfig",
    "RangeError",
    "RawPointCloud",
    "TransformConfig",
    "TruncatedInput",
    "VersionError",
    "VoxelCloud",
    "color_forward",
    "color_inverse",
    "compute_metrics",
    "decode",
    "devoxelize",
    "encode",
    "load_ply",
    "read_ply",
    "recolor",
    "save_ply",
    "voxelize",
    "write_ply",
]
