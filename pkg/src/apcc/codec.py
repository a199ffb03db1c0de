"""End-to-end encode/decode: voxelize, code geometry, code attributes."""
import math
import struct
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Union

import numpy as np

from . import bitstream as bs
from . import octree, predict, predtree, transform
from .core import RawPointCloud, VoxelCloud, color_forward, color_inverse, voxelize
from .curves import MAX_DEPTH, CurveOrder
from .entropy import ArithmeticDecoder, ArithmeticEncoder
from .octree import OctreeConfig
from .predict import PredictConfig
from .predtree import PredTreeConfig
from .transform import QP_MAX, TransformConfig
from .errors import CodecError, CorruptStream, EmptyInput, RangeError

MAX_POINTS = 1 << 24


class GeomBranch(Enum):
    OCTREE = 0
    PREDTREE = 1


class AttrBranch(Enum):
    NONE = 0
    TRANSFORM = 1
    PREDICT = 2


ATTR_COLOR = 1
ATTR_REFLECTANCE = 2


@dataclass(frozen=True)
class CodecConfig:
    geom_branch: GeomBranch = GeomBranch.OCTREE
    attr_branch: AttrBranch = AttrBranch.TRANSFORM
    scale: float = 1.0
    qp: int = 0
    octree: OctreeConfig = field(default_factory=OctreeConfig)
    predtree: PredTreeConfig = field(default_factory=PredTreeConfig)
    transform: TransformConfig = field(default_factory=TransformConfig)
    predict: PredictConfig = field(default_factory=PredictConfig)
    color_transform_enabled: bool = True

    def __post_init__(self):
        if not (self.scale > 0 and math.isfinite(self.scale)):
            raise ValueError("scale must be positive and finite")
        if not 0 <= self.qp <= QP_MAX:
            raise ValueError(f"qp must be in [0, {QP_MAX}]")


@dataclass
class EncodeStats:
    input_points: int
    points: int
    header_bytes: int
    geometry_bytes: int
    attribute_bytes: dict

    @property
    def geometry_bits(self):
        return 8 * self.geometry_bytes

    @property
    def attribute_bits(self):
        return 8 * sum(self.attribute_bytes.values())

    @property
    def total_bits(self):
        return 8 * self.header_bytes + self.geometry_bits + self.attribute_bits

    @property
    def bpp(self):
        return self.total_bits / self.input_points


# --- parameter block ------------------------------------------------------------------
_OCT = struct.Struct("<BBBBdd")
_PT = struct.Struct("<H")
_TR = struct.Struct("<ddIddH")
_PR = struct.Struct("<BHHBBBBddd")


def _pack_params(n, cfg: CodecConfig, attr_branch, lod_k):
    out = [struct.pack("<I", n)]
    if cfg.geom_branch == GeomBranch.OCTREE:
        o = cfg.octree
        modes = int(o.isolated_mode) | (int(o.planar_mode) << 1)
        out.append(_OCT.pack(o.k_layers, o.m_layers, o.context_set.value, modes,
                             o.isolated_layer_ratio, o.planar_density_threshold))
    else:
        out.append(_PT.pack(cfg.predtree.kd_leaf_size))
    if attr_branch != AttrBranch.NONE:
        out.append(struct.pack("<B", cfg.qp))
        if attr_branch == AttrBranch.TRANSFORM:
            t = cfg.transform
            out.append(_TR.pack(t.initial_distance_threshold, t.threshold_growth, t.small_layer_cutoff,
                                t.force_merge_fraction, t.hilbert_theta, t.neighbor_window))
        else:
            p = cfg.predict
            out.append(_PR.pack(p.order.value, p.cache_size_m, p.offset_c, lod_k, p.lod_levels_n,
                                int(p.intra_layer), p.max_neighbors, p.sampling_target,
                                p.cross_attr_lambda, p.hilbert_theta))
    return b"".join(out)


def _unpack_params(header: bs.SequenceHeader):
    """Rebuild ``(n_points, CodecConfig, attr_branch)`` from a header."""
    data = header.params
    try:
        (n,) = struct.unpack_from("<I", data, 0)
        pos = 4
        kw = {}
        if header.flags & bs.FLAG_GEOM_PREDTREE:
            (leaf,) = _PT.unpack_from(data, pos)
            pos += _PT.size
            kw["geom_branch"] = GeomBranch.PREDTREE
            kw["predtree"] = predtree.PredTreeConfig(kd_leaf_size=leaf)
        else:
            k, m, cs, modes, ratio, thr = _OCT.unpack_from(data, pos)
            pos += _OCT.size
            kw["octree"] = octree.OctreeConfig(k, m, bool(modes & 1), ratio, octree.ContextSet(cs),
                                               bool(modes & 2), thr)
        attr = AttrBranch(header.attr_branch)
        if attr != AttrBranch.NONE:
            (qp,) = struct.unpack_from("<B", data, pos)
            pos += 1
            kw["qp"] = qp
            if attr == AttrBranch.TRANSFORM:
                thr0, growth, cutoff, frac, theta, window = _TR.unpack_from(data, pos)
                pos += _TR.size
                kw["transform"] = transform.TransformConfig(thr0, growth, cutoff, frac, qp, theta, window)
            else:
                order, m, c, k, nl, intra, nb, target, lam, theta = _PR.unpack_from(data, pos)
                pos += _PR.size
                kw["predict"] = predict.PredictConfig(CurveOrder(order), m, c, k, nl, bool(intra), nb,
                                                      target, lam, theta, qp)
        if pos != len(data):
            raise CorruptStream("parameter block has trailing bytes")
        kw["attr_branch"] = attr
        kw["color_transform_enabled"] = bool(header.flags & bs.FLAG_COLOR_TRANSFORM)
        kw["scale"] = header.scale
        return n, CodecConfig(**kw), attr
    except (struct.error, ValueError) as exc:
        raise CorruptStream(f"invalid parameter block: {exc}") from None


# --- attribute domains ----------------------------------------------------------------

def _domain(kind, ycc):
    if kind == ATTR_REFLECTANCE:
        return np.array([0]), np.array([65535]), np.array([32768.0])
    if ycc:
        return np.array([0, -255, -255]), np.array([255, 255, 255]), np.array([128.0, 0.0, 0.0])
    return np.zeros(3, np.int64), np.full(3, 255), np.full(3, 128.0)


def _encode_unit(num_contexts, fn, capacity):
    while True:
        enc = ArithmeticEncoder(num_contexts, capacity=capacity)
        result = fn(enc)
        if not enc.overflowed:
            return enc.finish(), result
        capacity = 2 * enc.pos + 1024


def _code_attributes(vc: VoxelCloud, cfg: CodecConfig, attr: AttrBranch, decode_units=None):
    """Encode (``decode_units`` None) or decode the attribute units.

    Returns ``(units_or_None, {kind: reconstruction})`` with reconstructions
    in the output domain (RGB uint8 / reflectance uint16).
    """
    voxels = vc.voxels
    ycc = cfg.color_transform_enabled
    kinds = []
    if decode_units is None:
        if vc.colors is not None:
            kinds.append(ATTR_COLOR)
        if vc.reflectance is not None:
            kinds.append(ATTR_REFLECTANCE)
    else:
        kinds = [k for k, _ in decode_units]
    tcfg = replace(cfg.transform, qp=cfg.qp)
    pcfg = replace(cfg.predict, qp=cfg.qp)
    hier = plan = None
    if attr == AttrBranch.TRANSFORM:
        hier = transform.build_hierarchy(voxels, tcfg)
    else:
        plan = predict.plan_prediction(voxels, pcfg)
        pcfg = replace(pcfg, lod_shift_k=plan.lod_shift_k)
    units, recon = [], {}
    aux = None
    for kind in kinds:
        lo, hi, mids = _domain(kind, ycc)
        nch = len(lo)
        if decode_units is None:
            if kind == ATTR_COLOR:
                vals = color_forward(vc.colors) if ycc else vc.colors.astype(np.int64)
            else:
                vals = vc.reflectance.astype(np.int64)[:, None]
            if attr == AttrBranch.TRANSFORM:
                fn = lambda enc: transform.finalize(transform.encode_attributes(hier, vals, tcfg, enc), lo, hi)
            else:
                fn = lambda enc: predict.encode_attributes(voxels, vals, plan, pcfg, enc, lo, hi, mids, aux)
            payload, rec = _encode_unit(max(transform.NUM_CONTEXTS, predict.NUM_CONTEXTS), fn, len(voxels) * nch + 1024)
            units.append(bs.DataUnit(bs.UNIT_ATTRIBUTE, bytes([kind]) + payload))
        else:
            payload = dict(decode_units)[kind]
            dec = ArithmeticDecoder(payload, max(transform.NUM_CONTEXTS, predict.NUM_CONTEXTS))
            if attr == AttrBranch.TRANSFORM:
                rec = transform.finalize(transform.decode_attributes(hier, nch, tcfg, dec), lo, hi)
            else:
                rec = predict.decode_attributes(voxels, nch, plan, pcfg, dec, lo, hi, mids, aux)
        if kind == ATTR_COLOR:
            aux = rec
            rgb = color_inverse(rec) if ycc else rec
            recon[kind] = np.clip(rgb, 0, 255).astype(np.uint8)
        else:
            recon[kind] = rec[:, 0].astype(np.uint16)
    return (units if decode_units is None else None), recon, (plan.lod_shift_k if plan else 0)


@dataclass
class EncodeResult:
    data: bytes
    stats: EncodeStats
    reconstruction: VoxelCloud


def encode(cloud: Union[RawPointCloud, VoxelCloud], cfg: CodecConfig = CodecConfig()) -> EncodeResult:
    """Compress a cloud.  Raw clouds are voxelized with ``cfg.scale`` first."""
    input_points = len(cloud)
    vc = voxelize(cloud, cfg.scale) if isinstance(cloud, RawPointCloud) else cloud
    if len(vc) == 0:
        raise EmptyInput("cannot encode an empty cloud")
    if len(vc) > MAX_POINTS:
        raise RangeError(f"more than {MAX_POINTS} voxels")
    vc = vc.morton_sorted()
    attr = cfg.attr_branch if vc.has_attributes else AttrBranch.NONE

    if cfg.geom_branch == GeomBranch.OCTREE:
        num_ctx = octree.NUM_CONTEXTS
        gfn = lambda enc: octree.encode_octree(vc.voxels, vc.bit_depths, cfg.octree, enc)
    else:
        num_ctx = predtree.NUM_CONTEXTS
        gfn = lambda enc: predtree.encode_predtree(vc.voxels, vc.bit_depths, cfg.predtree, enc)
    geom_payload, _ = _encode_unit(num_ctx, gfn, 4 * len(vc) + 1024)
    units = [bs.DataUnit(bs.UNIT_GEOMETRY, geom_payload)]

    recon = {}
    lod_k = 0
    if attr != AttrBranch.NONE:
        attr_units, recon, lod_k = _code_attributes(vc, cfg, attr)
        units += attr_units

    flags = (int(cfg.color_transform_enabled) * bs.FLAG_COLOR_TRANSFORM
             | (bs.FLAG_ATTR_PRESENT if attr != AttrBranch.NONE else 0)
             | (attr.value << bs.ATTR_BRANCH_SHIFT)
             | (bs.FLAG_GEOM_PREDTREE if cfg.geom_branch == GeomBranch.PREDTREE else 0)
             | (bs.FLAG_HAS_COLOR if ATTR_COLOR in recon else 0)
             | (bs.FLAG_HAS_REFLECTANCE if ATTR_REFLECTANCE in recon else 0))
    header = bs.SequenceHeader(vc.origin, vc.scale, vc.bit_depths, flags, _pack_params(len(vc), cfg, attr, lod_k))
    data = bs.write_stream(header, units)
    header_bytes = len(data) - sum(len(u.payload) for u in units)
    stats = EncodeStats(
        input_points,
        len(vc),
        header_bytes,
        len(geom_payload),
        {("color" if u.payload[0] == ATTR_COLOR else "reflectance"): len(u.payload) for u in units[1:]},
    )
    rec = VoxelCloud(vc.voxels, recon.get(ATTR_COLOR), recon.get(ATTR_REFLECTANCE), vc.origin, vc.scale, vc.bit_depths)
    return EncodeResult(data, stats, rec)


def decode(data: bytes) -> VoxelCloud:
    """Decode a stream into a Morton-ordered :class:`VoxelCloud`."""
    header, units = bs.read_stream(data)
    depths = header.bit_depths
    if max(depths) > MAX_DEPTH:
        raise CorruptStream("bit depth exceeds the coordinate range")
    if not (math.isfinite(header.scale) and header.scale > 0 and all(math.isfinite(o) for o in header.origin)):
        raise CorruptStream("invalid origin or scale")
    n, cfg, attr = _unpack_params(header)
    if not 1 <= n <= MAX_POINTS or n > 1 << sum(depths):
        raise CorruptStream(f"implausible point count {n}")

    if cfg.geom_branch == GeomBranch.OCTREE:
        dec = ArithmeticDecoder(units[0].payload, octree.NUM_CONTEXTS)
        voxels = octree.decode_octree(dec, depths, n, cfg.octree)
    else:
        dec = ArithmeticDecoder(units[0].payload, predtree.NUM_CONTEXTS)
        voxels = predtree.decode_predtree(dec, depths, n)

    expected = []
    if header.flags & bs.FLAG_HAS_COLOR:
        expected.append(ATTR_COLOR)
    if header.flags & bs.FLAG_HAS_REFLECTANCE:
        expected.append(ATTR_REFLECTANCE)
    attr_units = units[1:]
    present = bool(header.flags & bs.FLAG_ATTR_PRESENT)
    if (attr == AttrBranch.NONE) == present or bool(expected) != present:
        raise CorruptStream("attribute flags are inconsistent")
    if [u.payload[:1] for u in attr_units] != [bytes([k]) for k in expected]:
        raise CorruptStream("attribute units do not match the header")
    recon = {}
    if present:
        vc = VoxelCloud(voxels, bit_depths=depths)
        _, recon, _ = _code_attributes(vc, cfg, attr, [(u.payload[0], u.payload[1:]) for u in attr_units])
    try:
        return VoxelCloud(voxels, recon.get(ATTR_COLOR), recon.get(ATTR_REFLECTANCE), header.origin,
                          header.scale, depths)
    except CodecError:
        raise
    except ValueError as exc:
        raise CorruptStream(str(exc)) from None
