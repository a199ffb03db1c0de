"""Command line front end: ``apcc encode|decode|metrics|bench``."""
import argparse
import csv
import io
import os
import sys
import tempfile
import time
from dataclasses import replace

import numpy as np

from . import codec
from .codec import AttrBranch, CodecConfig, GeomBranch
from .core import devoxelize, voxelize
from .curves import CurveOrder
from .errors import CodecError
from .metrics import compute_metrics, format_db
from .octree import ContextSet, OctreeConfig
from .ply import read_ply, save_ply

SCALE_LADDER = (0.125, 0.25, 0.75, 0.875, 0.9375)
QP_LADDER = (22, 28, 34, 40, 46, 51)
BENCH_COLUMNS = ("file", "geom_branch", "attr_branch", "scale", "qp", "points", "geom_bpp",
                 "attr_bpp", "d1_psnr", "y_psnr", "enc_ms", "dec_ms")


def _atomic_write(path, data: bytes):
    """Write through a temporary file in the same directory, then rename."""
    d = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".apcc-", suffix=".part")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def config_from_args(args) -> CodecConfig:
    oc = OctreeConfig(
        k_layers=args.k_layers,
        m_layers=args.m_layers,
        isolated_mode=args.isolated,
        context_set=ContextSet[args.context.upper()],
        planar_mode=args.planar,
    )
    cfg = CodecConfig(
        geom_branch=GeomBranch[args.geom.upper()],
        attr_branch=AttrBranch[args.attr.upper()],
        scale=args.scale,
        qp=args.qp,
        octree=oc,
        color_transform_enabled=not args.no_color_transform,
    )
    return replace(
        cfg,
        transform=replace(cfg.transform, hilbert_theta=args.theta),
        predict=replace(cfg.predict, order=CurveOrder[args.order.upper()], hilbert_theta=args.theta,
                        lod_levels_n=args.lod_levels),
    )


def cmd_encode(args):
    cloud = read_ply(args.input)
    t0 = time.perf_counter()
    res = codec.encode(cloud, config_from_args(args))
    ms = (time.perf_counter() - t0) * 1e3
    _atomic_write(args.output, res.data)
    s = res.stats
    print(f"points={s.input_points} voxels={s.points} geom_bits={s.geometry_bits} "
          f"attr_bits={s.attribute_bits} bpp={s.bpp:.4f} time_ms={ms:.1f}")
    return 0


def cmd_decode(args):
    with open(args.input, "rb") as fh:
        data = fh.read()
    vc = codec.decode(data)
    _atomic_write(args.output, save_ply(devoxelize(vc), binary=not args.ascii))
    print(f"points={len(vc)}")
    return 0


def cmd_metrics(args):
    ref, dist = read_ply(args.reference), read_ply(args.distorted)
    m = compute_metrics(ref, dist)
    parts = [f"d1_mse={m.d1_mse:.6g}", f"d1_psnr={format_db(m.d1_psnr)}", f"hausdorff={m.hausdorff:.6g}"]
    parts += [f"{k}_psnr={format_db(v)}" for k, v in m.attr_psnr.items()]
    print(" ".join(parts))
    return 0


def bench_rows(cloud, name, scales=SCALE_LADDER, qps=QP_LADDER, timing=True, base: CodecConfig = None):
    """Yield one verified CSV row per (scale, qp, geometry branch, attribute branch)."""
    base = base or CodecConfig()
    n_in = len(cloud)
    for scale in scales:
        vc = voxelize(cloud, scale).morton_sorted()
        for qp in qps:
            for geom in GeomBranch:
                for attr in (AttrBranch.TRANSFORM, AttrBranch.PREDICT):
                    cfg = replace(base, geom_branch=geom, attr_branch=attr, scale=scale, qp=qp)
                    t0 = time.perf_counter()
                    res = codec.encode(vc, cfg)
                    t1 = time.perf_counter()
                    out = codec.decode(res.data)
                    t2 = time.perf_counter()
                    if not np.array_equal(out.voxels, vc.voxels):
                        raise CodecError(f"geometry mismatch at scale={scale} qp={qp} {geom.name}/{attr.name}")
                    rec = res.reconstruction
                    for a, b in ((out.colors, rec.colors), (out.reflectance, rec.reflectance)):
                        if (a is None) != (b is None) or (a is not None and not np.array_equal(a, b)):
                            raise CodecError("decoder attributes differ from the encoder reconstruction")
                    m = compute_metrics(cloud, devoxelize(out))
                    s = res.stats
                    yield {
                        "file": name,
                        "geom_branch": geom.name.lower(),
                        "attr_branch": attr.name.lower(),
                        "scale": f"{scale:g}",
                        "qp": qp,
                        "points": len(vc),
                        "geom_bpp": f"{s.geometry_bits / n_in:.6f}",
                        "attr_bpp": f"{s.attribute_bits / n_in:.6f}",
                        "d1_psnr": format_db(m.d1_psnr),
                        "y_psnr": format_db(m.y_psnr),
                        "enc_ms": f"{(t1 - t0) * 1e3:.1f}" if timing else "0",
                        "dec_ms": f"{(t2 - t1) * 1e3:.1f}" if timing else "0",
                    }


def cmd_bench(args):
    cloud = read_ply(args.input)
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=BENCH_COLUMNS, lineterminator="\n")
    w.writeheader()
    for row in bench_rows(cloud, os.path.basename(args.input), args.scales, args.qps, not args.no_timing):
        w.writerow(row)
    text = buf.getvalue()
    if args.csv:
        _atomic_write(args.csv, text.encode())
    else:
        sys.stdout.write(text)
    return 0


def _float_list(s):
    return tuple(float(x) for x in s.split(",") if x)


def _int_list(s):
    return tuple(int(x) for x in s.split(",") if x)


def build_parser():
    p = argparse.ArgumentParser(prog="apcc", description="Point cloud codec")
    sub = p.add_subparsers(dest="command", required=True)

    e = sub.add_parser("encode", help="compress a PLY file")
    e.add_argument("--input", required=True)
    e.add_argument("--output", required=True)
    e.add_argument("--geom", choices=("octree", "predtree"), default="octree")
    e.add_argument("--attr", choices=("transform", "predict", "none"), default="transform")
    e.add_argument("--scale", type=float, default=1.0)
    e.add_argument("--qp", type=int, default=0)
    e.add_argument("--planar", action="store_true")
    e.add_argument("--isolated", action="store_true")
    e.add_argument("--order", choices=("morton", "hilbert"), default="morton")
    e.add_argument("--theta", type=float, default=1.0)
    e.add_argument("--k-layers", type=int, default=0)
    e.add_argument("--m-layers", type=int, default=0)
    e.add_argument("--context", choices=("sparse", "dense", "flat"), default="sparse")
    e.add_argument("--lod-levels", type=int, default=1)
    e.add_argument("--no-color-transform", action="store_true")
    e.set_defaults(func=cmd_encode)

    d = sub.add_parser("decode", help="decompress to PLY")
    d.add_argument("--input", required=True)
    d.add_argument("--output", required=True)
    d.add_argument("--ascii", action="store_true")
    d.set_defaults(func=cmd_decode)

    m = sub.add_parser("metrics", help="compare two PLY files")
    m.add_argument("--reference", required=True)
    m.add_argument("--distorted", required=True)
    m.set_defaults(func=cmd_metrics)

    b = sub.add_parser("bench", help="run the scale and qp ladders")
    b.add_argument("--input", required=True)
    b.add_argument("--csv")
    b.add_argument("--scales", type=_float_list, default=SCALE_LADDER)
    b.add_argument("--qps", type=_int_list, default=QP_LADDER)
    b.add_argument("--no-timing", action="store_true")
    b.set_defaults(func=cmd_bench)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (CodecError, OSError, ValueError) as exc:
        print(f"apcc: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
