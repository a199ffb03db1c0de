"""The full codec: PLY in, .apc stream out, back to PLY, with quality metrics."""
import tempfile
from pathlib import Path

from apcc import codec as C
from apcc.cli import main
from apcc.core import devoxelize
from apcc.metrics import compute_metrics
from apcc.ply import write_ply

from _shapes import sphere

raw = sphere(30_000, 100)

# %% every branch combination, lossless
for geom in C.GeomBranch:
    for attr in (C.AttrBranch.TRANSFORM, C.AttrBranch.PREDICT):
        res = C.encode(raw, C.CodecConfig(geom_branch=geom, attr_branch=attr))
        s = res.stats
        print(f"{geom.name:<8} {attr.name:<9} {s.bpp:6.2f} bpp (geometry {s.geometry_bits / s.input_points:.2f})")

# %% lossy: quantised geometry and attributes
res = C.encode(raw, C.CodecConfig(scale=0.5, qp=34))
out = devoxelize(C.decode(res.data))
m = compute_metrics(raw, out)
print(f"scale 0.5 qp 34: {res.stats.bpp:.2f} bpp, D1 {m.d1_psnr:.2f} dB, Y {m.y_psnr:.2f} dB")

# %% the command line does the same through files
with tempfile.TemporaryDirectory() as d:
    src = Path(d) / "sphere.ply"
    write_ply(src, raw)
    main(["encode", "--input", str(src), "--output", str(Path(d) / "s.apc"), "--qp", "28", "--planar"])
    main(["decode", "--input", str(Path(d) / "s.apc"), "--output", str(Path(d) / "s.ply")])
    main(["metrics", "--reference", str(src), "--distorted", str(Path(d) / "s.ply")])
    main(["bench", "--input", str(src), "--scales", "0.25,0.75", "--qps", "28,46", "--no-timing"])
