"""Minimal PLY reader/writer (ASCII and binary little-endian vertex data)."""
import numpy as np

from .core import RawPointCloud
from .errors import ParseError, TruncatedInput

_TYPES = {
    "char": "i1", "int8": "i1",
    "uchar": "u1", "uint8": "u1",
    "short": "i2", "int16": "i2",
    "ushort": "u2", "uint16": "u2",
    "int": "i4", "int32": "i4",
    "uint": "u4", "uint32": "u4",
    "float": "f4", "float32": "f4",
    "double": "f8", "float64": "f8",
}
_REFLECTANCE_NAMES = ("reflectance", "intensity")


def _parse_header(data):
    end = data.find(b"end_header")
    if end < 0:
        raise ParseError("missing end_header")
    nl = data.find(b"\n", end)
    if nl < 0:
        raise ParseError("missing newline after end_header")
    lines = data[:end].decode("ascii", errors="replace").splitlines()
    if not lines or lines[0].strip() != "ply":
        raise ParseError("missing 'ply' magic", 1)
    fmt = None
    elements = []  # (name, count, [(name, dtype) | (name, None) for lists])
    for lineno, raw in enumerate(lines[1:], start=2):
        tok = raw.split()
        if not tok or tok[0] in ("comment", "obj_info"):
            continue
        if tok[0] == "format":
            if len(tok) != 3 or tok[1] not in ("ascii", "binary_little_endian"):
                raise ParseError(f"unsupported format {' '.join(tok[1:])!r}", lineno)
            fmt = tok[1]
        elif tok[0] == "element":
            if len(tok) != 3 or not tok[2].isdigit():
                raise ParseError("malformed element line", lineno)
            elements.append((tok[1], int(tok[2]), []))
        elif tok[0] == "property":
            if not elements:
                raise ParseError("property before any element", lineno)
            if len(tok) == 5 and tok[1] == "list":
                if tok[2] not in _TYPES or tok[3] not in _TYPES:
                    raise ParseError("unknown list property type", lineno)
                elements[-1][2].append((tok[4], None))
            elif len(tok) == 3 and tok[1] in _TYPES:
                elements[-1][2].append((tok[2], _TYPES[tok[1]]))
            else:
                raise ParseError(f"malformed property line {raw.strip()!r}", lineno)
        else:
            raise ParseError(f"unexpected header keyword {tok[0]!r}", lineno)
    if fmt is None:
        raise ParseError("missing format line")
    return fmt, elements, data[nl + 1:]


def load_ply(data: bytes) -> RawPointCloud:
    """Parse PLY bytes into a :class:`RawPointCloud`.

    Vertex properties other than x/y/z, red/green/blue and
    reflectance/intensity are ignored, as are elements after ``vertex``.
    """
    fmt, elements, body = _parse_header(bytes(data))
    names = [e[0] for e in elements]
    if "vertex" not in names:
        raise ParseError("no vertex element")
    vi = names.index("vertex")
    _, count, props = elements[vi]
    if any(dt is None for _, dt in props):
        raise ParseError("list properties on vertex are not supported")
    pnames = [p for p, _ in props]
    for axis in "xyz":
        if axis not in pnames:
            raise ParseError(f"vertex element lacks property {axis!r}")

    if fmt == "ascii":
        rows = body.decode("ascii", errors="replace").splitlines()
        skip = sum(e[1] for e in elements[:vi])
        rows = [r for r in rows[skip:] if r.strip()][:count]
        if len(rows) < count:
            raise TruncatedInput(f"header declares {count} vertices, found {len(rows)}")
        table = np.zeros(count, dtype=[(p, dt) for p, dt in props])
        for i, r in enumerate(rows):
            tok = r.split()
            if len(tok) < len(props):
                raise TruncatedInput(f"vertex row {i} has {len(tok)} values, expected {len(props)}")
            try:
                table[i] = tuple(float(t) if np.dtype(dt).kind == "f" else int(t) for t, (_, dt) in zip(tok, props))
            except ValueError as exc:
                raise ParseError(f"bad vertex value in row {i}: {exc}") from None
    else:
        offset = 0
        for name, n, eprops in elements[:vi]:
            if any(dt is None for _, dt in eprops):
                raise ParseError(f"cannot skip list element {name!r} before vertex data")
            offset += n * np.dtype([(p, "<" + dt) for p, dt in eprops]).itemsize
        dtype = np.dtype([(p, "<" + dt) for p, dt in props])
        need = offset + count * dtype.itemsize
        if len(body) < need:
            raise TruncatedInput(f"binary body holds {max(0, len(body) - offset) // dtype.itemsize} of {count} vertices")
        table = np.frombuffer(body, dtype=dtype, count=count, offset=offset)

    points = np.stack([table["x"], table["y"], table["z"]], axis=1).astype(np.float64)
    colors = None
    if all(c in pnames for c in ("red", "green", "blue")):
        colors = np.stack([table["red"], table["green"], table["blue"]], axis=1).astype(np.uint8)
    refl = None
    for rn in _REFLECTANCE_NAMES:
        if rn in pnames:
            refl = np.asarray(table[rn]).astype(np.uint16)
            break
    return RawPointCloud(points, colors, refl)


def save_ply(cloud: RawPointCloud, binary: bool = True, coord_type: str = "double") -> bytes:
    """Serialise a cloud; channel order is red, green, blue[, reflectance]."""
    fields = [("x", _TYPES[coord_type]), ("y", _TYPES[coord_type]), ("z", _TYPES[coord_type])]
    ply_names = {"x": coord_type, "y": coord_type, "z": coord_type}
    if cloud.colors is not None:
        for c in ("red", "green", "blue"):
            fields.append((c, "u1"))
            ply_names[c] = "uchar"
    if cloud.reflectance is not None:
        fields.append(("reflectance", "u2"))
        ply_names["reflectance"] = "ushort"
    n = len(cloud)
    table = np.zeros(n, dtype=[(f, "<" + dt) for f, dt in fields])
    for i, axis in enumerate("xyz"):
        table[axis] = cloud.points[:, i]
    if cloud.colors is not None:
        for i, c in enumerate(("red", "green", "blue")):
            table[c] = cloud.colors[:, i]
    if cloud.reflectance is not None:
        table["reflectance"] = cloud.reflectance

    header = ["ply", "format binary_little_endian 1.0" if binary else "format ascii 1.0", f"element vertex {n}"]
    header += [f"property {ply_names[f]} {f}" for f, _ in fields]
    header.append("end_header")
    head = ("\n".join(header) + "\n").encode("ascii")
    if binary:
        return head + table.tobytes()
    lines = []
    for row in table:
        lines.append(" ".join(repr(float(v)) if isinstance(v, np.floating) else str(int(v)) for v in row))
    return head + ("\n".join(lines) + ("\n" if lines else "")).encode("ascii")


def read_ply(path) -> RawPointCloud:
    with open(path, "rb") as fh:
        return load_ply(fh.read())


def write_ply(path, cloud: RawPointCloud, binary: bool = True):
    with open(path, "wb") as fh:
        fh.write(save_ply(cloud, binary=binary))
