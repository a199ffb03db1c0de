"""The ``.apc`` container: a sequence header followed by data units.

Layout (all integers little-endian)::

    "APCC"  version:u8  origin:3*f64  scale:f64  bit_depths:3*u8  flags:u8
    param_len:u16  params[param_len]  header_crc32:u32
    then per unit:  type:u8  length:u32  payload[length]  crc32(type..payload):u32

The header CRC covers every header byte before it.
"""
import struct
import zlib
from dataclasses import dataclass, field

from .errors import CorruptStream, NotAPCCStream, VersionError

MAGIC = b"APCC"
VERSION = 1
UNIT_GEOMETRY = 1
UNIT_ATTRIBUTE = 2

FLAG_COLOR_TRANSFORM = 0x01
FLAG_ATTR_PRESENT = 0x02
ATTR_BRANCH_SHIFT = 2  # two bits: 0 none, 1 transform, 2 predict
FLAG_GEOM_PREDTREE = 0x10
FLAG_HAS_COLOR = 0x20
FLAG_HAS_REFLECTANCE = 0x40

_FIXED = struct.Struct("<4sB3ddBBBBH")


@dataclass
class SequenceHeader:
    origin: tuple = (0.0, 0.0, 0.0)
    scale: float = 1.0
    bit_depths: tuple = (0, 0, 0)
    flags: int = 0
    params: bytes = b""
    version: int = VERSION

    @property
    def attr_branch(self):
        return (self.flags >> ATTR_BRANCH_SHIFT) & 3


@dataclass
class DataUnit:
    unit_type: int
    payload: bytes = field(repr=False)


def _unit_bytes(u: DataUnit):
    head = struct.pack("<BI", u.unit_type, len(u.payload))
    return head + u.payload + struct.pack("<I", zlib.crc32(head + u.payload))


def write_stream(header: SequenceHeader, units) -> bytes:
    if len(header.params) > 0xFFFF:
        raise ValueError("parameter block too long")
    if any(not 0 <= d <= 255 for d in header.bit_depths):
        raise ValueError("bit depth out of byte range")
    head = _FIXED.pack(MAGIC, header.version, *header.origin, header.scale, *header.bit_depths,
                       header.flags, len(header.params)) + header.params
    out = [head, struct.pack("<I", zlib.crc32(head))]
    seen_attr = False
    for u in units:
        if u.unit_type == UNIT_GEOMETRY and seen_attr:
            raise ValueError("geometry unit must precede attribute units")
        seen_attr |= u.unit_type == UNIT_ATTRIBUTE
        out.append(_unit_bytes(u))
    return b"".join(out)


def read_stream(data: bytes):
    """Parse and validate a container; returns ``(header, units)``."""
    data = bytes(data)
    if len(data) < 4 or data[:4] != MAGIC:
        raise NotAPCCStream("missing APCC magic")
    if len(data) < 5:
        raise CorruptStream("stream ends inside the header")
    if data[4] != VERSION:
        raise VersionError(f"unsupported stream version {data[4]}")
    if len(data) < _FIXED.size:
        raise CorruptStream("stream ends inside the header")
    magic, version, ox, oy, oz, scale, dx, dy, dz, flags, plen = _FIXED.unpack_from(data)
    end = _FIXED.size + plen
    if len(data) < end + 4:
        raise CorruptStream("stream ends inside the header parameters")
    (crc,) = struct.unpack_from("<I", data, end)
    if crc != zlib.crc32(data[:end]):
        raise CorruptStream("header checksum mismatch")
    header = SequenceHeader((ox, oy, oz), scale, (dx, dy, dz), flags, data[_FIXED.size:end], version)
    pos = end + 4
    units = []
    while pos < len(data):
        if len(data) - pos < 5:
            raise CorruptStream("stream ends inside a unit header")
        utype, length = struct.unpack_from("<BI", data, pos)
        if utype not in (UNIT_GEOMETRY, UNIT_ATTRIBUTE):
            raise CorruptStream(f"unknown unit type {utype}")
        stop = pos + 5 + length
        if stop + 4 > len(data):
            raise CorruptStream("unit length runs past the end of the stream")
        (ucrc,) = struct.unpack_from("<I", data, stop)
        if ucrc != zlib.crc32(data[pos:stop]):
            raise CorruptStream("unit checksum mismatch")
        if utype == UNIT_GEOMETRY and units:
            raise CorruptStream("geometry unit is not first")
        units.append(DataUnit(utype, data[pos + 5:stop]))
        pos = stop + 4
    if not units or units[0].unit_type != UNIT_GEOMETRY:
        raise CorruptStream("stream has no geometry unit")
    return header, units
