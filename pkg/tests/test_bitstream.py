import struct
import zlib

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from apcc import bitstream as bs
from apcc.errors import CodecError, CorruptStream, NotAPCCStream, VersionError


def sample():
    h = bs.SequenceHeader((1.5, -2.0, 1e6), 0.25, (10, 9, 3), 0x2B, b"\x01\x02params")
    units = [bs.DataUnit(bs.UNIT_GEOMETRY, b"geometry" * 5), bs.DataUnit(bs.UNIT_ATTRIBUTE, b"\x01colour")]
    return h, units


def test_roundtrip_fields():
    h, units = sample()
    h2, u2 = bs.read_stream(bs.write_stream(h, units))
    assert h2 == h and u2 == units
    assert h2.attr_branch == 2


def test_header_only_stream_is_rejected():
    h, _ = sample()
    with pytest.raises(CorruptStream):
        bs.read_stream(bs.write_stream(h, []))


def test_every_truncation_raises_typed_error():
    h, units = sample()
    data = bs.write_stream(h, units)
    boundary = len(bs.write_stream(h, units[:1]))
    for cut in range(len(data)):
        if cut == boundary:
            # a whole-unit cut is well formed here; the codec rejects it via the header flags
            assert len(bs.read_stream(data[:cut])[1]) == 1
            continue
        with pytest.raises((CorruptStream, NotAPCCStream)):
            bs.read_stream(data[:cut])


def test_magic_and_version():
    h, units = sample()
    data = bytearray(bs.write_stream(h, units))
    with pytest.raises(NotAPCCStream):
        bs.read_stream(b"PLY\n" + bytes(data[4:]))
    data[4] = 9
    with pytest.raises(VersionError):
        bs.read_stream(bytes(data))


def test_unit_order_enforced():
    h, units = sample()
    with pytest.raises(ValueError):
        bs.write_stream(h, units[::-1])
    # hand-build a stream with attribute first and a valid CRC everywhere
    data = bs.write_stream(h, [units[1]])
    with pytest.raises(CorruptStream):
        bs.read_stream(data)


def test_unknown_unit_type():
    h, units = sample()
    body = struct.pack("<BI", 7, 1) + b"x"
    data = bs.write_stream(h, units) + body + struct.pack("<I", zlib.crc32(body))
    with pytest.raises(CorruptStream, match="unknown unit"):
        bs.read_stream(data)


@settings(max_examples=200, deadline=None)
@given(st.integers(0, 10_000), st.integers(1, 255))
def test_single_byte_flips_are_detected(pos, xor):
    h, units = sample()
    data = bytearray(bs.write_stream(h, units))
    pos %= len(data)
    data[pos] ^= xor
    with pytest.raises(CodecError):
        bs.read_stream(bytes(data))


def test_writer_validates_header():
    with pytest.raises(ValueError):
        bs.write_stream(bs.SequenceHeader(bit_depths=(300, 0, 0)), [])
    with pytest.raises(ValueError):
        bs.write_stream(bs.SequenceHeader(params=b"x" * 70000), [])
