"""Minimal reader for the TIFF/EXIF Software tag (0x0131) in IFD0.

Handles JPEG files (APP1 "Exif" segment) and bare TIFF files. Every read is
bounds-checked against the enclosing segment, so malformed or truncated
input raises :class:`~prnu_nua.errors.ExifParseError` instead of reading
past the data.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Union

from .errors import ExifParseError

SOFTWARE_TAG = 0x0131
ASCII = 2
EXIF_HEADER = b"Exif\x00\x00"

# markers without a length field
_STANDALONE = {0x01} | set(range(0xD0, 0xD8))


@dataclass(frozen=True)
class SoftwareTag:
    raw: str
    adobe_detected: bool
    nul_terminated: bool = True

    @classmethod
    def from_raw(cls, raw: str, nul_terminated: bool = True) -> "SoftwareTag":
        return cls(raw, "adobe" in raw.lower(), nul_terminated)

    def to_dict(self) -> dict:
        return {"raw": self.raw, "adobe_detected": self.adobe_detected, "nul_terminated": self.nul_terminated}


def _unpack(fmt: str, buf: bytes, off: int, end: int):
    size = struct.calcsize(fmt)
    if off < 0 or off + size > end:
        raise ExifParseError(f"need {size} bytes, only {max(end - off, 0)} left", off)
    return struct.unpack_from(fmt, buf, off)


def _software_from_tiff(buf: bytes, base: int, end: int) -> Optional[SoftwareTag]:
    """Parse a TIFF structure occupying ``buf[base:end]``; offsets are relative to ``base``."""
    order = buf[base:base + 2]
    if order == b"II":
        bo = "<"
    elif order == b"MM":
        bo = ">"
    else:
        raise ExifParseError(f"invalid byte order mark {order!r}", base)
    (magic,) = _unpack(bo + "H", buf, base + 2, end)
    if magic != 42:
        raise ExifParseError(f"bad TIFF magic {magic}", base + 2)
    (ifd,) = _unpack(bo + "I", buf, base + 4, end)
    pos = base + ifd
    if ifd < 8 or pos >= end:
        raise ExifParseError(f"IFD0 offset {ifd} out of bounds", base + 4)
    (count,) = _unpack(bo + "H", buf, pos, end)
    if pos + 2 + 12 * count > end:
        raise ExifParseError(f"IFD0 with {count} entries exceeds the data", pos)
    for k in range(count):
        entry = pos + 2 + 12 * k
        tag, typ, n = _unpack(bo + "HHI", buf, entry, end)
        if tag != SOFTWARE_TAG:
            continue
        if typ != ASCII:
            raise ExifParseError(f"Software tag has type {typ}, expected ASCII", entry)
        if n <= 4:
            start = entry + 8
        else:
            (voff,) = _unpack(bo + "I", buf, entry + 8, end)
            start = base + voff
        if n == 0 or start + n > end:
            raise ExifParseError(f"Software value of {n} bytes out of bounds", entry + 8)
        value = buf[start:start + n]
        nul = value.find(b"\x00")
        text = value if nul < 0 else value[:nul]
        return SoftwareTag.from_raw(text.decode("utf-8", errors="replace"), nul_terminated=nul >= 0)
    return None


def _software_from_jpeg(buf: bytes) -> Optional[SoftwareTag]:
    pos, end = 2, len(buf)
    while True:
        if pos + 2 > end:
            raise ExifParseError("unexpected end of data before scan", pos)
        if buf[pos] != 0xFF:
            raise ExifParseError(f"expected marker, found 0x{buf[pos]:02X}", pos)
        marker = buf[pos + 1]
        if marker == 0xFF:
            pos += 1  # fill byte
            continue
        if marker in _STANDALONE:
            pos += 2
            continue
        if marker in (0xD9, 0xDA):
            return None
        (length,) = _unpack(">H", buf, pos + 2, end)
        seg_end = pos + 2 + length
        if length < 2 or seg_end > end:
            raise ExifParseError(f"segment 0x{marker:02X} of length {length} is truncated", pos)
        payload = pos + 4
        if marker == 0xE1 and buf[payload:payload + len(EXIF_HEADER)] == EXIF_HEADER:
            tag = _software_from_tiff(buf, payload + len(EXIF_HEADER), seg_end)
            if tag is not None:
                return tag
        pos = seg_end


def read_software_tag(data: bytes) -> Optional[SoftwareTag]:
    """Return the IFD0 Software tag of a JPEG or TIFF file, or None when it is absent."""
    data = bytes(data)
    if not data:
        raise ExifParseError("empty input", 0)
    if data[:2] == b"\xff\xd8":
        return _software_from_jpeg(data)
    if data[:2] in (b"II", b"MM"):
        return _software_from_tiff(data, 0, len(data))
    raise ExifParseError("neither a JPEG nor a TIFF file", 0)


def read_software_tag_file(path: Union[str, Path]) -> Optional[SoftwareTag]:
    return read_software_tag(Path(path).read_bytes())
