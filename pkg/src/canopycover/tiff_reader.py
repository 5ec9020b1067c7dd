"""Streaming TIFF / BigTIFF reader.

Only directory tables are parsed up front. Pixel data is pulled one segment
(strip or tile) at a time, so a window can be decoded out of a page far larger
than memory. Pages ("bands") are the IFDs of the container, 0-based.
"""

import math
import os
import struct
import zlib
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import lzw
from .errors import (
    BadMagic,
    BandOutOfRange,
    CorruptSegment,
    CyclicDirectoryChain,
    MissingTag,
    PageOutOfRange,
    SegmentOutOfFile,
    TruncatedHeader,
    UnsupportedCompression,
    UnsupportedPlanarConfig,
    UnsupportedSampleFormat,
    WindowOutOfBounds,
)

DEFAULT_BAND = 2

# tag ids
IMAGE_WIDTH = 256
IMAGE_LENGTH = 257
BITS_PER_SAMPLE = 258
COMPRESSION = 259
STRIP_OFFSETS = 273
SAMPLES_PER_PIXEL = 277
ROWS_PER_STRIP = 278
STRIP_BYTE_COUNTS = 279
PLANAR_CONFIG = 284
PREDICTOR = 317
TILE_WIDTH = 322
TILE_LENGTH = 323
TILE_OFFSETS = 324
TILE_BYTE_COUNTS = 325
SAMPLE_FORMAT = 339
MODEL_PIXEL_SCALE = 33550

COMPRESSIONS = {1: "none", 5: "lzw", 8: "deflate", 32946: "deflate"}

# type id -> (struct code, size)
_TYPES = {
    1: ("B", 1), 2: ("s", 1), 3: ("H", 2), 4: ("I", 4), 5: ("II", 8),
    6: ("b", 1), 7: ("B", 1), 8: ("h", 2), 9: ("i", 4), 10: ("ii", 8),
    11: ("f", 4), 12: ("d", 8), 13: ("I", 4), 16: ("Q", 8), 17: ("q", 8),
    18: ("Q", 8),
}
_NUMPY_TYPES = {1: "u1", 3: "u2", 4: "u4", 13: "u4", 16: "u8", 18: "u8", 12: "f8", 11: "f4"}


@dataclass(frozen=True)
class ContainerInfo:
    path: str
    byte_order: str  # "little" | "big"
    variant: str  # "classic" | "bigtiff"
    page_count: int
    ifd_offsets: tuple = field(repr=False, default=())

    @property
    def magic(self):
        return 42 if self.variant == "classic" else 43


@dataclass(frozen=True)
class PixelScale:
    sx: float
    sy: float

    def __post_init__(self):
        if not (self.sx > 0 and self.sy > 0):
            raise ValueError(f"pixel scale must be positive, got ({self.sx}, {self.sy})")


@dataclass(frozen=True, eq=False)
class PageDescriptor:
    path: str
    byte_order: str
    index: int
    width: int
    height: int
    samples_per_pixel: int
    bits_per_sample: int
    compression: str
    layout: str  # "strips" | "tiles"
    rows_per_strip: Optional[int]
    tile_width: Optional[int]
    tile_height: Optional[int]
    segment_offsets: np.ndarray = field(repr=False)
    segment_byte_counts: np.ndarray = field(repr=False)
    geo_scale: Optional[PixelScale] = None

    @property
    def segment_count(self):
        return len(self.segment_offsets)

    @property
    def pixel_count(self):
        return self.width * self.height

    def segment_grid(self):
        """(segments across, segments down, segment width, segment height)."""
        if self.layout == "tiles":
            return (
                math.ceil(self.width / self.tile_width),
                math.ceil(self.height / self.tile_height),
                self.tile_width,
                self.tile_height,
            )
        return 1, math.ceil(self.height / self.rows_per_strip), self.width, self.rows_per_strip

    def segments_overlapping(self, x0, y0, width, height):
        """Segment indices touching the window, in storage order."""
        across, _, seg_w, seg_h = self.segment_grid()
        cols = range(x0 // seg_w, (x0 + width - 1) // seg_w + 1)
        rows = range(y0 // seg_h, (y0 + height - 1) // seg_h + 1)
        return [r * across + c for r in rows for c in cols]


@dataclass(frozen=True)
class RasterWindow:
    x0: int
    y0: int
    width: int
    height: int
    pixels: np.ndarray  # (height, width, 3) uint8, C-contiguous


class _Unpacker:
    def __init__(self, fh, byte_order, variant, file_size):
        self.fh = fh
        self.endian = "<" if byte_order == "little" else ">"
        self.big = variant == "bigtiff"
        self.file_size = file_size

    def read(self, offset, size):
        if offset < 0 or offset + size > self.file_size:
            raise TruncatedHeader(f"directory data at {offset}+{size} runs past end of file")
        data = os.pread(self.fh.fileno(), size, offset)
        if len(data) != size:
            raise TruncatedHeader(f"short read at offset {offset}")
        return data

    def ifd_entries(self, offset):
        """Return ({tag: (type, count, raw value field, field offset)}, next offset)."""
        if self.big:
            (n,) = struct.unpack(self.endian + "Q", self.read(offset, 8))
            entry_size, head, value_size = 20, 8, 8
            entry_fmt = self.endian + "HHQ"
        else:
            (n,) = struct.unpack(self.endian + "H", self.read(offset, 2))
            entry_size, head, value_size = 12, 2, 4
            entry_fmt = self.endian + "HHI"
        if n == 0 or n > 1 << 20:
            raise TruncatedHeader(f"implausible directory entry count {n} at {offset}")
        table = self.read(offset + head, n * entry_size + value_size)
        entries = {}
        for i in range(n):
            base = i * entry_size
            tag, typ, count = struct.unpack_from(entry_fmt, table, base)
            value_field = table[base + entry_size - value_size:base + entry_size]
            entries[tag] = (typ, count, value_field)
        next_raw = table[n * entry_size:]
        (next_offset,) = struct.unpack(self.endian + ("Q" if self.big else "I"), next_raw)
        return entries, next_offset

    def values(self, entry):
        """Decode an entry's values as a numpy array (or bytes for ASCII)."""
        typ, count, value_field = entry
        if typ not in _TYPES:
            raise TruncatedHeader(f"unknown field type {typ}")
        code, size = _TYPES[typ]
        nbytes = size * count
        if nbytes <= len(value_field):
            raw = value_field[:nbytes]
        else:
            (ptr,) = struct.unpack(self.endian + ("Q" if self.big else "I"), value_field)
            raw = self.read(ptr, nbytes)
        if typ == 2:
            return raw
        if typ in (5, 10):
            dt = np.dtype(self.endian + ("u4" if typ == 5 else "i4"))
            pairs = np.frombuffer(raw, dtype=dt).reshape(-1, 2)
            return pairs[:, 0] / pairs[:, 1]
        if typ in _NUMPY_TYPES:
            dt = np.dtype(self.endian + _NUMPY_TYPES[typ])
        else:
            dt = np.dtype(self.endian + {"b": "i1", "h": "i2", "i": "i4", "q": "i8"}[code])
        return np.frombuffer(raw, dtype=dt)


def _read_header(fh, file_size):
    head = os.pread(fh.fileno(), 16, 0)
    if len(head) < 8:
        raise TruncatedHeader(f"file is {len(head)} bytes, shorter than a TIFF header")
    if head[:2] == b"II":
        byte_order, endian = "little", "<"
    elif head[:2] == b"MM":
        byte_order, endian = "big", ">"
    else:
        raise BadMagic(f"unknown byte-order mark {head[:2]!r}")
    (magic,) = struct.unpack(endian + "H", head[2:4])
    if magic == 42:
        (first,) = struct.unpack(endian + "I", head[4:8])
        return byte_order, "classic", first
    if magic == 43:
        if len(head) < 16:
            raise TruncatedHeader("BigTIFF header needs 16 bytes")
        bytesize, zero = struct.unpack(endian + "HH", head[4:8])
        if bytesize != 8 or zero != 0:
            raise BadMagic(f"BigTIFF offset size {bytesize} (expected 8)")
        (first,) = struct.unpack(endian + "Q", head[8:16])
        return byte_order, "bigtiff", first
    raise BadMagic(f"magic number {magic} (expected 42 or 43)")


def open_container(path):
    """Validate the header and walk the directory chain. No pixel data is read."""
    path = os.fspath(path)
    with open(path, "rb") as fh:
        file_size = os.fstat(fh.fileno()).st_size
        byte_order, variant, offset = _read_header(fh, file_size)
        unpacker = _Unpacker(fh, byte_order, variant, file_size)
        offsets = []
        seen = set()
        while offset:
            if offset in seen:
                raise CyclicDirectoryChain(f"directory at offset {offset} visited twice")
            seen.add(offset)
            offsets.append(offset)
            _, offset = unpacker.ifd_entries(offset)
    if not offsets:
        raise TruncatedHeader("container has no image directories")
    return ContainerInfo(path, byte_order, variant, len(offsets), tuple(offsets))


def read_page(container, index):
    if not 0 <= index < container.page_count:
        raise PageOutOfRange(f"page {index} outside 0..{container.page_count - 1}")
    with open(container.path, "rb") as fh:
        file_size = os.fstat(fh.fileno()).st_size
        u = _Unpacker(fh, container.byte_order, container.variant, file_size)
        tags, _ = u.ifd_entries(container.ifd_offsets[index])

        def scalar(tag, default=None):
            if tag not in tags:
                if default is None:
                    raise MissingTag(f"page {index}: required tag {tag} missing")
                return default
            return int(u.values(tags[tag])[0])

        width = scalar(IMAGE_WIDTH)
        height = scalar(IMAGE_LENGTH)
        spp = scalar(SAMPLES_PER_PIXEL, 1)

        code = scalar(COMPRESSION, 1)
        if code not in COMPRESSIONS:
            raise UnsupportedCompression(f"page {index}: compression {code}")
        if scalar(PREDICTOR, 1) != 1:
            raise UnsupportedCompression(f"page {index}: predictor {scalar(PREDICTOR)}")
        if spp > 1 and scalar(PLANAR_CONFIG, 1) != 1:
            raise UnsupportedPlanarConfig(f"page {index}: planar (separate) storage")

        bits = u.values(tags[BITS_PER_SAMPLE]) if BITS_PER_SAMPLE in tags else np.array([1])
        sample_format = u.values(tags[SAMPLE_FORMAT]) if SAMPLE_FORMAT in tags else np.array([1])
        if np.any(bits != 8) or np.any(sample_format != 1):
            raise UnsupportedSampleFormat(
                f"page {index}: bits {bits.tolist()}, sample format {sample_format.tolist()}"
            )
        if spp < 3:
            raise UnsupportedSampleFormat(f"page {index}: {spp} samples per pixel, need RGB")

        if TILE_WIDTH in tags:
            layout, rps = "tiles", None
            tw, th = scalar(TILE_WIDTH), scalar(TILE_LENGTH)
            offs, counts = TILE_OFFSETS, TILE_BYTE_COUNTS
            expected = math.ceil(width / tw) * math.ceil(height / th)
        else:
            layout, tw, th = "strips", None, None
            rps = min(scalar(ROWS_PER_STRIP, 2**32 - 1), height)
            offs, counts = STRIP_OFFSETS, STRIP_BYTE_COUNTS
            expected = math.ceil(height / rps)
        if offs not in tags or counts not in tags:
            raise MissingTag(f"page {index}: segment offsets/byte counts missing")
        seg_offsets = u.values(tags[offs]).astype(np.uint64)
        seg_counts = u.values(tags[counts]).astype(np.uint64)
        if len(seg_offsets) != expected or len(seg_counts) != expected:
            raise MissingTag(
                f"page {index}: {len(seg_offsets)} offsets / {len(seg_counts)} byte counts, "
                f"layout needs {expected}"
            )

        geo = None
        if MODEL_PIXEL_SCALE in tags:
            sx, sy = (float(v) for v in u.values(tags[MODEL_PIXEL_SCALE])[:2])
            geo = PixelScale(sx, sy)

    return PageDescriptor(
        path=container.path,
        byte_order=container.byte_order,
        index=index,
        width=width,
        height=height,
        samples_per_pixel=spp,
        bits_per_sample=8,
        compression=COMPRESSIONS[code],
        layout=layout,
        rows_per_strip=rps,
        tile_width=tw,
        tile_height=th,
        segment_offsets=seg_offsets,
        segment_byte_counts=seg_counts,
        geo_scale=geo,
    )


def select_band(container, band=DEFAULT_BAND):
    if not 0 <= band < container.page_count:
        raise BandOutOfRange(
            f"band {band} requested but container has {container.page_count} page(s)"
        )
    return read_page(container, band)


class SegmentReader:
    """Reads raw segment bytes with positional reads; safe to share across threads."""

    def __init__(self, path):
        self.path = os.fspath(path)
        self._fh = open(self.path, "rb")
        self.file_size = os.fstat(self._fh.fileno()).st_size

    def read_segment(self, page, index):
        offset = int(page.segment_offsets[index])
        size = int(page.segment_byte_counts[index])
        if offset + size > self.file_size:
            raise SegmentOutOfFile(
                f"segment {index} spans {offset}+{size}, file is {self.file_size} bytes"
            )
        return os.pread(self._fh.fileno(), size, offset)

    def close(self):
        self._fh.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def _decompress(page, raw, expected):
    if page.compression == "none":
        if len(raw) < expected:
            raise CorruptSegment(f"uncompressed segment has {len(raw)} of {expected} bytes")
        return np.frombuffer(raw, dtype=np.uint8, count=expected)
    if page.compression == "deflate":
        try:
            d = zlib.decompressobj()
            data = d.decompress(raw, expected)
        except zlib.error as exc:
            raise CorruptSegment(f"deflate: {exc}") from None
        if len(data) < expected:
            raise CorruptSegment(f"deflate segment has {len(data)} of {expected} bytes")
        return np.frombuffer(data, dtype=np.uint8)
    return lzw.decode(raw, expected)


def decode_window(page, x0, y0, width, height, reader=None):
    """Decode an RGB window, touching only the segments that overlap it.

    Samples beyond the first three (alpha, infrared) are dropped. ``reader``
    may be a shared :class:`SegmentReader`; one is opened per call otherwise.
    """
    if width < 1 or height < 1 or x0 < 0 or y0 < 0 or x0 + width > page.width or y0 + height > page.height:
        raise WindowOutOfBounds(
            f"window ({x0}, {y0}, {width}x{height}) outside page {page.width}x{page.height}"
        )
    own = reader is None
    if own:
        reader = SegmentReader(page.path)
    try:
        out = np.empty((height, width, 3), dtype=np.uint8)
        across, _, seg_w, seg_h = page.segment_grid()
        spp = page.samples_per_pixel
        for idx in page.segments_overlapping(x0, y0, width, height):
            sr, sc = divmod(idx, across)
            sx0, sy0 = sc * seg_w, sr * seg_h
            if page.layout == "tiles":
                rows_stored = seg_h
            else:
                rows_stored = min(seg_h, page.height - sy0)
            data = _decompress(page, reader.read_segment(page, idx), rows_stored * seg_w * spp)
            seg = data.reshape(rows_stored, seg_w, spp)
            ix0, iy0 = max(x0, sx0), max(y0, sy0)
            ix1 = min(x0 + width, sx0 + seg_w, page.width)
            iy1 = min(y0 + height, sy0 + rows_stored, page.height)
            out[iy0 - y0:iy1 - y0, ix0 - x0:ix1 - x0] = seg[iy0 - sy0:iy1 - sy0, ix0 - sx0:ix1 - sx0, :3]
    finally:
        if own:
            reader.close()
    return RasterWindow(x0, y0, width, height, out)
