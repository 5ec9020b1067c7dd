"""Chunk grid planning, zero-padded chunk extraction and pixel accounting."""

import math
from dataclasses import dataclass
from typing import Iterator

import numpy as np

from .errors import ZeroDimension
from .tiff_reader import decode_window

CHUNK_SIZE = 640


@dataclass(frozen=True)
class ChunkRef:
    file_name: str
    row: int
    col: int
    x0: int
    y0: int
    in_width: int
    in_height: int
    chunk_size: int = CHUNK_SIZE

    @property
    def name(self):
        return f"r{self.row:05d}_c{self.col:05d}"

    @property
    def in_pixels(self):
        return self.in_width * self.in_height


@dataclass(frozen=True)
class ChunkGrid:
    page_width: int
    page_height: int
    chunk_size: int = CHUNK_SIZE

    @property
    def rows(self):
        return math.ceil(self.page_height / self.chunk_size)

    @property
    def cols(self):
        return math.ceil(self.page_width / self.chunk_size)

    def __len__(self):
        return self.rows * self.cols

    def ref(self, row, col, file_name=""):
        if not (0 <= row < self.rows and 0 <= col < self.cols):
            raise IndexError(f"chunk ({row}, {col}) outside {self.rows}x{self.cols} grid")
        x0, y0 = col * self.chunk_size, row * self.chunk_size
        return ChunkRef(
            file_name,
            row,
            col,
            x0,
            y0,
            min(self.chunk_size, self.page_width - x0),
            min(self.chunk_size, self.page_height - y0),
            self.chunk_size,
        )

    def refs(self, file_name="") -> Iterator[ChunkRef]:
        """All chunks, row-major."""
        for row in range(self.rows):
            for col in range(self.cols):
                yield self.ref(row, col, file_name)


@dataclass(frozen=True, eq=False)
class PaddedChunk:
    ref: ChunkRef
    pixels: np.ndarray  # (chunk_size, chunk_size, 3) uint8

    @property
    def in_bounds(self):
        return self.pixels[: self.ref.in_height, : self.ref.in_width]

    def covered(self):
        """Boolean (chunk_size, chunk_size) map of in-bounds pixels with any nonzero channel."""
        size = self.ref.chunk_size
        out = np.zeros((size, size), dtype=bool)
        out[: self.ref.in_height, : self.ref.in_width] = self.in_bounds.any(axis=2)
        return out


@dataclass(frozen=True)
class PixelAccount:
    total_pixels: int
    covered_pixels: int

    def __add__(self, other):
        return PixelAccount(
            self.total_pixels + other.total_pixels,
            self.covered_pixels + other.covered_pixels,
        )


def plan_grid(page_width, page_height, chunk_size=CHUNK_SIZE):
    if page_width < 1 or page_height < 1:
        raise ZeroDimension(f"page is {page_width}x{page_height}")
    if chunk_size < 1:
        raise ZeroDimension(f"chunk size {chunk_size}")
    return ChunkGrid(page_width, page_height, chunk_size)


def extract_chunk(page, ref, reader=None):
    """Decode the in-bounds part of ``ref`` and zero-pad it to a full chunk."""
    window = decode_window(page, ref.x0, ref.y0, ref.in_width, ref.in_height, reader=reader)
    pixels = np.zeros((ref.chunk_size, ref.chunk_size, 3), dtype=np.uint8)
    pixels[: ref.in_height, : ref.in_width] = window.pixels
    return PaddedChunk(ref, pixels)


def account_chunk(chunk):
    # padding is never read: only the in-bounds view is inspected
    covered = int(np.count_nonzero(chunk.in_bounds.any(axis=2)))
    return PixelAccount(chunk.ref.in_pixels, covered)


def is_skippable(chunk):
    return not chunk.in_bounds.any()
