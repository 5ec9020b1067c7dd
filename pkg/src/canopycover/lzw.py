"""TIFF-flavoured LZW decoding.

TIFF LZW packs codes MSB-first, starts at 9 bits, uses 256 as Clear and 257
as EndOfInformation, and widens the code one entry early (at 511, 1023, 2047).

Dictionary entries are never stored as strings. Every entry is a substring of
the output already produced, so an entry is just ``(start, length)`` into the
output buffer: a new entry is the previous string extended by one byte, which
in the output is the previous string's span plus the byte that follows it.
"""

import numpy as np
from numba import njit

from .errors import CorruptSegment

CLEAR = 256
EOI = 257
FIRST_FREE = 258
MAX_CODES = 4096


@njit(cache=True, nogil=True)
def _decode(src, out):
    n_out = out.shape[0]
    starts = np.zeros(MAX_CODES, dtype=np.int64)
    lengths = np.ones(MAX_CODES, dtype=np.int64)

    nbits_total = src.shape[0] * 8
    bitpos = 0
    pos = 0
    width = 9
    next_code = FIRST_FREE
    prev = -1

    while bitpos + width <= nbits_total and pos < n_out:
        # gather `width` bits MSB-first
        code = 0
        for _ in range(width):
            bit = (src[bitpos >> 3] >> (7 - (bitpos & 7))) & 1
            code = (code << 1) | bit
            bitpos += 1

        if code == EOI:
            break
        if code == CLEAR:
            width = 9
            next_code = FIRST_FREE
            prev = -1
            continue

        start = pos
        if code < 256:
            out[pos] = code
            length = 1
        elif prev == -1:
            return -1
        elif code < next_code:
            length = lengths[code]
            src_start = starts[code]
            for k in range(min(length, n_out - pos)):
                out[pos + k] = out[src_start + k]
        elif code == next_code:
            # KwKwK: previous string followed by its own first byte
            length = lengths[prev] + 1
            src_start = start - lengths[prev]
            for k in range(min(length - 1, n_out - pos)):
                out[pos + k] = out[src_start + k]
            if pos + length - 1 < n_out:
                out[pos + length - 1] = out[src_start]
        else:
            return -1
        pos += length

        if prev != -1 and next_code < MAX_CODES:
            # previous string as last emitted, plus the first byte of this one
            starts[next_code] = start - lengths[prev]
            lengths[next_code] = lengths[prev] + 1
            next_code += 1
            if next_code + 1 >= (1 << width) and width < 12:
                width += 1
        prev = code

    return min(pos, n_out)


def decode(data, expected_size):
    """Decode one LZW-compressed segment into ``expected_size`` bytes.

    Output beyond ``expected_size`` is discarded. Raises CorruptSegment for an
    invalid code stream or a stream that ends short.
    """
    src = np.frombuffer(data, dtype=np.uint8)
    if src.size >= 2 and src[0] == 0 and (src[1] & 0x01):
        raise CorruptSegment("old-style (LSB-first) LZW is not supported")
    out = np.empty(expected_size, dtype=np.uint8)
    produced = _decode(src, out)
    if produced < 0:
        raise CorruptSegment("invalid LZW code")
    if produced < expected_size:
        raise CorruptSegment(f"LZW stream ended after {produced} of {expected_size} bytes")
    return out
