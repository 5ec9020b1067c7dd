"""Canopy estimators.

Three interchangeable ways to turn a chunk into a boolean canopy mask:

* ``threshold`` - Excess Green (2G - R - B) above a cutoff, a cheap colour baseline;
* ``mask`` - a segmentation model's mask image read back from the store;
* ``boxes`` - a detector's normalized boxes, rasterized and unioned.
"""

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import ConfigError, MalformedLine, MaskShapeMismatch

DEFAULT_TAU = 40
TAU_RANGE = (-510, 510)


@dataclass(frozen=True, eq=False)
class CanopyMask:
    ref: object  # ChunkRef
    bits: np.ndarray  # (chunk_size, chunk_size) bool

    @property
    def count(self):
        return int(np.count_nonzero(self.bits))


@dataclass(frozen=True)
class DetectionBox:
    class_id: int
    cx: float
    cy: float
    w: float
    h: float
    confidence: Optional[float] = None


@dataclass(frozen=True)
class EstimatorKind:
    """Which estimator to run and its parameters.

    ``kind`` is one of "threshold", "mask", "boxes".
    """

    kind: str = "threshold"
    tau: int = DEFAULT_TAU
    confidence_floor: Optional[float] = None

    KINDS = ("threshold", "mask", "boxes")

    def __post_init__(self):
        if self.kind not in self.KINDS:
            raise ConfigError(f"unknown estimator {self.kind!r}; choose from {', '.join(self.KINDS)}")
        if not TAU_RANGE[0] <= self.tau <= TAU_RANGE[1]:
            raise ConfigError(f"tau {self.tau} outside [{TAU_RANGE[0]}, {TAU_RANGE[1]}]")
        if self.confidence_floor is not None and not 0 <= self.confidence_floor <= 1:
            raise ConfigError(f"confidence floor {self.confidence_floor} outside [0, 1]")

    def signature(self):
        """JSON-ready description; two runs with equal signatures give equal masks."""
        sig = {"kind": self.kind}
        if self.kind == "threshold":
            sig["tau"] = self.tau
        if self.kind == "boxes":
            sig["confidenceFloor"] = self.confidence_floor
        return sig


def excess_green(pixels):
    p = pixels.astype(np.int16)
    return 2 * p[..., 1] - p[..., 0] - p[..., 2]


def segment_threshold(chunk, tau=DEFAULT_TAU):
    bits = (excess_green(chunk.pixels) > tau) & chunk.covered()
    return CanopyMask(chunk.ref, bits)


def mask_from_image(ref, image):
    """Interpret a stored mask image (2-D, or 3-D with any channel nonzero)."""
    arr = np.asarray(image)
    if arr.ndim == 3:
        arr = arr.any(axis=2)
    size = ref.chunk_size
    if arr.shape != (size, size):
        raise MaskShapeMismatch(f"{ref.name}: mask is {arr.shape[1]}x{arr.shape[0]}, chunk is {size}x{size}")
    return CanopyMask(ref, arr != 0)


def import_mask(store, ref):
    """Load the stored model mask for ``ref``; nonzero is canopy."""
    return mask_from_image(ref, store.read_mask(ref))


def parse_detections(text):
    """Parse ``classId cx cy w h [confidence]`` lines. Blank lines are ignored."""
    boxes = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        fields = line.split()
        if not fields:
            continue
        if len(fields) not in (5, 6):
            raise MalformedLine(lineno, line)
        try:
            class_id = int(fields[0])
            cx, cy, w, h = (float(f) for f in fields[1:5])
            conf = float(fields[5]) if len(fields) == 6 else None
        except ValueError:
            raise MalformedLine(lineno, line) from None
        values = [cx, cy, w, h] + ([conf] if conf is not None else [])
        if not all(math.isfinite(v) for v in values) or w <= 0 or h <= 0:
            raise MalformedLine(lineno, line)
        clamp = lambda v: min(max(v, 0.0), 1.0)  # noqa: E731
        boxes.append(
            DetectionBox(
                class_id,
                clamp(cx),
                clamp(cy),
                clamp(w),
                clamp(h),
                None if conf is None else clamp(conf),
            )
        )
    return boxes


def filter_confidence(boxes, floor):
    if floor is None:
        return list(boxes)
    # boxes without a confidence score are kept
    return [b for b in boxes if b.confidence is None or b.confidence >= floor]


def _round_half_away(x):
    return math.copysign(math.floor(abs(x) + 0.5), x)


def box_pixels(box, size):
    """Pixel rectangle (left, top, right, bottom) with exclusive right/bottom edges."""

    def edge(v):
        return int(min(max(_round_half_away(size * v), 0), size))

    return (
        edge(box.cx - box.w / 2),
        edge(box.cy - box.h / 2),
        edge(box.cx + box.w / 2),
        edge(box.cy + box.h / 2),
    )


def rasterize_boxes(boxes, ref):
    size = ref.chunk_size
    bits = np.zeros((size, size), dtype=bool)
    for box in boxes:
        left, top, right, bottom = box_pixels(box, size)
        bits[top:bottom, left:right] = True
    return CanopyMask(ref, bits)
