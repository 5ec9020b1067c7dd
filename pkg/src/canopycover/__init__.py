"""Green-canopy coverage from large aerial GeoTIFF imagery.

The pipeline streams one page of a TIFF/BigTIFF container, cuts it into
zero-padded square chunks, estimates canopy per chunk and reduces exact
integer pixel counts into per-file and overall coverage figures.
"""

__version__ = "0.1.0"

from .errors import CanopyError
from .metrics import (
    FileCoverageRow,
    OverallSummary,
    aggregate,
    canopy_count,
    compare_estimates,
    file_report,
    pixels_to_area,
)
from .segmentation import (
    CanopyMask,
    DetectionBox,
    EstimatorKind,
    import_mask,
    parse_detections,
    rasterize_boxes,
    segment_threshold,
)
from .store import Manifest, StoreLayout
from .tiff_reader import decode_window, open_container, read_page, select_band
from .tiling import account_chunk, extract_chunk, is_skippable, plan_grid

__all__ = [
    "CanopyError",
    "CanopyMask",
    "DetectionBox",
    "EstimatorKind",
    "FileCoverageRow",
    "Manifest",
    "OverallSummary",
    "StoreLayout",
    "account_chunk",
    "aggregate",
    "canopy_count",
    "compare_estimates",
    "decode_window",
    "extract_chunk",
    "file_report",
    "import_mask",
    "is_skippable",
    "open_container",
    "parse_detections",
    "pixels_to_area",
    "plan_grid",
    "rasterize_boxes",
    "read_page",
    "segment_threshold",
    "select_band",
]
