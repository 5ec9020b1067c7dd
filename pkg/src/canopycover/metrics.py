"""Coverage ledger rows, overall summaries, ground-truth comparison and areas.

Counts are summed as Python ints and ratios are taken only from the sums, so
the overall figures are never averages of per-file percentages. Rounding to
two decimals (half-up) happens only when values are rendered.
"""

import csv
import io
import json
import math
from dataclasses import dataclass, field
from decimal import ROUND_HALF_UP, Decimal
import numpy as np

from .errors import EmptyInput, MissingScale, RefMismatch

SQUARE_METERS_PER_ACRE = 4046.8564224
CSV_HEADER = [
    "fileName",
    "totalPixels",
    "coveredPixels",
    "segmentationPixels",
    "coverPercentage",
    "segmentationPercentage",
]


def _ratio(num, den):
    return 100.0 * num / den if den > 0 else None


def format_percent(value, places=2):
    """Half-up rounding for display; None renders as the literal ``NaN``."""
    if value is None or (isinstance(value, float) and math.isnan(value)):
        return "NaN"
    q = Decimal(1).scaleb(-places)
    rounded = Decimal(repr(float(value))).quantize(q, rounding=ROUND_HALF_UP)
    if rounded.is_zero():
        rounded = abs(rounded)
    return str(rounded)


@dataclass(frozen=True)
class FileCoverageRow:
    file_name: str
    total_pixels: int
    covered_pixels: int
    segmentation_pixels: int

    def __post_init__(self):
        if not 0 <= self.segmentation_pixels <= self.covered_pixels <= self.total_pixels:
            raise ValueError(
                f"{self.file_name}: need 0 <= segmentation ({self.segmentation_pixels}) <= "
                f"covered ({self.covered_pixels}) <= total ({self.total_pixels})"
            )

    @property
    def cover_percentage(self):
        return _ratio(self.covered_pixels, self.total_pixels)

    @property
    def segmentation_percentage(self):
        return _ratio(self.segmentation_pixels, self.covered_pixels)

    def csv_fields(self):
        return [
            self.file_name,
            str(self.total_pixels),
            str(self.covered_pixels),
            str(self.segmentation_pixels),
            format_percent(self.cover_percentage),
            format_percent(self.segmentation_percentage),
        ]


@dataclass(frozen=True)
class OverallSummary:
    total_pixels: int
    covered_pixels: int
    segmentation_pixels: int
    file_count: int

    @property
    def area_covered_percent(self):
        return _ratio(self.covered_pixels, self.total_pixels)

    @property
    def canopy_percent(self):
        return _ratio(self.segmentation_pixels, self.covered_pixels)


@dataclass(frozen=True)
class ComparisonRow:
    site_name: str
    ground_truth_percent: float
    estimates: dict = field(default_factory=dict)

    @property
    def deltas(self):
        return {k: v - self.ground_truth_percent for k, v in self.estimates.items()}


def canopy_count(mask, chunk):
    """Pixels that are canopy in ``mask``, inside the page, and nonzero."""
    if mask.ref != chunk.ref:
        raise RefMismatch(f"mask for {mask.ref.name} applied to chunk {chunk.ref.name}")
    return int(np.count_nonzero(mask.bits & chunk.covered()))


def file_report(file_name, accounts, canopy_counts):
    accounts = list(accounts)
    canopy_counts = list(canopy_counts)
    if len(accounts) != len(canopy_counts):
        raise ValueError(f"{len(accounts)} accounts but {len(canopy_counts)} canopy counts")
    return FileCoverageRow(
        file_name,
        sum(int(a.total_pixels) for a in accounts),
        sum(int(a.covered_pixels) for a in accounts),
        sum(int(c) for c in canopy_counts),
    )


def aggregate(rows):
    rows = list(rows)
    if not rows:
        raise EmptyInput("no coverage rows to aggregate")
    return OverallSummary(
        sum(r.total_pixels for r in rows),
        sum(r.covered_pixels for r in rows),
        sum(r.segmentation_pixels for r in rows),
        len(rows),
    )


def compare_estimates(ground_truth_percent, estimates, site_name="site"):
    for name, value in [("ground truth", ground_truth_percent), *estimates.items()]:
        if not 0 <= value <= 100:
            raise ValueError(f"{name} percentage {value} outside [0, 100]")
    return ComparisonRow(site_name, float(ground_truth_percent), {k: float(v) for k, v in estimates.items()})


def pixels_to_area(count, scale):
    """Return ``(square_meters, acres)`` for ``count`` pixels at ground ``scale``."""
    if scale is None:
        raise MissingScale("page carries no ModelPixelScale tag; area is unknown")
    square_meters = count * scale.sx * scale.sy
    return square_meters, square_meters / SQUARE_METERS_PER_ACRE


# --- serialization -----------------------------------------------------------

def render_csv(rows):
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_HEADER)
    for row in rows:
        writer.writerow(row.csv_fields())
    return buf.getvalue()


def parse_csv(text):
    reader = csv.DictReader(io.StringIO(text))
    if reader.fieldnames != CSV_HEADER:
        raise ValueError(f"unexpected CSV header {reader.fieldnames}")
    return [
        FileCoverageRow(
            r["fileName"],
            int(r["totalPixels"]),
            int(r["coveredPixels"]),
            int(r["segmentationPixels"]),
        )
        for r in reader
    ]


def summary_dict(summary, estimator=None, area=None):
    """JSON-ready summary. ``area`` maps names to square meters, if known."""
    out = {
        "files": summary.file_count,
        "totalPixels": summary.total_pixels,
        "coveredPixels": summary.covered_pixels,
        "segmentationPixels": summary.segmentation_pixels,
        "areaCoveredPercent": summary.area_covered_percent,
        "canopyPercent": summary.canopy_percent,
        "areaCoveredPercentDisplay": format_percent(summary.area_covered_percent),
        "canopyPercentDisplay": format_percent(summary.canopy_percent),
    }
    if estimator is not None:
        out["estimator"] = estimator
    if area is not None:
        out["area"] = {}
        for name, m2 in area.items():
            out["area"][f"{name}SquareMeters"] = m2
            out["area"][f"{name}Acres"] = m2 / SQUARE_METERS_PER_ACRE
    return out


def render_summary(summary, estimator=None, area=None):
    return json.dumps(summary_dict(summary, estimator, area), indent=2, sort_keys=True) + "\n"


def comparison_csv(rows):
    """Wide CSV: one row per site, an estimate and delta column per estimator."""
    names = []
    for row in rows:
        for name in row.estimates:
            if name not in names:
                names.append(name)
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    header = ["siteName", "groundTruthPercent"]
    for name in names:
        header += [f"{name}Percent", f"{name}Delta"]
    writer.writerow(header)
    for row in rows:
        fields = [row.site_name, format_percent(row.ground_truth_percent)]
        deltas = row.deltas
        for name in names:
            if name in row.estimates:
                fields += [format_percent(row.estimates[name]), format_percent(deltas[name])]
            else:
                fields += ["", ""]
        writer.writerow(fields)
    return buf.getvalue()
