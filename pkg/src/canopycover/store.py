"""Filesystem artifact store.

Layout under the root, one subtree per input file::

    <root>/<fileName>/chunks/r00003_c00012.png      padded RGB chunk
    <root>/<fileName>/masks/r00003_c00012.png       model mask (input)
    <root>/<fileName>/detections/r00003_c00012.txt  detector boxes (input)
    <root>/<fileName>/overlays/r00003_c00012.png    canopy overlay
    <root>/<fileName>/reports/coverage.csv          the file's ledger row
    <root>/<fileName>/manifest.json
    <root>/reports/                                 run-wide CSV, JSON, figures

Every write goes to a temporary file in the target directory and is renamed
into place, so a crash leaves either nothing or a complete artifact.
"""

import io
import json
import os
import re
import tempfile
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np
from PIL import Image

from .tiff_reader import PixelScale
from .errors import CorruptManifest, IoFailure, MaskMissing, RefMismatch

MANIFEST_SCHEMA = 1
_NAME_RE = re.compile(r"^r(\d{5})_c(\d{5})$")
SUBDIRS = ("chunks", "masks", "detections", "overlays", "reports")


def chunk_name(row, col):
    if not (0 <= row <= 99999 and 0 <= col <= 99999):
        raise ValueError(f"chunk index ({row}, {col}) does not fit five digits")
    return f"r{row:05d}_c{col:05d}"


def parse_chunk_name(name):
    m = _NAME_RE.match(Path(name).stem)
    if not m:
        raise ValueError(f"not a chunk artifact name: {name!r}")
    return int(m.group(1)), int(m.group(2))


def atomic_write(path, data):
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
        try:
            with os.fdopen(fd, "wb") as fh:
                fh.write(data)
            os.replace(tmp, path)
        except BaseException:
            if os.path.exists(tmp):
                os.unlink(tmp)
            raise
    except OSError as exc:
        raise IoFailure(f"writing {path}: {exc}") from exc
    return path


def encode_png(array):
    buf = io.BytesIO()
    Image.fromarray(np.ascontiguousarray(array)).save(buf, format="PNG")
    return buf.getvalue()


def read_png(path):
    try:
        with Image.open(path) as im:
            return np.asarray(im)
    except OSError as exc:
        raise IoFailure(f"reading {path}: {exc}") from exc


def blend_overlay(pixels, bits, alpha=0.4):
    """Blend canopy pixels toward pure green, rounding half-up; others untouched."""
    if not 0 <= alpha <= 1:
        raise ValueError(f"alpha {alpha} outside [0, 1]")
    out = pixels.copy()
    sel = pixels[bits].astype(np.float64)
    sel = (1 - alpha) * sel + alpha * np.array([0.0, 255.0, 0.0])
    out[bits] = np.floor(sel + 0.5).clip(0, 255).astype(np.uint8)
    return out


@dataclass
class ManifestEntry:
    row: int
    col: int
    inWidth: int
    inHeight: int
    coveredPixels: int
    canopyPixels: int
    skipped: bool


@dataclass
class Manifest:
    fileName: str
    pageIndex: int
    pageWidth: int
    pageHeight: int
    chunkSize: int
    rows: int
    cols: int
    estimator: dict = field(default_factory=dict)
    entries: list = field(default_factory=list)
    pixelScale: Optional[list] = None

    @property
    def geo_scale(self):
        return None if self.pixelScale is None else PixelScale(*self.pixelScale)

    @property
    def complete(self):
        return len(self.entries) == self.rows * self.cols

    def totals(self):
        """(totalPixels, coveredPixels, canopyPixels) summed over entries."""
        return (
            sum(e.inWidth * e.inHeight for e in self.entries),
            sum(e.coveredPixels for e in self.entries),
            sum(e.canopyPixels for e in self.entries),
        )

    def to_json(self):
        doc = {"schema": MANIFEST_SCHEMA, **asdict(self)}
        return json.dumps(doc, indent=1, sort_keys=True) + "\n"

    @classmethod
    def from_json(cls, text):
        try:
            doc = json.loads(text)
            if not isinstance(doc, dict):
                raise CorruptManifest("manifest is not a JSON object")
            if doc.pop("schema", None) != MANIFEST_SCHEMA:
                raise CorruptManifest("unknown manifest schema")
            entries = [ManifestEntry(**e) for e in doc.pop("entries")]
            manifest = cls(**doc, entries=entries)
        except (ValueError, TypeError, KeyError) as exc:
            raise CorruptManifest(f"unreadable manifest: {exc}") from exc
        if not manifest.complete:
            raise CorruptManifest(
                f"{manifest.fileName}: {len(entries)} entries for a "
                f"{manifest.rows}x{manifest.cols} grid"
            )
        return manifest


class StoreLayout:
    """Paths and read/write helpers for one store root."""

    def __init__(self, root):
        self.root = Path(root)

    def file_dir(self, file_name):
        return self.root / file_name

    def path(self, kind, ref, suffix=".png"):
        return self.file_dir(ref.file_name) / kind / (chunk_name(ref.row, ref.col) + suffix)

    def chunk_path(self, ref):
        return self.path("chunks", ref)

    def mask_path(self, ref):
        return self.path("masks", ref)

    def overlay_path(self, ref):
        return self.path("overlays", ref)

    def detections_path(self, ref):
        return self.path("detections", ref, ".txt")

    def manifest_path(self, file_name):
        return self.file_dir(file_name) / "manifest.json"

    def file_reports_dir(self, file_name):
        return self.file_dir(file_name) / "reports"

    @property
    def reports_dir(self):
        return self.root / "reports"

    def init_file(self, file_name):
        for sub in SUBDIRS:
            (self.file_dir(file_name) / sub).mkdir(parents=True, exist_ok=True)

    # chunks ---------------------------------------------------------------

    def write_chunk(self, chunk):
        return atomic_write(self.chunk_path(chunk.ref), encode_png(chunk.pixels))

    def read_chunk(self, ref):
        return read_png(self.chunk_path(ref))

    # masks ----------------------------------------------------------------

    def write_mask(self, mask):
        return atomic_write(self.mask_path(mask.ref), encode_png(mask.bits.astype(np.uint8) * 255))

    def read_mask(self, ref):
        path = self.mask_path(ref)
        if not path.exists():
            raise MaskMissing(f"no mask at {path}")
        return read_png(path)

    def read_detections(self, ref):
        """Detection text for ``ref``; a missing file means nothing was detected."""
        path = self.detections_path(ref)
        try:
            return path.read_text(encoding="utf-8")
        except FileNotFoundError:
            return ""
        except OSError as exc:
            raise IoFailure(f"reading {path}: {exc}") from exc

    # overlays -------------------------------------------------------------

    def write_overlay(self, chunk, mask, alpha=0.4):
        if mask.ref != chunk.ref:
            raise RefMismatch(f"mask for {mask.ref.name} does not belong to {chunk.ref.name}")
        return atomic_write(self.overlay_path(chunk.ref), encode_png(blend_overlay(chunk.pixels, mask.bits, alpha)))

    def list_overlays(self):
        return sorted(self.root.glob("*/overlays/r*_c*.png"))

    # manifests ------------------------------------------------------------

    def write_manifest(self, manifest):
        return atomic_write(self.manifest_path(manifest.fileName), manifest.to_json().encode())

    def read_manifest(self, file_name):
        path = self.manifest_path(file_name)
        try:
            text = path.read_text(encoding="utf-8")
        except FileNotFoundError:
            return None
        except OSError as exc:
            raise IoFailure(f"reading {path}: {exc}") from exc
        return Manifest.from_json(text)

    def manifests(self):
        out = []
        for path in sorted(self.root.glob("*/manifest.json")):
            out.append(self.read_manifest(path.parent.name))
        return out

    # reports --------------------------------------------------------------

    def write_report(self, name, text, file_name=None):
        base = self.reports_dir if file_name is None else self.file_reports_dir(file_name)
        return atomic_write(base / name, text.encode("utf-8"))


def write_chunk(layout, chunk):
    return layout.write_chunk(chunk)


def write_overlay(layout, chunk, mask, alpha=0.4):
    return layout.write_overlay(chunk, mask, alpha)


def write_manifest(layout, manifest):
    return layout.write_manifest(manifest)


def read_manifest(layout, file_name):
    return layout.read_manifest(file_name)
