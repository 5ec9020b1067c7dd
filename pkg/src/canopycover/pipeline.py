"""End-to-end coverage run: tile each file, estimate canopy, reduce, report.

Chunks are mapped over a thread pool and reduced in grid order, so every
count, manifest and report is identical for any worker count.
"""

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional

from . import metrics
from .errors import CanopyError, ConfigError, CorruptManifest
from .report import area_breakdown, write_reports
from .segmentation import (
    EstimatorKind,
    filter_confidence,
    import_mask,
    parse_detections,
    rasterize_boxes,
    segment_threshold,
)
from .store import Manifest, ManifestEntry, StoreLayout
from .tiff_reader import DEFAULT_BAND, SegmentReader, open_container, select_band
from .tiling import CHUNK_SIZE, account_chunk, extract_chunk, is_skippable, plan_grid

log = logging.getLogger(__name__)


@dataclass
class RunConfig:
    input_paths: list
    store_root: str
    band: int = DEFAULT_BAND
    chunk_size: int = CHUNK_SIZE
    estimator: EstimatorKind = field(default_factory=EstimatorKind)
    workers: int = 1
    overlays: bool = False
    overlay_alpha: float = 0.4
    write_chunks: bool = True
    figures: bool = True

    def __post_init__(self):
        if self.workers < 1:
            raise ConfigError(f"worker count must be >= 1, got {self.workers}")
        if self.chunk_size < 1:
            raise ConfigError(f"chunk size must be >= 1, got {self.chunk_size}")
        if self.band < 0:
            raise ConfigError(f"band must be >= 0, got {self.band}")
        if not self.input_paths:
            raise ConfigError("no input files")
        names = [file_name_for(p) for p in self.input_paths]
        dupes = sorted({n for n in names if names.count(n) > 1})
        if dupes:
            raise ConfigError(f"input files share store names: {', '.join(dupes)}")
        if "reports" in names:
            raise ConfigError("an input file may not be named 'reports'")


@dataclass
class FileResult:
    path: str
    row: metrics.FileCoverageRow
    manifest: Manifest
    resumed: bool = False

    @property
    def geo_scale(self):
        return self.manifest.geo_scale


@dataclass
class RunResult:
    files: list = field(default_factory=list)
    failures: list = field(default_factory=list)  # (path, exception)
    summary: Optional[metrics.OverallSummary] = None

    @property
    def rows(self):
        return [f.row for f in self.files]


def file_name_for(path):
    return Path(path).stem


def estimate(chunk, estimator, layout):
    if estimator.kind == "threshold":
        return segment_threshold(chunk, estimator.tau)
    if estimator.kind == "mask":
        return import_mask(layout, chunk.ref)
    boxes = parse_detections(layout.read_detections(chunk.ref))
    return rasterize_boxes(filter_confidence(boxes, estimator.confidence_floor), chunk.ref)


def _resumable(manifest, page, config):
    return (
        manifest is not None
        and manifest.complete
        and manifest.pageIndex == page.index
        and manifest.pageWidth == page.width
        and manifest.pageHeight == page.height
        and manifest.chunkSize == config.chunk_size
        and manifest.estimator == config.estimator.signature()
    )


def process_file(path, config, layout, reader_factory=SegmentReader, progress=None):
    file_name = file_name_for(path)
    container = open_container(path)
    page = select_band(container, config.band)
    grid = plan_grid(page.width, page.height, config.chunk_size)

    try:
        existing = layout.read_manifest(file_name)
    except CorruptManifest as exc:
        log.warning("%s: ignoring unreadable manifest (%s)", file_name, exc)
        existing = None
    if _resumable(existing, page, config):
        total, covered, canopy = existing.totals()
        row = metrics.FileCoverageRow(file_name, total, covered, canopy)
        return FileResult(str(path), row, existing, resumed=True)

    layout.init_file(file_name)
    refs = list(grid.refs(file_name))

    with reader_factory(path) as reader:

        def work(ref):
            chunk = extract_chunk(page, ref, reader)
            account = account_chunk(chunk)
            if is_skippable(chunk):
                return account, 0, True
            if config.write_chunks:
                layout.write_chunk(chunk)
            mask = estimate(chunk, config.estimator, layout)
            if config.overlays:
                layout.write_overlay(chunk, mask, config.overlay_alpha)
            return account, metrics.canopy_count(mask, chunk), False

        if config.workers == 1:
            results = map(work, refs)
            pool = None
        else:
            pool = ThreadPoolExecutor(config.workers, thread_name_prefix="chunk")
            results = pool.map(work, refs)
        try:
            entries, accounts, canopy = [], [], []
            for i, (ref, (account, count, skipped)) in enumerate(zip(refs, results), start=1):
                accounts.append(account)
                canopy.append(count)
                entries.append(
                    ManifestEntry(
                        ref.row, ref.col, ref.in_width, ref.in_height,
                        account.covered_pixels, count, skipped,
                    )
                )
                if progress is not None:
                    progress(file_name, i, len(refs))
        finally:
            if pool is not None:
                pool.shutdown(cancel_futures=True)

    manifest = Manifest(
        file_name, page.index, page.width, page.height, config.chunk_size,
        grid.rows, grid.cols, config.estimator.signature(), entries,
        pixelScale=None if page.geo_scale is None else [page.geo_scale.sx, page.geo_scale.sy],
    )
    layout.write_manifest(manifest)
    row = metrics.file_report(file_name, accounts, canopy)
    layout.write_report("coverage.csv", metrics.render_csv([row]), file_name=file_name)
    return FileResult(str(path), row, manifest)


def run(config, reader_factory=SegmentReader, progress: Optional[Callable] = None):
    layout = StoreLayout(config.store_root)
    result = RunResult()
    for path in config.input_paths:
        try:
            result.files.append(process_file(path, config, layout, reader_factory, progress))
        except CanopyError as exc:
            log.error("%s: %s: %s", path, type(exc).__name__, exc)
            result.failures.append((str(path), exc))
        except OSError as exc:
            log.error("%s: %s", path, exc)
            result.failures.append((str(path), exc))

    if result.files:
        result.summary = metrics.aggregate(result.rows)
        write_reports(
            layout,
            result.rows,
            estimator=config.estimator.signature(),
            area=area_breakdown([f.manifest for f in result.files]),
            figures=config.figures,
        )
    return result

