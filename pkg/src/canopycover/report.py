"""Run-level report files: ledger CSV, summary JSON and figures."""

import logging

from . import metrics
from .errors import EmptyInput
from .plotting import plot_coverage

log = logging.getLogger(__name__)

COVERAGE_CSV = "coverage.csv"
SUMMARY_JSON = "summary.json"
COVERAGE_PNG = "coverage.png"


def area_breakdown(manifests):
    """Square meters for total, covered and canopy pixels; None if any page lacks a scale."""
    if not manifests or any(m.geo_scale is None for m in manifests):
        return None
    area = {"total": 0.0, "covered": 0.0, "canopy": 0.0}
    for m in manifests:
        for key, count in zip(("total", "covered", "canopy"), m.totals()):
            area[key] += metrics.pixels_to_area(count, m.geo_scale)[0]
    return area


def write_reports(layout, rows, estimator=None, area=None, figures=True):
    """Write the CSV ledger, summary JSON and (optionally) the coverage figure."""
    summary = metrics.aggregate(rows)
    paths = [
        layout.write_report(COVERAGE_CSV, metrics.render_csv(rows)),
        layout.write_report(SUMMARY_JSON, metrics.render_summary(summary, estimator, area)),
    ]
    if figures:
        layout.reports_dir.mkdir(parents=True, exist_ok=True)
        paths.append(plot_coverage(rows, summary, layout.reports_dir / COVERAGE_PNG))
    return paths


def rebuild_reports(layout, figures=True):
    """Regenerate run reports from the manifests already in the store."""
    manifests = layout.manifests()
    if not manifests:
        raise EmptyInput(f"no manifests under {layout.root}")
    rows = [metrics.FileCoverageRow(m.fileName, *m.totals()) for m in manifests]
    estimators = {tuple(sorted(m.estimator.items())) for m in manifests}
    estimator = manifests[0].estimator if len(estimators) == 1 else None
    if estimator is None:
        log.warning("manifests were produced by different estimators")
    write_reports(layout, rows, estimator, area_breakdown(manifests), figures)
    return rows
