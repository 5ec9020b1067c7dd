"""Command-line interface.

Subcommands::

    canopycover inspect FILE...
    canopycover run FILE... --store DIR [--estimator threshold|mask|boxes] ...
    canopycover report --store DIR
    canopycover compare --ground-truth PCT --run NAME=PCT|SUMMARY.json ...
    canopycover gallery --store DIR

Exit codes: 0 success, 1 a file failed during a run, 2 configuration error,
3 container/input parse error, 4 store error.
"""

import argparse
import json
import logging
import random
import sys
from pathlib import Path

from . import __version__, metrics
from .errors import CONFIG, PARSE, STORE, CanopyError, ConfigError, MissingRun
from .pipeline import RunConfig, run
from .plotting import plot_comparison, plot_gallery
from .report import rebuild_reports
from .segmentation import DEFAULT_TAU, EstimatorKind
from .store import StoreLayout, atomic_write, read_png
from .tiff_reader import DEFAULT_BAND, open_container, read_page
from .tiling import CHUNK_SIZE

EXIT_OK = 0
EXIT_RUN = 1
EXIT_CODES = {CONFIG: 2, PARSE: 3, STORE: 4}

log = logging.getLogger("canopycover")

# flag defaults; None on the parser so a config file can fill gaps
RUN_DEFAULTS = {
    "band": DEFAULT_BAND,
    "chunk_size": CHUNK_SIZE,
    "estimator": "threshold",
    "tau": DEFAULT_TAU,
    "store": None,
    "workers": 1,
    "confidence_floor": None,
    "overlays": False,
    "overlay_alpha": 0.4,
    "ground_truth": None,
    "inputs": [],
}


def exit_code_for(exc):
    return EXIT_CODES.get(getattr(exc, "exit_class", None), EXIT_RUN)


def _fail(exc):
    print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
    return exit_code_for(exc)


# --- inspect -----------------------------------------------------------------

def describe(path):
    container = open_container(path)
    lines = [
        f"{path}",
        f"  variant: {container.variant} (magic {container.magic}), byte order: {container.byte_order}",
        f"  pages: {container.page_count}",
    ]
    for i in range(container.page_count):
        page = read_page(container, i)
        if page.layout == "tiles":
            layout = f"tiles {page.tile_width}x{page.tile_height}"
        else:
            layout = f"strips of {page.rows_per_strip} rows"
        scale = "none" if page.geo_scale is None else f"{page.geo_scale.sx:g} x {page.geo_scale.sy:g} m/px"
        lines.append(
            f"  page {i}: {page.width}x{page.height}, {page.samples_per_pixel} samples, "
            f"{page.compression}, {layout} ({page.segment_count} segments), geo scale: {scale}"
        )
    return "\n".join(lines)


def cmd_inspect(args):
    status = EXIT_OK
    for path in args.files:
        try:
            print(describe(path))
        except CanopyError as exc:
            print(f"{path}: {type(exc).__name__}: {exc}", file=sys.stderr)
            status = status or exit_code_for(exc)
        except OSError as exc:
            print(f"{path}: {exc}", file=sys.stderr)
            status = status or EXIT_RUN
    return status


# --- run ---------------------------------------------------------------------

def load_config_file(path):
    try:
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
    except (OSError, ValueError) as exc:
        raise ConfigError(f"config file {path}: {exc}") from exc
    if not isinstance(doc, dict):
        raise ConfigError(f"config file {path}: expected a JSON object")
    doc = {k.replace("-", "_"): v for k, v in doc.items()}
    unknown = sorted(set(doc) - set(RUN_DEFAULTS))
    if unknown:
        raise ConfigError(f"config file {path}: unknown keys {', '.join(unknown)}")
    return doc


def resolve_run_options(args):
    """Flags win over the config file, which wins over defaults."""
    from_file = load_config_file(args.config) if args.config else {}
    opts = {}
    for key, default in RUN_DEFAULTS.items():
        flag = getattr(args, key, None)
        if key == "inputs":
            flag = flag or None
        if key == "overlays" and flag is False:
            flag = None
        opts[key] = flag if flag is not None else from_file.get(key, default)
    if not opts["store"]:
        raise ConfigError("--store is required (flag or config file)")
    return opts


def build_run_config(opts, figures=True):
    estimator = EstimatorKind(
        opts["estimator"],
        tau=int(opts["tau"]),
        confidence_floor=opts["confidence_floor"],
    )
    return RunConfig(
        input_paths=list(opts["inputs"]),
        store_root=opts["store"],
        band=int(opts["band"]),
        chunk_size=int(opts["chunk_size"]),
        estimator=estimator,
        workers=int(opts["workers"]),
        overlays=bool(opts["overlays"]),
        overlay_alpha=float(opts["overlay_alpha"]),
        figures=figures,
    )


class Progress:
    """Chunk counters on standard error."""

    def __init__(self, stream=sys.stderr, every=500):
        self.stream = stream
        self.every = every

    def __call__(self, file_name, done, total):
        if done == total or done % self.every == 0:
            end = "\n" if done == total else "\r"
            print(f"{file_name}: {done}/{total} chunks", end=end, file=self.stream, flush=True)


def cmd_run(args):
    try:
        opts = resolve_run_options(args)
        config = build_run_config(opts, figures=not args.no_figures)
    except CanopyError as exc:
        return _fail(exc)

    result = run(config, progress=None if args.quiet else Progress())
    for path, exc in result.failures:
        print(f"failed: {path}: {type(exc).__name__}: {exc}", file=sys.stderr)
    if result.files:
        print(metrics.render_csv(result.rows), end="")
        s = result.summary
        print(f"Area covered out of total area: {metrics.format_percent(s.area_covered_percent)}%")
        print(f"Green canopy cover ({config.estimator.kind}): {metrics.format_percent(s.canopy_percent)}%")
        if opts["ground_truth"] is not None and s.canopy_percent is not None:
            row = metrics.compare_estimates(
                float(opts["ground_truth"]), {config.estimator.kind: s.canopy_percent}, "run"
            )
            layout = StoreLayout(config.store_root)
            layout.write_report("comparison.csv", metrics.comparison_csv([row]))
    if result.failures:
        return max(exit_code_for(exc) for _, exc in result.failures)
    return EXIT_OK


# --- report ------------------------------------------------------------------

def cmd_report(args):
    try:
        rows = rebuild_reports(StoreLayout(args.store), figures=not args.no_figures)
    except CanopyError as exc:
        return _fail(exc)
    print(metrics.render_csv(rows), end="")
    return EXIT_OK


# --- compare -----------------------------------------------------------------

def parse_run_spec(spec):
    """``NAME=PERCENT`` or ``NAME=path/to/summary.json`` -> (name, percent)."""
    name, sep, value = spec.partition("=")
    if not sep or not name:
        raise ConfigError(f"--run expects NAME=PERCENT or NAME=SUMMARY.json, got {spec!r}")
    try:
        return name, float(value)
    except ValueError:
        pass
    path = Path(value)
    if path.is_dir():
        path = path / "reports" / "summary.json"
    if not path.is_file():
        raise MissingRun(f"run {name!r}: no summary at {path}")
    try:
        percent = json.loads(path.read_text(encoding="utf-8"))["canopyPercent"]
    except (ValueError, KeyError) as exc:
        raise MissingRun(f"run {name!r}: unreadable summary {path}: {exc}") from exc
    if percent is None:
        raise MissingRun(f"run {name!r}: summary {path} has no canopy percentage")
    return name, float(percent)


def cmd_compare(args):
    try:
        if not args.run:
            raise MissingRun("no --run given")
        estimates = dict(parse_run_spec(spec) for spec in args.run)
        row = metrics.compare_estimates(args.ground_truth, estimates, args.site)
    except CanopyError as exc:
        return _fail(exc)
    except ValueError as exc:
        return _fail(ConfigError(str(exc)))
    text = metrics.comparison_csv([row])
    if args.output:
        atomic_write(args.output, text.encode("utf-8"))
    print(text, end="")
    if args.figure:
        plot_comparison(row, args.figure)
    return EXIT_OK


# --- gallery -----------------------------------------------------------------

def cmd_gallery(args):
    layout = StoreLayout(args.store)
    overlays = layout.list_overlays()
    if not overlays:
        print(f"error: no overlays under {layout.root} (run with --overlays)", file=sys.stderr)
        return EXIT_CODES[STORE]
    picks = sorted(random.Random(args.seed).sample(overlays, min(args.count, len(overlays))))
    images = [read_png(p) for p in picks]
    titles = [f"{p.parent.parent.name}/{p.stem}" for p in picks]
    output = args.output or layout.reports_dir / "gallery.png"
    Path(output).parent.mkdir(parents=True, exist_ok=True)
    plot_gallery(images, output, titles)
    print(output)
    return EXIT_OK


# --- parser ------------------------------------------------------------------

def build_parser():
    parser = argparse.ArgumentParser(prog="canopycover", description=__doc__.split("\n")[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("inspect", help="describe TIFF containers and their pages")
    p.add_argument("files", nargs="+")
    p.set_defaults(func=cmd_inspect)

    p = sub.add_parser("run", help="tile, estimate canopy and report")
    p.add_argument("inputs", nargs="*", help="TIFF/BigTIFF files")
    p.add_argument("--config", help="JSON file with run options; flags take precedence")
    p.add_argument("--band", type=int, help=f"page index to analyse (default {DEFAULT_BAND})")
    p.add_argument("--chunk-size", type=int, help=f"chunk edge in pixels (default {CHUNK_SIZE})")
    p.add_argument("--estimator", choices=EstimatorKind.KINDS, help="canopy estimator (default threshold)")
    p.add_argument("--tau", type=int, help=f"Excess Green cutoff for the threshold estimator (default {DEFAULT_TAU})")
    p.add_argument("--store", help="artifact store root")
    p.add_argument("--workers", type=int, help="chunk worker threads (default 1)")
    p.add_argument("--confidence-floor", type=float, help="drop detection boxes below this confidence")
    p.add_argument("--overlays", action="store_true", default=None, help="write canopy overlay PNGs")
    p.add_argument("--overlay-alpha", type=float, help="overlay blend weight (default 0.4)")
    p.add_argument("--ground-truth", type=float, help="ground-truth canopy percent; writes comparison.csv")
    p.add_argument("--no-figures", action="store_true")
    p.add_argument("-q", "--quiet", action="store_true", help="no progress output")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("report", help="rebuild run reports from stored manifests")
    p.add_argument("--store", required=True)
    p.add_argument("--no-figures", action="store_true")
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("compare", help="compare estimator runs against ground truth")
    p.add_argument("--ground-truth", type=float, required=True)
    p.add_argument("--run", action="append", metavar="NAME=PCT|SUMMARY", help="repeatable")
    p.add_argument("--site", default="site")
    p.add_argument("-o", "--output", help="comparison CSV path")
    p.add_argument("--figure", help="write a comparison bar chart here")
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("gallery", help="render a grid of stored overlays")
    p.add_argument("--store", required=True)
    p.add_argument("-o", "--output")
    p.add_argument("--count", type=int, default=24)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_gallery)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
