"""Exit criteria for the build. Each test prints a PASS/FAIL line in the run summary."""

import json
import math
import time
import tracemalloc

import numpy as np
import pytest

from canopycover import metrics
from canopycover.cli import main
from canopycover.pipeline import RunConfig, run
from canopycover.segmentation import CanopyMask, EstimatorKind
from canopycover.store import StoreLayout
from canopycover.tiff_reader import decode_window, open_container, read_page
from canopycover.tiling import PixelAccount, account_chunk, extract_chunk, plan_grid
from city_ledger import AREA_COVERED_HEADLINE, CANOPY_HEADLINE, CITY_ROWS, VALIDATION_SITE
from conftest import random_rgb
from instrumented import CountingReader
from tiff_writer import Page, write_tiff

pytestmark = pytest.mark.filterwarnings("error::RuntimeWarning")


def log_uniform_dims(rng, n, upper):
    return np.exp(rng.uniform(0, math.log(upper), (n, 2))).astype(int).clip(1, upper)


@pytest.mark.acceptance(1, "city ledger percentages and headlines reproduce from raw counts")
def test_ledger_reproduction():
    start = time.perf_counter()
    rows = [
        metrics.file_report(name, [PixelAccount(total, covered)], [seg])
        for name, total, covered, seg, _, _ in CITY_ROWS
    ]
    summary = metrics.aggregate(rows)
    elapsed = time.perf_counter() - start

    for row, (_, _, _, _, cover_shown, seg_shown) in zip(rows, CITY_ROWS):
        assert metrics.format_percent(row.cover_percentage) == cover_shown, row.file_name
        assert metrics.format_percent(row.segmentation_percentage) == seg_shown, row.file_name
    assert metrics.format_percent(summary.area_covered_percent) == AREA_COVERED_HEADLINE
    assert abs(summary.canopy_percent - CANOPY_HEADLINE) <= 0.05
    assert elapsed < 1.0


@pytest.mark.acceptance(2, "validation-site deltas from the compare command")
def test_validation_site_deltas(capsys):
    site = VALIDATION_SITE
    code = main([
        "compare", "--ground-truth", str(site["groundTruth"]),
        "--run", f"detection={site['detection']}",
        "--run", f"segmentation={site['segmentation']}",
        "--site", "validation",
    ])
    assert code == 0
    header, line = capsys.readouterr().out.splitlines()
    fields = dict(zip(header.split(","), line.split(",")))
    assert fields["detectionDelta"] == "-0.45"
    assert fields["segmentationDelta"] == "0.13"


@pytest.mark.acceptance(3, "100 random containers decode byte-identically")
def test_parser_round_trip(tmp_path):
    rng = np.random.default_rng(3)
    combos = [
        (big, comp, layout)
        for big in (False, True)
        for comp in ("none", "lzw", "deflate")
        for layout in ("strips", "tiles")
    ]
    dims = log_uniform_dims(rng, 100, 3000)
    dims[::20] = rng.integers(2600, 3001, (5, 2))  # a few near the upper bound
    start = time.perf_counter()
    for i in range(100):
        big, comp, layout = combos[i % len(combos)]
        h, w = map(int, dims[i])
        px = random_rgb(rng, h, w)
        tile = int(rng.choice([16, 64, 256, 512]))
        page = Page(
            pixels=px, compression=comp, layout=layout,
            rows_per_strip=int(rng.integers(1, h + 1)), tile_size=(tile, tile),
        )
        path = tmp_path / f"rt{i}.tif"
        write_tiff(path, [page], bigtiff=big, byteorder=rng.choice(["<", ">"]))
        decoded = decode_window(read_page(open_container(path), 0), 0, 0, w, h)
        assert decoded.pixels.tobytes() == px.tobytes(), (i, big, comp, layout, h, w)
        path.unlink()
    assert time.perf_counter() - start < 60


@pytest.mark.acceptance(4, "chunk accounting matches whole-image brute force for 200 pages")
def test_tiling_oracle(tmp_path):
    rng = np.random.default_rng(4)
    start = time.perf_counter()
    for i, (h, w) in enumerate(log_uniform_dims(rng, 200, 2000)):
        h, w = int(h), int(w)
        px = random_rgb(rng, h, w, zero_fraction=float(rng.uniform(0, 1)))
        path = tmp_path / f"t{i}.tif"
        write_tiff(path, [Page(pixels=px, rows_per_strip=int(rng.integers(1, 300)))])
        page = read_page(open_container(path), 0)
        grid = plan_grid(w, h)
        assert len(grid) == math.ceil(h / 640) * math.ceil(w / 640)
        total = covered = 0
        for ref in grid.refs("t"):
            account = account_chunk(extract_chunk(page, ref))
            total += account.total_pixels
            covered += account.covered_pixels
        assert total == w * h
        assert covered == int(np.count_nonzero(px.any(axis=2)))
        path.unlink()
    assert time.perf_counter() - start < 30


@pytest.fixture(scope="module")
def huge_bigtiff(tmp_path_factory):
    size, tile = 20000, 256

    def tile_fn(x0, y0, w, h):
        # constant colour per tile, derived from its position
        colour = [(x0 // tile) % 251 + 1, (y0 // tile) % 241 + 1, (x0 + y0) // tile % 239 + 1]
        return np.broadcast_to(np.array(colour, np.uint8), (h, w, 3))

    path = tmp_path_factory.mktemp("huge") / "huge.tif"
    write_tiff(
        path,
        [Page(shape=(size, size, 3), tile_fn=tile_fn, layout="tiles", tile_size=(tile, tile), compression="deflate")],
        bigtiff=True,
    )
    return path, tile_fn, tile


@pytest.mark.acceptance(5, "one window from a 20000x20000 BigTIFF reads only overlapping tiles")
def test_streaming_bound(huge_bigtiff):
    path, tile_fn, tile = huge_bigtiff
    page = read_page(open_container(path), 0)
    assert (page.width, page.height) == (20000, 20000)
    x0, y0, size = 7013, 12345, 640

    first_col, last_col = x0 // tile, (x0 + size - 1) // tile
    first_row, last_row = y0 // tile, (y0 + size - 1) // tile
    across = math.ceil(page.width / tile)
    expected = sorted(r * across + c for r in range(first_row, last_row + 1) for c in range(first_col, last_col + 1))

    reader = CountingReader(path)
    tracemalloc.start()
    try:
        window = decode_window(page, x0, y0, size, size, reader)
        _, peak = tracemalloc.get_traced_memory()
    finally:
        tracemalloc.stop()
        reader.close()

    assert sorted(reader.reads) == expected
    window_bytes = size * size * 3
    segment_bytes = tile * tile * 3
    assert peak < 4 * (window_bytes + segment_bytes), peak

    oracle = np.empty((size, size, 3), np.uint8)
    for y in range(y0 - y0 % tile, y0 + size, tile):
        for x in range(x0 - x0 % tile, x0 + size, tile):
            ys, xs = max(y, y0), max(x, x0)
            ye, xe = min(y + tile, y0 + size), min(x + tile, x0 + size)
            oracle[ys - y0:ye - y0, xs - x0:xe - x0] = tile_fn(x, y, xe - xs, ye - ys)
    assert np.array_equal(window.pixels, oracle)


@pytest.mark.acceptance(6, "inscribed disc: box coverage over mask coverage is 4/pi within 2%")
def test_box_vs_mask_bias(tmp_path):
    size, radius, centre = 640, 200, 320
    px = np.full((size, size, 3), 120, np.uint8)
    source = tmp_path / "disc.tif"
    write_tiff(source, [Page(pixels=px)] * 3)

    store = tmp_path / "store"
    layout = StoreLayout(store)
    ref = plan_grid(size, size).ref(0, 0, "disc")
    yy, xx = np.mgrid[:size, :size]
    disc = (xx + 0.5 - centre) ** 2 + (yy + 0.5 - centre) ** 2 <= radius**2
    layout.write_mask(CanopyMask(ref, disc))
    det = layout.detections_path(ref)
    det.parent.mkdir(parents=True, exist_ok=True)
    side = 2 * radius / size
    det.write_text(f"0 {centre / size} {centre / size} {side} {side} 0.9\n")

    by_mask = run(RunConfig([source], store, estimator=EstimatorKind("mask"), figures=False))
    by_box = run(RunConfig([source], store, estimator=EstimatorKind("boxes"), figures=False))
    ratio = by_box.rows[0].segmentation_pixels / by_mask.rows[0].segmentation_pixels
    assert abs(ratio / (4 / math.pi) - 1) <= 0.02, ratio


@pytest.mark.acceptance(7, "CSV, summary and manifests are identical for 1, 4 and 8 workers")
def test_worker_determinism(tmp_path):
    rng = np.random.default_rng(7)
    inputs = []
    for i, (comp, layout) in enumerate([("lzw", "strips"), ("deflate", "tiles"), ("none", "tiles")]):
        px = random_rgb(rng, 1500 + 97 * i, 1700 - 131 * i, zero_fraction=0.1)
        px[: 640 * (i + 1), :640] = 0  # some skippable chunks
        path = tmp_path / f"f{i}.tif"
        write_tiff(path, [Page(pixels=px[:9, :9])] * 2 + [Page(pixels=px, compression=comp, layout=layout)])
        inputs.append(str(path))

    snapshots = []
    for workers in (1, 4, 8):
        store = tmp_path / f"store{workers}"
        assert main(["run", *inputs, "--store", str(store), "--workers", str(workers), "-q", "--no-figures"]) == 0
        files = sorted(store.glob("*/manifest.json")) + [store / "reports" / "coverage.csv", store / "reports" / "summary.json"]
        snapshots.append({p.relative_to(store).as_posix(): p.read_bytes() for p in files})
    assert len(snapshots[0]) == 5
    assert snapshots[0] == snapshots[1] == snapshots[2]


@pytest.mark.acceptance(8, "scene with exactly 33.0000% green yields threshold coverage within 0.1 pp")
def test_synthetic_ground_truth(tmp_path):
    rng = np.random.default_rng(8)
    h, w = 1000, 1500
    n = h * w
    green_count = n * 33 // 100
    assert green_count * 100 == n * 33  # the fraction is exact

    px = np.empty((n, 3), np.uint8)
    green = rng.permutation(n)[:green_count]
    is_green = np.zeros(n, bool)
    is_green[green] = True
    px[is_green, 0] = rng.integers(0, 60, green_count)
    px[is_green, 1] = rng.integers(160, 256, green_count)
    px[is_green, 2] = rng.integers(0, 60, green_count)
    # background: nonzero colours with 2G - R - B at most 30
    rest = n - green_count
    r = rng.integers(1, 256, rest)
    b = rng.integers(1, 256, rest)
    g_max = np.minimum((r + b + 30) // 2, 255)
    px[~is_green] = np.stack([r, (rng.random(rest) * (g_max + 1)).astype(int), b], axis=1)
    px = px.reshape(h, w, 3)

    path = tmp_path / "scene.tif"
    write_tiff(path, [Page(pixels=px[:5, :5])] * 2 + [Page(pixels=px, compression="lzw")])
    result = run(RunConfig([path], tmp_path / "store", figures=False))
    summary = json.loads((tmp_path / "store" / "reports" / "summary.json").read_text())
    assert result.rows[0].covered_pixels == n
    assert abs(summary["canopyPercent"] - 33.0) <= 0.1
