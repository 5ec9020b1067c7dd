import numpy as np
import pytest

from tiff_writer import Page, write_tiff


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture
def make_tiff(tmp_path):
    """Write pages to a fresh file under tmp_path and return its path."""
    counter = iter(range(10**6))

    def make(pages, name=None, **kw):
        if isinstance(pages, (Page, np.ndarray)):
            pages = [pages]
        pages = [Page(pixels=p) if isinstance(p, np.ndarray) else p for p in pages]
        path = tmp_path / (name or f"fixture_{next(counter)}.tif")
        write_tiff(path, pages, **kw)
        return path

    return make


def random_rgb(rng, h, w, zero_fraction=0.0, spp=3):
    px = rng.integers(0, 256, (h, w, spp), dtype=np.uint8)
    if zero_fraction:
        px[rng.random((h, w)) < zero_fraction] = 0
    return px


# --- acceptance reporting ----------------------------------------------------
# Tests marked ``@pytest.mark.acceptance(n, "title")`` get one PASS/FAIL line
# each, printed to the terminal after the run.

_acceptance_lines = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("acceptance")
    if marker is None or not (report.when == "call" or report.failed):
        return
    number, title = marker.args
    verdict = "PASS" if report.passed else "FAIL"
    line = f"acceptance {number}: {verdict}  {title}"
    _acceptance_lines[number] = line


def pytest_terminal_summary(terminalreporter):
    if _acceptance_lines:
        terminalreporter.section("acceptance criteria")
        for number in sorted(_acceptance_lines):
            terminalreporter.write_line(_acceptance_lines[number])
