import math

import pytest

from berryfield import ParameterGrid, TimeAxis, build_eigenbundle, get_family
from berryfield.electro import BerryMaxwell


def default_grid(family):
    d = family.default_grid
    time = None
    if d.get("time"):
        t = d["time"]
        time = TimeAxis(t["t0"], t["span"] / (t["nt"] - 1), t["nt"])
    return ParameterGrid(tuple(d["origin"]), tuple(d["spacing"]), tuple(d["shape"]),
                         tuple(d.get("periodic", (False, False, False))), time)


def small_rotating_grid(n=11, nt=60, half=0.25, periods=1.0):
    h = 2 * half / (n - 1)
    span = periods * 2 * math.pi
    return ParameterGrid((-half,) * 3, (h,) * 3, (n,) * 3, time=TimeAxis(0.0, span / (nt - 1), nt))


@pytest.fixture(scope="session")
def zeeman_bundle():
    fam = get_family("spin-zeeman")
    return build_eigenbundle(fam, default_grid(fam), 0)


@pytest.fixture(scope="session")
def zeeman_ctx(zeeman_bundle):
    return BerryMaxwell(zeeman_bundle)


@pytest.fixture(scope="session")
def diagonal_bundle():
    fam = get_family("static-diagonal")
    return build_eigenbundle(fam, default_grid(fam), 1)


@pytest.fixture(scope="session")
def lattice_bundle():
    fam = get_family("two-band-lattice", m=1.0)
    return build_eigenbundle(fam, default_grid(fam), 0)


@pytest.fixture(scope="session")
def rotating_small():
    fam = get_family("rotating-two-level")
    return build_eigenbundle(fam, small_rotating_grid(), 0)


@pytest.fixture(scope="session")
def rotating_small_ctx(rotating_small):
    return BerryMaxwell(rotating_small)


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
        terminalreporter.write_line(line)
