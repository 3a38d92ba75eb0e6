import time

import numpy as np
import pytest

from dynode import synthetic
from dynode.toy_decoder import InvertConfig, ToyDecoder, invert
from dynode.training import TrainConfig, fit
from dynode.trajectory import LatentSequence


class Timed:
    def __init__(self, value, seconds):
        self.value = value
        self.seconds = seconds


def _timed_fit(seq, decoder, cfg=TrainConfig()):
    t0 = time.perf_counter()
    m = fit(seq, decoder, cfg)
    return Timed(m, time.perf_counter() - t0)


@pytest.fixture(scope="session")
def mlp_decoder():
    return ToyDecoder("mlp", seed=0, dim=8)


@pytest.fixture(scope="session")
def linear_decoder():
    return ToyDecoder("linear", seed=0, dim=8)


@pytest.fixture(scope="session")
def spiral_regular():
    return synthetic.spiral8("regular")


@pytest.fixture(scope="session")
def spiral_irregular():
    return synthetic.spiral8("irregular", seed=0)


@pytest.fixture(scope="session")
def spiral_regular_fit(spiral_regular, mlp_decoder):
    return _timed_fit(spiral_regular, mlp_decoder)


@pytest.fixture(scope="session")
def spiral_irregular_fit(spiral_irregular, mlp_decoder):
    return _timed_fit(spiral_irregular, mlp_decoder)


@pytest.fixture(scope="session")
def arc_sequence():
    spec = synthetic.SystemSpec("arc", embed_dim=2, intrinsic_dim=2, embed_seed=None)
    return synthetic.sample_at(spec, np.array([0.0, 0.5, 1.0]), np.array([False, True, False]))


@pytest.fixture(scope="session")
def arc_fit(arc_sequence):
    return _timed_fit(arc_sequence, None)


@pytest.fixture(scope="session")
def pipeline(spiral_regular, linear_decoder):
    """Render spiral-8 with the linear decoder, invert every frame, fit both code sets."""
    images = [linear_decoder.decode(z) for z in spiral_regular.codes]
    codes = np.stack([invert(linear_decoder, x, InvertConfig(seed=i)) for i, x in enumerate(images)])
    inverted = LatentSequence(spiral_regular.times, codes, spiral_regular.heldout)
    direct = _timed_fit(spiral_regular, linear_decoder)
    via_inversion = _timed_fit(inverted, linear_decoder)
    return {"inverted": inverted, "direct": direct.value, "via_inversion": via_inversion.value}


# -- acceptance reporting ----------------------------------------------------

_criteria: dict = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion")


def pytest_runtest_logreport(report):
    marker = getattr(report, "criterion", None)
    if marker is None:
        return
    failed = report.failed
    if report.when == "call" or failed:
        prev = _criteria.get(marker[0], (marker[1], True))
        _criteria[marker[0]] = (marker[1], prev[1] and not failed)


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    mark = item.get_closest_marker("criterion")
    if mark is not None:
        outcome.get_result().criterion = mark.args


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_criteria):
        title, ok = _criteria[number]
        terminalreporter.write_line(f"criterion {number:>2}: {'PASS' if ok else 'FAIL'}  {title}")
