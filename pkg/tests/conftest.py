import numpy as np
import pytest

from cdma_ee.games import ScenarioModel
from cdma_ee.scenario import SystemConfig, draw_scenario


@pytest.fixture(scope="session")
def config():
    return SystemConfig()


@pytest.fixture(scope="session")
def make_model(config):
    cache = {}

    def build(K, trial=0, cfg=None):
        cfg = cfg or config
        key = (K, trial, cfg)
        if key not in cache:
            cache[key] = ScenarioModel.from_scenario(draw_scenario(cfg, K, trial), cfg)
        return cache[key]

    return build


def moderate_powers(model, snr=20.0):
    """Powers giving each user a single-user SNR of ``snr`` on its main window."""
    h0 = model.signatures.h[:, 2]
    return snr * model.noise.variance / np.sum(h0 * h0, axis=1)


_ACCEPTANCE: dict[int, tuple[bool, str]] = {}


@pytest.fixture
def acceptance():
    """Record one verdict per acceptance criterion and fail the test if it did not hold."""
    def record(number, ok, detail):
        _ACCEPTANCE[number] = (bool(ok), detail)
        assert ok, f"criterion {number} failed: {detail}"
    return record


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_ACCEPTANCE):
        ok, detail = _ACCEPTANCE[number]
        terminalreporter.write_line(f"criterion {number:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
