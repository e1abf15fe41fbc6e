from pathlib import Path

import numpy as np
import pytest

from indiloop.blocks import LoopConfig, desk_loop, desk_plant, make_roll

CONFIG_DIR = Path(__file__).resolve().parent.parent / "configs"


@pytest.fixture
def roll():
    return make_roll(-2.0, 1.0)


@pytest.fixture
def ideal_cfg():
    return LoopConfig(K_p=5.0, K_v=50.0, K_r=4.0, T_act=0.02, B_hat=1.0)


@pytest.fixture
def desk():
    m = desk_plant()
    return m, desk_loop(m)


@pytest.fixture
def log_grid():
    return np.logspace(-2, 3, 100)


@pytest.fixture
def config_dir():
    return CONFIG_DIR


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for n in range(1, 12):
        if n in results:
            ok, detail = results[n]
            terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'} criterion {n}: {detail}")
        else:
            terminalreporter.write_line(f"FAIL criterion {n}: did not run to completion")
