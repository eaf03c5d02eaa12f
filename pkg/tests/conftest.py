import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from fslab import FsParams, SelfSimilarBackground, solve_fs
from fslab.config import RunConfig
from fslab.runner import execute_run


@pytest.fixture(scope="session")
def blasius_profile():
    return solve_fs(FsParams.from_beta(0.0))


@pytest.fixture(scope="session")
def hiemenz_profile():
    return solve_fs(FsParams.from_beta(1.0))


@pytest.fixture(scope="session")
def profile_m05():
    return solve_fs(FsParams.from_m(0.5))


@pytest.fixture(scope="session")
def blasius_background(blasius_profile):
    return SelfSimilarBackground(blasius_profile)


def reference_config(m, **overrides):
    d = {"m": m, "epsilon": 1e-2, "seed": 1, "march": {"x_end": 500.0}}
    d.update(overrides)
    return RunConfig.from_dict(d)


@pytest.fixture(scope="session")
def run_m0():
    return execute_run(reference_config(0.0))


@pytest.fixture(scope="session")
def run_m05():
    return execute_run(reference_config(0.5))


@pytest.fixture(scope="session")
def run_m1():
    return execute_run(reference_config(1.0))
