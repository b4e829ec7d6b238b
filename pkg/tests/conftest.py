import os

os.environ.setdefault("OMP_NUM_THREADS", "1")
os.environ.setdefault("OPENBLAS_NUM_THREADS", "1")

import hypothesis
import numpy as np
import pytest

from maskvid.core import GridShape, VocabularyLayout, make_rng
from maskvid.harness import SyntheticDatasetSpec, gen_synthetic
from maskvid.tokenizer import fit_codebook

np.seterr(all="raise", under="ignore")

hypothesis.settings.register_profile("default", max_examples=60, deadline=None)
hypothesis.settings.register_profile("fast", max_examples=10, deadline=None)
hypothesis.settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))


@pytest.fixture(scope="session")
def shape():
    return GridShape.for_video((16, 32, 32), (4, 8, 8))


@pytest.fixture(scope="session")
def layout():
    return VocabularyLayout(n_classes=4, v_vis=32)


@pytest.fixture(scope="session")
def dataset():
    return gen_synthetic(SyntheticDatasetSpec(n_videos=40, seed=11))


@pytest.fixture(scope="session")
def codebook(dataset, shape):
    cb, _ = fit_codebook(dataset[0], shape, 32, 15, make_rng(5))
    return cb


# -- acceptance summary -----------------------------------------------------

_CRITERIA: list[tuple[str, str]] = []


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    if rep.when == "call" or (rep.when == "setup" and not rep.passed):
        _CRITERIA.append((marker.args[0], "PASS" if rep.passed else "FAIL"))


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.write_sep("=", "acceptance criteria")
    for label, status in _CRITERIA:
        terminalreporter.write_line(f"{status}  {label}")
