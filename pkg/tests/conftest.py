import os
import sys

import numpy as np
import pytest

sys.path.insert(0, os.path.dirname(__file__))

from dnn_nsr import datasets, fcnn, numeric  # noqa: E402


@pytest.fixture
def rng():
    return numeric.make_rng(12345)


def small_net(dims, seed=0, activation="tanh", output_activation="linear"):
    return fcnn.init_params(dims, numeric.make_rng(seed), activation, output_activation)


def small_problem(m=12, n=9, r=2, rho=0.4, seed=0):
    x = datasets.gen_synthetic(m, n, r, seed)
    return x, datasets.apply_mask(x, rho, seed + 1)


# criterion number -> (passed, detail); filled by test_acceptance.py
ACCEPTANCE = {}


def _verdict(passed):
    return "SKIP" if passed is None else ("PASS" if passed else "FAIL")


def record_criterion(number, passed, detail):
    """``passed`` of None marks a criterion that could not run here."""
    ACCEPTANCE[number] = (None if passed is None else bool(passed), detail)
    print("criterion %d: %s  %s" % (number, _verdict(passed), detail))


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.write_sep("=", "acceptance criteria")
    for number in sorted(ACCEPTANCE):
        passed, detail = ACCEPTANCE[number]
        terminalreporter.write_line("criterion %2d: %s  %s" % (number, _verdict(passed), detail))
