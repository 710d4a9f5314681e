"""Shared fixtures.

Training the default bundle takes a few minutes, so it happens once per
session and every test that needs trained models shares the result.  Set
``TINYHR_TEST_BUNDLE`` to a directory written by ``tinyhr train`` (default
config, seed 0) to reuse it instead.  The acceptance suite still trains a
second bundle from scratch and requires it to match byte for byte.
"""

import os
import time

import pytest

from tinyhr.data import make_dataset
from tinyhr.models import load_bundle, train_bundle

ACCEPTANCE = pytest.StashKey[list]()


def pytest_configure(config):
    config.stash[ACCEPTANCE] = []


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash[ACCEPTANCE]
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines):
            terminalreporter.write_line(line)


@pytest.fixture
def verdict(request):
    """Record one PASS/FAIL line for an acceptance criterion, then assert it."""

    def record(number, title, ok, detail=""):
        line = f"{'PASS' if ok else 'FAIL'} criterion {number:2d}: {title}"
        if detail:
            line += f" [{detail}]"
        request.config.stash[ACCEPTANCE].append(line)
        print(line)
        assert ok, line

    return record


@pytest.fixture(scope="session")
def dataset():
    """The default 5687-frame synthetic dataset (seed 0)."""
    return make_dataset(seed=0)


@pytest.fixture(scope="session")
def trained(dataset):
    """``(bundle, stage_seconds)`` for the default configs.

    ``stage_seconds`` maps each model to its training wall time, or is
    empty when the bundle was loaded from ``TINYHR_TEST_BUNDLE``.
    """
    path = os.environ.get("TINYHR_TEST_BUNDLE")
    if path:
        return load_bundle(path), {}
    marks = []
    bundle = train_bundle(dataset, log=lambda msg: marks.append((msg.split()[-1], time.perf_counter())))
    marks.append(("end", time.perf_counter()))
    return bundle, {name: t1 - t0 for (name, t0), (_, t1) in zip(marks, marks[1:])}


@pytest.fixture(scope="session")
def bundle(trained):
    """Upsampler, classifier and regressor trained with the default configs."""
    return trained[0]
