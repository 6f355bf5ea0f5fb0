"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line."""

import time

import pytest

from renvol import acceptance as acc

SUMMARY: list[str] = []


@pytest.fixture(scope="module")
def pipeline():
    return acc.run_pipeline(acc.DEFAULT_SEED)


def _report(capsys, line):
    SUMMARY.append(line)
    with capsys.disabled():
        print("\n" + line)


@pytest.mark.parametrize("k", range(1, 10))
def test_criterion(pipeline, capsys, k):
    reports, timings = pipeline
    (line,) = acc.summary_lines({k: reports[k]}, {k: timings[k]})
    _report(capsys, line)
    assert reports[k]["passed"], reports[k]
    assert timings[k] < acc.RUNTIME_LIMITS[k]


def test_criterion_10_determinism(pipeline, capsys):
    reports, _ = pipeline
    t0 = time.perf_counter()
    rep = acc.criterion_10(acc.DEFAULT_SEED, first=reports)
    elapsed = time.perf_counter() - t0
    ok = rep["passed"] and elapsed < acc.RUNTIME_LIMITS[10]
    _report(capsys, f"criterion 10 {'PASS' if ok else 'FAIL'} {elapsed:7.2f}s  {acc.NAMES[10]}")
    assert rep["identical"]
    assert elapsed < acc.RUNTIME_LIMITS[10]
