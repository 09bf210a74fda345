"""Acceptance-criteria summary reporter.

Tests marked ``@pytest.mark.criterion("<name>")`` get one PASS/FAIL line each
in the terminal summary, in a fixed order, so the acceptance status is
readable at a glance. Lives at the repo root because item-level hooks in a
conftest only fire for tests under its own directory, and criteria come from
both ``tests/`` and ``shadow/tests/``.
"""
from __future__ import annotations

import pytest

_CRITERIA_ORDER = [
    "f1_arithmetic",
    "auroc_oracle_equivalence",
    "sage_exactness",
    "pruning_minimality",
    "negative_soundness",
    "static_metric_oracles",
    "split_and_length_filters",
    "end_to_end_determinism",
    "informative_feature_recovery",
    "shadow_separable_task",
    "cross_component_auroc_agreement",
]
_criteria_results: dict[str, str] = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    name = marker.args[0]
    if report.when == "call":
        _criteria_results[name] = "PASS" if report.passed else "FAIL"
    elif report.when == "setup" and not report.passed:
        _criteria_results[name] = "SKIP" if report.skipped else "FAIL"


def pytest_terminal_summary(terminalreporter):
    if not _criteria_results:
        return
    terminalreporter.section("acceptance criteria")
    names = _CRITERIA_ORDER + sorted(set(_criteria_results) - set(_CRITERIA_ORDER))
    for name in names:
        if name in _criteria_results:
            terminalreporter.write_line(f"{_criteria_results[name]:4s}  {name}")
