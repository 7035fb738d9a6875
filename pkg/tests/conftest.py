"""Shared fixtures: cached enumeration censuses and the acceptance recorder."""

import os

import pytest

from rrtlab import oracle

_census_cache = {}
_tree_census_cache = {}


@pytest.fixture(scope="session")
def census():
    """chain_census(n, tracked=(1,2), cutoff=3), cached across the session
    (the n=6 universe costs ~10 s to sweep)."""

    def get(n: int, cutoff: int = 3):
        key = (n, cutoff)
        if key not in _census_cache:
            tracked = (1, 2) if n >= 2 else (1,)
            _census_cache[key] = oracle.chain_census(n, tracked=tracked, cutoff=cutoff)
        return _census_cache[key]

    return get


@pytest.fixture(scope="session")
def tree_census():
    def get(n: int):
        if n not in _tree_census_cache:
            _tree_census_cache[n] = oracle.tree_census(n)
        return _tree_census_cache[n]

    return get


def acceptance_scale() -> float:
    """Replicate-count scale for the acceptance suite; 1.0 = stated sizes.
    Only meant for development iteration (RRTLAB_ACCEPTANCE_SCALE=0.02);
    thresholds never scale."""
    return float(os.environ.get("RRTLAB_ACCEPTANCE_SCALE", "1.0"))


_acceptance_lines: list[str] = []


@pytest.fixture(scope="session")
def acceptance_recorder():
    def record(number: int, name: str, passed: bool, detail: str) -> None:
        scale = acceptance_scale()
        suffix = "" if scale == 1.0 else f"  [dev scale {scale:g}]"
        verdict = "PASS" if passed else "FAIL"
        _acceptance_lines.append(f"ACCEPTANCE {number:02d} {name}: {verdict} — {detail}{suffix}")

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if _acceptance_lines:
        terminalreporter.section("acceptance criteria")
        for line in _acceptance_lines:
            terminalreporter.write_line(line)
