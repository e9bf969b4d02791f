"""End-to-end acceptance battery: one test per criterion, one line each.

Every criterion runs its full frozen protocol at seed 42 and prints its
pass/fail line; the assertion carries the measured detail.  Results are
cached so verify-style reruns inside one session stay cheap.

Budget note: the battery takes a bit over a minute, most of it in the
two Lyapunov scaling fits (AC-1, AC-2).
"""

import pytest

from kplab import acceptance

_cache: dict[str, acceptance.CriterionResult] = {}


def _run(name: str) -> acceptance.CriterionResult:
    if name not in _cache:
        _cache[name] = acceptance.run_criterion(name, seed=42)
    return _cache[name]


@pytest.mark.parametrize("name", list(acceptance.CRITERIA))
def test_criterion(name):
    res = _run(name)
    print(res.line())
    assert res.passed, res.detail


def test_suites_cover_all_criteria():
    assert set(acceptance.SUITES["all"]) == set(acceptance.CRITERIA)
    named = {c for suite, names in acceptance.SUITES.items()
             if suite != "all" for c in names}
    assert named == set(acceptance.CRITERIA)


def test_unknown_suite_rejected():
    with pytest.raises(KeyError):
        acceptance.run_suite("banana", seed=42)
