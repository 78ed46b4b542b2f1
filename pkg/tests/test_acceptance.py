"""Every acceptance criterion at its stated tolerance.

The whole suite runs once (in parallel, as ``wassflow validate --suite all``
does); each test then checks one record. A pass/fail line per criterion is
printed in the terminal summary.
"""
import pytest

from wassflow.validation import SUITES, run_suite

RESULTS = []

CRITERIA = [
    "1-mass-conservation",
    "2-energy-dissipation",
    "3-stationary-law",
    "4-heat-kernel",
    "5-lagrangian-eulerian",
    "6-probability-flow-ode",
    "7-ddpm-vp",
    "8-dissipation-identity",
    "9-jko-fp",
    "10-w2-oracle",
    "11-geodesic",
    "12-benamou-brenier",
    "13-straight-line",
    "14-shock-prediction",
    "15-burgers-characteristics",
    "runtime-validate-all",
]


@pytest.fixture(scope="module")
def records():
    return {r["criterion_id"]: r for r in run_suite("all")}


def _line(rec):
    status = "PASS" if rec["pass"] else "FAIL"
    failing = [c["name"] for c in rec["checks"] if not c["pass"]]
    tail = f"  failing: {'; '.join(failing)}" if failing else ""
    return (
        f"{status} {rec['criterion_id']}: measured={rec['measured']!r} "
        f"expected={rec['expected']!r} tol={rec['tolerance']!r} ({len(rec['checks'])} checks){tail}"
    )


def test_suite_enumerates_every_criterion(records):
    assert len(SUITES) == 15
    assert list(records) == CRITERIA


@pytest.mark.parametrize("cid", CRITERIA)
def test_criterion(records, cid):
    rec = records[cid]
    RESULTS.append(_line(rec))
    assert rec["pass"], _line(rec)
    assert all(c["pass"] for c in rec["checks"])
