"""Suite-wide guard: the solver's violation registry must stay empty.

Every converged solve files energy-descent and maximum-principle
breaches into ``solver.VIOLATIONS``; any test that leaves entries there
fails its teardown, so a silent monitor breach cannot hide behind a
passing assertion."""

import pytest

from qlert import solver


@pytest.fixture(autouse=True)
def fresh_violation_log():
    solver.clear_violations()
    yield
    leftovers = list(solver.VIOLATIONS)
    solver.clear_violations()
    assert not leftovers, f"monitor violations leaked: {leftovers}"
