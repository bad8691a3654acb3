import json
import subprocess
import sys

import pytest

from conftest import FIXTURES

# the stationary metric runs the kinematic stage on 10 fiber coordinates
BUDGET = {"schwarzschild_stationary": 60.0}


@pytest.mark.parametrize("name", sorted(FIXTURES))
def test_fixture_runs_within_budget(name):
    # a fresh process, as a user would run it; the pytest process carries
    # large sympy caches from earlier tests
    out = subprocess.run(
        [sys.executable, "-m", "lred.cli", "all", str(FIXTURES[name]), "--timing", "--format", "json"],
        capture_output=True, text=True, check=False,
    )
    rep = json.loads(out.stdout)
    assert rep["status"] in ("ok", "finding")
    assert rep["timing_s"] < BUDGET.get(name, 10.0)
