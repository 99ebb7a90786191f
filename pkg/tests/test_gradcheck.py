"""Finite-difference validation of the autodiff engine on real loss graphs.

[DERIVED] oracle: central finite differences of each scalar objective,
evaluated in float32 with a float64 shadow pass.
"""

import time

from svada.gradcheck import BATTERY, FLOAT32_TOL, FLOAT64_TOL, run_battery


def test_battery_covers_every_loss_term():
    names = [name for name, _ in BATTERY]
    assert len(names) >= 8
    joined = " ".join(names)
    for term in ("kl", "svae", "mi", "ctc", "adv", "cls", "grl", "lstm"):
        assert term in joined, f"no battery case exercises {term}"


def test_battery_passes_within_tolerances():
    results = run_battery(seed=0)
    assert len(results) >= 8
    for name, e32, e64, passed in results:
        assert passed, f"{name}: float32 err {e32:.3e}, float64 err {e64:.3e}"
        assert e32 < FLOAT32_TOL
        assert e64 < FLOAT64_TOL


def test_battery_is_fast_enough():
    t0 = time.perf_counter()
    run_battery(seed=1)
    assert time.perf_counter() - t0 < 60.0
