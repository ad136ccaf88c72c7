"""End-to-end smoke tests for the python bindings."""

from pathlib import Path

import numpy as np
import pytest

import coidyn

CASE = str(Path(__file__).resolve().parents[2] / "cases" / "wecc9_gfl.json")


def test_validate_summary():
    info = coidyn.validate(CASE)
    assert info["name"] == "wecc9_gfl"
    assert info["bus_count"] == 9
    assert info["machine_count"] == 2
    assert info["converter_count"] == 1
    assert info["has_disturbance"] is True


def test_equivalents_match_known_point():
    (eq,) = coidyn.equivalents(CASE)
    assert eq["name"] == "f1"
    assert eq["h_f_s"] == pytest.approx(0.207212, abs=1e-5)
    assert eq["l_f"] == pytest.approx(-0.094669, abs=1e-5)
    assert eq["omega_osc_hz"] == pytest.approx(1.12733, abs=1e-4)
    assert eq["c_pi"] == pytest.approx(-2.5023, abs=1e-3)


def test_simulate_shapes_and_metrics():
    res = coidyn.simulate(CASE, "coi", duration=4.0, stride=10)
    names = res["signal_names"]
    t = res["time_s"]
    samples = res["samples"]
    assert samples.shape == (t.size, len(names))
    assert np.all(np.diff(t) > 0)

    omega = samples[:, names.index("omega_coi_pu")]
    assert abs(omega[0] - 1.0) < 1e-9
    assert res["disturbed"] is True
    fm = res["frequency_metrics"]
    assert fm["nadir_pu"] < 1.0
    assert fm["max_rocof_pu_per_s"] < 0.0


def test_simulate_is_deterministic():
    a = coidyn.simulate(CASE, "reference", duration=2.0)
    b = coidyn.simulate(CASE, "reference", duration=2.0)
    assert np.array_equal(a["samples"], b["samples"])
    assert np.array_equal(a["time_s"], b["time_s"])


def test_error_index_orders_the_models():
    kw = dict(duration=6.0, stride=10)
    coi = coidyn.error_index(CASE, "coi", "omega_coi_pu", **kw)
    sfr = coidyn.error_index(CASE, "sfr", "omega_coi_pu", **kw)
    assert 0.0 < coi < sfr


def test_sweep_monotonicity():
    res = coidyn.sweep(CASE, "pll.ki", [70.0, 140.0], ["h_f", "l_f"])
    assert all(row["ok"] for row in res["rows"])
    assert res["monotonicity"] == ["strictly_decreasing", "constant"]


def test_validation_errors_are_value_errors():
    with pytest.raises(ValueError):
        coidyn.validate("no/such/case.json")
    with pytest.raises(coidyn.CaseValidationError):
        coidyn.simulate(CASE, "hybrid")
    with pytest.raises(ValueError):
        coidyn.simulate(CASE, "coi", integrator="euler")
