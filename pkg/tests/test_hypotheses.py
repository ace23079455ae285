"""Verdict matrix of the boundary/integrability checks on the presets."""

import numpy as np
import pytest

from qsdlab import (check_all, check_h5, check_hh, drift_from_growth,
                    inv_q_criterion, linear_growth, logistic_growth, ou_drift,
                    preset_model, report_to_rows)


@pytest.fixture(scope="module")
def logistic_report():
    return check_all(preset_model("logistic", "growth",
                                  {"r": 1.0, "c": 1.0, "gamma": 1.0}))


def test_logistic_all_checks_hold(logistic_report):
    assert logistic_report.verdicts == {name: "holds" for name in
                                        ("h1", "h2", "h3", "h4", "h5", "hh")}
    assert logistic_report.all_hold()


def test_ou_return_time_check_fails():
    rep = check_all(preset_model("ou", "drift", {"theta": 1.0}))
    v = rep.verdicts
    assert v["h1"] == v["h2"] == v["h3"] == v["h4"] == "holds"
    assert v["h5"] == "fails"
    # no growth form attached: the growth check cannot run
    assert v["hh"] == "inconclusive"
    assert not rep.all_hold()


def test_zero_growth_fails_growth_check():
    rep = check_all(preset_model("linear", "growth",
                                 {"r": 0.0, "gamma": 1.0}))
    assert rep.verdicts["hh"] == "fails"


def test_h5_two_forms_agree_on_presets(logistic_report):
    # the return-time integral has two equivalent double-integral forms;
    # both are computed and must reach the same verdict
    assert "agreement=yes" in logistic_report.checks["h5"].detail
    for model in (preset_model("ou", "drift", {"theta": 1.0}),
                  preset_model("linear", "growth", {"r": 0.0, "gamma": 1.0}),
                  preset_model("linear", "growth", {"r": -1.0, "gamma": 1.0})):
        c = check_h5(model.drift)
        assert "agreement=yes" in c.detail, c.detail


def test_subcritical_linear_matrix():
    # pull-in drift passes the boundary checks, but the return-time
    # integrand only decays like 1/y: convergence is not uniform here
    rep = check_all(preset_model("linear", "growth",
                                 {"r": -1.0, "gamma": 1.0}))
    v = rep.verdicts
    assert v["h1"] == v["h2"] == v["h3"] == v["h4"] == "holds"
    assert v["h5"] == "fails"
    assert v["hh"] == "holds"   # -z/sqrt(z) does run off to -infinity


def test_growth_check_flags_weak_decline():
    assert check_hh(logistic_growth(1.0, 1.0, 1.0)).verdict == "holds"
    assert check_hh(linear_growth(-1.0, 1.0)).verdict == "holds"
    # decline like -sqrt(z) plateaus in the probe: too slow
    weak = preset_model("custom", "growth",
                        {"expression": "0 - sqrt(z)", "gamma": 1.0})
    assert check_hh(weak.growth).verdict == "fails"


def test_inverse_drift_integrability_split():
    # cubic-growth drift: 1/q integrable at infinity; linear drift: not
    d_log = drift_from_growth(logistic_growth(1.0, 1.0, 1.0))
    assert bool(inv_q_criterion(d_log).verdict)
    assert not bool(inv_q_criterion(ou_drift(1.0)).verdict)


def test_report_rows_shape(logistic_report):
    rows = report_to_rows(logistic_report)
    assert [r[0] for r in rows] == ["h1", "h2", "h3", "h4", "h5", "hh"]
    assert all(r[1] in ("holds", "fails", "inconclusive") for r in rows)
    assert all(isinstance(r[4], str) for r in rows)  # json trail
