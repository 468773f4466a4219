from __future__ import annotations

import numpy as np
import pytest

from src.riskineq.base import MeasureError
from src.riskineq.measures import (
    MEASURES,
    RiskDistribution,
    beta_table,
    beta_table_frame,
    cv,
    gini,
    gini_pairwise,
    measure_report,
    posterior_measure,
    prob_greater,
    symmetry_audit,
    symmetry_between,
    theil,
    var_logs,
)


def test_gini_of_two_points() -> None:
    assert gini(RiskDistribution(np.array([0.1, 0.3]))) == pytest.approx(0.25)


def test_gini_matches_pairwise_sum() -> None:
    rng = np.random.default_rng(42)
    for _ in range(200):
        n = int(rng.integers(1, 40))
        values = rng.uniform(0.001, 0.999, size=n)
        weights = rng.uniform(0.1, 2.0, size=n)
        dist = RiskDistribution(values, weights)
        assert gini(dist) == pytest.approx(gini_pairwise(dist), abs=1e-12)


def test_equal_risks_have_no_inequality() -> None:
    dist = RiskDistribution(np.full(10, 0.05))

    assert gini(dist) == pytest.approx(0.0)
    assert theil(dist) == pytest.approx(0.0)
    assert cv(dist) == pytest.approx(0.0)
    assert var_logs(dist) == pytest.approx(0.0)


def test_relative_measures_are_scale_invariant() -> None:
    rng = np.random.default_rng(1)
    dist = RiskDistribution(rng.uniform(0.01, 0.4, size=500))
    half = dist.scaled(0.5)

    for name in ("cv", "cv2", "theil", "var_logs", "gini"):
        assert MEASURES[name](half) == pytest.approx(MEASURES[name](dist), rel=1e-10)
    assert half.sd == pytest.approx(0.5 * dist.sd)


def test_weights_act_like_replication() -> None:
    weighted = RiskDistribution(np.array([0.1, 0.4]), np.array([3.0, 1.0]))
    replicated = RiskDistribution(np.array([0.1, 0.1, 0.1, 0.4]))

    for name, fn in MEASURES.items():
        assert fn(weighted) == pytest.approx(fn(replicated)), name


def test_undefined_inputs() -> None:
    with pytest.raises(MeasureError):
        var_logs(RiskDistribution(np.array([0.0, 0.2])))
    with pytest.raises(MeasureError):
        gini(RiskDistribution(np.zeros(3)))
    with pytest.raises(MeasureError):
        RiskDistribution(np.array([0.2, 1.2]))
    with pytest.raises(MeasureError):
        RiskDistribution(np.array([]))

    report = measure_report(RiskDistribution(np.array([0.0, 0.2])))
    assert np.isnan(report.mortality["var_logs"])
    assert report.survival["var_logs"] > 0


def test_relative_measures_reverse_under_complement() -> None:
    rng = np.random.default_rng(7)
    wide = RiskDistribution(rng.beta(1.0, 10.0, size=20_000))
    skewed = RiskDistribution(rng.beta(0.1, 10.0, size=20_000))

    for name in ("gini", "theil", "cv2"):
        audit = symmetry_audit(wide, skewed, name)
        assert audit.mortality_order == 1
        assert audit.survival_order == -1
        assert not audit.agrees

    spread = symmetry_audit(wide, skewed, "sd")
    assert spread.agrees
    assert spread.mortality[0] == pytest.approx(spread.survival[0])

    level = symmetry_audit(wide, skewed, "mean")
    assert level.agrees and level.mortality_order == -1


def test_symmetry_between_reports_skips_undefined() -> None:
    first = measure_report(RiskDistribution(np.array([0.0, 0.2, 0.3])), label="a")
    second = measure_report(RiskDistribution(np.array([0.1, 0.2, 0.5])), label="b")

    audits = {audit.measure: audit for audit in symmetry_between(first, second)}

    assert "var_logs" not in audits
    assert set(audits) == set(MEASURES) - {"var_logs"}


def test_posterior_measure_per_draw() -> None:
    draws = np.array([[0.1, 0.3, 0.5], [0.2, 0.2, 0.2]])

    ginis = posterior_measure(draws, "gini", indices=[0, 1])
    survival_means = posterior_measure(draws, "mean", complement=True, workers=2)

    assert ginis.tolist() == pytest.approx([0.25, 0.0])
    assert survival_means.tolist() == pytest.approx([0.7, 0.8])
    with pytest.raises(MeasureError, match="unknown measure"):
        posterior_measure(draws, "atkinson")


def test_prob_greater() -> None:
    assert prob_greater(np.array([0.3, 0.1, 0.5, 0.4]), np.array([0.2, 0.2, 0.2, 0.2])) == 0.75
    with pytest.raises(MeasureError):
        prob_greater(np.array([0.1]), np.array([0.1, 0.2]))


def test_beta_table_frame_layout() -> None:
    rows = beta_table([1.0, 0.5], beta=10.0, n_draws=2_000, seed=3)
    again = beta_table([1.0, 0.5], beta=10.0, n_draws=2_000, seed=3)
    frame = beta_table_frame(rows)

    assert len(frame) == 4
    assert frame["scale"].tolist() == ["mortality", "survival"] * 2
    assert frame.loc[0, "analytic_mean"] == pytest.approx(1.0 / 11.0)
    assert frame.loc[1, "analytic_mean"] == pytest.approx(10.0 / 11.0)
    assert rows[0].report.mortality == again[0].report.mortality
    with pytest.raises(MeasureError):
        beta_table([0.0], beta=10.0, n_draws=100, seed=0)


# alpha -> (mortality, survival) pairs for mean, sd, cv, gini, theil at beta = 10
BETA_TABLE = {
    1.0: {"mean": (0.0909, 0.9091), "sd": (0.0829, 0.0829), "cv": (0.9126, 0.0912),
          "gini": (0.4761, 0.0476), "theil": (0.3778, 0.0044)},
    0.5: {"mean": (0.0476, 0.9524), "sd": (0.0628, 0.0628), "cv": (1.3193, 0.0660),
          "gini": (0.6210, 0.0311), "theil": (0.6831, 0.0023)},
    0.3: {"mean": (0.0291, 0.9709), "sd": (0.0500, 0.0500), "cv": (1.7160, 0.0515),
          "gini": (0.7207, 0.0216), "theil": (0.9864, 0.0014)},
    0.1: {"mean": (0.0099, 0.9901), "sd": (0.0297, 0.0297), "cv": (3.0022, 0.0300),
          "gini": (0.8787, 0.0088), "theil": (1.8303, 0.0005)},
}


@pytest.mark.slow
def test_beta_table_reproduces_reference_values() -> None:
    rows = beta_table(list(BETA_TABLE), beta=10.0, n_draws=1_000_000, seed=0)

    for row in rows:
        expected = BETA_TABLE[row.alpha]
        for name, (mortality, survival) in expected.items():
            tolerance = 0.02 if name == "cv" else 0.01
            assert row.report.mortality[name] == pytest.approx(mortality, abs=tolerance), (row.alpha, name)
            assert row.report.survival[name] == pytest.approx(survival, abs=tolerance), (row.alpha, name)
