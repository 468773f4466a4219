from __future__ import annotations

import numpy as np
import pytest
from scipy.stats import beta as beta_dist

from src.riskineq.base import DensityError
from src.riskineq.compare import (
    DensityEstimate,
    density_band,
    density_summary,
    divergence,
    kde,
    kl_divergence,
    l1_distance,
    per_draw_compare,
    silverman_bandwidth,
)
from src.riskineq.measures import RiskDistribution


def _sample(rng: np.random.Generator, a: float, b: float, n: int) -> RiskDistribution:
    return RiskDistribution(rng.beta(a, b, size=n))


def test_kde_integrates_to_one() -> None:
    rng = np.random.default_rng(0)
    estimate = kde(_sample(rng, 2.0, 20.0, 5_000), grid_size=256)

    assert estimate.integral == pytest.approx(1.0)
    assert estimate.heights.min() >= 0.0
    assert estimate.grid[0] == 0.0 and estimate.grid[-1] == 1.0
    assert estimate.bandwidth >= estimate.grid[1]


def test_bandwidth_uses_effective_sample_size() -> None:
    values = np.array([0.1, 0.2, 0.3, 0.4])
    uniform = silverman_bandwidth(RiskDistribution(values))
    lopsided = silverman_bandwidth(RiskDistribution(values, np.array([10.0, 1.0, 1.0, 1.0])))

    assert uniform > 0
    assert lopsided != pytest.approx(uniform)


def test_l1_is_a_bounded_symmetric_distance() -> None:
    rng = np.random.default_rng(1)
    p = kde(_sample(rng, 1.0, 10.0, 3_000))
    q = kde(_sample(rng, 0.3, 10.0, 3_000))

    d = l1_distance(p, q)
    assert 0.0 < d <= 1.0
    assert l1_distance(q, p) == pytest.approx(d)
    assert l1_distance(p, p) == 0.0
    assert kl_divergence(p, p) == pytest.approx(0.0, abs=1e-12)
    assert kl_divergence(p, q) > 0.0


def test_l1_of_nested_uniforms() -> None:
    rng = np.random.default_rng(2)
    full = kde(RiskDistribution(rng.uniform(0.0, 1.0, size=100_000)))
    half = kde(RiskDistribution(rng.uniform(0.0, 0.5, size=100_000)))

    assert l1_distance(full, half) == pytest.approx(0.5, abs=0.02)


def test_kl_of_shifted_normals() -> None:
    rng = np.random.default_rng(3)
    p = kde(RiskDistribution(rng.normal(0.4, 0.05, size=20_000)))
    q = kde(RiskDistribution(rng.normal(0.5, 0.05, size=20_000)))

    # 0.1^2 / (2 * 0.05^2)
    assert kl_divergence(p, q) == pytest.approx(2.0, rel=0.05)


def test_kde_tracks_a_known_density() -> None:
    rng = np.random.default_rng(4)
    estimate = kde(_sample(rng, 2.0, 20.0, 200_000))

    interior = estimate.grid >= 5.0 * estimate.bandwidth
    error = np.abs(estimate.heights - beta_dist.pdf(estimate.grid, 2.0, 20.0))[interior]
    assert error.max() < 0.4


def test_degenerate_and_mismatched_inputs() -> None:
    with pytest.raises(DensityError):
        kde(RiskDistribution(np.full(10, 0.2)))

    rng = np.random.default_rng(5)
    coarse = kde(_sample(rng, 1.0, 10.0, 500), grid_size=128)
    fine = kde(_sample(rng, 1.0, 10.0, 500), grid_size=256)
    with pytest.raises(DensityError, match="different grids"):
        l1_distance(coarse, fine)
    with pytest.raises(DensityError, match="unknown metric"):
        divergence(coarse, coarse, "hellinger")
    with pytest.raises(DensityError):
        DensityEstimate.from_heights(np.zeros(64))


def test_per_draw_compare_identical_populations() -> None:
    rng = np.random.default_rng(6)
    draws = rng.beta(1.0, 10.0, size=(4, 400))

    result = per_draw_compare(draws, draws, metric="l1", grid_size=128, workers=2)

    assert result.values.shape == (4,)
    assert np.allclose(result.values, 0.0)
    assert result.summary.median == 0.0
    with pytest.raises(DensityError):
        per_draw_compare(draws, draws[:2], metric="kl")


def test_density_band_contains_point_estimate() -> None:
    rng = np.random.default_rng(7)
    draws = rng.beta(1.0, 10.0, size=(20, 300))

    band = density_band(draws, grid_size=128)

    assert band.lo is not None and band.hi is not None
    assert np.all(band.lo <= band.heights)
    assert np.all(band.heights <= band.hi)
    assert band.integral == pytest.approx(1.0)


def test_density_summary_with_threshold() -> None:
    draws = np.array([[0.05, 0.1, 0.2, 0.4], [0.05, 0.15, 0.25, 0.5]])

    summary = density_summary(draws, grid_size=64, threshold=0.2)

    assert set(summary) == {"mode", "mean", "median", "share_above"}
    assert summary["mean"].median == pytest.approx((0.1875 + 0.2375) / 2)
    assert summary["share_above"].median == pytest.approx(0.375)
    assert "share_above" not in density_summary(draws, grid_size=64)
