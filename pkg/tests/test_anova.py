from __future__ import annotations

import logging

import numpy as np
import pytest

from src.riskineq.anova import (
    GroupLabeling,
    R2Posterior,
    group_quantiles,
    r2_posterior,
    trend_table,
    variance_decompose,
)
from src.riskineq.base import AnovaError
from src.riskineq.data import Dataset
from src.riskineq.model import FitResult


def _labels(codes, years=None, categories=("a", "b")) -> GroupLabeling:
    codes = np.asarray(codes, dtype=np.int64)
    years = np.full(codes.size, 2000) if years is None else np.asarray(years)
    return GroupLabeling(covariate="g", codes=codes, categories=categories, indices=np.arange(codes.size), years=years)


def test_two_separated_groups_explain_everything() -> None:
    parts = variance_decompose(np.array([0.1, 0.1, 0.3, 0.3]), _labels([0, 0, 1, 1]))

    assert parts.between == pytest.approx(0.01)
    assert parts.within == pytest.approx(0.0)
    assert parts.r2 == pytest.approx(1.0)


def test_parts_add_up() -> None:
    rng = np.random.default_rng(0)
    for _ in range(50):
        n = int(rng.integers(2, 200))
        risks = rng.uniform(0.0, 0.5, size=n)
        labels = _labels(rng.integers(0, 4, size=n), categories=("a", "b", "c", "d"))
        parts = variance_decompose(risks, labels)
        assert parts.within + parts.between == pytest.approx(parts.total, abs=1e-12)
        assert 0.0 <= parts.r2 <= 1.0


def test_single_group_explains_nothing() -> None:
    parts = variance_decompose(np.array([0.1, 0.2, 0.4]), _labels([0, 0, 0], categories=("a",)))

    assert parts.between == pytest.approx(0.0)
    assert parts.r2 == pytest.approx(0.0, abs=1e-12)


def test_invalid_inputs() -> None:
    with pytest.raises(AnovaError):
        variance_decompose(np.array([0.1, 0.2]), _labels([0, 1, 1]))
    with pytest.raises(AnovaError):
        variance_decompose(np.array([0.1]), _labels([0]))
    with pytest.raises(AnovaError, match="out of range"):
        _labels([0, 2])


def test_per_year_results_skip_sparse_years(caplog: pytest.LogCaptureFixture) -> None:
    draws = np.array([[0.1, 0.3, 0.2, 0.2, 0.5], [0.1, 0.2, 0.3, 0.3, 0.5]])
    labels = _labels([0, 1, 0, 1, 0], years=[2000, 2000, 2001, 2001, 2002])

    with caplog.at_level(logging.WARNING):
        results = r2_posterior(draws, labels, by_year=True)

    assert [r.year for r in results] == [2000, 2001]
    assert results[0].values.tolist() == pytest.approx([1.0, 1.0])
    assert results[1].values.tolist() == pytest.approx([0.0, 0.0])
    assert "Skipping year 2002" in caplog.text

    pooled = r2_posterior(draws, labels)
    assert isinstance(pooled, R2Posterior) and pooled.year is None
    assert pooled.values.shape == (2,)


def test_trend_table_layout() -> None:
    results = [
        R2Posterior("wealth", np.array([0.1, 0.2, 0.3]), year=2010),
        R2Posterior("wealth", np.array([0.3, 0.4, 0.5]), year=2000),
    ]

    table = trend_table(results)

    assert list(table.columns) == ["year", "covariate", "median", "lo", "hi"]
    assert table["year"].tolist() == [2000, 2010]
    assert table["median"].tolist() == pytest.approx([0.4, 0.2])
    with pytest.raises(AnovaError):
        trend_table(results[:1])


def test_labels_from_dataset(small_dataset: Dataset) -> None:
    wealth = GroupLabeling.from_dataset(small_dataset, "wealth")
    districts = GroupLabeling.from_dataset(small_dataset, "district_id", indices=range(20))
    years = GroupLabeling.from_dataset(small_dataset, "year")

    assert wealth.categories == ("poor", "middle", "rich")
    assert wealth.codes.size == len(small_dataset)
    assert districts.indices.tolist() == list(range(20))
    assert years.categories == (2000, 2010)
    with pytest.raises(AnovaError):
        GroupLabeling.from_dataset(small_dataset, "mother_age")


def test_r2_on_fitted_risks(tiny_fit: FitResult, small_dataset: Dataset) -> None:
    labels = GroupLabeling.from_dataset(small_dataset, "wealth")

    result = r2_posterior(tiny_fit.risks, labels)
    by_year = r2_posterior(tiny_fit.risks, labels, by_year=True)

    assert result.values.shape == (tiny_fit.risks.n_draws,)
    assert np.all((result.values >= 0) & (result.values <= 1))
    assert result.summary.lo <= result.summary.median <= result.summary.hi
    assert [r.year for r in by_year] == [2000, 2010]


def test_group_quantiles(small_dataset: Dataset) -> None:
    labels = GroupLabeling.from_dataset(small_dataset, "wealth")
    values = np.linspace(0.01, 0.3, len(small_dataset))

    table = group_quantiles(values, labels, threshold=0.1)

    assert table["category"].tolist() == ["poor", "middle", "rich"]
    assert table["n"].sum() == len(small_dataset)
    assert (table["p05"] <= table["p95"]).all()
    assert table["share_above"].between(0.0, 1.0).all()
    assert "share_above" not in group_quantiles(values, labels).columns
