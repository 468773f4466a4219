from __future__ import annotations

import logging

import numpy as np
import pytest

from src.riskineq.base import SplineError
from src.riskineq.spline import SplineBasis, build_basis, evaluate


def test_basis_is_a_partition_of_unity() -> None:
    rng = np.random.default_rng(0)
    x = rng.uniform(15.0, 45.0, size=300)

    basis, block = build_basis(x, degree=3, n_interior_knots=3)

    assert block.shape == (300, 3 + 3 + 1)
    assert basis.basis_dim == 7
    assert np.allclose(block.sum(axis=1), 1.0)
    assert block.min() >= 0.0


def test_knots_sit_on_quantiles() -> None:
    basis, _ = build_basis(np.linspace(0.0, 100.0, 101), degree=3, n_interior_knots=3)

    assert basis.interior_knots == pytest.approx((25.0, 50.0, 75.0))
    assert basis.boundary_knots == (0.0, 100.0)


def test_boundary_values_are_covered() -> None:
    x = np.arange(10.0)
    basis, block = build_basis(x, degree=2, n_interior_knots=2)

    assert np.allclose(block[[0, -1]].sum(axis=1), 1.0)
    assert block[0, 0] == pytest.approx(1.0)
    assert block[-1, -1] == pytest.approx(1.0)


def test_constant_input_is_rejected() -> None:
    with pytest.raises(SplineError, match="constant"):
        build_basis(np.full(20, 3.0))
    with pytest.raises(SplineError):
        build_basis(np.array([1.0, 2.0, 3.0]), n_interior_knots=3)
    with pytest.raises(SplineError):
        build_basis(np.array([1.0, np.nan, 3.0]))


def test_evaluate_clamps_with_warning(caplog: pytest.LogCaptureFixture) -> None:
    basis, _ = build_basis(np.linspace(15.0, 45.0, 31), degree=3, n_interior_knots=2)

    with caplog.at_level(logging.WARNING):
        rows = evaluate(basis, np.array([10.0, 15.0, 50.0, 45.0]))

    assert "Clamping 2 value(s)" in caplog.text
    assert np.allclose(rows[0], rows[1])
    assert np.allclose(rows[2], rows[3])


def test_evaluate_scalar_returns_one_row(caplog: pytest.LogCaptureFixture) -> None:
    basis, block = build_basis(np.linspace(0.0, 1.0, 50), degree=3, n_interior_knots=3)

    with caplog.at_level(logging.WARNING):
        row = evaluate(basis, 0.3)

    assert row.shape == (basis.basis_dim,)
    assert row.sum() == pytest.approx(1.0)
    assert not caplog.records


def test_basis_document_round_trip() -> None:
    basis = SplineBasis(degree=2, interior_knots=(0.3, 0.6), boundary_knots=(0.0, 1.0))

    assert SplineBasis.from_dict(basis.to_dict()) == basis
    with pytest.raises(SplineError):
        SplineBasis(degree=2, interior_knots=(0.6, 0.3), boundary_knots=(0.0, 1.0))
    with pytest.raises(SplineError):
        SplineBasis(degree=3, interior_knots=(), boundary_knots=(1.0, 1.0))
