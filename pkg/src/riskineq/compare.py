"""Kernel densities on [0, 1], credible bands and KL / L1 divergences between risk distributions."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Dict, Optional, Sequence, Union

import numpy as np
from scipy.integrate import trapezoid
from scipy.signal import convolve
from scipy.stats import norm

from .base import DensityError, PosteriorSummary, map_draws, summarize_draws
from .measures import RiskDistribution

logger = logging.getLogger(__name__)

DEFAULT_GRID_SIZE = 512
DENSITY_FLOOR = 1e-12
KERNEL_REACH = 5.0  # kernel truncated at this many bandwidths
METRICS = ("kl", "l1")


def make_grid(grid_size: int = DEFAULT_GRID_SIZE) -> np.ndarray:
    if grid_size < 16:
        raise DensityError("grid size must be at least 16")
    return np.linspace(0.0, 1.0, grid_size)


@dataclass(frozen=True, eq=False)
class DensityEstimate:
    """Density heights on an equally spaced grid over [0, 1], optionally with a pointwise band."""

    grid: np.ndarray
    heights: np.ndarray
    bandwidth: float
    lo: Optional[np.ndarray] = None
    hi: Optional[np.ndarray] = None

    def __post_init__(self) -> None:
        if self.grid.shape != self.heights.shape:
            raise DensityError("grid and heights must have the same length")
        if np.any(self.heights < 0):
            raise DensityError("density heights must be nonnegative")

    @classmethod
    def from_heights(cls, heights: np.ndarray, bandwidth: float = float("nan")) -> "DensityEstimate":
        """Wrap arbitrary nonnegative heights on the default-spaced grid, normalized to integrate to 1."""

        heights = np.clip(np.asarray(heights, dtype=float), 0.0, None)
        grid = make_grid(heights.size)
        area = trapezoid(heights, grid)
        if area <= 0:
            raise DensityError("heights integrate to zero")
        return cls(grid=grid, heights=heights / area, bandwidth=bandwidth)

    @property
    def integral(self) -> float:
        return float(trapezoid(self.heights, self.grid))

    @property
    def mode(self) -> float:
        return float(self.grid[np.argmax(self.heights)])


def silverman_bandwidth(dist: RiskDistribution) -> float:
    """0.9 * min(sd, IQR / 1.34) * n_eff^(-1/5), with Kish's effective sample size."""

    spread = dist.sd
    iqr = dist.quantile(0.75) - dist.quantile(0.25)
    if iqr > 0:
        spread = min(spread, iqr / 1.34)
    n_eff = 1.0 / float(np.sum(dist.weights ** 2))
    return 0.9 * spread * n_eff ** (-0.2)


def kde(dist: RiskDistribution, grid_size: int = DEFAULT_GRID_SIZE, bandwidth: Optional[float] = None) -> DensityEstimate:
    """Gaussian KDE reflected at 0 and 1, computed by binning onto the grid and convolving.

    The bandwidth never drops below one grid step.
    """

    values, weights = dist.values, dist.weights
    if np.ptp(values) == 0:
        raise DensityError("cannot estimate a density from identical values")
    grid = make_grid(grid_size)
    step = grid[1] - grid[0]
    h = silverman_bandwidth(dist) if bandwidth is None else float(bandwidth)
    h = max(h, step)

    # linear binning onto grid nodes
    pos = values / step
    left = np.clip(np.floor(pos).astype(np.int64), 0, grid_size - 2)
    frac = pos - left
    counts = np.bincount(left, weights=weights * (1.0 - frac), minlength=grid_size)
    counts += np.bincount(left + 1, weights=weights * frac, minlength=grid_size)

    # mirror the binned mass about both boundaries
    pad = int(np.ceil(KERNEL_REACH * h / step))
    ext = np.zeros(grid_size + 2 * pad)
    ext[pad:pad + grid_size] = counts
    reach = min(pad, grid_size - 1)
    j = np.arange(reach + 1)
    ext[pad - j] += counts[j]
    jr = np.arange(grid_size - 1 - reach, grid_size)
    ext[2 * (grid_size - 1) - jr + pad] += counts[jr]

    offsets = np.arange(-pad, pad + 1) * step
    kernel = norm.pdf(offsets / h) / h
    heights = convolve(ext, kernel, mode="valid")
    heights = np.clip(heights, 0.0, None)
    area = trapezoid(heights, grid)
    if area <= 0:
        raise DensityError("density estimate integrates to zero")
    return DensityEstimate(grid=grid, heights=heights / area, bandwidth=h)


def _check_grids(p: DensityEstimate, q: DensityEstimate) -> None:
    if p.grid.shape != q.grid.shape or not np.allclose(p.grid, q.grid):
        raise DensityError("densities are evaluated on different grids")


def kl_divergence(p: DensityEstimate, q: DensityEstimate) -> float:
    """KL(p || q) by trapezoid quadrature with both densities floored before the log."""

    _check_grids(p, q)
    fp = np.maximum(p.heights, DENSITY_FLOOR)
    fq = np.maximum(q.heights, DENSITY_FLOOR)
    return float(trapezoid(p.heights * np.log(fp / fq), p.grid))


def l1_distance(p: DensityEstimate, q: DensityEstimate) -> float:
    """Half the integrated absolute difference: the share of mass that must move."""

    _check_grids(p, q)
    value = 0.5 * trapezoid(np.abs(p.heights - q.heights), p.grid)
    return float(np.clip(value, 0.0, 1.0))


def divergence(p: DensityEstimate, q: DensityEstimate, metric: str) -> float:
    if metric == "kl":
        return kl_divergence(p, q)
    if metric == "l1":
        return l1_distance(p, q)
    raise DensityError(f"unknown metric '{metric}', expected one of {METRICS}")


def density_band(
    draws: np.ndarray, grid_size: int = DEFAULT_GRID_SIZE, level: float = 0.95, workers: int = 1
) -> DensityEstimate:
    """Pointwise credible band across draws; row ``l`` of ``draws`` is one population under draw ``l``.

    The point estimate is the pointwise mean density; the band is widened where needed to contain it.
    """

    matrix = np.atleast_2d(np.asarray(draws, dtype=float))
    estimates = map_draws(lambda ell: kde(RiskDistribution(matrix[ell]), grid_size), matrix.shape[0], workers)
    stack = np.vstack([e.heights for e in estimates])
    tail = (1.0 - level) / 2.0 * 100.0
    lo, hi = np.percentile(stack, [tail, 100.0 - tail], axis=0)
    centre = stack.mean(axis=0)
    return DensityEstimate(
        grid=estimates[0].grid,
        heights=centre,
        bandwidth=float(np.median([e.bandwidth for e in estimates])),
        lo=np.minimum(lo, centre),
        hi=np.maximum(hi, centre),
    )


@dataclass(frozen=True, eq=False)
class DivergenceDraws:
    """One divergence value per posterior draw."""

    metric: str
    values: np.ndarray

    @property
    def summary(self) -> PosteriorSummary:
        return summarize_draws(self.values)


def per_draw_compare(
    p_draws: np.ndarray,
    q_draws: np.ndarray,
    metric: str = "l1",
    grid_size: int = DEFAULT_GRID_SIZE,
    workers: int = 1,
) -> DivergenceDraws:
    """Within each draw, estimate both densities and compute ``metric`` between them."""

    if metric not in METRICS:
        raise DensityError(f"unknown metric '{metric}', expected one of {METRICS}")
    p = np.atleast_2d(np.asarray(p_draws, dtype=float))
    q = np.atleast_2d(np.asarray(q_draws, dtype=float))
    if p.shape[0] != q.shape[0] or p.shape[0] == 0:
        raise DensityError(f"draw counts differ or are empty: {p.shape[0]} vs {q.shape[0]}")

    def one(ell: int) -> float:
        fp = kde(RiskDistribution(p[ell]), grid_size)
        fq = kde(RiskDistribution(q[ell]), grid_size)
        return divergence(fp, fq, metric)

    values = np.asarray(map_draws(one, p.shape[0], workers), dtype=float)
    logger.info("Per-draw %s over %d draws: median %.4f", metric, values.size, float(np.median(values)))
    return DivergenceDraws(metric=metric, values=values)


def density_summary(
    draws: np.ndarray,
    grid_size: int = DEFAULT_GRID_SIZE,
    threshold: Optional[float] = None,
    workers: int = 1,
) -> Dict[str, PosteriorSummary]:
    """Posterior summaries of the density mode, mean, median and (optionally) share above ``threshold``."""

    matrix = np.atleast_2d(np.asarray(draws, dtype=float))

    def one(ell: int) -> Sequence[float]:
        dist = RiskDistribution(matrix[ell])
        row = [kde(dist, grid_size).mode, dist.mean, dist.median]
        if threshold is not None:
            row.append(float(np.mean(matrix[ell] > threshold)))
        return row

    table = np.asarray(map_draws(one, matrix.shape[0], workers), dtype=float)
    names = ["mode", "mean", "median"] + (["share_above"] if threshold is not None else [])
    return {name: summarize_draws(table[:, k]) for k, name in enumerate(names)}
