"""Inequality measures on weighted samples of risks, and their behaviour under complement."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Callable, Dict, List, Mapping, Optional, Sequence, Union

import numpy as np
import pandas as pd
from scipy.special import xlogy

from .base import MeasureError, map_draws

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class RiskDistribution:
    """A weighted sample of probabilities for one population under one draw.

    Values may touch 0 or 1: complements of tiny risks round to exactly 1.0.
    Weights are normalized to sum to 1 (uniform when omitted).
    """

    values: np.ndarray
    weights: Optional[np.ndarray] = None

    def __post_init__(self) -> None:
        values = np.asarray(self.values, dtype=float).ravel()
        if values.size == 0:
            raise MeasureError("a risk distribution needs at least one value")
        if not np.all(np.isfinite(values)) or values.min() < 0.0 or values.max() > 1.0:
            raise MeasureError("risk values must be finite probabilities in [0, 1]")
        if self.weights is None:
            weights = np.full(values.size, 1.0 / values.size)
        else:
            weights = np.asarray(self.weights, dtype=float).ravel()
            if weights.shape != values.shape:
                raise MeasureError("weights must match values")
            if np.any(weights < 0) or weights.sum() <= 0:
                raise MeasureError("weights must be nonnegative with a positive total")
            weights = weights / weights.sum()
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "weights", weights)

    def __len__(self) -> int:
        return self.values.size

    @property
    def mean(self) -> float:
        return float(np.dot(self.weights, self.values))

    @property
    def sd(self) -> float:
        mu = self.mean
        return float(np.sqrt(np.dot(self.weights, (self.values - mu) ** 2)))

    def quantile(self, q: float) -> float:
        """Weighted quantile; with uniform weights this is the usual linear-interpolated sample quantile."""

        if np.allclose(self.weights, self.weights[0]):
            return float(np.quantile(self.values, q))
        order = np.argsort(self.values)
        cum = np.cumsum(self.weights[order])
        pos = np.searchsorted(cum, q * cum[-1], side="left")
        return float(self.values[order][min(pos, len(order) - 1)])

    @property
    def median(self) -> float:
        return self.quantile(0.5)

    def complement(self) -> "RiskDistribution":
        """Survival probabilities 1 - pi with the same weights."""

        return RiskDistribution(1.0 - self.values, self.weights)

    def scaled(self, factor: float) -> "RiskDistribution":
        return RiskDistribution(self.values * factor, self.weights)

    def ratios(self) -> np.ndarray:
        mu = self.mean
        if mu <= 0:
            raise MeasureError("ratio-based measures are undefined for a zero mean")
        return self.values / mu


# ---------------------------------------------------------------------------
# Measures
# ---------------------------------------------------------------------------

def common_form(dist: RiskDistribution, f: Callable[[np.ndarray], np.ndarray]) -> float:
    """Weighted mean of ``f(pi / mu)``."""

    return float(np.dot(dist.weights, f(dist.ratios())))


def cv2(dist: RiskDistribution) -> float:
    return common_form(dist, lambda r: (r - 1.0) ** 2)


def cv(dist: RiskDistribution) -> float:
    return float(np.sqrt(cv2(dist)))


def theil(dist: RiskDistribution) -> float:
    return common_form(dist, lambda r: xlogy(r, r))


def var_logs(dist: RiskDistribution) -> float:
    if dist.values.min() <= 0.0:
        raise MeasureError("variance of logs needs strictly positive values")
    logs = np.log(dist.ratios())
    centre = np.dot(dist.weights, logs)
    return float(np.dot(dist.weights, (logs - centre) ** 2))


def gini(dist: RiskDistribution) -> float:
    """Half the weighted mean absolute difference of ratios, in O(n log n)."""

    r = dist.ratios()
    order = np.argsort(r, kind="stable")
    r, w = r[order], dist.weights[order]
    cum_w = np.cumsum(w) - w
    cum_wr = np.cumsum(w * r) - w * r
    return float(np.sum(w * (r * cum_w - cum_wr)))


def gini_pairwise(dist: RiskDistribution) -> float:
    """Reference O(n^2) double sum; use :func:`gini` outside tests."""

    r = dist.ratios()
    w = dist.weights
    return float(0.5 * np.sum(np.outer(w, w) * np.abs(r[:, None] - r[None, :])))


def mean(dist: RiskDistribution) -> float:
    return dist.mean


def sd(dist: RiskDistribution) -> float:
    return dist.sd


MEASURES: Dict[str, Callable[[RiskDistribution], float]] = {
    "mean": mean,
    "sd": sd,
    "cv": cv,
    "cv2": cv2,
    "theil": theil,
    "var_logs": var_logs,
    "gini": gini,
}

# Orientation of each measure's ordering when moving from mortality to survival.
COMPLEMENT_ORIENTATION = {"mean": -1, "sd": 1, "cv": 1, "cv2": 1, "theil": 1, "var_logs": 1, "gini": 1}


def resolve_measure(measure: Union[str, Callable[[RiskDistribution], float]]) -> Callable[[RiskDistribution], float]:
    if callable(measure):
        return measure
    try:
        return MEASURES[measure]
    except KeyError as exc:
        raise MeasureError(f"unknown measure '{measure}', expected one of {sorted(MEASURES)}") from exc


# ---------------------------------------------------------------------------
# Reports and the complement audit
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class MeasureReport:
    """Every measure on a distribution (mortality) and on its complement (survival)."""

    label: str
    mortality: Mapping[str, float]
    survival: Mapping[str, float]

    def rows(self) -> List[Dict[str, object]]:
        return [
            {"label": self.label, "scale": scale, **values}
            for scale, values in (("mortality", self.mortality), ("survival", self.survival))
        ]


def _all_measures(dist: RiskDistribution) -> Dict[str, float]:
    values: Dict[str, float] = {}
    for name, fn in MEASURES.items():
        try:
            values[name] = fn(dist)
        except MeasureError as exc:
            logger.debug("Measure %s undefined: %s", name, exc)
            values[name] = float("nan")
    return values


def measure_report(dist: RiskDistribution, label: str = "") -> MeasureReport:
    return MeasureReport(label=label, mortality=_all_measures(dist), survival=_all_measures(dist.complement()))


@dataclass(frozen=True)
class SymmetryAudit:
    """Whether a measure ranks two populations the same way on mortality and on survival."""

    measure: str
    mortality: tuple
    survival: tuple
    mortality_order: int
    survival_order: int
    agrees: bool


def symmetry_audit(dist0: RiskDistribution, dist1: RiskDistribution, measure: str) -> SymmetryAudit:
    """Compare ``measure`` on (dist0, dist1) and on their complements.

    For the mean a reversal is the consistent outcome (more death is less survival),
    so its survival ordering is flipped before comparing.
    """

    fn = resolve_measure(measure)
    mort = (fn(dist0), fn(dist1))
    surv = (fn(dist0.complement()), fn(dist1.complement()))
    return _audit(measure, mort, surv)


def symmetry_between(report0: MeasureReport, report1: MeasureReport) -> List[SymmetryAudit]:
    """Symmetry audits for every measure from two precomputed reports (NaN measures skipped)."""

    audits = []
    for name in MEASURES:
        mort = (report0.mortality[name], report1.mortality[name])
        surv = (report0.survival[name], report1.survival[name])
        if np.isnan(mort + surv).any():
            continue
        audits.append(_audit(name, mort, surv))
    return audits


def _audit(measure: str, mort: tuple, surv: tuple) -> SymmetryAudit:
    mort_order = int(np.sign(mort[1] - mort[0]))
    surv_order = int(np.sign(surv[1] - surv[0]))
    orientation = COMPLEMENT_ORIENTATION.get(measure, 1)
    agrees = mort_order == orientation * surv_order
    if not agrees:
        logger.info("Measure %s orders mortality %s but survival %s", measure, mort, surv)
    return SymmetryAudit(
        measure=measure, mortality=mort, survival=surv,
        mortality_order=mort_order, survival_order=surv_order, agrees=bool(agrees),
    )


@dataclass(frozen=True)
class BetaRow:
    alpha: float
    beta: float
    analytic_mean: float
    analytic_sd: float
    report: MeasureReport


def beta_table(alphas: Sequence[float], beta: float, n_draws: int, seed: int) -> List[BetaRow]:
    """Monte Carlo measures of beta(alpha, beta) risk distributions, one row per alpha.

    Each row draws from its own child of ``seed``; rerunning with the same alphas reproduces the table.
    """

    if beta <= 0 or any(a <= 0 for a in alphas):
        raise MeasureError("beta parameters must be positive")
    if n_draws < 2:
        raise MeasureError("beta_table needs at least two draws per row")
    rows = []
    for alpha, child in zip(alphas, np.random.SeedSequence(seed).spawn(len(alphas))):
        rng = np.random.default_rng(child)
        sample = rng.beta(alpha, beta, size=n_draws)
        total = alpha + beta
        rows.append(BetaRow(
            alpha=float(alpha),
            beta=float(beta),
            analytic_mean=alpha / total,
            analytic_sd=float(np.sqrt(alpha * beta / (total ** 2 * (total + 1.0)))),
            report=measure_report(RiskDistribution(sample), label=f"beta({alpha:g},{beta:g})"),
        ))
        logger.info("beta(%g,%g): gini %.4f / %.4f", alpha, beta,
                    rows[-1].report.mortality["gini"], rows[-1].report.survival["gini"])
    return rows


def beta_table_frame(rows: Sequence[BetaRow]) -> pd.DataFrame:
    records = []
    for row in rows:
        for record in row.report.rows():
            record.update(alpha=row.alpha, beta=row.beta, analytic_mean=row.analytic_mean, analytic_sd=row.analytic_sd)
            if record["scale"] == "survival":
                record["analytic_mean"] = 1.0 - row.analytic_mean
            records.append(record)
    columns = ["alpha", "beta", "scale", "analytic_mean", "analytic_sd", *MEASURES]
    return pd.DataFrame.from_records(records)[columns]


# ---------------------------------------------------------------------------
# Per-draw propagation
# ---------------------------------------------------------------------------

def posterior_measure(
    draws: np.ndarray,
    measure: Union[str, Callable[[RiskDistribution], float]],
    indices: Optional[Sequence[int]] = None,
    *,
    complement: bool = False,
    workers: int = 1,
) -> np.ndarray:
    """Evaluate ``measure`` on one sub-population per posterior draw.

    ``draws`` is an ``(L, N)`` risk matrix; ``indices`` selects births (all when omitted).
    """

    matrix = np.asarray(draws, dtype=float)
    if indices is not None:
        matrix = matrix[:, np.asarray(indices, dtype=np.int64)]
    fn = resolve_measure(measure)

    def one(ell: int) -> float:
        dist = RiskDistribution(matrix[ell])
        return fn(dist.complement() if complement else dist)

    return np.asarray(map_draws(one, matrix.shape[0], workers), dtype=float)


def prob_greater(values_a: np.ndarray, values_b: np.ndarray) -> float:
    """Share of draws in which the first population's value exceeds the second's."""

    a, b = np.asarray(values_a, dtype=float), np.asarray(values_b, dtype=float)
    if a.shape != b.shape or a.size == 0:
        raise MeasureError("per-draw values must be non-empty and paired")
    return float(np.mean(a > b))
