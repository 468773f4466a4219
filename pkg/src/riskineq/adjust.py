"""Counterfactual risk distributions: multiplicative rescaling, coefficient and covariate swaps."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Dict, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from .base import AdjustmentError, PosteriorSummary, map_draws, summarize_draws
from .compare import DEFAULT_GRID_SIZE, DivergenceDraws, divergence, kde, per_draw_compare
from .data import Dataset, select
from .measures import RiskDistribution
from .model.posterior import PosteriorRisks
from .model.sampler import FitResult

logger = logging.getLogger(__name__)

STATISTICS = ("mean", "median")
TRIANGLE_OPERATORS = ("abs_mean", "rel_mean", "l1")


# ---------------------------------------------------------------------------
# Location-free scale adjustment
# ---------------------------------------------------------------------------

def _statistic(dist: RiskDistribution, statistic: str) -> float:
    if statistic == "mean":
        return dist.mean
    if statistic == "median":
        return dist.median
    raise AdjustmentError(f"unknown statistic '{statistic}', expected one of {STATISTICS}")


@dataclass(frozen=True, eq=False)
class ScaleAdjustment:
    """``adjusted`` is ``b`` times one population, to be compared with ``reference``.

    Normally the source is rescaled toward the target. When the target's statistic is
    larger, roles swap (``swapped``) so that ``b <= 1`` keeps risks inside [0, 1].
    """

    adjusted: RiskDistribution
    reference: RiskDistribution
    b: float
    swapped: bool
    statistic: str


def scale_adjust(source: RiskDistribution, target: RiskDistribution, statistic: str = "mean") -> ScaleAdjustment:
    s_source, s_target = _statistic(source, statistic), _statistic(target, statistic)
    if s_source <= 0 or s_target <= 0:
        raise AdjustmentError(f"{statistic} must be positive on both populations")
    if s_target > s_source:
        b = s_source / s_target
        return ScaleAdjustment(adjusted=target.scaled(b), reference=source, b=b, swapped=True, statistic=statistic)
    b = s_target / s_source
    return ScaleAdjustment(adjusted=source.scaled(b), reference=target, b=b, swapped=False, statistic=statistic)


@dataclass(frozen=True, eq=False)
class ScaleAdjustDraws:
    statistic: str
    b: np.ndarray
    swapped: np.ndarray
    unadjusted: DivergenceDraws
    adjusted: DivergenceDraws


def per_draw_scale_adjust(
    source_draws: np.ndarray,
    target_draws: np.ndarray,
    statistic: str = "median",
    metric: str = "l1",
    grid_size: int = DEFAULT_GRID_SIZE,
    workers: int = 1,
) -> ScaleAdjustDraws:
    """Rescale within each draw, then measure the divergence before and after."""

    source = np.atleast_2d(source_draws)
    target = np.atleast_2d(target_draws)
    if source.shape[0] != target.shape[0]:
        raise AdjustmentError("source and target have different draw counts")

    def one(ell: int) -> Tuple[float, bool, float, float]:
        src, tgt = RiskDistribution(source[ell]), RiskDistribution(target[ell])
        adj = scale_adjust(src, tgt, statistic)
        f_src, f_tgt = kde(src, grid_size), kde(tgt, grid_size)
        f_adj, f_ref = kde(adj.adjusted, grid_size), kde(adj.reference, grid_size)
        before = divergence(f_src, f_tgt, metric)
        after = divergence(f_adj, f_ref, metric)
        return adj.b, adj.swapped, before, after

    rows = map_draws(one, source.shape[0], workers)
    b, swapped, before, after = (np.asarray(col) for col in zip(*rows))
    if swapped.any():
        logger.info("Scale adjustment swapped roles in %d of %d draws", int(swapped.sum()), swapped.size)
    return ScaleAdjustDraws(
        statistic=statistic,
        b=b.astype(float),
        swapped=swapped.astype(bool),
        unadjusted=DivergenceDraws(metric, before.astype(float)),
        adjusted=DivergenceDraws(metric, after.astype(float)),
    )


# ---------------------------------------------------------------------------
# Swaps through the fitted model
# ---------------------------------------------------------------------------

def _categorical_covariates(model: FitResult) -> List[str]:
    schema = model.dataset.schema
    return [
        name for name in model.spec.design.covariates
        if schema.kind_of(schema.resolve(name)) == "categorical"
    ]


def coefficient_swap(
    model: FitResult,
    donor: Sequence[int],
    base: Sequence[int],
    defining_fields: Sequence[str] = ("birth_year",),
) -> np.ndarray:
    """Risks of the donor population's records evaluated with the base population's coefficients.

    In a pooled model the base coefficients are selected by the fields that define the base
    population (its birth year, say): donor records get the base's value of those fields and
    keep their own covariates and their own units' random effects. Returns ``(L, len(donor))``.
    """

    donor_idx = np.asarray(donor, dtype=np.int64)
    base_idx = np.asarray(base, dtype=np.int64)
    if donor_idx.size == 0 or base_idx.size == 0:
        raise AdjustmentError("both populations must be non-empty")
    dataset = model.dataset
    donor_data = dataset.subset(donor_idx)
    overrides: Dict[str, np.ndarray] = {}
    for name in defining_fields:
        values = np.unique(dataset.column(name)[base_idx])
        if values.size != 1:
            raise AdjustmentError(f"base population is not defined by a single value of '{name}': {values.tolist()}")
        overrides[name] = np.repeat(values, donor_idx.size)

    for name in _categorical_covariates(model):
        base_levels = set(dataset.column(name)[base_idx].tolist())
        extra = sorted(set(donor_data.column(name).tolist()) - base_levels)
        if extra:
            logger.warning(
                "Coefficient swap: levels %s of '%s' occur in the donor but not in the base population",
                extra, name,
            )
    return model.risks_for(donor_data.replace(overrides))


def _resample_rows(
    dataset: Dataset,
    base_idx: np.ndarray,
    donor_idx: np.ndarray,
    conditional_on: Sequence[str],
    rng: np.random.Generator,
) -> np.ndarray:
    """One donor row per base record, drawn with replacement within matching cells."""

    if not conditional_on:
        return rng.choice(donor_idx, size=base_idx.size, replace=True)
    keys = list(conditional_on)
    base_frame = pd.DataFrame({name: dataset.column(name)[base_idx] for name in keys})
    donor_frame = pd.DataFrame({name: dataset.column(name)[donor_idx] for name in keys})

    def cells(frame: pd.DataFrame) -> List[Tuple[tuple, np.ndarray]]:
        groups = frame.groupby(keys, sort=True).indices
        pairs = [((k if isinstance(k, tuple) else (k,)), np.asarray(v)) for k, v in groups.items()]
        return sorted(pairs, key=lambda pair: pair[0])

    pools = {cell: donor_idx[pos] for cell, pos in cells(donor_frame)}
    chosen = np.empty(base_idx.size, dtype=np.int64)
    empty_cells = []
    for cell, pos in cells(base_frame):
        pool = pools.get(cell)
        if pool is None:
            empty_cells.append(cell)
            pool = donor_idx
        chosen[pos] = rng.choice(pool, size=pos.size, replace=True)
    if empty_cells:
        logger.warning(
            "Covariate swap: donor has no records in cell(s) %s of %s; using the donor marginal there",
            empty_cells, keys,
        )
    return chosen


def covariate_swap(
    model: FitResult,
    base: Sequence[int],
    donor: Sequence[int],
    covariates: Union[str, Sequence[str]],
    conditional_on: Optional[Sequence[str]] = None,
    seed: int = 0,
) -> np.ndarray:
    """Base records with ``covariates`` resampled from the donor, evaluated per draw.

    Several covariates are resampled jointly (one donor row supplies all of them).
    With ``conditional_on``, donor rows are drawn within cells of those categorical
    covariates. Returns ``(L, len(base))``.
    """

    names = [covariates] if isinstance(covariates, str) else list(covariates)
    conditional_on = list(conditional_on or ())
    base_idx = np.asarray(base, dtype=np.int64)
    donor_idx = np.asarray(donor, dtype=np.int64)
    if base_idx.size == 0 or donor_idx.size == 0:
        raise AdjustmentError("both populations must be non-empty")
    dataset = model.dataset
    schema = dataset.schema
    for name in names + conditional_on:
        schema.resolve(name)
    overlap = set(names) & set(conditional_on)
    if overlap:
        raise AdjustmentError(f"cannot condition on the swapped covariate(s) {sorted(overlap)}")
    for name in conditional_on:
        if schema.kind_of(schema.resolve(name)) != "categorical":
            raise AdjustmentError(f"conditioning covariate '{name}' must be categorical")

    rng = np.random.default_rng(seed)
    rows = _resample_rows(dataset, base_idx, donor_idx, conditional_on, rng)
    overrides = {name: dataset.column(name)[rows] for name in names}
    logger.info(
        "Covariate swap of %s for %d base records from %d donor records%s",
        names, base_idx.size, donor_idx.size, f" within {conditional_on}" if conditional_on else "",
    )
    return model.risks_for(dataset.subset(base_idx).replace(overrides))


# ---------------------------------------------------------------------------
# Triangle inequality and the decomposition table
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TriangleReport:
    """Pairwise comparisons of base, adjusted and target populations.

    ``slack = L(0,A) + L(A,1) - L(0,1)``; the decomposition is consistent when it is nonnegative.
    ``ordering_ok`` is only set for the relative mean difference.
    """

    operator: str
    d01: float
    d0a: float
    da1: float
    ordering_ok: Optional[bool] = None

    @property
    def slack(self) -> float:
        return self.d0a + self.da1 - self.d01

    @property
    def holds(self) -> bool:
        return self.slack >= -1e-12

    @property
    def valid(self) -> bool:
        return self.holds and self.ordering_ok is not False


def _pairwise(p: RiskDistribution, q: RiskDistribution, operator: str, grid_size: int) -> float:
    if operator == "abs_mean":
        return abs(p.mean - q.mean)
    if operator == "rel_mean":
        if q.mean <= 0:
            raise AdjustmentError("relative mean difference needs a positive reference mean")
        return abs(p.mean - q.mean) / q.mean
    if operator == "l1":
        return divergence(kde(p, grid_size), kde(q, grid_size), "l1")
    raise AdjustmentError(f"unknown operator '{operator}', expected one of {TRIANGLE_OPERATORS}")


def triangle_report(
    p0: RiskDistribution,
    pa: RiskDistribution,
    p1: RiskDistribution,
    operator: str = "l1",
    grid_size: int = DEFAULT_GRID_SIZE,
) -> TriangleReport:
    ordering = None
    if operator == "rel_mean":
        ordering = bool(p0.mean <= pa.mean <= p1.mean)
        if not ordering:
            logger.warning(
                "Relative mean difference: adjusted mean %.5f is not between %.5f and %.5f",
                pa.mean, p0.mean, p1.mean,
            )
    return TriangleReport(
        operator=operator,
        d01=_pairwise(p0, p1, operator, grid_size),
        d0a=_pairwise(p0, pa, operator, grid_size),
        da1=_pairwise(pa, p1, operator, grid_size),
        ordering_ok=ordering,
    )


def triangle_draws(
    p0_draws: np.ndarray,
    pa_draws: np.ndarray,
    p1_draws: np.ndarray,
    operator: str = "l1",
    grid_size: int = DEFAULT_GRID_SIZE,
    workers: int = 1,
) -> List[TriangleReport]:
    """One :class:`TriangleReport` per posterior draw."""

    a, b, c = (np.atleast_2d(x) for x in (p0_draws, pa_draws, p1_draws))
    if not a.shape[0] == b.shape[0] == c.shape[0]:
        raise AdjustmentError("populations have different draw counts")
    return map_draws(
        lambda ell: triangle_report(
            RiskDistribution(a[ell]), RiskDistribution(b[ell]), RiskDistribution(c[ell]), operator, grid_size
        ),
        a.shape[0],
        workers,
    )


def _summary_columns(prefix: str, summary: PosteriorSummary) -> Dict[str, float]:
    return {f"{prefix}_median": summary.median, f"{prefix}_lo": summary.lo, f"{prefix}_hi": summary.hi}


def decompose_table(
    model: FitResult,
    base: Sequence[int],
    target: Sequence[int],
    covariates: Sequence[str],
    *,
    conditional_on: Optional[Sequence[str]] = None,
    combined: Optional[Sequence[str]] = None,
    grid_size: int = DEFAULT_GRID_SIZE,
    seed: int = 0,
    workers: int = 1,
) -> pd.DataFrame:
    """Divergence between each single-covariate adjusted distribution and the target.

    The first row (``Overall``) compares base and target with no adjustment. KL is
    computed as KL(adjusted || target).
    """

    target_draws = model.risks.select(target)
    rows: List[Dict[str, object]] = []

    def add_row(label: str, adjusted: np.ndarray) -> None:
        kl = per_draw_compare(adjusted, target_draws, "kl", grid_size, workers)
        l1 = per_draw_compare(adjusted, target_draws, "l1", grid_size, workers)
        rows.append({"adjustment": label, **_summary_columns("kl", kl.summary), **_summary_columns("l1", l1.summary)})

    add_row("Overall", model.risks.select(base))
    cond = list(conditional_on or ())
    for name in covariates:
        given = [c for c in cond if c != name]
        add_row(name, covariate_swap(model, base, target, name, conditional_on=given, seed=seed))
    if combined:
        given = [c for c in cond if c not in combined]
        add_row("+".join(combined), covariate_swap(model, base, target, list(combined), conditional_on=given, seed=seed))
    return pd.DataFrame(rows)


def baseline_trend(
    posterior: PosteriorRisks,
    dataset: Dataset,
    baseline_year: int,
    metric: str = "l1",
    statistic: str = "median",
    grid_size: int = DEFAULT_GRID_SIZE,
    workers: int = 1,
) -> pd.DataFrame:
    """Divergence of every later year from the baseline year, raw and after rescaling.

    Long format: ``year, adjusted, median, lo, hi, b_median``.
    """

    base_idx = select(dataset, {"year": baseline_year})
    if base_idx.size < 2:
        raise AdjustmentError(f"baseline year {baseline_year} has fewer than two births")
    base_draws = posterior.select(base_idx)
    rows: List[Dict[str, object]] = []
    for year in sorted(int(y) for y in np.unique(dataset.birth_year) if y > baseline_year):
        idx = select(dataset, {"year": year})
        if idx.size < 2:
            logger.warning("Skipping year %d: fewer than two births", year)
            continue
        result = per_draw_scale_adjust(base_draws, posterior.select(idx), statistic, metric, grid_size, workers)
        b_median = float(np.median(result.b))
        for adjusted, draws in ((False, result.unadjusted), (True, result.adjusted)):
            summary = draws.summary
            rows.append({
                "year": year, "adjusted": adjusted, "median": summary.median,
                "lo": summary.lo, "hi": summary.hi, "b_median": b_median,
            })
    if not rows:
        raise AdjustmentError(f"no years after {baseline_year} to compare against")
    return pd.DataFrame(rows)
