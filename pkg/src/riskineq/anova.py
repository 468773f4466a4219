"""Law-of-total-variance decomposition of risk across one categorical grouping at a time."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Union

import numpy as np
import pandas as pd

from .base import AnovaError, PosteriorSummary, map_draws, summarize_draws
from .data import Dataset
from .model.posterior import PosteriorRisks

logger = logging.getLogger(__name__)

GROUPING_KINDS = ("categorical", "id", "year")


@dataclass(frozen=True, eq=False)
class GroupLabeling:
    """Category code per selected birth, with the births' positions in the dataset and their years."""

    covariate: str
    codes: np.ndarray
    categories: tuple
    indices: np.ndarray
    years: np.ndarray

    def __post_init__(self) -> None:
        if not (len(self.codes) == len(self.indices) == len(self.years)):
            raise AnovaError("labels, indices and years must have the same length")
        if len(self.codes) and (self.codes.min() < 0 or self.codes.max() >= len(self.categories)):
            raise AnovaError("category codes out of range")

    @property
    def n_groups(self) -> int:
        return len(self.categories)

    @classmethod
    def from_dataset(
        cls, dataset: Dataset, covariate: str, indices: Optional[Sequence[int]] = None
    ) -> "GroupLabeling":
        resolved = dataset.schema.resolve(covariate)
        kind = dataset.schema.kind_of(resolved)
        if kind not in GROUPING_KINDS:
            raise AnovaError(f"'{covariate}' is a {kind} column; groupings must be categorical, ids or years")
        idx = np.arange(len(dataset)) if indices is None else np.asarray(indices, dtype=np.int64)
        values = dataset.column(resolved)[idx]
        if kind == "categorical":
            declared = dataset.schema.column(resolved).levels
            categories = tuple(level for level in declared if level in set(values.tolist()))
        else:
            categories = tuple(np.unique(values).tolist())
        lookup = {category: code for code, category in enumerate(categories)}
        codes = np.fromiter((lookup[v] for v in values.tolist()), dtype=np.int64, count=len(values))
        return cls(covariate=covariate, codes=codes, categories=categories, indices=idx, years=dataset.birth_year[idx])

    def restrict(self, mask: np.ndarray) -> "GroupLabeling":
        return GroupLabeling(
            covariate=self.covariate, codes=self.codes[mask], categories=self.categories,
            indices=self.indices[mask], years=self.years[mask],
        )


@dataclass(frozen=True)
class VarianceParts:
    within: float
    between: float
    total: float

    @property
    def r2(self) -> float:
        if self.total <= 0:
            return 0.0
        return float(min(max(self.between / self.total, 0.0), 1.0))


def variance_decompose(risks: np.ndarray, labels: GroupLabeling) -> VarianceParts:
    """Split the population variance of ``risks`` into within- and between-group parts."""

    x = np.asarray(risks, dtype=float)
    if x.size != labels.codes.size:
        raise AnovaError(f"{x.size} risks for {labels.codes.size} labels")
    if x.size < 2:
        raise AnovaError("variance decomposition needs at least two births")
    k = labels.n_groups
    counts = np.bincount(labels.codes, minlength=k)
    sums = np.bincount(labels.codes, weights=x, minlength=k)
    means = np.divide(sums, counts, out=np.zeros(k), where=counts > 0)
    grand = x.mean()
    n = x.size
    total = float(np.mean((x - grand) ** 2))
    between = float(np.sum(counts * (means - grand) ** 2) / n)
    within = float(np.mean((x - means[labels.codes]) ** 2))
    return VarianceParts(within=within, between=between, total=total)


@dataclass(frozen=True, eq=False)
class R2Posterior:
    """Per-draw share of variance explained by one grouping, optionally within one year."""

    covariate: str
    values: np.ndarray
    year: Optional[int] = None

    @property
    def summary(self) -> PosteriorSummary:
        return summarize_draws(self.values)


def _r2_draws(matrix: np.ndarray, labels: GroupLabeling, workers: int) -> np.ndarray:
    return np.asarray(
        map_draws(lambda ell: variance_decompose(matrix[ell], labels).r2, matrix.shape[0], workers), dtype=float
    )


def r2_posterior(
    posterior: Union[PosteriorRisks, np.ndarray],
    labels: GroupLabeling,
    by_year: bool = False,
    workers: int = 1,
) -> Union[R2Posterior, List[R2Posterior]]:
    """R^2 = between / total for every draw; per-year mode returns one result per year.

    Years with fewer than two births are skipped with a warning.
    """

    values = posterior.values if isinstance(posterior, PosteriorRisks) else np.atleast_2d(posterior)
    matrix = values[:, labels.indices]
    if not by_year:
        return R2Posterior(covariate=labels.covariate, values=_r2_draws(matrix, labels, workers))
    results = []
    for year in np.unique(labels.years):
        mask = labels.years == year
        if mask.sum() < 2:
            logger.warning("Skipping year %d for '%s': fewer than two births", int(year), labels.covariate)
            continue
        results.append(R2Posterior(
            covariate=labels.covariate,
            values=_r2_draws(matrix[:, mask], labels.restrict(mask), workers),
            year=int(year),
        ))
    return results


def trend_table(r2_by_year: Sequence[R2Posterior]) -> pd.DataFrame:
    """Long table ``year, covariate, median, lo, hi`` for plotting R^2 over time."""

    years = {r.year for r in r2_by_year if r.year is not None}
    if len(years) < 2:
        raise AnovaError("a trend table needs results for at least two years")
    rows = []
    for result in r2_by_year:
        if result.year is None:
            continue
        summary = result.summary
        rows.append({
            "year": result.year, "covariate": result.covariate,
            "median": summary.median, "lo": summary.lo, "hi": summary.hi,
        })
    return pd.DataFrame(rows).sort_values(["covariate", "year"], kind="stable").reset_index(drop=True)


def group_quantiles(values: np.ndarray, labels: GroupLabeling, threshold: Optional[float] = None) -> pd.DataFrame:
    """Box-plot statistics of (usually posterior-mean) risks for every category."""

    x = np.asarray(values, dtype=float)
    if x.size != labels.codes.size:
        raise AnovaError(f"{x.size} values for {labels.codes.size} labels")
    rows: List[Dict[str, object]] = []
    for code, category in enumerate(labels.categories):
        group = x[labels.codes == code]
        if group.size == 0:
            continue
        p05, p25, p50, p75, p95 = np.percentile(group, [5, 25, 50, 75, 95])
        row: Dict[str, object] = {
            "covariate": labels.covariate, "category": category, "n": int(group.size),
            "p05": p05, "p25": p25, "p50": p50, "p75": p75, "p95": p95,
        }
        if threshold is not None:
            row["share_above"] = float(np.mean(group > threshold))
        rows.append(row)
    return pd.DataFrame(rows)
