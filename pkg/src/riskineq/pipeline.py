"""Analysis stages shared by the CLI subcommands and the one-shot pipeline.

Each stage reads posterior risks (or a fitted model), writes plot-ready CSV tables
through :class:`~src.riskineq.artifacts.RunArtifacts` and returns the paths written.
"""

from __future__ import annotations

import json
import logging
from contextlib import contextmanager
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Any, Dict, Iterator, List, Mapping, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from .adjust import (
    STATISTICS,
    baseline_trend,
    coefficient_swap,
    covariate_swap,
    decompose_table,
    per_draw_scale_adjust,
    triangle_draws,
)
from .anova import GroupLabeling, group_quantiles, r2_posterior, trend_table
from .artifacts import RunArtifacts
from .base import (
    AdjustmentError,
    AnovaError,
    DataValidationError,
    PosteriorSummary,
    summarize_draws,
)
from .compare import METRICS, density_band, density_summary, per_draw_compare
from .config import ModelConfig, Settings, reject_unknown
from .data import CovariateSchema, Dataset, SyntheticSpec, generate_synthetic, load_csv, select
from .measures import MEASURES, posterior_measure, prob_greater
from .model.design import ModelSpec
from .model.posterior import PosteriorRisks, posterior_mean_risks
from .model.sampler import FitResult, fit, save_fit
from .notifier import RunNotifier
from .report import log_stage

logger = logging.getLogger(__name__)

ADJUST_KINDS = ("scale", "coefficient", "covariate")
DEFAULT_MEASURES = ("mean", "sd", "cv", "gini", "theil")
DATA_NAME = "data.csv"
SCHEMA_NAME = "schema.json"
TRUE_RISKS_NAME = "true_risks.csv"


# ---------------------------------------------------------------------------
# Stage configuration
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class AnovaStage:
    covariates: Tuple[str, ...]
    by_year: bool = True
    threshold: Optional[float] = None

    @classmethod
    def from_dict(cls, payload: Mapping[str, Any]) -> "AnovaStage":
        reject_unknown(payload, {"covariates", "by_year", "threshold"}, "anova stage")
        return cls(
            covariates=tuple(payload.get("covariates", ())),
            by_year=bool(payload.get("by_year", True)),
            threshold=payload.get("threshold"),
        )


@dataclass(frozen=True)
class CompareStage:
    select: str
    against: str
    metrics: Tuple[str, ...] = METRICS
    threshold: Optional[float] = None

    def __post_init__(self) -> None:
        unknown = set(self.metrics) - set(METRICS)
        if unknown:
            raise ValueError(f"Unknown metrics {sorted(unknown)}, expected a subset of {METRICS}")

    @classmethod
    def from_dict(cls, payload: Mapping[str, Any]) -> "CompareStage":
        reject_unknown(payload, {"select", "against", "metrics", "threshold"}, "compare stage")
        return cls(
            select=str(payload["select"]),
            against=str(payload["against"]),
            metrics=tuple(payload.get("metrics", METRICS)),
            threshold=payload.get("threshold"),
        )


@dataclass(frozen=True)
class AdjustStage:
    """Base and target populations plus the adjustments to build between them."""

    base: str
    target: str
    kinds: Tuple[str, ...] = ADJUST_KINDS
    statistics: Tuple[str, ...] = STATISTICS
    covariates: Tuple[str, ...] = ()
    conditional_on: Tuple[str, ...] = ()
    combined: Tuple[str, ...] = ()
    defining_fields: Tuple[str, ...] = ("birth_year",)
    baseline_year: Optional[int] = None

    def __post_init__(self) -> None:
        if set(self.kinds) - set(ADJUST_KINDS):
            raise ValueError(f"Unknown adjustment kinds {sorted(set(self.kinds) - set(ADJUST_KINDS))}")
        if set(self.statistics) - set(STATISTICS):
            raise ValueError(f"Unknown statistics {sorted(set(self.statistics) - set(STATISTICS))}")

    @classmethod
    def from_dict(cls, payload: Mapping[str, Any]) -> "AdjustStage":
        allowed = set(cls.__dataclass_fields__)
        reject_unknown(payload, allowed, "adjust stage")
        data = {k: tuple(v) if isinstance(v, list) else v for k, v in payload.items()}
        return cls(**data)


@dataclass(frozen=True)
class PipelineConfig:
    """fit -> anova -> compare -> measures -> adjust on one dataset (loaded or simulated)."""

    model: ModelConfig
    seed: Optional[int] = None
    synthetic: Optional[Mapping[str, Any]] = None
    data: Optional[Path] = None
    schema: Optional[Path] = None
    grid_size: int = 256
    measures: Tuple[str, ...] = DEFAULT_MEASURES
    anova: Optional[AnovaStage] = None
    compare: Optional[CompareStage] = None
    adjust: Optional[AdjustStage] = None

    def __post_init__(self) -> None:
        if (self.synthetic is None) == (self.data is None):
            raise ValueError("Pipeline needs exactly one of 'synthetic' or 'data'")
        if self.data is not None and self.schema is None:
            raise ValueError("Pipeline 'data' needs a 'schema'")
        unknown = set(self.measures) - set(MEASURES)
        if unknown:
            raise ValueError(f"Unknown measures {sorted(unknown)}")

    @classmethod
    def from_dict(cls, payload: Mapping[str, Any], base_dir: Path = Path(".")) -> "PipelineConfig":
        allowed = {"model", "seed", "synthetic", "data", "schema", "grid_size", "measures", "anova", "compare", "adjust"}
        reject_unknown(payload, allowed, "pipeline config")

        def resolve(value: str) -> Path:
            path = Path(value)
            return path if path.is_absolute() else base_dir / path

        def document(value: Any) -> Mapping[str, Any]:
            if isinstance(value, str):
                return json.loads(resolve(value).read_text(encoding="utf-8"))
            return dict(value)

        if "model" not in payload:
            raise ValueError("Pipeline config needs a 'model'")
        return cls(
            model=ModelConfig.from_dict(document(payload["model"])),
            seed=payload.get("seed"),
            synthetic=document(payload["synthetic"]) if "synthetic" in payload else None,
            data=resolve(payload["data"]) if "data" in payload else None,
            schema=resolve(payload["schema"]) if "schema" in payload else None,
            grid_size=int(payload.get("grid_size", 256)),
            measures=tuple(payload.get("measures", DEFAULT_MEASURES)),
            anova=AnovaStage.from_dict(payload["anova"]) if "anova" in payload else None,
            compare=CompareStage.from_dict(payload["compare"]) if "compare" in payload else None,
            adjust=AdjustStage.from_dict(payload["adjust"]) if "adjust" in payload else None,
        )

    @classmethod
    def from_json(cls, path: Path) -> "PipelineConfig":
        path = Path(path)
        return cls.from_dict(json.loads(path.read_text(encoding="utf-8")), base_dir=path.parent)

    def to_dict(self) -> Dict[str, Any]:
        """Content of the configuration without file locations or the seed."""

        payload: Dict[str, Any] = {
            "model": self.model.to_dict(),
            "grid_size": self.grid_size,
            "measures": list(self.measures),
        }
        if self.synthetic is not None:
            payload["synthetic"] = dict(self.synthetic)
        if self.schema is not None:
            payload["schema"] = CovariateSchema.from_json(self.schema).to_dict()
        for name in ("anova", "compare", "adjust"):
            stage = getattr(self, name)
            if stage is not None:
                payload[name] = asdict(stage)
        return payload


# ---------------------------------------------------------------------------
# Helpers
# ---------------------------------------------------------------------------

def _population(dataset: Dataset, predicate: str, role: str) -> np.ndarray:
    idx = select(dataset, predicate)
    if idx.size < 2:
        raise DataValidationError(f"{role} population '{predicate}' has {idx.size} birth(s); at least two are needed")
    return idx


def _summary_row(summary: PosteriorSummary, **keys: Any) -> Dict[str, Any]:
    return {**keys, "median": summary.median, "lo": summary.lo, "hi": summary.hi}


def _band_rows(label: str, draws: np.ndarray, grid_size: int, workers: int) -> pd.DataFrame:
    band = density_band(draws, grid_size, workers=workers)
    return pd.DataFrame({
        "population": label, "grid": band.grid, "height": band.heights, "lo": band.lo, "hi": band.hi,
    })


def risk_summary_table(
    populations: Mapping[str, np.ndarray],
    grid_size: int,
    threshold: Optional[float] = None,
    workers: int = 1,
) -> pd.DataFrame:
    """Mode, mean, median (and share above ``threshold``) of each population's risk, per draw then summarized."""

    rows = []
    for label, draws in populations.items():
        for statistic, summary in density_summary(draws, grid_size, threshold, workers).items():
            rows.append(_summary_row(summary, population=label, statistic=statistic))
    return pd.DataFrame(rows)


def write_dataset(artifacts: RunArtifacts, dataset: Dataset, subdir: str = "") -> List[Path]:
    """Copy of the analysed data and its schema next to the results that refer to them."""

    data_path = artifacts.path(f"{subdir}{DATA_NAME}")
    data_path.write_text(f"# {artifacts.provenance}\n{dataset.to_csv_text()}", encoding="utf-8")
    schema_path = artifacts.path(f"{subdir}{SCHEMA_NAME}")
    dataset.schema.write_json(schema_path)
    artifacts.track([data_path, schema_path])
    return [data_path, schema_path]


def load_dataset(directory: Path) -> Dataset:
    directory = Path(directory)
    schema = CovariateSchema.from_json(directory / SCHEMA_NAME)
    return load_csv(directory / DATA_NAME, schema)


# ---------------------------------------------------------------------------
# Stages
# ---------------------------------------------------------------------------

def simulate_stage(artifacts: RunArtifacts, spec: SyntheticSpec, seed: int, subdir: str = "") -> Dataset:
    dataset, truth = generate_synthetic(spec, seed)
    write_dataset(artifacts, dataset, subdir)
    artifacts.write_table(f"{subdir}{TRUE_RISKS_NAME}", truth.to_frame())
    artifacts.dataset_hash = dataset.content_hash()
    return dataset


def fit_stage(
    artifacts: RunArtifacts,
    dataset: Dataset,
    config: ModelConfig,
    seed: int,
    *,
    subdir: str = "",
    csv: bool = False,
    notifier: Optional[RunNotifier] = None,
) -> FitResult:
    spec = ModelSpec.build(config, dataset)
    result = fit(spec, dataset, config.mcmc, seed)
    directory = artifacts.directory / subdir
    artifacts.track(save_fit(result, directory, csv=csv, comment=artifacts.provenance))
    write_dataset(artifacts, dataset, subdir)
    artifacts.dataset_hash = dataset.content_hash()
    flagged = result.diagnostics.flagged()
    if flagged and notifier is not None:
        notifier.notify_convergence(result.diagnostics.max_rhat, flagged)
    return result


def anova_stage(
    artifacts: RunArtifacts,
    posterior: PosteriorRisks,
    dataset: Dataset,
    stage: AnovaStage,
    *,
    workers: int = 1,
    subdir: str = "",
) -> List[Path]:
    if not stage.covariates:
        raise AnovaError("no covariates to decompose over")
    r2_rows, per_year, quantiles = [], [], []
    mean_risks = posterior_mean_risks(posterior)
    for covariate in stage.covariates:
        labels = GroupLabeling.from_dataset(dataset, covariate)
        pooled = r2_posterior(posterior, labels, workers=workers)
        r2_rows.append(_summary_row(pooled.summary, covariate=covariate, year="all"))
        if stage.by_year:
            for result in r2_posterior(posterior, labels, by_year=True, workers=workers):
                per_year.append(result)
                r2_rows.append(_summary_row(result.summary, covariate=covariate, year=result.year))
        quantiles.append(group_quantiles(mean_risks[labels.indices], labels, stage.threshold))

    written = [
        artifacts.write_table(f"{subdir}r2.csv", pd.DataFrame(r2_rows)),
        artifacts.write_table(f"{subdir}group_quantiles.csv", pd.concat(quantiles, ignore_index=True)),
    ]
    if per_year:
        try:
            written.append(artifacts.write_table(f"{subdir}r2_trend.csv", trend_table(per_year)))
        except AnovaError as exc:
            logger.warning("No R^2 trend table: %s", exc)
    return written


def compare_stage(
    artifacts: RunArtifacts,
    posterior: PosteriorRisks,
    dataset: Dataset,
    stage: CompareStage,
    *,
    grid_size: int,
    workers: int = 1,
    subdir: str = "",
) -> List[Path]:
    p_idx = _population(dataset, stage.select, "selected")
    q_idx = _population(dataset, stage.against, "comparison")
    p_draws, q_draws = posterior.select(p_idx), posterior.select(q_idx)

    per_draw, summaries = [], []
    for metric in stage.metrics:
        result = per_draw_compare(p_draws, q_draws, metric, grid_size, workers)
        per_draw.append(pd.DataFrame({
            "draw": np.arange(posterior.n_draws), "chain": posterior.chain, "iteration": posterior.iteration,
            "metric": metric, "value": result.values,
        }))
        summaries.append(_summary_row(result.summary, metric=metric))

    bands = pd.concat(
        [_band_rows(stage.select, p_draws, grid_size, workers), _band_rows(stage.against, q_draws, grid_size, workers)],
        ignore_index=True,
    )
    populations = {stage.select: p_draws, stage.against: q_draws}
    return [
        artifacts.write_table(f"{subdir}divergence_draws.csv", pd.concat(per_draw, ignore_index=True)),
        artifacts.write_table(f"{subdir}divergence.csv", pd.DataFrame(summaries)),
        artifacts.write_table(f"{subdir}density_band.csv", bands),
        artifacts.write_table(
            f"{subdir}risk_summary.csv", risk_summary_table(populations, grid_size, stage.threshold, workers)
        ),
    ]


def measure_stage(
    artifacts: RunArtifacts,
    posterior: PosteriorRisks,
    dataset: Dataset,
    populations: Sequence[str],
    measures: Sequence[str] = DEFAULT_MEASURES,
    *,
    workers: int = 1,
    subdir: str = "",
) -> List[Path]:
    """Posterior summaries of inequality measures on mortality and survival for each population.

    With exactly two populations, also the posterior probability that the first one's
    measure exceeds the second's.
    """

    per_draw: Dict[Tuple[str, str, str], np.ndarray] = {}
    rows = []
    for predicate in populations:
        idx = _population(dataset, predicate, "measured")
        for scale in ("mortality", "survival"):
            for name in measures:
                values = posterior_measure(
                    posterior.values, name, idx, complement=scale == "survival", workers=workers
                )
                per_draw[(predicate, scale, name)] = values
                rows.append(_summary_row(_summarize(values), population=predicate, scale=scale, measure=name))
    written = [artifacts.write_table(f"{subdir}measures.csv", pd.DataFrame(rows))]
    if len(populations) == 2:
        first, second = populations
        prob_rows = [
            {"scale": scale, "measure": name, "first": first, "second": second,
             "prob_first_greater": prob_greater(per_draw[(first, scale, name)], per_draw[(second, scale, name)])}
            for scale in ("mortality", "survival") for name in measures
        ]
        written.append(artifacts.write_table(f"{subdir}measure_prob.csv", pd.DataFrame(prob_rows)))
    return written


def _summarize(values: np.ndarray) -> PosteriorSummary:
    finite = values[np.isfinite(values)]
    if finite.size < values.size:
        logger.warning("%d of %d draws gave an undefined measure", values.size - finite.size, values.size)
    if finite.size == 0:
        return PosteriorSummary(median=float("nan"), lo=float("nan"), hi=float("nan"))
    return summarize_draws(finite)


def adjust_stage(
    artifacts: RunArtifacts,
    model: FitResult,
    stage: AdjustStage,
    *,
    grid_size: int,
    seed: int,
    workers: int = 1,
    subdir: str = "",
) -> List[Path]:
    """Scale, coefficient and covariate adjustments of the base toward the target, per draw."""

    dataset = model.dataset
    base_idx = _population(dataset, stage.base, "base")
    target_idx = _population(dataset, stage.target, "target")
    base_draws, target_draws = model.risks.select(base_idx), model.risks.select(target_idx)

    rows: List[Dict[str, Any]] = []
    for metric in METRICS:
        raw = per_draw_compare(base_draws, target_draws, metric, grid_size, workers)
        rows.append(_summary_row(raw.summary, adjustment="none", metric=metric, b_median=float("nan")))
    if "scale" in stage.kinds:
        for statistic in stage.statistics:
            for metric in METRICS:
                scaled = per_draw_scale_adjust(base_draws, target_draws, statistic, metric, grid_size, workers)
                rows.append(_summary_row(
                    scaled.adjusted.summary, adjustment=f"scale[{statistic}]", metric=metric,
                    b_median=float(np.median(scaled.b)),
                ))

    adjusted: Dict[str, np.ndarray] = {}
    if "coefficient" in stage.kinds:
        adjusted["coefficient"] = coefficient_swap(model, target_idx, base_idx, stage.defining_fields)
    if "covariate" in stage.kinds:
        for name in stage.covariates:
            given = [c for c in stage.conditional_on if c != name]
            adjusted[f"covariate[{name}]"] = covariate_swap(
                model, base_idx, target_idx, name, conditional_on=given, seed=seed
            )

    triangles = []
    for label, draws in adjusted.items():
        for metric in METRICS:
            result = per_draw_compare(draws, target_draws, metric, grid_size, workers)
            rows.append(_summary_row(result.summary, adjustment=label, metric=metric, b_median=float("nan")))
        for operator in ("l1", "rel_mean"):
            reports = triangle_draws(base_draws, draws, target_draws, operator, grid_size, workers)
            slack = np.array([r.slack for r in reports])
            triangles.append(_summary_row(
                _summarize(slack), adjustment=label, operator=operator,
                share_holds=float(np.mean([r.holds for r in reports])),
                share_valid=float(np.mean([r.valid for r in reports])),
            ))

    band_sources = {"base": base_draws, "target": target_draws, **adjusted}
    bands = pd.concat([_band_rows(k, v, grid_size, workers) for k, v in band_sources.items()], ignore_index=True)
    written = [
        artifacts.write_table(f"{subdir}adjust.csv", pd.DataFrame(rows)),
        artifacts.write_table(f"{subdir}adjusted_band.csv", bands),
    ]
    if triangles:
        written.append(artifacts.write_table(f"{subdir}triangle.csv", pd.DataFrame(triangles)))
    if stage.baseline_year is not None:
        for statistic in stage.statistics:
            trend = baseline_trend(
                model.risks, dataset, stage.baseline_year, "l1", statistic, grid_size, workers
            )
            written.append(artifacts.write_table(f"{subdir}baseline_trend_{statistic}.csv", trend))
    return written


def decompose_stage(
    artifacts: RunArtifacts,
    model: FitResult,
    stage: AdjustStage,
    *,
    grid_size: int,
    seed: int,
    workers: int = 1,
    subdir: str = "",
) -> List[Path]:
    if not stage.covariates:
        raise AdjustmentError("decomposition needs at least one covariate")
    base_idx = _population(model.dataset, stage.base, "base")
    target_idx = _population(model.dataset, stage.target, "target")
    table = decompose_table(
        model, base_idx, target_idx, stage.covariates,
        conditional_on=stage.conditional_on, combined=stage.combined or None,
        grid_size=grid_size, seed=seed, workers=workers,
    )
    return [artifacts.write_table(f"{subdir}decompose.csv", table)]


# ---------------------------------------------------------------------------
# One-shot pipeline
# ---------------------------------------------------------------------------

@contextmanager
def _stage(
    artifacts: RunArtifacts, name: str, settings: Settings, notifier: RunNotifier
) -> Iterator[None]:
    before = len(artifacts.outputs)
    artifacts.mark(name, "started")
    log_stage(settings.report_path, artifacts.run_id, name, "started")
    try:
        yield
    except Exception as exc:
        artifacts.mark(name, "failed")
        log_stage(settings.report_path, artifacts.run_id, name, "failed", notes=str(exc))
        notifier.notify_failure(f"pipeline stage {name}", str(exc))
        raise
    new = artifacts.outputs[before:]
    artifacts.mark(name, "done")
    log_stage(settings.report_path, artifacts.run_id, name, "done", outputs=new)
    notifier.notify_stage(name, len(new))


def run_pipeline(
    config: PipelineConfig,
    output: Path,
    settings: Settings,
    notifier: Optional[RunNotifier] = None,
) -> RunArtifacts:
    """Run every configured stage into ``output``; a failed stage leaves earlier outputs and its marker behind."""

    if config.seed is None:
        raise ValueError("Pipeline needs a seed")
    notifier = notifier or RunNotifier(None)
    artifacts = RunArtifacts(output, "pipeline", config.to_dict(), config.seed)
    notifier.notify_started("pipeline", artifacts.run_id)
    seed, grid, workers = config.seed, config.grid_size, settings.workers

    with _stage(artifacts, "data", settings, notifier):
        if config.synthetic is not None:
            dataset = simulate_stage(artifacts, SyntheticSpec.from_dict(config.synthetic), seed, "data/")
        else:
            dataset = load_csv(config.data, CovariateSchema.from_json(config.schema))
            artifacts.dataset_hash = dataset.content_hash()

    with _stage(artifacts, "fit", settings, notifier):
        model = fit_stage(artifacts, dataset, config.model, seed, subdir="fit/", notifier=notifier)

    if config.anova is not None:
        with _stage(artifacts, "anova", settings, notifier):
            anova_stage(artifacts, model.risks, dataset, config.anova, workers=workers, subdir="anova/")

    if config.compare is not None:
        with _stage(artifacts, "compare", settings, notifier):
            compare_stage(
                artifacts, model.risks, dataset, config.compare, grid_size=grid, workers=workers, subdir="compare/"
            )
        with _stage(artifacts, "measures", settings, notifier):
            measure_stage(
                artifacts, model.risks, dataset, [config.compare.select, config.compare.against],
                config.measures, workers=workers, subdir="measures/",
            )

    if config.adjust is not None:
        with _stage(artifacts, "adjust", settings, notifier):
            adjust_stage(
                artifacts, model, config.adjust, grid_size=grid, seed=seed, workers=workers, subdir="adjust/"
            )
            if config.adjust.covariates:
                decompose_stage(
                    artifacts, model, config.adjust, grid_size=grid, seed=seed, workers=workers, subdir="adjust/"
                )

    artifacts.write_manifest()
    notifier.notify_finished("pipeline", artifacts.run_id)
    logger.info("Pipeline run %s wrote %d file(s) to %s", artifacts.run_id, len(artifacts.outputs), output)
    return artifacts
