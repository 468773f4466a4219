"""Command-line entry point: ``riskineq <subcommand> ...``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import asdict, replace
from datetime import datetime, timezone
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence, Tuple

# Add project root to path so the module also runs as a plain script
project_root = Path(__file__).resolve().parent.parent.parent
if str(project_root) not in sys.path:
    sys.path.insert(0, str(project_root))

import pandas as pd

from src.riskineq.adjust import STATISTICS
from src.riskineq.artifacts import RunArtifacts, read_manifest
from src.riskineq.base import VALIDATION_ERRORS, RiskIneqError
from src.riskineq.compare import METRICS
from src.riskineq.config import ModelConfig, Settings
from src.riskineq.data import CovariateSchema, Dataset, SyntheticSpec, load_csv
from src.riskineq.measures import beta_table, beta_table_frame, symmetry_between
from src.riskineq.model.posterior import PosteriorRisks, load_posterior
from src.riskineq.model.sampler import FitResult, load_fit
from src.riskineq.notifier import RunNotifier
from src.riskineq.pipeline import (
    ADJUST_KINDS,
    DEFAULT_MEASURES,
    AdjustStage,
    AnovaStage,
    CompareStage,
    PipelineConfig,
    adjust_stage,
    anova_stage,
    compare_stage,
    decompose_stage,
    fit_stage,
    load_dataset,
    measure_stage,
    run_pipeline,
    simulate_stage,
)

logger = logging.getLogger(__name__)

TABLE1_ALPHAS = (1.0, 0.5, 0.3, 0.1)


def _names(text: Optional[str]) -> Tuple[str, ...]:
    if not text:
        return ()
    return tuple(part.strip() for part in text.split(",") if part.strip())


def _floats(text: str) -> Tuple[float, ...]:
    try:
        return tuple(float(part) for part in _names(text))
    except ValueError as exc:
        raise ValueError(f"expected comma-separated numbers, got {text!r}") from exc


# ---------------------------------------------------------------------------
# Argument parsing
# ---------------------------------------------------------------------------

def _posterior_arguments(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--posterior", required=True, type=Path, help="directory written by 'riskineq fit'")
    parser.add_argument("--data", type=Path, help="dataset CSV (defaults to the copy stored with the fit)")
    parser.add_argument("--schema", type=Path, help="schema JSON for --data")
    parser.add_argument("-o", "--output", type=Path, help="output directory (defaults to <posterior>/<command>)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="riskineq", description="Mortality-risk inequality from birth histories.")
    sub = parser.add_subparsers(dest="command", required=True)

    simulate = sub.add_parser("simulate", help="generate a synthetic birth dataset with known risks")
    simulate.add_argument("--spec", required=True, type=Path)
    simulate.add_argument("--seed", required=True, type=int)
    simulate.add_argument("-o", "--output", required=True, type=Path)

    fit = sub.add_parser("fit", help="fit the hierarchical logistic model and store posterior risks")
    fit.add_argument("--data", required=True, type=Path)
    fit.add_argument("--schema", required=True, type=Path)
    fit.add_argument("--model", required=True, type=Path)
    fit.add_argument("--chains", type=int)
    fit.add_argument("--draws", type=int)
    fit.add_argument("--warmup", type=int)
    fit.add_argument("--method", choices=("polya-gamma", "metropolis"))
    fit.add_argument("--workers", type=int, help="parallel chains")
    fit.add_argument("--seed", required=True, type=int)
    fit.add_argument("--csv", action="store_true", help="also export the posterior matrix as CSV")
    fit.add_argument("-o", "--output", required=True, type=Path)

    measure = sub.add_parser("measure", help="inequality measures")
    measure_sub = measure.add_subparsers(dest="measure_command", required=True)
    beta = measure_sub.add_parser("beta-table", help="measures of simulated beta risk distributions")
    beta.add_argument("--alphas", default=",".join(f"{a:g}" for a in TABLE1_ALPHAS))
    beta.add_argument("--beta", type=float, default=10.0)
    beta.add_argument("--draws", type=int, default=1_000_000)
    beta.add_argument("--seed", type=int, default=0)
    beta.add_argument("-o", "--output", required=True, type=Path)
    posterior = measure_sub.add_parser("posterior", help="measures per posterior draw on selected populations")
    _posterior_arguments(posterior)
    posterior.add_argument("--select", action="append", required=True, help="population predicate (repeatable)")
    posterior.add_argument("--measures", default=",".join(DEFAULT_MEASURES))

    compare = sub.add_parser("compare", help="per-draw divergence between two populations")
    _posterior_arguments(compare)
    compare.add_argument("--select", required=True)
    compare.add_argument("--against", required=True)
    compare.add_argument("--metric", choices=(*METRICS, "both"), default="l1")
    compare.add_argument("--threshold", type=float, help="report the share of births above this risk")
    compare.add_argument("--grid-size", type=int)

    adjust = sub.add_parser("adjust", help="counterfactual adjustments of a base population toward a target")
    _posterior_arguments(adjust)
    adjust.add_argument("--base", required=True)
    adjust.add_argument("--target", required=True)
    adjust.add_argument("--kind", action="append", choices=ADJUST_KINDS)
    adjust.add_argument("--statistic", action="append", choices=STATISTICS)
    adjust.add_argument("--covariates", help="covariates to swap, comma-separated")
    adjust.add_argument("--conditional-on", help="categorical covariates to resample within")
    adjust.add_argument("--defining-fields", default="birth_year")
    adjust.add_argument("--baseline-year", type=int, help="also tabulate divergence from this year onward")
    adjust.add_argument("--seed", type=int, help="resampling seed (defaults to the fit's seed)")
    adjust.add_argument("--grid-size", type=int)

    decompose = sub.add_parser("decompose", help="single-covariate decomposition table")
    _posterior_arguments(decompose)
    decompose.add_argument("--base", required=True)
    decompose.add_argument("--target", required=True)
    decompose.add_argument("--covariates", required=True)
    decompose.add_argument("--conditional-on")
    decompose.add_argument("--combined", help="covariates also swapped jointly as one extra row")
    decompose.add_argument("--seed", type=int)
    decompose.add_argument("--grid-size", type=int)

    anova = sub.add_parser("anova", help="share of risk variance explained by each grouping")
    _posterior_arguments(anova)
    anova.add_argument("--covariates", required=True)
    anova.add_argument("--by-year", action="store_true")
    anova.add_argument("--threshold", type=float)

    pipeline = sub.add_parser("pipeline", help="fit -> anova -> compare -> adjust in one run")
    pipeline.add_argument("--config", required=True, type=Path)
    pipeline.add_argument("--seed", type=int, help="overrides the seed in the config file")
    pipeline.add_argument("-o", "--output", required=True, type=Path)
    return parser


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------

def _load_dataset(args: argparse.Namespace) -> Dataset:
    if args.data is None:
        return load_dataset(args.posterior)
    if args.schema is None:
        raise ValueError("--data needs --schema")
    return load_csv(args.data, CovariateSchema.from_json(args.schema))


def _load_inputs(args: argparse.Namespace) -> Tuple[PosteriorRisks, Dataset, Optional[int]]:
    dataset = _load_dataset(args)
    posterior = load_posterior(args.posterior, expected_hash=dataset.content_hash())
    return posterior, dataset, read_manifest(args.posterior).get("seed")


def _load_model(args: argparse.Namespace) -> Tuple[FitResult, Optional[int]]:
    model = load_fit(args.posterior, _load_dataset(args))
    return model, read_manifest(args.posterior).get("seed")


def _artifacts(args: argparse.Namespace, command: str, config: Dict, seed: Optional[int], dataset: Dataset) -> RunArtifacts:
    output = args.output or Path(args.posterior) / command
    artifacts = RunArtifacts(output, command, config, seed, dataset_hash=dataset.content_hash())
    return artifacts


def _cmd_simulate(args: argparse.Namespace, settings: Settings, notifier: RunNotifier) -> RunArtifacts:
    payload = json.loads(Path(args.spec).read_text(encoding="utf-8"))
    spec = SyntheticSpec.from_dict(payload)
    artifacts = RunArtifacts(args.output, "simulate", {"spec": payload}, args.seed)
    dataset = simulate_stage(artifacts, spec, args.seed)
    logger.info("Simulated %d births into %s", len(dataset), args.output)
    return artifacts


def _cmd_fit(args: argparse.Namespace, settings: Settings, notifier: RunNotifier) -> RunArtifacts:
    config = ModelConfig.from_json(args.model).with_mcmc(
        chains=args.chains, draws=args.draws, warmup=args.warmup, method=args.method,
        workers=args.workers if args.workers is not None else settings.workers,
    )
    schema = CovariateSchema.from_json(args.schema)
    dataset = load_csv(args.data, schema)
    artifacts = RunArtifacts(
        args.output, "fit", {"model": config.to_dict(), "schema": schema.to_dict()}, args.seed,
        dataset_hash=dataset.content_hash(),
    )
    notifier.notify_started("fit", artifacts.run_id)
    result = fit_stage(artifacts, dataset, config, args.seed, csv=args.csv, notifier=notifier)
    logger.info("Posterior: %d draws x %d births", result.risks.n_draws, result.risks.n_births)
    notifier.notify_finished("fit", artifacts.run_id)
    return artifacts


def _cmd_measure(args: argparse.Namespace, settings: Settings, notifier: RunNotifier) -> RunArtifacts:
    if args.measure_command == "beta-table":
        alphas = _floats(args.alphas)
        artifacts = RunArtifacts(
            args.output, "measure beta-table", {"alphas": list(alphas), "beta": args.beta, "draws": args.draws},
            args.seed,
        )
        rows = beta_table(alphas, args.beta, args.draws, args.seed)
        artifacts.write_table("beta_table.csv", beta_table_frame(rows))
        audits = []
        for i, first in enumerate(rows):
            for second in rows[i + 1:]:
                for audit in symmetry_between(first.report, second.report):
                    audits.append({
                        "alpha_first": first.alpha, "alpha_second": second.alpha, "beta": first.beta,
                        "measure": audit.measure, "mortality_order": audit.mortality_order,
                        "survival_order": audit.survival_order, "agrees": audit.agrees,
                    })
        artifacts.write_table("symmetry.csv", pd.DataFrame(audits))
        return artifacts

    posterior, dataset, seed = _load_inputs(args)
    measures = _names(args.measures)
    artifacts = _artifacts(
        args, "measure", {"command": "measure", "select": args.select, "measures": list(measures)}, seed, dataset
    )
    measure_stage(artifacts, posterior, dataset, args.select, measures, workers=settings.workers)
    return artifacts


def _cmd_compare(args: argparse.Namespace, settings: Settings, notifier: RunNotifier) -> RunArtifacts:
    posterior, dataset, seed = _load_inputs(args)
    stage = CompareStage(
        select=args.select, against=args.against,
        metrics=METRICS if args.metric == "both" else (args.metric,), threshold=args.threshold,
    )
    grid = args.grid_size or settings.grid_size
    artifacts = _artifacts(args, "compare", {"stage": asdict(stage), "grid_size": grid}, seed, dataset)
    compare_stage(artifacts, posterior, dataset, stage, grid_size=grid, workers=settings.workers)
    return artifacts


def _adjust_config(args: argparse.Namespace, kinds: Sequence[str]) -> AdjustStage:
    return AdjustStage(
        base=args.base,
        target=args.target,
        kinds=tuple(kinds),
        statistics=tuple(getattr(args, "statistic", None) or STATISTICS),
        covariates=_names(args.covariates),
        conditional_on=_names(args.conditional_on),
        combined=_names(getattr(args, "combined", None)),
        defining_fields=_names(getattr(args, "defining_fields", "birth_year")),
        baseline_year=getattr(args, "baseline_year", None),
    )


def _cmd_adjust(args: argparse.Namespace, settings: Settings, notifier: RunNotifier) -> RunArtifacts:
    model, fit_seed = _load_model(args)
    stage = _adjust_config(args, args.kind or ADJUST_KINDS)
    seed = args.seed if args.seed is not None else (fit_seed or 0)
    grid = args.grid_size or settings.grid_size
    artifacts = _artifacts(args, "adjust", {"stage": asdict(stage), "grid_size": grid}, seed, model.dataset)
    adjust_stage(artifacts, model, stage, grid_size=grid, seed=seed, workers=settings.workers)
    return artifacts


def _cmd_decompose(args: argparse.Namespace, settings: Settings, notifier: RunNotifier) -> RunArtifacts:
    model, fit_seed = _load_model(args)
    stage = _adjust_config(args, ("covariate",))
    seed = args.seed if args.seed is not None else (fit_seed or 0)
    grid = args.grid_size or settings.grid_size
    artifacts = _artifacts(args, "decompose", {"stage": asdict(stage), "grid_size": grid}, seed, model.dataset)
    decompose_stage(artifacts, model, stage, grid_size=grid, seed=seed, workers=settings.workers)
    return artifacts


def _cmd_anova(args: argparse.Namespace, settings: Settings, notifier: RunNotifier) -> RunArtifacts:
    posterior, dataset, seed = _load_inputs(args)
    stage = AnovaStage(covariates=_names(args.covariates), by_year=args.by_year, threshold=args.threshold)
    artifacts = _artifacts(args, "anova", {"stage": asdict(stage)}, seed, dataset)
    anova_stage(artifacts, posterior, dataset, stage, workers=settings.workers)
    return artifacts


def _cmd_pipeline(args: argparse.Namespace, settings: Settings, notifier: RunNotifier) -> RunArtifacts:
    config = PipelineConfig.from_json(args.config)
    if args.seed is not None:
        config = replace(config, seed=args.seed)
    return run_pipeline(config, args.output, settings, notifier)


COMMANDS: Dict[str, Callable[[argparse.Namespace, Settings, RunNotifier], RunArtifacts]] = {
    "simulate": _cmd_simulate,
    "fit": _cmd_fit,
    "measure": _cmd_measure,
    "compare": _cmd_compare,
    "adjust": _cmd_adjust,
    "decompose": _cmd_decompose,
    "anova": _cmd_anova,
    "pipeline": _cmd_pipeline,
}


# ---------------------------------------------------------------------------
# Entry points
# ---------------------------------------------------------------------------

def _configure_logging(settings: Optional[Settings], command: str) -> None:
    handlers: List[logging.Handler] = [logging.StreamHandler(sys.stderr)]
    if settings is not None:
        settings.log_dir.mkdir(parents=True, exist_ok=True)
        stamp = datetime.now(timezone.utc).strftime("%Y-%m-%d_%H-%M-%S")
        handlers.insert(0, logging.FileHandler(settings.log_dir / f"riskineq_{command}_{stamp}.log"))
    logging.basicConfig(
        level=getattr(logging, settings.log_level, logging.INFO) if settings else logging.INFO,
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
        handlers=handlers,
        force=True,
    )


def run(argv: Optional[Sequence[str]] = None) -> int:
    """Parse ``argv``, run one subcommand and return its exit code.

    0 on success, 1 on invalid input or configuration, 2 on runtime and sampler failures.
    """

    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code in (0, None) else 1

    try:
        settings = Settings.from_env()
    except ValueError as exc:
        _configure_logging(None, args.command)
        logger.error("Configuration error: %s", exc)
        return 1

    _configure_logging(settings, args.command)
    notifier = RunNotifier(settings.webhook_url)
    try:
        artifacts = COMMANDS[args.command](args, settings, notifier)
        artifacts.write_manifest()
    except VALIDATION_ERRORS + (OSError,) as exc:
        logger.error("Invalid input for '%s': %s", args.command, exc)
        notifier.notify_failure(args.command, str(exc))
        return 1
    except RiskIneqError as exc:
        logger.error("'%s' failed: %s", args.command, exc)
        notifier.notify_failure(args.command, str(exc))
        return 2
    except Exception as exc:  # pragma: no cover - unexpected failures still map to an exit code
        logger.exception("Unexpected failure in '%s': %s", args.command, exc)
        notifier.notify_failure(args.command, repr(exc))
        return 2
    logger.info("Run %s: wrote %d file(s) to %s", artifacts.run_id, len(artifacts.outputs), artifacts.directory)
    return 0


def main() -> int:
    return run(sys.argv[1:])


if __name__ == "__main__":  # pragma: no cover - manual invocation entry point
    raise SystemExit(main())
