"""Configuration helpers for riskineq.

Runtime settings come from the environment (optionally a ``.env`` file); the
model configuration is a JSON document shared by the CLI and the pipeline.
"""

from __future__ import annotations

import json
import os
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Any, Dict, Mapping, Optional, Tuple

from dotenv import load_dotenv

SAMPLER_METHODS = ("polya-gamma", "metropolis")


@dataclass(frozen=True)
class Settings:
    """Process-wide runtime settings loaded from environment variables."""

    log_dir: Path
    log_level: str
    webhook_url: Optional[str]
    workers: int
    grid_size: int
    report_path: Path

    @classmethod
    def from_env(cls, *, load_env_file: bool = True) -> "Settings":
        """Instantiate settings from environment variables.

        Args:
            load_env_file: If ``True`` (default) a `.env` file located in the
                working directory will be loaded before accessing the environment.

        Raises:
            ValueError: If a numeric setting cannot be parsed or is out of range.
        """

        if load_env_file:
            load_dotenv()

        log_dir = Path(os.getenv("RISKINEQ_LOG_DIR", "logs"))
        workers = _int_env("RISKINEQ_WORKERS", 1)
        grid_size = _int_env("RISKINEQ_GRID_SIZE", 512)
        if workers < 1:
            raise ValueError("RISKINEQ_WORKERS must be at least 1")
        if grid_size < 16:
            raise ValueError("RISKINEQ_GRID_SIZE must be at least 16")

        return cls(
            log_dir=log_dir,
            log_level=os.getenv("RISKINEQ_LOG_LEVEL", "INFO").upper(),
            webhook_url=os.getenv("RISKINEQ_WEBHOOK_URL", "").strip() or None,
            workers=workers,
            grid_size=grid_size,
            report_path=Path(os.getenv("RISKINEQ_REPORT_PATH", str(log_dir / "runs.md"))),
        )


@dataclass(frozen=True)
class McmcConfig:
    """Sampler settings. Defaults are desk-scale."""

    chains: int = 4
    warmup: int = 1000
    draws: int = 1000
    thin: int = 1
    method: str = "polya-gamma"
    workers: int = 1

    def __post_init__(self) -> None:
        if self.chains < 1 or self.draws < 1 or self.warmup < 0 or self.thin < 1:
            raise ValueError("MCMC settings need chains >= 1, draws >= 1, warmup >= 0, thin >= 1")
        if self.method not in SAMPLER_METHODS:
            raise ValueError(f"Unknown sampler method '{self.method}', expected one of {SAMPLER_METHODS}")

    @property
    def total_draws(self) -> int:
        return self.chains * self.draws


@dataclass(frozen=True)
class SplineConfig:
    """B-spline expansion of one numeric covariate."""

    degree: int = 3
    n_interior_knots: int = 3


@dataclass(frozen=True)
class PriorConfig:
    """Prior hyperparameters for fixed effects and variance components."""

    intercept_var: float = 9.0
    main_var: float = 1.0
    interaction_var: float = 0.5
    ig_shape: float = 3.0
    ig_scale: float = 2.0
    iw_scale: Tuple[Tuple[float, float], Tuple[float, float]] = ((1.0, 0.0), (0.0, 0.1))
    iw_df: float = 4.0

    def __post_init__(self) -> None:
        if min(self.intercept_var, self.main_var, self.interaction_var) <= 0:
            raise ValueError("Prior variances must be positive")
        if self.ig_shape <= 0 or self.ig_scale <= 0:
            raise ValueError("Inverse Gamma hyperparameters must be positive")
        if self.iw_df <= 1:
            raise ValueError("Inverse Wishart degrees of freedom must exceed 1 for a 2x2 scale")


@dataclass(frozen=True)
class RandomEffectsConfig:
    """Which nesting levels carry random effects."""

    mother: bool = True
    cluster: bool = True
    district: bool = True
    state: bool = True
    slopes: bool = True  # district/state time slopes


@dataclass(frozen=True)
class ModelConfig:
    """Model configuration document: covariates, splines, priors and MCMC."""

    covariates: Tuple[str, ...] = ()
    splines: Mapping[str, SplineConfig] = field(default_factory=dict)
    interactions: bool = True
    priors: PriorConfig = field(default_factory=PriorConfig)
    random_effects: RandomEffectsConfig = field(default_factory=RandomEffectsConfig)
    mcmc: McmcConfig = field(default_factory=McmcConfig)

    def __post_init__(self) -> None:
        if len(set(self.covariates)) != len(self.covariates):
            raise ValueError("Covariates must be unique")
        unknown = set(self.splines) - set(self.covariates)
        if unknown:
            raise ValueError(f"Spline settings for undeclared covariates: {sorted(unknown)}")

    @classmethod
    def from_dict(cls, payload: Mapping[str, Any]) -> "ModelConfig":
        allowed = {"covariates", "splines", "interactions", "priors", "random_effects", "mcmc"}
        reject_unknown(payload, allowed, "model config")
        priors = dict(payload.get("priors", {}))
        if "iw_scale" in priors:
            priors["iw_scale"] = tuple(tuple(float(v) for v in row) for row in priors["iw_scale"])
        return cls(
            covariates=tuple(payload.get("covariates", ())),
            splines={
                name: _section(SplineConfig, cfg, f"splines.{name}")
                for name, cfg in payload.get("splines", {}).items()
            },
            interactions=bool(payload.get("interactions", True)),
            priors=_section(PriorConfig, priors, "priors"),
            random_effects=_section(RandomEffectsConfig, payload.get("random_effects", {}), "random_effects"),
            mcmc=_section(McmcConfig, payload.get("mcmc", {}), "mcmc"),
        )

    @classmethod
    def from_json(cls, path: Path) -> "ModelConfig":
        with Path(path).open(encoding="utf-8") as handle:
            return cls.from_dict(json.load(handle))

    def with_mcmc(self, **overrides: Any) -> "ModelConfig":
        """Return a copy with some MCMC settings replaced (CLI flags win over the file)."""

        values = asdict(self.mcmc)
        values.update({k: v for k, v in overrides.items() if v is not None})
        return ModelConfig(
            covariates=self.covariates,
            splines=self.splines,
            interactions=self.interactions,
            priors=self.priors,
            random_effects=self.random_effects,
            mcmc=McmcConfig(**values),
        )

    def to_dict(self) -> Dict[str, Any]:
        return {
            "covariates": list(self.covariates),
            "splines": {name: asdict(cfg) for name, cfg in self.splines.items()},
            "interactions": self.interactions,
            "priors": {**asdict(self.priors), "iw_scale": [list(row) for row in self.priors.iw_scale]},
            "random_effects": asdict(self.random_effects),
            "mcmc": asdict(self.mcmc),
        }


def _int_env(name: str, default: int) -> int:
    raw = os.getenv(name)
    if raw is None or raw.strip() == "":
        return default
    try:
        return int(raw)
    except ValueError as exc:
        raise ValueError(f"Environment variable {name} must be an integer, got {raw!r}") from exc


def reject_unknown(payload: Mapping[str, Any], allowed: set, what: str) -> None:
    unknown = set(payload) - allowed
    if unknown:
        raise ValueError(f"Unknown keys in {what}: {sorted(unknown)}")


def _section(kind: Any, payload: Mapping[str, Any], what: str) -> Any:
    """Build one nested config dataclass, rejecting keys it does not declare."""

    reject_unknown(payload, {f.name for f in fields(kind)}, f"model config '{what}'")
    return kind(**payload)
