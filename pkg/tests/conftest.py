from __future__ import annotations

import json
from pathlib import Path
from typing import Tuple

import pytest

from src.riskineq.config import ModelConfig
from src.riskineq.data import Dataset, SyntheticSpec, TrueRisks, generate_synthetic
from src.riskineq.model.design import ModelSpec
from src.riskineq.model.sampler import FitResult, fit

SMALL_SPEC = {
    "n_states": 2,
    "districts_per_state": 2,
    "clusters_per_district": 3,
    "mothers_per_cluster": 4,
    "births_per_mother": 3,
    "years": [2000, 2010],
    "intercept": -1.5,
    "intercept_by_year": {"2000": -1.2, "2010": -1.8},
    "mother_var": 0.1,
    "cluster_var": 0.05,
    "district_cov": [[0.1, 0.0], [0.0, 0.001]],
    "state_cov": [[0.05, 0.0], [0.0, 0.001]],
    "covariates": [
        {
            "name": "wealth",
            "kind": "categorical",
            "levels": ["poor", "middle", "rich"],
            "probabilities": [0.34, 0.33, 0.33],
            "probabilities_by_year": {"2000": [0.6, 0.3, 0.1], "2010": [0.1, 0.3, 0.6]},
            "effects": {"poor": 0.8, "middle": 0.3},
        },
        {
            "name": "mother_age",
            "kind": "numeric",
            "mean": 26.0,
            "sd": 5.0,
            "low": 15.0,
            "high": 45.0,
            "integer": True,
            "slope": 0.0,
            "center": 26.0,
        },
    ],
}

TINY_MODEL = {
    "covariates": ["wealth", "mother_age"],
    "splines": {"mother_age": {"degree": 3, "n_interior_knots": 2}},
    "interactions": False,
    "mcmc": {"chains": 2, "warmup": 40, "draws": 25},
}


@pytest.fixture(scope="session")
def small_spec() -> SyntheticSpec:
    return SyntheticSpec.from_dict(SMALL_SPEC)


@pytest.fixture(scope="session")
def small_population(small_spec: SyntheticSpec) -> Tuple[Dataset, TrueRisks]:
    return generate_synthetic(small_spec, seed=11)


@pytest.fixture(scope="session")
def small_dataset(small_population: Tuple[Dataset, TrueRisks]) -> Dataset:
    return small_population[0]


@pytest.fixture(scope="session")
def tiny_model_config() -> ModelConfig:
    return ModelConfig.from_dict(TINY_MODEL)


@pytest.fixture(scope="session")
def tiny_fit(small_dataset: Dataset, tiny_model_config: ModelConfig) -> FitResult:
    spec = ModelSpec.build(tiny_model_config, small_dataset)
    return fit(spec, small_dataset, tiny_model_config.mcmc, seed=3)


@pytest.fixture
def isolated_env(tmp_path: Path, monkeypatch: pytest.MonkeyPatch) -> Path:
    """Point every environment setting at ``tmp_path`` so tests never read a developer's .env."""

    monkeypatch.chdir(tmp_path)
    for name in ("RISKINEQ_WEBHOOK_URL", "RISKINEQ_WORKERS", "RISKINEQ_GRID_SIZE", "RISKINEQ_LOG_LEVEL"):
        monkeypatch.delenv(name, raising=False)
    monkeypatch.setenv("RISKINEQ_LOG_DIR", str(tmp_path / "logs"))
    monkeypatch.setenv("RISKINEQ_REPORT_PATH", str(tmp_path / "logs" / "runs.md"))
    return tmp_path


@pytest.fixture
def spec_file(tmp_path: Path) -> Path:
    path = tmp_path / "spec.json"
    path.write_text(json.dumps(SMALL_SPEC), encoding="utf-8")
    return path


@pytest.fixture
def model_file(tmp_path: Path) -> Path:
    path = tmp_path / "model.json"
    path.write_text(json.dumps(TINY_MODEL), encoding="utf-8")
    return path
