from __future__ import annotations

import json
from pathlib import Path
from typing import Any, Dict

import pytest

from src.riskineq.artifacts import MANIFEST
from src.riskineq.config import Settings
from src.riskineq.base import DataValidationError
from src.riskineq.pipeline import AdjustStage, PipelineConfig, run_pipeline
from src.riskineq.report import stage_statuses


def _config(tmp_path: Path, **overrides: Any) -> Path:
    payload: Dict[str, Any] = {
        "seed": 7,
        "synthetic": "spec.json",
        "model": "model.json",
        "grid_size": 64,
        "measures": ["mean", "gini"],
        "anova": {"covariates": ["wealth"], "by_year": True},
        "compare": {"select": "year=2000", "against": "year=2010", "threshold": 0.1},
        "adjust": {"base": "year=2000", "target": "year=2010", "statistics": ["mean"], "covariates": ["wealth"]},
    }
    payload.update(overrides)
    payload = {k: v for k, v in payload.items() if v is not None}
    path = tmp_path / "pipeline.json"
    path.write_text(json.dumps(payload), encoding="utf-8")
    return path


def _manifest(directory: Path) -> Dict[str, Any]:
    return json.loads((directory / MANIFEST).read_text(encoding="utf-8"))


def test_config_resolves_documents_next_to_it(tmp_path: Path, spec_file: Path, model_file: Path) -> None:
    config = PipelineConfig.from_json(_config(tmp_path))

    assert config.synthetic["n_states"] == 2
    assert config.model.covariates == ("wealth", "mother_age")
    assert config.adjust.kinds == ("scale", "coefficient", "covariate")
    assert "seed" not in config.to_dict()


def test_config_errors(tmp_path: Path, spec_file: Path, model_file: Path) -> None:
    with pytest.raises(ValueError, match="exactly one"):
        PipelineConfig.from_json(_config(tmp_path, data="data.csv", schema="schema.json"))
    with pytest.raises(ValueError, match="Unknown measures"):
        PipelineConfig.from_json(_config(tmp_path, measures=["entropy"]))
    with pytest.raises(ValueError):
        PipelineConfig.from_json(_config(tmp_path, plots=True))
    with pytest.raises(ValueError, match="Unknown adjustment kinds"):
        AdjustStage(base="year=2000", target="year=2010", kinds=("rescale",))


def test_same_seed_gives_identical_outputs(isolated_env: Path, spec_file: Path, model_file: Path) -> None:
    config = PipelineConfig.from_json(_config(isolated_env))
    settings = Settings.from_env(load_env_file=False)

    first = run_pipeline(config, isolated_env / "first", settings)
    second = run_pipeline(config, isolated_env / "second", settings)

    one, two = _manifest(first.directory), _manifest(second.directory)
    assert one["run_id"] == two["run_id"]
    assert one["outputs"] == two["outputs"]
    assert one["stages"] == {
        "data": "done", "fit": "done", "anova": "done", "compare": "done", "measures": "done", "adjust": "done",
    }
    assert {"data/data.csv", "fit/posterior.bin", "anova/r2.csv", "compare/divergence.csv",
            "measures/measures.csv", "adjust/adjust.csv", "adjust/decompose.csv"} <= set(one["outputs"])
    assert stage_statuses(settings.report_path, first.run_id)["adjust"] == "done"


def test_failed_stage_keeps_earlier_outputs(isolated_env: Path, spec_file: Path, model_file: Path) -> None:
    path = _config(isolated_env, anova=None, compare=None, adjust={"base": "year=1990", "target": "year=2010"})
    settings = Settings.from_env(load_env_file=False)

    with pytest.raises(DataValidationError, match="base population"):
        run_pipeline(PipelineConfig.from_json(path), isolated_env / "out", settings)

    manifest = _manifest(isolated_env / "out")
    assert manifest["stages"] == {"data": "done", "fit": "done", "adjust": "failed"}
    assert "fit/posterior.bin" in manifest["outputs"]
    assert stage_statuses(settings.report_path, manifest["run_id"])["adjust"] == "failed"


def test_missing_seed_is_rejected(isolated_env: Path, spec_file: Path, model_file: Path) -> None:
    path = _config(isolated_env, seed=None)

    with pytest.raises(ValueError, match="seed"):
        run_pipeline(PipelineConfig.from_json(path), isolated_env / "out", Settings.from_env(load_env_file=False))
