from __future__ import annotations

from pathlib import Path

import pytest

from src.riskineq.config import McmcConfig, ModelConfig, PriorConfig, Settings


def test_settings_defaults(isolated_env: Path) -> None:
    settings = Settings.from_env(load_env_file=False)

    assert settings.log_dir == isolated_env / "logs"
    assert settings.log_level == "INFO"
    assert settings.webhook_url is None
    assert settings.workers == 1
    assert settings.grid_size == 512


def test_settings_read_env(isolated_env: Path, monkeypatch: pytest.MonkeyPatch) -> None:
    monkeypatch.setenv("RISKINEQ_WORKERS", "4")
    monkeypatch.setenv("RISKINEQ_GRID_SIZE", "256")
    monkeypatch.setenv("RISKINEQ_LOG_LEVEL", "debug")
    monkeypatch.setenv("RISKINEQ_WEBHOOK_URL", "  https://hooks.example/abc  ")

    settings = Settings.from_env(load_env_file=False)

    assert settings.workers == 4
    assert settings.grid_size == 256
    assert settings.log_level == "DEBUG"
    assert settings.webhook_url == "https://hooks.example/abc"


def test_settings_reject_bad_numbers(isolated_env: Path, monkeypatch: pytest.MonkeyPatch) -> None:
    monkeypatch.setenv("RISKINEQ_WORKERS", "many")
    with pytest.raises(ValueError, match="RISKINEQ_WORKERS"):
        Settings.from_env(load_env_file=False)

    monkeypatch.setenv("RISKINEQ_WORKERS", "0")
    with pytest.raises(ValueError, match="at least 1"):
        Settings.from_env(load_env_file=False)


def test_mcmc_config_validation() -> None:
    assert McmcConfig().total_draws == 4000
    with pytest.raises(ValueError):
        McmcConfig(chains=0)
    with pytest.raises(ValueError, match="sampler method"):
        McmcConfig(method="hmc")
    with pytest.raises(ValueError):
        McmcConfig(thin=0)


def test_prior_config_validation() -> None:
    with pytest.raises(ValueError):
        PriorConfig(main_var=0.0)
    with pytest.raises(ValueError):
        PriorConfig(iw_df=1.0)


def test_model_config_document() -> None:
    payload = {
        "covariates": ["wealth", "mother_age"],
        "splines": {"mother_age": {"degree": 2, "n_interior_knots": 4}},
        "interactions": False,
        "priors": {"iw_scale": [[2.0, 0.0], [0.0, 0.5]]},
        "random_effects": {"mother": False},
        "mcmc": {"chains": 2, "draws": 50, "method": "metropolis"},
    }

    config = ModelConfig.from_dict(payload)

    assert config.covariates == ("wealth", "mother_age")
    assert config.splines["mother_age"].n_interior_knots == 4
    assert config.priors.iw_scale == ((2.0, 0.0), (0.0, 0.5))
    assert config.random_effects.mother is False and config.random_effects.state is True
    assert config.mcmc.method == "metropolis"
    assert ModelConfig.from_dict(config.to_dict()) == config


def test_model_config_rejects_unknown_keys() -> None:
    with pytest.raises(ValueError, match="Unknown keys"):
        ModelConfig.from_dict({"covariates": [], "sampler": "nuts"})
    with pytest.raises(ValueError, match="undeclared covariates"):
        ModelConfig.from_dict({"covariates": ["wealth"], "splines": {"age": {}}})


@pytest.mark.parametrize(
    "section, payload",
    [
        ("mcmc", {"mcmc": {"chians": 2}}),
        ("priors", {"priors": {"ig_shpe": 3.0}}),
        ("random_effects", {"random_effects": {"village": False}}),
        ("splines.age", {"covariates": ["age"], "splines": {"age": {"knots": 4}}}),
    ],
)
def test_model_config_rejects_unknown_nested_keys(section: str, payload: dict) -> None:
    with pytest.raises(ValueError, match=f"Unknown keys in model config '{section}'"):
        ModelConfig.from_dict(payload)


def test_with_mcmc_keeps_unset_values() -> None:
    config = ModelConfig.from_dict({"mcmc": {"chains": 3, "draws": 10}})

    updated = config.with_mcmc(draws=20, chains=None)

    assert updated.mcmc.chains == 3
    assert updated.mcmc.draws == 20
    assert config.mcmc.draws == 10
