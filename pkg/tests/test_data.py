from __future__ import annotations

from pathlib import Path

import numpy as np
import pytest
from scipy.special import expit

from src.riskineq.base import DataValidationError, UnknownFieldError
from src.riskineq.data import (
    CovariateSchema,
    Dataset,
    SyntheticSpec,
    generate_synthetic,
    load_csv,
    parse_predicate,
    select,
)

SCHEMA = {
    "columns": {
        "outcome": "outcome",
        "birth_year": "year",
        "mother_id": "id",
        "cluster_id": "id",
        "district_id": "id",
        "state_id": "id",
        "wealth": {"categorical": ["poor", "middle", "rich"], "reference": "poor"},
        "mother_age": "numeric",
    },
    "study_window": [1990, 2010],
    "numeric_windows": {"mother_age": [12, 50]},
}

HEADER = "outcome,birth_year,mother_id,cluster_id,district_id,state_id,wealth,mother_age"
ROWS = [
    "0,2000,m1,c1,d1,s1,poor,22",
    "1,2001,m1,c1,d1,s1,poor,24",
    "0,2005,m2,c2,d1,s1,rich,30",
    "0,2009,m3,c3,d2,s2,middle,19",
]


@pytest.fixture
def schema() -> CovariateSchema:
    return CovariateSchema.from_dict(SCHEMA)


def _write(tmp_path: Path, rows, header: str = HEADER) -> Path:
    path = tmp_path / "births.csv"
    path.write_text("\n".join([header, *rows]) + "\n", encoding="utf-8")
    return path


def test_load_csv_builds_dataset(tmp_path: Path, schema: CovariateSchema) -> None:
    dataset = load_csv(_write(tmp_path, ROWS), schema)

    assert len(dataset) == 4
    assert dataset.outcome.tolist() == [0, 1, 0, 0]
    assert dataset.column("year").tolist() == [2000, 2001, 2005, 2009]
    assert dataset.column("mother_age").tolist() == [22.0, 24.0, 30.0, 19.0]
    record = dataset.record(2)
    assert record.mother_id == "m2" and record.state_id == "s1"
    assert record.covariates["wealth"] == "rich"
    with pytest.raises(ValueError):
        dataset.outcome[0] = 1


@pytest.mark.parametrize(
    "row_index, replacement, field",
    [
        (1, "2,2001,m1,c1,d1,s1,poor,24", "outcome"),
        (1, "1,1985,m1,c1,d1,s1,poor,24", "birth_year"),
        (1, "1,2001,m1,c1,d1,s1,affluent,24", "wealth"),
        (1, "1,2001,m1,c1,d1,s1,poor,61", "mother_age"),
        (1, "1,2001,m1,c1,d1,s1,poor,", "mother_age"),
        (1, "1,2001,m1,c1,d1,s1,poor,abc", "mother_age"),
    ],
)
def test_load_csv_reports_row_and_field(
    tmp_path: Path, schema: CovariateSchema, row_index: int, replacement: str, field: str
) -> None:
    rows = list(ROWS)
    rows[row_index] = replacement

    with pytest.raises(DataValidationError) as info:
        load_csv(_write(tmp_path, rows), schema)

    assert info.value.row == row_index + 1
    assert info.value.field == field
    assert f"row {row_index + 1}" in str(info.value)


def test_windows_hold_for_every_constructed_dataset(tmp_path: Path, schema: CovariateSchema) -> None:
    dataset = load_csv(_write(tmp_path, ROWS), schema)

    with pytest.raises(DataValidationError, match="study window") as info:
        dataset.replace({"year": np.array([2000, 2001, 1985, 2009])})
    assert info.value.row == 3
    assert info.value.field == "birth_year"

    with pytest.raises(DataValidationError, match="outside window") as info:
        dataset.replace({"mother_age": np.array([22.0, 24.0, 30.0, 55.0])})
    assert info.value.row == 4
    assert info.value.field == "mother_age"

    assert dataset.replace({"year": np.array([1990, 2010, 2000, 2000])}).column("year").tolist() == [1990, 2010, 2000, 2000]


def test_load_csv_rejects_broken_nesting(tmp_path: Path, schema: CovariateSchema) -> None:
    rows = list(ROWS)
    rows[1] = "1,2001,m1,c2,d1,s1,poor,24"

    with pytest.raises(DataValidationError, match="nesting violated") as info:
        load_csv(_write(tmp_path, rows), schema)

    assert info.value.field == "mother_id"


def test_load_csv_missing_column(tmp_path: Path, schema: CovariateSchema) -> None:
    header = HEADER.replace(",mother_age", "")
    rows = [r.rsplit(",", 1)[0] for r in ROWS]

    with pytest.raises(DataValidationError, match="mother_age"):
        load_csv(_write(tmp_path, rows, header), schema)


def test_load_csv_skips_provenance_line(tmp_path: Path, schema: CovariateSchema) -> None:
    path = tmp_path / "tagged.csv"
    path.write_text("# run_id=abc manifest=manifest.json\n" + "\n".join([HEADER, *ROWS]) + "\n", encoding="utf-8")

    assert len(load_csv(path, schema)) == 4


def test_content_hash_survives_csv_round_trip(tmp_path: Path, schema: CovariateSchema) -> None:
    dataset = load_csv(_write(tmp_path, ROWS), schema)
    copy = tmp_path / "copy.csv"
    dataset.to_csv(copy)

    reloaded = load_csv(copy, schema)

    assert reloaded == dataset
    assert reloaded.content_hash() == dataset.content_hash()


def test_schema_requires_nesting_ids() -> None:
    payload = {"columns": {"outcome": "outcome", "year": "year", "mother_id": "id"}}
    with pytest.raises(DataValidationError, match="nesting id"):
        CovariateSchema.from_dict(payload)


def test_schema_document_round_trip(schema: CovariateSchema) -> None:
    assert CovariateSchema.from_dict(schema.to_dict()) == schema
    assert schema.covariate_names == ("wealth", "mother_age")
    assert schema.resolve("year") == "birth_year"
    with pytest.raises(UnknownFieldError):
        schema.resolve("caste")


def test_select_with_predicates(tmp_path: Path, schema: CovariateSchema) -> None:
    dataset = load_csv(_write(tmp_path, ROWS), schema)

    assert select(dataset, "wealth=poor|rich AND year>=2001").tolist() == [1, 2]
    assert select(dataset, "mother_age<23, outcome=0").tolist() == [0, 3]
    assert select(dataset, "wealth!=poor").tolist() == [2, 3]
    assert select(dataset, {"year": 2000}).tolist() == [0]
    assert select(dataset, "district_id=d2").tolist() == [3]
    assert select(dataset, "year>2010").size == 0


def test_select_errors(tmp_path: Path, schema: CovariateSchema) -> None:
    dataset = load_csv(_write(tmp_path, ROWS), schema)

    with pytest.raises(UnknownFieldError):
        select(dataset, "caste=SC")
    with pytest.raises(DataValidationError):
        select(dataset, "wealth ~ poor")
    with pytest.raises(DataValidationError):
        select(dataset, "year=recent")
    with pytest.raises(DataValidationError):
        parse_predicate("year>=2000|2001")


def test_replace_swaps_covariates_only(tmp_path: Path, schema: CovariateSchema) -> None:
    dataset = load_csv(_write(tmp_path, ROWS), schema)

    swapped = dataset.replace({"wealth": np.array(["rich"] * 4), "year": np.full(4, 2010)})

    assert swapped.column("wealth").tolist() == ["rich"] * 4
    assert swapped.birth_year.tolist() == [2010] * 4
    assert dataset.column("wealth").tolist() == ["poor", "poor", "rich", "middle"]
    with pytest.raises(DataValidationError):
        dataset.replace({"mother_id": np.array(["m9"] * 4)})
    with pytest.raises(DataValidationError):
        dataset.replace({"wealth": np.array(["rich"])})


def test_generate_synthetic_is_deterministic(small_spec: SyntheticSpec) -> None:
    first, truth = generate_synthetic(small_spec, seed=5)
    second, truth_again = generate_synthetic(small_spec, seed=5)
    other, _ = generate_synthetic(small_spec, seed=6)

    assert first == second
    assert np.array_equal(truth.risks, truth_again.risks)
    assert not np.array_equal(first.outcome, other.outcome) or not np.array_equal(first.birth_year, other.birth_year)
    assert len(first) == 2 * 2 * 3 * 4 * 3
    assert set(first.birth_year.tolist()) <= {2000, 2010}
    assert np.allclose(truth.risks, expit(truth.linear_predictor))


def test_synthetic_nesting_and_no_variance(small_spec: SyntheticSpec) -> None:
    dataset, _ = generate_synthetic(small_spec, seed=1)
    assert len(np.unique(dataset.ids["mother_id"])) == 2 * 2 * 3 * 4
    assert len(np.unique(dataset.ids["state_id"])) == 2

    flat = SyntheticSpec.from_dict({"years": [2000, 2001]})
    _, truth = generate_synthetic(flat, seed=0)
    assert np.allclose(truth.risks, expit(-2.2))


@pytest.mark.parametrize(
    "override",
    [
        {"mother_var": -0.1},
        {"district_cov": [[0.1, 0.5], [0.5, 0.1]]},
        {"years": []},
        {"covariates": [{"name": "w", "kind": "categorical", "levels": ["a", "b"], "probabilities": [0.5, 0.6]}]},
        {
            "covariates": [{"name": "age", "kind": "numeric", "mean": 25.0, "sd": 5.0, "low": 12.0, "high": 35.0}],
            "numeric_windows": {"age": [15.0, 35.0]},
        },
    ],
)
def test_synthetic_spec_validation(override: dict) -> None:
    with pytest.raises(DataValidationError):
        SyntheticSpec.from_dict({"years": [2000], **override})


def test_demo_population_respects_its_windows() -> None:
    spec = SyntheticSpec.from_json(Path(__file__).resolve().parents[1] / "configs" / "demo" / "synthetic.json")

    dataset, _ = generate_synthetic(spec, seed=7)

    assert spec.numeric_windows["mother_age"] == (15.0, 35.0)
    ages = dataset.column("mother_age")
    assert ages.min() >= 15.0 and ages.max() <= 35.0


def test_dataset_rejects_unknown_levels(schema: CovariateSchema) -> None:
    ids = {name: np.array(["x"]) for name in ("mother_id", "cluster_id", "district_id", "state_id")}
    with pytest.raises(DataValidationError, match="unknown category"):
        Dataset(
            schema=schema,
            outcome=np.array([0], dtype=np.int8),
            birth_year=np.array([2000]),
            ids=ids,
            covariates={"wealth": np.array(["gold"], dtype=object), "mother_age": np.array([20.0])},
        )
