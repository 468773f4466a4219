"""Birth-level data model: schema, CSV ingestion, selection and synthetic populations."""

from __future__ import annotations

import hashlib
import io
import json
import logging
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, Iterator, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from scipy.special import expit

from .base import DataValidationError, UnknownFieldError

logger = logging.getLogger(__name__)

COLUMN_KINDS = ("categorical", "numeric", "id", "outcome", "year")
NESTING_IDS = ("mother_id", "cluster_id", "district_id", "state_id")
YEAR_ALIASES = ("year", "birth_year")


@dataclass(frozen=True)
class ColumnSpec:
    """One declared CSV column."""

    name: str
    kind: str
    levels: Tuple[str, ...] = ()
    reference: Optional[str] = None

    def __post_init__(self) -> None:
        if self.kind not in COLUMN_KINDS:
            raise DataValidationError(f"unknown column kind '{self.kind}'", field=self.name)
        if self.kind == "categorical":
            if len(self.levels) < 1 or len(set(self.levels)) != len(self.levels):
                raise DataValidationError("categorical columns need unique, non-empty levels", field=self.name)
            if self.reference is not None and self.reference not in self.levels:
                raise DataValidationError(f"reference level '{self.reference}' is not declared", field=self.name)


@dataclass(frozen=True)
class CovariateSchema:
    """Declared columns plus the validation windows applied on ingestion."""

    columns: Tuple[ColumnSpec, ...]
    study_window: Optional[Tuple[int, int]] = None
    numeric_windows: Mapping[str, Tuple[float, float]] = field(default_factory=dict)

    def __post_init__(self) -> None:
        names = [c.name for c in self.columns]
        if len(set(names)) != len(names):
            raise DataValidationError("duplicate column names in schema")
        kinds = [c.kind for c in self.columns]
        if kinds.count("outcome") != 1 or kinds.count("year") != 1:
            raise DataValidationError("schema needs exactly one outcome column and one year column")
        ids = {c.name for c in self.columns if c.kind == "id"}
        missing = [name for name in NESTING_IDS if name not in ids]
        if missing:
            raise DataValidationError(f"schema is missing nesting id columns {missing}")
        for name in self.numeric_windows:
            if self.kind_of(name) != "numeric":
                raise DataValidationError("validation windows apply to numeric covariates only", field=name)

    # ------------------------------------------------------------------
    # Lookup helpers
    # ------------------------------------------------------------------

    @property
    def names(self) -> Tuple[str, ...]:
        return tuple(c.name for c in self.columns)

    @property
    def outcome_column(self) -> str:
        return next(c.name for c in self.columns if c.kind == "outcome")

    @property
    def year_column(self) -> str:
        return next(c.name for c in self.columns if c.kind == "year")

    @property
    def covariate_names(self) -> Tuple[str, ...]:
        return tuple(c.name for c in self.columns if c.kind in ("categorical", "numeric"))

    def column(self, name: str) -> ColumnSpec:
        for spec in self.columns:
            if spec.name == name:
                return spec
        raise UnknownFieldError(f"unknown field '{name}'", field=name)

    def kind_of(self, name: str) -> str:
        return self.column(name).kind

    def resolve(self, name: str) -> str:
        """Map a user-facing field name (``year`` alias included) onto a declared column."""

        if name in YEAR_ALIASES:
            return self.year_column
        self.column(name)
        return name

    # ------------------------------------------------------------------
    # JSON sidecar
    # ------------------------------------------------------------------

    @classmethod
    def from_dict(cls, payload: Mapping[str, Any]) -> "CovariateSchema":
        columns: List[ColumnSpec] = []
        for name, declared in payload["columns"].items():
            if isinstance(declared, str):
                columns.append(ColumnSpec(name=name, kind=declared))
            elif isinstance(declared, Mapping) and "categorical" in declared:
                columns.append(ColumnSpec(
                    name=name,
                    kind="categorical",
                    levels=tuple(str(level) for level in declared["categorical"]),
                    reference=declared.get("reference"),
                ))
            else:
                raise DataValidationError(f"cannot parse column declaration {declared!r}", field=name)
        window = payload.get("study_window")
        return cls(
            columns=tuple(columns),
            study_window=(int(window[0]), int(window[1])) if window else None,
            numeric_windows={k: (float(v[0]), float(v[1])) for k, v in payload.get("numeric_windows", {}).items()},
        )

    @classmethod
    def from_json(cls, path: Path) -> "CovariateSchema":
        with Path(path).open(encoding="utf-8") as handle:
            return cls.from_dict(json.load(handle))

    def to_dict(self) -> Dict[str, Any]:
        columns: Dict[str, Any] = {}
        for spec in self.columns:
            if spec.kind == "categorical":
                declared: Dict[str, Any] = {"categorical": list(spec.levels)}
                if spec.reference is not None:
                    declared["reference"] = spec.reference
                columns[spec.name] = declared
            else:
                columns[spec.name] = spec.kind
        payload: Dict[str, Any] = {"columns": columns}
        if self.study_window is not None:
            payload["study_window"] = list(self.study_window)
        if self.numeric_windows:
            payload["numeric_windows"] = {k: list(v) for k, v in self.numeric_windows.items()}
        return payload

    def write_json(self, path: Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n", encoding="utf-8")


@dataclass(frozen=True)
class BirthRecord:
    """One birth: outcome, year, nesting ids and covariate values."""

    outcome: int
    birth_year: int
    mother_id: str
    cluster_id: str
    district_id: str
    state_id: str
    covariates: Mapping[str, Union[str, float]]


@dataclass(frozen=True, eq=False)
class Dataset:
    """Column-oriented, read-only collection of births conforming to a schema."""

    schema: CovariateSchema
    outcome: np.ndarray
    birth_year: np.ndarray
    ids: Mapping[str, np.ndarray]
    covariates: Mapping[str, np.ndarray]

    def __post_init__(self) -> None:
        n = len(self.outcome)
        for name, values in list(self.ids.items()) + list(self.covariates.items()) + [("birth_year", self.birth_year)]:
            if len(values) != n:
                raise DataValidationError(f"column length {len(values)} does not match {n} births", field=name)
        if set(self.covariates) != set(self.schema.covariate_names):
            raise DataValidationError("covariate columns do not match the schema")
        if not np.isin(self.outcome, (0, 1)).all():
            raise DataValidationError("outcome must be 0 or 1", field=self.schema.outcome_column)
        for name in self.schema.covariate_names:
            spec = self.schema.column(name)
            if spec.kind == "categorical":
                unknown = set(np.unique(self.covariates[name]).tolist()) - set(spec.levels)
                if unknown:
                    raise DataValidationError(f"unknown category levels {sorted(unknown)}", field=name)
        _check_nesting(self.ids)
        _check_windows(self.schema, self.birth_year, self.covariates)
        for values in [self.outcome, self.birth_year, *self.ids.values(), *self.covariates.values()]:
            values.setflags(write=False)

    def __len__(self) -> int:
        return len(self.outcome)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Dataset):
            return NotImplemented
        if self.schema != other.schema or len(self) != len(other):
            return False
        pairs = [(self.outcome, other.outcome), (self.birth_year, other.birth_year)]
        pairs += [(self.ids[k], other.ids[k]) for k in NESTING_IDS]
        pairs += [(self.covariates[k], other.covariates[k]) for k in self.schema.covariate_names]
        return all(np.array_equal(a, b) for a, b in pairs)

    __hash__ = None  # type: ignore[assignment]

    def column(self, name: str) -> np.ndarray:
        """Return the values of a declared field (``year`` is an alias of the year column)."""

        resolved = self.schema.resolve(name)
        kind = self.schema.kind_of(resolved)
        if kind == "outcome":
            return self.outcome
        if kind == "year":
            return self.birth_year
        if kind == "id":
            return self.ids[resolved]
        return self.covariates[resolved]

    def record(self, index: int) -> BirthRecord:
        return BirthRecord(
            outcome=int(self.outcome[index]),
            birth_year=int(self.birth_year[index]),
            mother_id=str(self.ids["mother_id"][index]),
            cluster_id=str(self.ids["cluster_id"][index]),
            district_id=str(self.ids["district_id"][index]),
            state_id=str(self.ids["state_id"][index]),
            covariates={name: self.covariates[name][index] for name in self.schema.covariate_names},
        )

    @property
    def records(self) -> Iterator[BirthRecord]:
        return (self.record(i) for i in range(len(self)))

    def subset(self, indices: Sequence[int]) -> "Dataset":
        idx = np.asarray(indices, dtype=np.int64)
        return Dataset(
            schema=self.schema,
            outcome=self.outcome[idx].copy(),
            birth_year=self.birth_year[idx].copy(),
            ids={k: v[idx].copy() for k, v in self.ids.items()},
            covariates={k: v[idx].copy() for k, v in self.covariates.items()},
        )

    def replace(self, overrides: Mapping[str, np.ndarray]) -> "Dataset":
        """Copy with some covariate or birth-year columns swapped for counterfactual values."""

        covariates = dict(self.covariates)
        birth_year = self.birth_year
        for name, values in overrides.items():
            resolved = self.schema.resolve(name)
            kind = self.schema.kind_of(resolved)
            arr = np.asarray(values)
            if len(arr) != len(self):
                raise DataValidationError(f"replacement has {len(arr)} values for {len(self)} births", field=name)
            if kind == "year":
                birth_year = arr.astype(np.int64)
            elif kind == "categorical":
                covariates[resolved] = arr.astype(object)
            elif kind == "numeric":
                covariates[resolved] = arr.astype(float)
            else:
                raise DataValidationError("only covariates and the birth year can be replaced", field=name)
        return Dataset(
            schema=self.schema, outcome=self.outcome, birth_year=birth_year, ids=self.ids, covariates=covariates
        )

    def to_frame(self) -> pd.DataFrame:
        data: Dict[str, Any] = {}
        for spec in self.schema.columns:
            data[spec.name] = self.column(spec.name)
        return pd.DataFrame(data, columns=list(self.schema.names))

    def to_csv_text(self) -> str:
        buffer = io.StringIO()
        self.to_frame().to_csv(buffer, index=False, lineterminator="\n")
        return buffer.getvalue()

    def to_csv(self, path: Path) -> None:
        Path(path).write_text(self.to_csv_text(), encoding="utf-8")

    def content_hash(self) -> str:
        """sha256 of the canonical CSV rendering; ties persisted posteriors to their data."""

        return hashlib.sha256(self.to_csv_text().encode("utf-8")).hexdigest()


# ---------------------------------------------------------------------------
# CSV ingestion
# ---------------------------------------------------------------------------

def load_csv(path: Path, schema: CovariateSchema) -> Dataset:
    """Read a one-row-per-birth CSV and validate it against ``schema``.

    Row numbers in errors count data rows from 1 (the header is not counted). A leading
    ``#`` provenance line, as written by the CLI, is skipped.
    """

    path = Path(path)
    if not path.exists():
        raise DataValidationError(f"data file not found: {path}")
    with path.open(encoding="utf-8") as handle:
        skip = 1 if handle.readline().startswith("#") else 0
    frame = pd.read_csv(path, dtype=str, keep_default_na=False, encoding="utf-8", skiprows=skip)
    missing = [name for name in schema.names if name not in frame.columns]
    if missing:
        raise DataValidationError(f"missing required columns {missing}")
    logger.info("Loaded %d rows from %s", len(frame), path)
    return dataset_from_frame(frame, schema)


def dataset_from_frame(frame: pd.DataFrame, schema: CovariateSchema) -> Dataset:
    """Validate a frame of raw string cells row by row and build a :class:`Dataset`."""

    n = len(frame)
    outcome = np.empty(n, dtype=np.int8)
    years = np.empty(n, dtype=np.int64)
    ids = {name: np.empty(n, dtype=object) for name in schema.names if schema.kind_of(name) == "id"}
    covariates: Dict[str, np.ndarray] = {}
    for name in schema.covariate_names:
        covariates[name] = np.empty(n, dtype=object if schema.kind_of(name) == "categorical" else float)

    cells = frame[list(schema.names)].astype(str).to_numpy()
    for pos, row in enumerate(cells):
        row_number = pos + 1
        for spec, raw in zip(schema.columns, row):
            value = raw.strip()
            if value == "":
                raise DataValidationError("missing value", row=row_number, field=spec.name)
            if spec.kind == "outcome":
                if value not in ("0", "1"):
                    raise DataValidationError(f"outcome must be 0 or 1, got {value!r}", row=row_number, field=spec.name)
                outcome[pos] = int(value)
            elif spec.kind == "year":
                years[pos] = _parse_year(value, row_number, spec.name)
            elif spec.kind == "id":
                ids[spec.name][pos] = value
            elif spec.kind == "categorical":
                if value not in spec.levels:
                    raise DataValidationError(f"unknown category level {value!r}", row=row_number, field=spec.name)
                covariates[spec.name][pos] = value
            else:
                covariates[spec.name][pos] = _parse_numeric(value, row_number, spec.name)

    return Dataset(schema=schema, outcome=outcome, birth_year=years, ids=ids, covariates=covariates)


def _parse_year(value: str, row: int, name: str) -> int:
    try:
        year = int(value)
    except ValueError as exc:
        raise DataValidationError(f"birth year must be an integer, got {value!r}", row=row, field=name) from exc
    return year


def _parse_numeric(value: str, row: int, name: str) -> float:
    try:
        number = float(value)
    except ValueError as exc:
        raise DataValidationError(f"expected a number, got {value!r}", row=row, field=name) from exc
    if not np.isfinite(number):
        raise DataValidationError("numeric values must be finite", row=row, field=name)
    return number


def _check_windows(
    schema: CovariateSchema, years: np.ndarray, covariates: Mapping[str, np.ndarray]
) -> None:
    """Reject the first birth (1-based row) outside the study window or a numeric window."""

    window = schema.study_window
    if window is not None:
        outside = np.flatnonzero((years < window[0]) | (years > window[1]))
        if outside.size:
            pos = int(outside[0])
            raise DataValidationError(
                f"birth year {int(years[pos])} outside study window {window}", row=pos + 1, field=schema.year_column
            )
    for name, (low, high) in schema.numeric_windows.items():
        values = np.asarray(covariates[name], dtype=float)
        outside = np.flatnonzero((values < low) | (values > high))
        if outside.size:
            pos = int(outside[0])
            raise DataValidationError(
                f"value {values[pos]} outside window {(low, high)}", row=pos + 1, field=name
            )


def _check_nesting(ids: Mapping[str, np.ndarray]) -> None:
    frame = pd.DataFrame({name: ids[name] for name in NESTING_IDS})
    for child, parent in zip(NESTING_IDS[:-1], NESTING_IDS[1:]):
        parents = frame.groupby(child, sort=True)[parent].nunique()
        offenders = parents[parents > 1]
        if not offenders.empty:
            unit = offenders.index[0]
            seen = sorted(frame.loc[frame[child] == unit, parent].unique().tolist())
            raise DataValidationError(
                f"nesting violated: {child} {unit!r} appears under {parent} values {seen}", field=child
            )


# ---------------------------------------------------------------------------
# Selection
# ---------------------------------------------------------------------------

_CONDITION = re.compile(r"^\s*([A-Za-z_][\w]*)\s*(==|!=|>=|<=|=|>|<)\s*(.+?)\s*$")


@dataclass(frozen=True)
class Condition:
    field: str
    op: str
    values: Tuple[str, ...]


Predicate = Union[str, Mapping[str, Any], Sequence[Condition]]


def parse_predicate(text: str) -> Tuple[Condition, ...]:
    """Parse ``"wealth=Q1|Q2 AND year>=1990"`` style filters.

    Clauses are joined by ``AND``, ``&`` or ``,``; ``|`` separates alternative values.
    """

    clauses = [c for c in re.split(r"\s+AND\s+|&|,", text.strip(), flags=re.IGNORECASE) if c.strip()]
    if not clauses:
        raise DataValidationError(f"empty predicate {text!r}")
    conditions = []
    for clause in clauses:
        match = _CONDITION.match(clause)
        if not match:
            raise DataValidationError(f"cannot parse predicate clause {clause!r}")
        name, op, raw = match.groups()
        op = "=" if op == "==" else op
        values = tuple(v.strip() for v in raw.split("|"))
        if op not in ("=", "!=") and len(values) != 1:
            raise DataValidationError(f"operator {op} takes a single value in {clause!r}")
        conditions.append(Condition(field=name, op=op, values=values))
    return tuple(conditions)


def _as_conditions(predicate: Predicate) -> Tuple[Condition, ...]:
    if isinstance(predicate, str):
        return parse_predicate(predicate)
    if isinstance(predicate, Mapping):
        conditions = []
        for name, value in predicate.items():
            values = value if isinstance(value, (list, tuple, set)) else (value,)
            conditions.append(Condition(field=name, op="=", values=tuple(str(v) for v in values)))
        return tuple(conditions)
    return tuple(predicate)


def select(dataset: Dataset, predicate: Predicate) -> np.ndarray:
    """Return sorted indices of births satisfying every condition of ``predicate``."""

    mask = np.ones(len(dataset), dtype=bool)
    for condition in _as_conditions(predicate):
        name = dataset.schema.resolve(condition.field)
        kind = dataset.schema.kind_of(name)
        column = dataset.column(name)
        if kind in ("year", "numeric", "outcome"):
            try:
                targets = np.array([float(v) for v in condition.values])
            except ValueError as exc:
                raise DataValidationError(f"non-numeric value in predicate {condition.values}", field=name) from exc
            values = column.astype(float)
        else:
            targets = np.array(condition.values, dtype=object)
            values = column
        mask &= _apply(values, condition.op, targets)
    return np.flatnonzero(mask)


def _apply(values: np.ndarray, op: str, targets: np.ndarray) -> np.ndarray:
    if op == "=":
        return np.isin(values, targets)
    if op == "!=":
        return ~np.isin(values, targets)
    bound = targets[0]
    return {">": values > bound, "<": values < bound, ">=": values >= bound, "<=": values <= bound}[op]


# ---------------------------------------------------------------------------
# Synthetic populations
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SyntheticCovariate:
    """Generation rule and true effect for one covariate.

    Categorical effects are logit contributions per level (absent levels contribute 0);
    numeric covariates contribute ``slope * (x - center)``.
    """

    name: str
    kind: str
    levels: Tuple[str, ...] = ()
    probabilities: Tuple[float, ...] = ()
    probabilities_by_year: Mapping[int, Tuple[float, ...]] = field(default_factory=dict)
    effects: Mapping[str, float] = field(default_factory=dict)
    mean: float = 0.0
    sd: float = 1.0
    mean_by_year: Mapping[int, float] = field(default_factory=dict)
    low: Optional[float] = None
    high: Optional[float] = None
    integer: bool = False
    slope: float = 0.0
    center: float = 0.0

    def validate(self) -> None:
        if self.kind == "categorical":
            rows = [self.probabilities, *self.probabilities_by_year.values()]
            for probs in rows:
                if len(probs) != len(self.levels) or not np.isclose(sum(probs), 1.0) or min(probs) < 0:
                    raise DataValidationError("probabilities must match levels and sum to 1", field=self.name)
            if set(self.effects) - set(self.levels):
                raise DataValidationError("effects reference undeclared levels", field=self.name)
        elif self.kind == "numeric":
            if self.sd < 0:
                raise DataValidationError("sd must be nonnegative", field=self.name)
        else:
            raise DataValidationError(f"synthetic covariates are categorical or numeric, not {self.kind}", field=self.name)

    @classmethod
    def from_dict(cls, payload: Mapping[str, Any]) -> "SyntheticCovariate":
        data = dict(payload)
        data["levels"] = tuple(str(v) for v in data.get("levels", ()))
        data["probabilities"] = tuple(float(v) for v in data.get("probabilities", ()))
        data["probabilities_by_year"] = {
            int(k): tuple(float(x) for x in v) for k, v in data.get("probabilities_by_year", {}).items()
        }
        data["mean_by_year"] = {int(k): float(v) for k, v in data.get("mean_by_year", {}).items()}
        data["effects"] = {str(k): float(v) for k, v in data.get("effects", {}).items()}
        return cls(**data)


@dataclass(frozen=True)
class SyntheticSpec:
    """Ground truth for a synthetic population nested as births < mothers < clusters < districts < states."""

    n_states: int = 2
    districts_per_state: int = 3
    clusters_per_district: int = 4
    mothers_per_cluster: int = 10
    births_per_mother: int = 2
    years: Tuple[int, ...] = (1975,)
    year_weights: Optional[Tuple[float, ...]] = None
    intercept: float = -2.2
    intercept_by_year: Mapping[int, float] = field(default_factory=dict)
    year_slope: float = 0.0
    mother_var: float = 0.0
    cluster_var: float = 0.0
    district_cov: Tuple[Tuple[float, float], Tuple[float, float]] = ((0.0, 0.0), (0.0, 0.0))
    state_cov: Tuple[Tuple[float, float], Tuple[float, float]] = ((0.0, 0.0), (0.0, 0.0))
    covariates: Tuple[SyntheticCovariate, ...] = ()
    numeric_windows: Mapping[str, Tuple[float, float]] = field(default_factory=dict)

    def validate(self) -> None:
        counts = (self.n_states, self.districts_per_state, self.clusters_per_district,
                  self.mothers_per_cluster, self.births_per_mother)
        if min(counts) < 1:
            raise DataValidationError("every nesting level needs at least one unit")
        if not self.years:
            raise DataValidationError("at least one birth year is required")
        if self.year_weights is not None and (
            len(self.year_weights) != len(self.years) or not np.isclose(sum(self.year_weights), 1.0)
        ):
            raise DataValidationError("year_weights must match years and sum to 1")
        if self.mother_var < 0 or self.cluster_var < 0:
            raise DataValidationError("random-effect variances must be nonnegative")
        for name, cov in (("district_cov", self.district_cov), ("state_cov", self.state_cov)):
            matrix = np.asarray(cov, dtype=float)
            if matrix.shape != (2, 2) or not np.allclose(matrix, matrix.T):
                raise DataValidationError("covariance must be a symmetric 2x2 matrix", field=name)
            if np.linalg.eigvalsh(matrix).min() < -1e-12:
                raise DataValidationError("covariance must be positive semidefinite", field=name)
        names = [c.name for c in self.covariates]
        if len(set(names)) != len(names):
            raise DataValidationError("duplicate synthetic covariate names")
        for covariate in self.covariates:
            covariate.validate()
            window = self.numeric_windows.get(covariate.name)
            if window is not None and (
                covariate.low is None or covariate.high is None
                or covariate.low < window[0] or covariate.high > window[1]
            ):
                raise DataValidationError(
                    f"draws must be bounded by low/high inside the window {window}", field=covariate.name
                )

    @property
    def study_window(self) -> Tuple[int, int]:
        return min(self.years), max(self.years)

    def schema(self) -> CovariateSchema:
        columns = [ColumnSpec("outcome", "outcome"), ColumnSpec("birth_year", "year")]
        columns += [ColumnSpec(name, "id") for name in NESTING_IDS]
        for covariate in self.covariates:
            if covariate.kind == "categorical":
                columns.append(ColumnSpec(covariate.name, "categorical", levels=covariate.levels))
            else:
                columns.append(ColumnSpec(covariate.name, "numeric"))
        return CovariateSchema(
            columns=tuple(columns),
            study_window=self.study_window,
            numeric_windows=dict(self.numeric_windows),
        )

    @classmethod
    def from_dict(cls, payload: Mapping[str, Any]) -> "SyntheticSpec":
        data = dict(payload)
        data["years"] = tuple(int(y) for y in data.get("years", (1975,)))
        if data.get("year_weights") is not None:
            data["year_weights"] = tuple(float(w) for w in data["year_weights"])
        data["intercept_by_year"] = {int(k): float(v) for k, v in data.get("intercept_by_year", {}).items()}
        for key in ("district_cov", "state_cov"):
            if key in data:
                data[key] = tuple(tuple(float(v) for v in row) for row in data[key])
        data["covariates"] = tuple(SyntheticCovariate.from_dict(c) for c in data.get("covariates", ()))
        data["numeric_windows"] = {k: (float(v[0]), float(v[1])) for k, v in data.get("numeric_windows", {}).items()}
        spec = cls(**data)
        spec.validate()
        return spec

    @classmethod
    def from_json(cls, path: Path) -> "SyntheticSpec":
        with Path(path).open(encoding="utf-8") as handle:
            return cls.from_dict(json.load(handle))


@dataclass(frozen=True, eq=False)
class TrueRisks:
    """The risks and linear predictors that generated a synthetic dataset's outcomes."""

    risks: np.ndarray
    linear_predictor: np.ndarray

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({"true_risk": self.risks, "linear_predictor": self.linear_predictor})


def generate_synthetic(spec: SyntheticSpec, seed: int) -> Tuple[Dataset, TrueRisks]:
    """Sample a dataset from the hierarchical logistic model described by ``spec``.

    Deterministic given ``seed``.
    """

    spec.validate()
    rng = np.random.default_rng(seed)

    n_states = spec.n_states
    n_districts = n_states * spec.districts_per_state
    n_clusters = n_districts * spec.clusters_per_district
    n_mothers = n_clusters * spec.mothers_per_cluster
    n = n_mothers * spec.births_per_mother

    mother = np.arange(n) // spec.births_per_mother
    cluster = mother // spec.mothers_per_cluster
    district = cluster // spec.clusters_per_district
    state = district // spec.districts_per_state

    years = np.asarray(spec.years, dtype=np.int64)
    birth_year = rng.choice(years, size=n, p=spec.year_weights)
    t = birth_year - (years.min() + years.max()) / 2.0

    delta = rng.normal(0.0, np.sqrt(spec.mother_var), size=n_mothers)
    gamma = rng.normal(0.0, np.sqrt(spec.cluster_var), size=n_clusters)
    xi = rng.multivariate_normal(np.zeros(2), np.asarray(spec.district_cov, dtype=float), size=n_districts)
    tau = rng.multivariate_normal(np.zeros(2), np.asarray(spec.state_cov, dtype=float), size=n_states)

    eta = np.array([spec.intercept_by_year.get(int(y), spec.intercept) for y in birth_year], dtype=float)
    eta += spec.year_slope * t
    covariates: Dict[str, np.ndarray] = {}
    for covariate in spec.covariates:
        values, contribution = _draw_covariate(covariate, birth_year, rng)
        covariates[covariate.name] = values
        eta += contribution
    eta += delta[mother] + gamma[cluster]
    eta += xi[district, 0] + xi[district, 1] * t
    eta += tau[state, 0] + tau[state, 1] * t

    risks = expit(eta)
    outcome = (rng.random(n) < risks).astype(np.int8)

    ids = {
        "mother_id": np.array([f"m{i}" for i in mother], dtype=object),
        "cluster_id": np.array([f"c{i}" for i in cluster], dtype=object),
        "district_id": np.array([f"d{i}" for i in district], dtype=object),
        "state_id": np.array([f"s{i}" for i in state], dtype=object),
    }
    dataset = Dataset(schema=spec.schema(), outcome=outcome, birth_year=birth_year, ids=ids, covariates=covariates)
    logger.info(
        "Generated %d synthetic births (%d mothers, %d clusters, %d districts, %d states), death rate %.4f",
        n, n_mothers, n_clusters, n_districts, n_states, outcome.mean() if n else float("nan"),
    )
    return dataset, TrueRisks(risks=risks, linear_predictor=eta)


def _draw_covariate(
    covariate: SyntheticCovariate, birth_year: np.ndarray, rng: np.random.Generator
) -> Tuple[np.ndarray, np.ndarray]:
    n = len(birth_year)
    contribution = np.zeros(n)
    if covariate.kind == "categorical":
        values = np.empty(n, dtype=object)
        levels = np.array(covariate.levels, dtype=object)
        for year in np.unique(birth_year):
            mask = birth_year == year
            probs = covariate.probabilities_by_year.get(int(year), covariate.probabilities)
            values[mask] = rng.choice(levels, size=int(mask.sum()), p=probs)
        contribution = np.array([covariate.effects.get(v, 0.0) for v in values], dtype=float)
        return values, contribution

    means = np.array([covariate.mean_by_year.get(int(y), covariate.mean) for y in birth_year], dtype=float)
    values = means + covariate.sd * rng.standard_normal(n)
    if covariate.integer:
        values = np.round(values)
    if covariate.low is not None or covariate.high is not None:
        values = np.clip(values, covariate.low, covariate.high)
    contribution = covariate.slope * (values - covariate.center)
    return values.astype(float), contribution
