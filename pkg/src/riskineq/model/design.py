"""Model specification: fixed-effect design, random-effect levels and parameter layout."""

from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass, field
from typing import Any, Dict, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np

from ..base import ModelSpecError
from ..config import ModelConfig, PriorConfig, RandomEffectsConfig
from ..data import Dataset
from ..spline import SplineBasis, build_basis, evaluate

logger = logging.getLogger(__name__)

INTERCEPT = "(Intercept)"


def interaction_pairs(covariates: Sequence[str]) -> List[Tuple[str, str]]:
    """All two-way pairs of the declared covariates, in declaration order."""

    return list(itertools.combinations(covariates, 2))


# ---------------------------------------------------------------------------
# Covariate encoders
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CategoricalEncoder:
    """Reference-level dummy coding over the levels seen in training."""

    name: str
    levels: Tuple[str, ...]
    reference: str

    @property
    def columns(self) -> Tuple[str, ...]:
        return tuple(f"{self.name}[{level}]" for level in self.levels if level != self.reference)

    @property
    def linear_columns(self) -> Tuple[str, ...]:
        return self.columns

    def encode(self, values: np.ndarray) -> np.ndarray:
        values = np.asarray(values, dtype=object)
        known = np.isin(values, np.array(self.levels, dtype=object))
        if not known.all():
            unseen = sorted(set(values[~known].tolist()))
            logger.warning(
                "Covariate '%s': levels %s were not seen in training; coding them as reference '%s'",
                self.name, unseen, self.reference,
            )
        dummies = [(values == level).astype(float) for level in self.levels if level != self.reference]
        if not dummies:
            return np.zeros((len(values), 0))
        return np.column_stack(dummies)

    def linear(self, values: np.ndarray) -> np.ndarray:
        return self.encode(values)

    def to_dict(self) -> Dict[str, Any]:
        return {"kind": "categorical", "name": self.name, "levels": list(self.levels), "reference": self.reference}


@dataclass(frozen=True)
class NumericEncoder:
    """Standardized linear term, or a B-spline expansion with its first column dropped."""

    name: str
    center: float
    scale: float
    lo: float
    hi: float
    spline: Optional[SplineBasis] = None

    @property
    def columns(self) -> Tuple[str, ...]:
        if self.spline is None:
            return (self.name,)
        return tuple(f"{self.name}[bs{j}]" for j in range(1, self.spline.basis_dim))

    @property
    def linear_columns(self) -> Tuple[str, ...]:
        return (self.name,)

    def _clamp(self, values: np.ndarray) -> np.ndarray:
        x = np.asarray(values, dtype=float)
        outside = (x < self.lo) | (x > self.hi)
        if np.any(outside):
            logger.warning(
                "Covariate '%s': clamping %d value(s) to the training range [%g, %g]",
                self.name, int(np.count_nonzero(outside)), self.lo, self.hi,
            )
        return np.clip(x, self.lo, self.hi)

    def encode(self, values: np.ndarray) -> np.ndarray:
        x = self._clamp(values)
        if self.spline is None:
            return ((x - self.center) / self.scale)[:, None]
        # the intercept already spans the constant, so drop one basis column
        return evaluate(self.spline, x).reshape(len(x), self.spline.basis_dim)[:, 1:]

    def linear(self, values: np.ndarray) -> np.ndarray:
        x = np.clip(np.asarray(values, dtype=float), self.lo, self.hi)
        return ((x - self.center) / self.scale)[:, None]

    def to_dict(self) -> Dict[str, Any]:
        payload: Dict[str, Any] = {
            "kind": "numeric", "name": self.name, "center": self.center,
            "scale": self.scale, "lo": self.lo, "hi": self.hi,
        }
        if self.spline is not None:
            payload["spline"] = self.spline.to_dict()
        return payload


Encoder = Union[CategoricalEncoder, NumericEncoder]


def _encoder_from_dict(payload: Mapping[str, Any]) -> Encoder:
    if payload["kind"] == "categorical":
        return CategoricalEncoder(
            name=payload["name"], levels=tuple(payload["levels"]), reference=payload["reference"]
        )
    spline = SplineBasis.from_dict(payload["spline"]) if "spline" in payload else None
    return NumericEncoder(
        name=payload["name"], center=float(payload["center"]), scale=float(payload["scale"]),
        lo=float(payload["lo"]), hi=float(payload["hi"]), spline=spline,
    )


def _build_encoder(dataset: Dataset, name: str, config: ModelConfig) -> Encoder:
    resolved = dataset.schema.resolve(name)
    kind = dataset.schema.kind_of(resolved)
    values = dataset.column(resolved)
    if kind == "categorical":
        spec = dataset.schema.column(resolved)
        observed, counts = np.unique(values.astype(str), return_counts=True)
        if observed.size == 0:
            raise ModelSpecError(f"covariate '{name}' has no observations")
        if spec.reference is not None and spec.reference in observed:
            reference = spec.reference
        else:
            # most frequent level; ties go to the first declared level
            top = counts.max()
            reference = next(level for level in spec.levels if level in observed[counts == top])
        levels = tuple(level for level in spec.levels if level in observed)
        if len(levels) == 1:
            logger.warning("Covariate '%s' has a single observed level; it contributes no columns", name)
        return CategoricalEncoder(name=name, levels=levels, reference=reference)

    if kind not in ("numeric", "year"):
        raise ModelSpecError(f"covariate '{name}' is a {kind} column and cannot enter the model")
    x = values.astype(float)
    if x.size == 0 or np.ptp(x) == 0:
        raise ModelSpecError(f"covariate '{name}' is constant in the training data")
    spline = None
    if name in config.splines:
        cfg = config.splines[name]
        spline, _ = build_basis(x, degree=cfg.degree, n_interior_knots=cfg.n_interior_knots)
    return NumericEncoder(
        name=name, center=float(x.mean()), scale=float(x.std()),
        lo=float(x.min()), hi=float(x.max()), spline=spline,
    )


# ---------------------------------------------------------------------------
# Fixed-effect design
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class Design:
    """Resolved fixed-effect design: encoders, interaction pairs and prior variances."""

    encoders: Tuple[Encoder, ...]
    interactions: Tuple[Tuple[str, str], ...]
    priors: PriorConfig

    def encoder(self, name: str) -> Encoder:
        for enc in self.encoders:
            if enc.name == name:
                return enc
        raise ModelSpecError(f"covariate '{name}' is not part of the design")

    @property
    def covariates(self) -> Tuple[str, ...]:
        return tuple(enc.name for enc in self.encoders)

    @property
    def column_names(self) -> Tuple[str, ...]:
        names: List[str] = [INTERCEPT]
        for enc in self.encoders:
            names.extend(enc.columns)
        for a, b in self.interactions:
            left, right = self.encoder(a).linear_columns, self.encoder(b).linear_columns
            names.extend(f"{ca}:{cb}" for ca in left for cb in right)
        return tuple(names)

    @property
    def n_columns(self) -> int:
        return len(self.column_names)

    @property
    def prior_variances(self) -> np.ndarray:
        n_main = sum(len(enc.columns) for enc in self.encoders)
        n_inter = self.n_columns - 1 - n_main
        return np.concatenate([
            [self.priors.intercept_var],
            np.full(n_main, self.priors.main_var),
            np.full(n_inter, self.priors.interaction_var),
        ])

    def matrix(self, dataset: Dataset) -> np.ndarray:
        """Evaluate the design on ``dataset`` records; unseen values are clamped or reference-coded."""

        n = len(dataset)
        blocks = [np.ones((n, 1))]
        linear: Dict[str, np.ndarray] = {}
        for enc in self.encoders:
            values = dataset.column(enc.name)
            blocks.append(enc.encode(values))
            linear[enc.name] = enc.linear(values)
        for a, b in self.interactions:
            left, right = linear[a], linear[b]
            blocks.append((left[:, :, None] * right[:, None, :]).reshape(n, left.shape[1] * right.shape[1]))
        return np.hstack(blocks)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "encoders": [enc.to_dict() for enc in self.encoders],
            "interactions": [list(pair) for pair in self.interactions],
            "columns": list(self.column_names),
        }


# ---------------------------------------------------------------------------
# Random effects and the full specification
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class RandomLevel:
    """One nesting level with a random intercept, or intercept plus time slope (``dim == 2``)."""

    name: str
    id_field: str
    dim: int


def random_levels(config: RandomEffectsConfig) -> Tuple[RandomLevel, ...]:
    slope_dim = 2 if config.slopes else 1
    levels = []
    if config.mother:
        levels.append(RandomLevel("mother", "mother_id", 1))
    if config.cluster:
        levels.append(RandomLevel("cluster", "cluster_id", 1))
    if config.district:
        levels.append(RandomLevel("district", "district_id", slope_dim))
    if config.state:
        levels.append(RandomLevel("state", "state_id", slope_dim))
    return tuple(levels)


@dataclass(frozen=True, eq=False)
class ModelData:
    """Numeric arrays the sampler works on, derived from one dataset."""

    X: np.ndarray
    y: np.ndarray
    t: np.ndarray
    unit_index: Mapping[str, np.ndarray]
    unit_labels: Mapping[str, np.ndarray]
    features: Mapping[str, np.ndarray]

    @property
    def n(self) -> int:
        return len(self.y)


@dataclass(frozen=True, eq=False)
class Parameters:
    """One state of every model parameter."""

    alpha: np.ndarray
    effects: Dict[str, np.ndarray] = field(default_factory=dict)
    cov: Dict[str, np.ndarray] = field(default_factory=dict)


@dataclass(frozen=True, eq=False)
class ModelSpec:
    """Hierarchical logistic model: fixed-effect design, random levels and priors."""

    design: Design
    levels: Tuple[RandomLevel, ...]
    priors: PriorConfig
    year_center: float

    @classmethod
    def build(cls, config: ModelConfig, dataset: Dataset) -> "ModelSpec":
        if len(dataset) == 0:
            raise ModelSpecError("cannot resolve a design on an empty dataset")
        for name in config.covariates:
            dataset.schema.resolve(name)
        encoders = tuple(_build_encoder(dataset, name, config) for name in config.covariates)
        pairs = tuple(interaction_pairs(config.covariates)) if config.interactions else ()
        design = Design(encoders=encoders, interactions=pairs, priors=config.priors)
        years = dataset.birth_year
        spec = cls(
            design=design,
            levels=random_levels(config.random_effects),
            priors=config.priors,
            year_center=(float(years.min()) + float(years.max())) / 2.0,
        )
        logger.info(
            "Model design: %d fixed-effect columns (%d interaction pairs), random levels %s",
            design.n_columns, len(pairs), [f"{lv.name}x{lv.dim}" for lv in spec.levels],
        )
        return spec

    def level(self, name: str) -> RandomLevel:
        for lv in self.levels:
            if lv.name == name:
                return lv
        raise ModelSpecError(f"no random level named '{name}'")

    def time_index(self, years: np.ndarray) -> np.ndarray:
        return np.asarray(years, dtype=float) - self.year_center

    def level_features(self, level: RandomLevel, t: np.ndarray) -> np.ndarray:
        if level.dim == 1:
            return np.ones((len(t), 1))
        return np.column_stack([np.ones(len(t)), t])

    def prepare(self, dataset: Dataset, unit_labels: Optional[Mapping[str, np.ndarray]] = None) -> ModelData:
        """Build sampler arrays; ``unit_labels`` pins unit order to an earlier fit."""

        t = self.time_index(dataset.birth_year)
        index: Dict[str, np.ndarray] = {}
        labels: Dict[str, np.ndarray] = {}
        features: Dict[str, np.ndarray] = {}
        for lv in self.levels:
            ids = np.asarray(dataset.ids[lv.id_field]).astype(str)
            if unit_labels is None:
                labels[lv.name], index[lv.name] = np.unique(ids, return_inverse=True)
            else:
                labels[lv.name] = np.asarray(unit_labels[lv.name]).astype(str)
                index[lv.name] = _lookup_units(labels[lv.name], ids, lv.name)
            features[lv.name] = self.level_features(lv, t)
        return ModelData(
            X=self.design.matrix(dataset),
            y=dataset.outcome.astype(float),
            t=t,
            unit_index=index,
            unit_labels=labels,
            features=features,
        )

    def to_dict(self) -> Dict[str, Any]:
        return {
            "design": self.design.to_dict(),
            "levels": [{"name": lv.name, "id_field": lv.id_field, "dim": lv.dim} for lv in self.levels],
            "year_center": self.year_center,
            "priors": {
                "intercept_var": self.priors.intercept_var,
                "main_var": self.priors.main_var,
                "interaction_var": self.priors.interaction_var,
                "ig_shape": self.priors.ig_shape,
                "ig_scale": self.priors.ig_scale,
                "iw_scale": [list(row) for row in self.priors.iw_scale],
                "iw_df": self.priors.iw_df,
            },
        }

    @classmethod
    def from_dict(cls, payload: Mapping[str, Any]) -> "ModelSpec":
        raw = dict(payload["priors"])
        raw["iw_scale"] = tuple(tuple(float(v) for v in row) for row in raw["iw_scale"])
        priors = PriorConfig(**raw)
        design_payload = payload["design"]
        design = Design(
            encoders=tuple(_encoder_from_dict(e) for e in design_payload["encoders"]),
            interactions=tuple((a, b) for a, b in design_payload["interactions"]),
            priors=priors,
        )
        if list(design.column_names) != list(design_payload["columns"]):
            raise ModelSpecError("stored design columns do not match the rebuilt design")
        return cls(
            design=design,
            levels=tuple(RandomLevel(lv["name"], lv["id_field"], int(lv["dim"])) for lv in payload["levels"]),
            priors=priors,
            year_center=float(payload["year_center"]),
        )


def _lookup_units(labels: np.ndarray, ids: np.ndarray, level: str) -> np.ndarray:
    """Positions of ``ids`` in sorted ``labels``; unknown units get -1 (zero effect)."""

    if labels.size == 0:
        if ids.size:
            logger.warning("Level '%s' has no fitted units; %d record(s) get a zero effect", level, ids.size)
        return np.full(ids.size, -1, dtype=np.int64)
    pos = np.searchsorted(labels, ids)
    pos = np.clip(pos, 0, labels.size - 1)
    found = labels[pos] == ids
    if not found.all():
        logger.warning(
            "Level '%s': %d record(s) belong to units absent from the fit; their effect is set to zero",
            level, int(np.count_nonzero(~found)),
        )
    return np.where(found, pos, -1).astype(np.int64)


# ---------------------------------------------------------------------------
# Flat parameter vectors
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ParameterLayout:
    """Positions of each parameter block inside a flat vector.

    Order: fixed effects, then per level the unit effects (row-major by unit), then
    per level the variance (dim 1) or the upper triangle ``c11, c12, c22`` (dim 2).
    """

    n_fixed: int
    levels: Tuple[RandomLevel, ...]
    n_units: Mapping[str, int]

    @classmethod
    def of(cls, spec: ModelSpec, data: ModelData) -> "ParameterLayout":
        return cls(
            n_fixed=spec.design.n_columns,
            levels=spec.levels,
            n_units={lv.name: len(data.unit_labels[lv.name]) for lv in spec.levels},
        )

    @property
    def n_linear(self) -> int:
        """Length of the part of the vector the linear predictor depends on."""

        return self.n_fixed + sum(self.n_units[lv.name] * lv.dim for lv in self.levels)

    @property
    def size(self) -> int:
        return self.n_linear + sum(1 if lv.dim == 1 else 3 for lv in self.levels)

    def pack(self, params: Parameters) -> np.ndarray:
        parts = [np.asarray(params.alpha, dtype=float)]
        parts += [np.asarray(params.effects[lv.name], dtype=float).ravel() for lv in self.levels]
        for lv in self.levels:
            cov = np.asarray(params.cov[lv.name], dtype=float)
            parts.append(cov.ravel()[:1] if lv.dim == 1 else cov[np.triu_indices(2)])
        return np.concatenate(parts) if parts else np.zeros(0)

    def unpack(self, vector: np.ndarray) -> Parameters:
        vector = np.asarray(vector, dtype=float)
        if vector.shape != (self.size,):
            raise ModelSpecError(f"parameter vector has shape {vector.shape}, expected ({self.size},)")
        pos = self.n_fixed
        alpha = vector[:pos]
        effects: Dict[str, np.ndarray] = {}
        for lv in self.levels:
            count = self.n_units[lv.name] * lv.dim
            effects[lv.name] = vector[pos:pos + count].reshape(self.n_units[lv.name], lv.dim)
            pos += count
        cov: Dict[str, np.ndarray] = {}
        for lv in self.levels:
            if lv.dim == 1:
                cov[lv.name] = vector[pos:pos + 1].reshape(1, 1)
                pos += 1
            else:
                c11, c12, c22 = vector[pos:pos + 3]
                cov[lv.name] = np.array([[c11, c12], [c12, c22]])
                pos += 3
        return Parameters(alpha=alpha, effects=effects, cov=cov)


def linear_predictor(data: ModelData, params: Parameters) -> np.ndarray:
    """Fixed part plus every level's effect attached to each record's own unit."""

    eta = data.X @ params.alpha
    for name, idx in data.unit_index.items():
        effects = params.effects[name]
        if effects.shape[0] == 0:
            continue
        known = idx >= 0
        eta[known] += np.einsum("ij,ij->i", data.features[name][known], effects[idx[known]])
    return eta
