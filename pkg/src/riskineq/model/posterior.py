"""Posterior containers and their on-disk formats."""

from __future__ import annotations

import json
import logging
import struct
import zipfile
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from ..base import PosteriorFormatError
from .design import Parameters

logger = logging.getLogger(__name__)

MAGIC = b"RISKPOST"
FORMAT_VERSION = 1
HEADER = struct.Struct("<8sIQQ32s")
BIN_NAME = "posterior.bin"
MANIFEST_NAME = "posterior.json"
CSV_NAME = "posterior.csv"
PARAMETERS_NAME = "parameters.npz"
_ZIP_TIME = (1980, 1, 1, 0, 0, 0)

_TINY = np.finfo(float).tiny
_ONE_MINUS = 1.0 - np.finfo(float).epsneg


def clip_risks(values: np.ndarray) -> np.ndarray:
    """Keep probabilities strictly inside (0, 1) after the inverse logit saturates."""

    return np.clip(values, _TINY, _ONE_MINUS)


@dataclass(frozen=True, eq=False)
class PosteriorRisks:
    """Per-draw risks: row ``l`` holds every birth's risk under posterior draw ``l``."""

    values: np.ndarray
    chain: np.ndarray
    iteration: np.ndarray
    dataset_hash: str

    def __post_init__(self) -> None:
        values = self.values
        if values.ndim != 2:
            raise PosteriorFormatError(f"posterior risks must be a draws x births matrix, got shape {values.shape}")
        if len(self.chain) != values.shape[0] or len(self.iteration) != values.shape[0]:
            raise PosteriorFormatError("draw metadata does not match the number of draws")
        if values.size and not (np.all(values > 0.0) and np.all(values < 1.0)):
            raise PosteriorFormatError("posterior risks must lie strictly inside (0, 1)")
        for arr in (self.values, self.chain, self.iteration):
            arr.setflags(write=False)

    @property
    def n_draws(self) -> int:
        return self.values.shape[0]

    @property
    def n_births(self) -> int:
        return self.values.shape[1]

    def select(self, indices: Sequence[int]) -> np.ndarray:
        """Columns for a sub-population, as an ``(L, k)`` array."""

        return self.values[:, np.asarray(indices, dtype=np.int64)]

    def manifest(self) -> Dict[str, Any]:
        return {
            "format": "riskineq-posterior",
            "version": FORMAT_VERSION,
            "n_draws": self.n_draws,
            "n_births": self.n_births,
            "chains": sorted({int(c) for c in self.chain}),
            "chain": [int(c) for c in self.chain],
            "iteration": [int(i) for i in self.iteration],
            "dataset_hash": self.dataset_hash,
        }


def posterior_mean_risks(posterior: PosteriorRisks) -> np.ndarray:
    """Each birth's posterior mean risk E[pi_i | y]."""

    if posterior.n_draws < 1:
        raise PosteriorFormatError("posterior has no draws")
    return posterior.values.mean(axis=0)


def save_posterior(
    posterior: PosteriorRisks, directory: Path, *, csv: bool = False, comment: Optional[str] = None
) -> List[Path]:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    bin_path = directory / BIN_NAME
    header = HEADER.pack(
        MAGIC, FORMAT_VERSION, posterior.n_draws, posterior.n_births, bytes.fromhex(posterior.dataset_hash)
    )
    with bin_path.open("wb") as handle:
        handle.write(header)
        handle.write(np.ascontiguousarray(posterior.values, dtype="<f8").tobytes())
    manifest_path = directory / MANIFEST_NAME
    manifest_path.write_text(json.dumps(posterior.manifest(), indent=2) + "\n", encoding="utf-8")
    written = [bin_path, manifest_path]
    if csv:
        frame = pd.DataFrame(posterior.values, columns=[f"b{i}" for i in range(posterior.n_births)])
        frame.insert(0, "iteration", posterior.iteration)
        frame.insert(0, "chain", posterior.chain)
        csv_path = directory / CSV_NAME
        with csv_path.open("w", encoding="utf-8", newline="") as handle:
            if comment:
                handle.write(f"# {comment}\n")
            frame.to_csv(handle, index=False, lineterminator="\n", float_format="%.17g")
        written.append(csv_path)
    logger.info("Wrote %d x %d posterior risk matrix to %s", posterior.n_draws, posterior.n_births, bin_path)
    return written


def load_posterior(directory: Path, expected_hash: Optional[str] = None) -> PosteriorRisks:
    """Read a posterior written by :func:`save_posterior`, checking header, size and dataset hash."""

    directory = Path(directory)
    bin_path = directory / BIN_NAME
    manifest_path = directory / MANIFEST_NAME
    if not bin_path.exists() or not manifest_path.exists():
        raise PosteriorFormatError(f"{directory} does not contain {BIN_NAME} and {MANIFEST_NAME}")
    raw = bin_path.read_bytes()
    if len(raw) < HEADER.size:
        raise PosteriorFormatError(f"{bin_path} is truncated")
    magic, version, n_draws, n_births, digest = HEADER.unpack_from(raw)
    if magic != MAGIC:
        raise PosteriorFormatError(f"{bin_path} is not a posterior file")
    if version != FORMAT_VERSION:
        raise PosteriorFormatError(f"unsupported posterior format version {version}")
    expected_bytes = HEADER.size + 8 * n_draws * n_births
    if len(raw) != expected_bytes:
        raise PosteriorFormatError(f"{bin_path} has {len(raw)} bytes, expected {expected_bytes}")
    values = np.frombuffer(raw, dtype="<f8", offset=HEADER.size).reshape(n_draws, n_births).astype(float)
    manifest = json.loads(manifest_path.read_text(encoding="utf-8"))
    dataset_hash = digest.hex()
    if manifest.get("dataset_hash") != dataset_hash:
        raise PosteriorFormatError("posterior header and manifest disagree on the dataset hash")
    if expected_hash is not None and expected_hash != dataset_hash:
        raise PosteriorFormatError("posterior was fitted to a different dataset")
    return PosteriorRisks(
        values=values,
        chain=np.asarray(manifest["chain"], dtype=np.int64),
        iteration=np.asarray(manifest["iteration"], dtype=np.int64),
        dataset_hash=dataset_hash,
    )


@dataclass(frozen=True, eq=False)
class ParameterDraws:
    """Stacked parameter draws; effects are kept per unit so risks can be re-evaluated."""

    alpha: np.ndarray
    effects: Mapping[str, np.ndarray]
    cov: Mapping[str, np.ndarray]
    chain: np.ndarray
    iteration: np.ndarray
    column_names: Tuple[str, ...]
    unit_labels: Mapping[str, np.ndarray] = field(default_factory=dict)

    @property
    def n_draws(self) -> int:
        return self.alpha.shape[0]

    def at(self, ell: int) -> Parameters:
        return Parameters(
            alpha=self.alpha[ell],
            effects={name: arr[ell] for name, arr in self.effects.items()},
            cov={name: arr[ell] for name, arr in self.cov.items()},
        )

    def monitored(self) -> Dict[str, np.ndarray]:
        """Scalar traces used for convergence diagnostics: fixed effects and variance components."""

        traces = {name: self.alpha[:, j] for j, name in enumerate(self.column_names)}
        for name, cov in self.cov.items():
            if cov.shape[-1] == 1:
                traces[f"sigma2[{name}]"] = cov[:, 0, 0]
            else:
                traces[f"cov[{name}][0,0]"] = cov[:, 0, 0]
                traces[f"cov[{name}][0,1]"] = cov[:, 0, 1]
                traces[f"cov[{name}][1,1]"] = cov[:, 1, 1]
        return traces


def save_parameters(draws: ParameterDraws, path: Path) -> Path:
    arrays: Dict[str, np.ndarray] = {
        "alpha": draws.alpha,
        "chain": draws.chain,
        "iteration": draws.iteration,
        "column_names": np.array(draws.column_names, dtype=str),
    }
    for name in draws.effects:
        arrays[f"effects__{name}"] = draws.effects[name]
        arrays[f"cov__{name}"] = draws.cov[name]
        arrays[f"units__{name}"] = np.asarray(draws.unit_labels[name], dtype=str)
    # same layout as np.savez_compressed, with fixed entry timestamps so reruns hash equal
    with zipfile.ZipFile(path, "w", compression=zipfile.ZIP_DEFLATED) as archive:
        for key, value in arrays.items():
            info = zipfile.ZipInfo(f"{key}.npy", date_time=_ZIP_TIME)
            info.compress_type = zipfile.ZIP_DEFLATED
            with archive.open(info, "w", force_zip64=True) as handle:
                np.lib.format.write_array(handle, np.asanyarray(value), allow_pickle=False)
    return Path(path)


def load_parameters(path: Path) -> ParameterDraws:
    path = Path(path)
    if not path.exists():
        raise PosteriorFormatError(f"parameter draws not found: {path}")
    with np.load(path, allow_pickle=False) as archive:
        names = [key.split("__", 1)[1] for key in archive.files if key.startswith("effects__")]
        return ParameterDraws(
            alpha=archive["alpha"],
            effects={name: archive[f"effects__{name}"] for name in names},
            cov={name: archive[f"cov__{name}"] for name in names},
            chain=archive["chain"],
            iteration=archive["iteration"],
            column_names=tuple(str(c) for c in archive["column_names"]),
            unit_labels={name: archive[f"units__{name}"] for name in names},
        )
