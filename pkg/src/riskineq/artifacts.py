"""Output-directory bookkeeping: run ids, provenance-tagged CSV tables and ``manifest.json``."""

from __future__ import annotations

import hashlib
import json
import logging
from dataclasses import dataclass, field
from importlib import metadata
from pathlib import Path
from typing import Any, Dict, List, Mapping, Optional, Sequence

import pandas as pd

logger = logging.getLogger(__name__)

MANIFEST = "manifest.json"
VERSIONED_PACKAGES = ("numpy", "scipy", "pandas", "arviz")


def config_hash(config: Mapping[str, Any]) -> str:
    """sha256 of the canonical JSON rendering of a configuration mapping."""

    text = json.dumps(config, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def make_run_id(config_digest: str, seed: Optional[int]) -> str:
    return hashlib.sha256(f"{config_digest}:{seed}".encode("utf-8")).hexdigest()[:16]


def file_hash(path: Path) -> str:
    digest = hashlib.sha256()
    with Path(path).open("rb") as handle:
        for chunk in iter(lambda: handle.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


def package_versions() -> Dict[str, str]:
    from . import __version__

    versions = {"riskineq": __version__}
    for name in VERSIONED_PACKAGES:
        try:
            versions[name] = metadata.version(name)
        except metadata.PackageNotFoundError:
            versions[name] = "unknown"
    return versions


@dataclass
class RunArtifacts:
    """Tracks what one command writes into its output directory.

    Every file is listed in the manifest with its sha256; tables written through
    :meth:`write_table` also start with a ``# run_id=... manifest=manifest.json`` line.
    """

    directory: Path
    command: str
    config: Mapping[str, Any]
    seed: Optional[int]
    dataset_hash: Optional[str] = None
    outputs: List[Path] = field(default_factory=list)
    stages: Dict[str, str] = field(default_factory=dict)

    def __post_init__(self) -> None:
        self.directory = Path(self.directory)
        self.directory.mkdir(parents=True, exist_ok=True)
        self.config_digest = config_hash(self.config)
        self.run_id = make_run_id(self.config_digest, self.seed)

    @property
    def provenance(self) -> str:
        return f"run_id={self.run_id} manifest={MANIFEST}"

    def path(self, name: str) -> Path:
        target = self.directory / name
        target.parent.mkdir(parents=True, exist_ok=True)
        return target

    def write_table(self, name: str, frame: pd.DataFrame) -> Path:
        target = self.path(name)
        with target.open("w", encoding="utf-8", newline="") as handle:
            handle.write(f"# {self.provenance}\n")
            frame.to_csv(handle, index=False, lineterminator="\n", float_format="%.10g")
        self.track([target])
        return target

    def write_json(self, name: str, payload: Mapping[str, Any]) -> Path:
        target = self.path(name)
        target.write_text(json.dumps(payload, indent=2, sort_keys=True, default=str) + "\n", encoding="utf-8")
        self.track([target])
        return target

    def track(self, paths: Sequence[Path]) -> None:
        for p in paths:
            p = Path(p)
            if p not in self.outputs:
                self.outputs.append(p)

    def mark(self, stage: str, status: str) -> None:
        self.stages[stage] = status
        self.write_manifest()

    def write_manifest(self) -> Path:
        outputs = {}
        for p in sorted(self.outputs):
            if p.exists():
                outputs[p.relative_to(self.directory).as_posix()] = file_hash(p)
        payload: Dict[str, Any] = {
            "command": self.command,
            "run_id": self.run_id,
            "seed": self.seed,
            "config_hash": self.config_digest,
            "dataset_hash": self.dataset_hash,
            "versions": package_versions(),
            "outputs": outputs,
        }
        if self.stages:
            payload["stages"] = dict(self.stages)
        target = self.directory / MANIFEST
        target.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")
        logger.debug("Manifest for run %s lists %d file(s)", self.run_id, len(outputs))
        return target


def read_manifest(directory: Path) -> Dict[str, Any]:
    """The manifest of an earlier run, or an empty mapping when there is none."""

    target = Path(directory) / MANIFEST
    if not target.exists():
        return {}
    return json.loads(target.read_text(encoding="utf-8"))
