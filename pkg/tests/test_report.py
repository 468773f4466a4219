from __future__ import annotations

import logging
from datetime import datetime, timezone
from pathlib import Path

import pytest

from src.riskineq.report import log_stage, stage_statuses


def _at(hour: int, minute: int = 0, day: int = 11) -> datetime:
    return datetime(2026, 6, day, hour, minute, tzinfo=timezone.utc)


def test_first_entry_creates_section(tmp_path: Path) -> None:
    path = tmp_path / "logs" / "runs.md"

    log_stage(path, "abc123", "data", "started", when=_at(9))

    text = path.read_text(encoding="utf-8")
    assert text.startswith("# Run Report")
    assert "## 2026-06-11T09:00:00Z run abc123" in text
    assert "- `09:00:00` **data** started" in text
    assert "| Stages done | - |" in text


def test_summary_counts_stages_and_files(tmp_path: Path) -> None:
    path = tmp_path / "runs.md"
    outputs = [tmp_path / "data.csv", tmp_path / "schema.json"]

    log_stage(path, "abc123", "data", "started", when=_at(9))
    log_stage(path, "abc123", "data", "done", outputs=outputs, when=_at(9, 1))
    log_stage(path, "abc123", "fit", "started", when=_at(9, 2))
    log_stage(path, "abc123", "fit", "failed", notes="chain 0, iteration 12:\n  non-finite state", when=_at(9, 3))

    text = path.read_text(encoding="utf-8")
    assert "| Stages done | data |" in text
    assert "| Stages failed | fit |" in text
    assert "| Files written | 2 |" in text
    assert "  2 file(s): data.csv, schema.json" in text
    assert "  chain 0, iteration 12: non-finite state" in text
    assert stage_statuses(path, "abc123") == {"data": "done", "fit": "failed"}


def test_most_recent_run_first(tmp_path: Path) -> None:
    path = tmp_path / "runs.md"

    log_stage(path, "older", "data", "done", when=_at(8, day=10))
    log_stage(path, "newer", "data", "done", when=_at(8, day=12))
    log_stage(path, "older", "fit", "done", when=_at(9, day=12))

    text = path.read_text(encoding="utf-8")
    assert text.index("run newer") < text.index("run older")
    assert text.count("run older") == 1
    assert stage_statuses(path, "older") == {"data": "done", "fit": "done"}
    assert stage_statuses(path, "missing") == {}


def test_unknown_status_is_rejected(tmp_path: Path) -> None:
    with pytest.raises(ValueError, match="unknown stage status"):
        log_stage(tmp_path / "runs.md", "abc", "data", "finished")


def test_write_failure_is_logged(tmp_path: Path, caplog: pytest.LogCaptureFixture) -> None:
    with caplog.at_level(logging.ERROR):
        log_stage(tmp_path, "abc", "data", "started")

    assert "Failed to write run report" in caplog.text
