"""Markdown run report: one section per run, one entry per pipeline stage."""

from __future__ import annotations

import logging
import re
from datetime import datetime, timezone
from pathlib import Path
from typing import List, Optional, Sequence

logger = logging.getLogger(__name__)

STATUSES = ("started", "done", "failed", "skipped")

_FILE_HEADER = (
    "# Run Report\n"
    "\n"
    "> Written by riskineq.  \n"
    "> Each section is one run. Most recent run first.\n"
)

_HEADING = re.compile(r"^## (\S+) run (\S+)$", re.MULTILINE)
_ENTRY = re.compile(r"^- `[^`]+` \*\*(\S+)\*\* (\w+)")


def _now() -> datetime:
    return datetime.now(timezone.utc)


class _RunSection:
    """One run's stage entries plus a computed summary."""

    def __init__(self, started: str, run_id: str, entries: List[str]) -> None:
        self.started = started
        self.run_id = run_id
        self.entries = entries

    def render(self) -> str:
        entry_block = "\n".join(self.entries)
        return f"## {self.started} run {self.run_id}\n\n{self._build_summary()}\n### Stages\n\n{entry_block}\n"

    def _build_summary(self) -> str:
        latest = {}
        files = 0
        for line in self.entries:
            m = _ENTRY.match(line)
            if m:
                latest[m.group(1)] = m.group(2)
            written = re.search(r"(\d+) file\(s\)", line)
            if written:
                files += int(written.group(1))
        done = sorted(stage for stage, status in latest.items() if status == "done")
        failed = sorted(stage for stage, status in latest.items() if status == "failed")
        return (
            "| Metric | Value |\n"
            "|--------|-------|\n"
            f"| Stages done | {', '.join(done) or '-'} |\n"
            f"| Stages failed | {', '.join(failed) or '-'} |\n"
            f"| Files written | {files} |\n"
        )


def _parse_file(path: Path) -> List[_RunSection]:
    if not path.exists():
        return []
    text = path.read_text(encoding="utf-8")
    sections: List[_RunSection] = []
    for part in re.split(r"(?=^## \S+ run \S+$)", text, flags=re.MULTILINE):
        m = _HEADING.match(part)
        if not m:
            continue
        grouped: List[str] = []
        for line in part.splitlines():
            if line.startswith("- `"):
                grouped.append(line)
            elif line.startswith("  ") and grouped:
                grouped[-1] += "\n" + line
        sections.append(_RunSection(m.group(1), m.group(2), grouped))
    return sections


def _write_report(path: Path, sections: List[_RunSection]) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    sections.sort(key=lambda s: s.started, reverse=True)
    body = "\n\n".join(s.render() for s in sections)
    path.write_text(f"{_FILE_HEADER}\n{body}\n", encoding="utf-8")


def log_stage(
    path: Path,
    run_id: str,
    stage: str,
    status: str,
    *,
    outputs: Sequence[Path] = (),
    notes: str = "",
    when: Optional[datetime] = None,
) -> None:
    """Append a stage entry to the run's section, creating the section on first use.

    Failures to write are logged, never raised: the report must not break a run.
    """

    if status not in STATUSES:
        raise ValueError(f"unknown stage status '{status}'")
    when = when or _now()
    parts = [f"- `{when.strftime('%H:%M:%S')}` **{stage}** {status}"]
    if outputs:
        names = ", ".join(Path(p).name for p in outputs)
        parts.append(f"  {len(outputs)} file(s): {names}")
    if notes:
        parts.append("  " + " ".join(notes.split()))
    entry = "\n".join(parts)

    try:
        sections = _parse_file(Path(path))
        section = next((s for s in sections if s.run_id == run_id), None)
        if section is None:
            section = _RunSection(when.strftime("%Y-%m-%dT%H:%M:%SZ"), run_id, [])
            sections.append(section)
        section.entries.append(entry)
        _write_report(Path(path), sections)
    except OSError as exc:
        logger.error("Failed to write run report: %s", exc)


def stage_statuses(path: Path, run_id: str) -> dict:
    """Latest status of every stage recorded for ``run_id``."""

    for section in _parse_file(Path(path)):
        if section.run_id == run_id:
            latest = {}
            for line in section.entries:
                m = _ENTRY.match(line)
                if m:
                    latest[m.group(1)] = m.group(2)
            return latest
    return {}
