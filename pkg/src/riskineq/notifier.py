"""Optional webhook notifier for long-running fits and pipelines."""

from __future__ import annotations

import logging
from datetime import datetime, timezone
from typing import Optional, Sequence

import requests

logger = logging.getLogger(__name__)


class RunNotifier:
    """Posts short run updates to a chat webhook. No-ops if not configured."""

    def __init__(self, webhook_url: Optional[str] = None) -> None:
        self._webhook_url = webhook_url
        if self._webhook_url:
            logger.info("Run notifications enabled.")
        else:
            logger.debug("Run notifications disabled (no webhook URL).")

    @property
    def enabled(self) -> bool:
        return bool(self._webhook_url)

    def _send(self, content: str) -> None:
        if not self._webhook_url:
            return
        try:
            resp = requests.post(self._webhook_url, json={"content": content}, timeout=10)
            if resp.status_code not in (200, 204):
                logger.warning("Webhook returned %s: %s", resp.status_code, resp.text[:200])
        except requests.RequestException as exc:
            logger.warning("Failed to send run notification: %s", exc)

    def _ts(self) -> str:
        return datetime.now(timezone.utc).strftime("%H:%M UTC")

    def notify_started(self, command: str, run_id: str) -> None:
        self._send(f":rocket: **{command}** started ({self._ts()}) run `{run_id}`")

    def notify_stage(self, stage: str, n_files: int) -> None:
        self._send(f":white_check_mark: Stage **{stage}** done ({self._ts()}), {n_files} file(s)")

    def notify_convergence(self, max_rhat: float, flagged: Sequence[str]) -> None:
        shown = ", ".join(flagged[:5])
        self._send(
            f":warning: **Convergence** ({self._ts()}) max R-hat {max_rhat:.3f} on {len(flagged)} parameter(s): {shown}"
        )

    def notify_failure(self, command: str, error: str) -> None:
        self._send(f":x: **{command} failed** ({self._ts()})\n```\n{error[:1500]}\n```")

    def notify_finished(self, command: str, run_id: str) -> None:
        self._send(f":checkered_flag: **{command}** finished ({self._ts()}) run `{run_id}`")
