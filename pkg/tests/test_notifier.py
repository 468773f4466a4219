from __future__ import annotations

import json
import logging

import pytest
import requests
import responses

from src.riskineq.notifier import RunNotifier

WEBHOOK = "https://hooks.example.test/riskineq"


@responses.activate
def test_disabled_notifier_sends_nothing() -> None:
    notifier = RunNotifier(None)

    notifier.notify_started("fit", "abc")
    notifier.notify_failure("fit", "boom")

    assert not notifier.enabled
    assert len(responses.calls) == 0


@responses.activate
def test_messages_are_posted_as_content() -> None:
    responses.add(responses.POST, WEBHOOK, status=204)
    notifier = RunNotifier(WEBHOOK)

    notifier.notify_started("pipeline", "3f2a9c0d")
    notifier.notify_stage("fit", 6)
    notifier.notify_convergence(1.12, ["(Intercept)", "sigma2[mother]"])
    notifier.notify_finished("pipeline", "3f2a9c0d")

    bodies = [json.loads(call.request.body)["content"] for call in responses.calls]
    assert len(bodies) == 4
    assert bodies[0].startswith(":rocket: **pipeline** started")
    assert "`3f2a9c0d`" in bodies[0]
    assert "Stage **fit** done" in bodies[1] and "6 file(s)" in bodies[1]
    assert "max R-hat 1.120 on 2 parameter(s): (Intercept), sigma2[mother]" in bodies[2]
    assert bodies[3].startswith(":checkered_flag:")


@responses.activate
def test_failure_message_is_truncated() -> None:
    responses.add(responses.POST, WEBHOOK, status=200)

    RunNotifier(WEBHOOK).notify_failure("fit", "x" * 5000)

    content = json.loads(responses.calls[0].request.body)["content"]
    assert content.startswith(":x: **fit failed**")
    assert content.count("x" * 1500) == 1
    assert "x" * 1501 not in content


@responses.activate
def test_error_status_is_logged(caplog: pytest.LogCaptureFixture) -> None:
    responses.add(responses.POST, WEBHOOK, status=500, body="server down")

    with caplog.at_level(logging.WARNING):
        RunNotifier(WEBHOOK).notify_started("fit", "abc")

    assert "Webhook returned 500" in caplog.text


@responses.activate
def test_connection_error_never_raises(caplog: pytest.LogCaptureFixture) -> None:
    responses.add(responses.POST, WEBHOOK, body=requests.ConnectionError("refused"))

    with caplog.at_level(logging.WARNING):
        RunNotifier(WEBHOOK).notify_finished("fit", "abc")

    assert "Failed to send run notification" in caplog.text
