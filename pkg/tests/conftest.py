from __future__ import annotations

import json
import re
from pathlib import Path

import pytest

from furrow.domain import Scenario

DATA = Path(__file__).resolve().parents[1] / "src" / "furrow" / "data"
SAMPLE = DATA / "sample_scenarios.jsonl"
SAMPLE_FIXTURE = DATA / "sample_replay.json"
GOLDEN = Path(__file__).resolve().parent / "golden"

# worked example from the method description
INITIAL_OUTPUT = (
    "The agricultural field currently has a temperature of 25°C with 60% humidity. The soil moisture level "
    "is optimal, and the crop being grown is wheat. The machinery in use is a John Deere 5075E tractor, "
    "5 years old, with a history of hydraulic system issues."
)
FOLLOWUP_OUTPUT = (
    "The recommended diagnostic steps for hydraulic system issues in the John Deere 5075E tractor include "
    "checking the hydraulic fluid levels, inspecting hoses and connections for leaks, and testing the "
    "hydraulic pump pressure. Potential solutions may involve replacing faulty hoses, refilling or replacing "
    "hydraulic fluid, and servicing the hydraulic pump."
)

_TIMESTAMP = re.compile(r'"created_at": "[^"]*"')


def mask_timestamps(text: str) -> str:
    return _TIMESTAMP.sub('"created_at": "<masked>"', text)


@pytest.fixture
def wheat() -> Scenario:
    return Scenario(
        id="wheat-1",
        category="MachineryDiagnostics",
        context=(
            ("weather", "25°C, 60% humidity"),
            ("soil moisture", "optimal"),
            ("crop", "wheat"),
            ("machinery", "John Deere 5075E tractor"),
            ("machinery age", "5 years"),
            ("known issues", "history of hydraulic system issues"),
        ),
        question="What should be done about the hydraulic system?",
        reference_answer=FOLLOWUP_OUTPUT,
        answer_keywords=("hydraulic fluid levels", "hoses", "pump pressure"),
        source="worked example",
    )


def write_jsonl(path: Path, rows: list[dict]) -> Path:
    path.write_text("".join(json.dumps(r, ensure_ascii=False) + "\n" for r in rows), encoding="utf-8")
    return path


# one pass/fail line per acceptance criterion in the terminal summary

_criteria: dict[str, tuple[str, str]] = {}


def pytest_runtest_logreport(report):
    if report.when != "call" and not (report.when == "setup" and report.failed):
        return
    marker = report.user_properties and dict(report.user_properties).get("criterion")
    if marker:
        status = "PASS" if report.passed else "FAIL"
        _criteria[marker[0]] = (status, marker[1])


def pytest_runtest_setup(item):
    m = item.get_closest_marker("criterion")
    if m is not None:
        item.user_properties.append(("criterion", (f"AC{m.args[0]}", m.args[1])))


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(_criteria, key=lambda k: int(k[2:])):
        status, title = _criteria[key]
        terminalreporter.write_line(f"{key} {status} {title}")


def sample_run(store: Path, run_id: str = "r1", *, judge: bool = True, fixture: Path = SAMPLE_FIXTURE,
               extra_eval: tuple[str, ...] = ()) -> tuple[int, int]:
    """Replay the bundled sample through ``run`` and ``eval``; returns both exit codes."""
    from furrow.cli import main

    replay = f"replay:{fixture}"
    run_rc = main(["--store", str(store), "run", "--dataset", str(SAMPLE), "--models", "demo-model",
                   "--backend", replay, "--out", run_id])
    args = ["--store", str(store), "eval", run_id, *extra_eval]
    if judge:
        args += ["--judge-model", "demo-judge", "--judge-backend", replay]
    return run_rc, main(args)
