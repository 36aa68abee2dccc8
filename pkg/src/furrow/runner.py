"""Experiment commands: run, eval, report, consult, and run manifests."""

from __future__ import annotations

import hashlib
import json
import logging
import shutil
import sys
from collections.abc import Callable, Sequence
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, TextIO

from . import __version__
from .config import BackendFactory, Config
from .domain import Method, ModelCall, Scenario, Transcript, utc_now
from .errors import ConfigError, DatasetError, MissingRecords, StorageError, StrategyError
from .evaluator import AccuracyConfig, JudgeConfig, aggregate, evaluate_transcript
from .gateway import Backend, RecordingBackend, save_fixture
from .report import build_table, render
from .store import Dataset, RunStore, check_run_id, load_dataset
from .strategies import StrategyConfig, run_strategy

log = logging.getLogger(__name__)

VOLATILE_MANIFEST_KEYS = ("run_id", "created_at", "digest")
DATASET_COPY = "dataset.jsonl"


@dataclass
class RunPlan:
    dataset: Path
    models: list[str]
    methods: list[Method]
    run_id: str
    backend: str = "http"
    strategies: dict[Method, StrategyConfig] = field(default_factory=dict)
    record: Path | None = None
    workers: int | None = None

    def validate(self) -> None:
        if not self.models:
            raise ConfigError("at least one model is required")
        if not self.methods:
            raise ConfigError("at least one method is required")
        if len(set(self.models)) != len(self.models) or len(set(self.methods)) != len(self.methods):
            raise ConfigError("models and methods must not repeat")
        try:
            check_run_id(self.run_id)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None


@dataclass
class CellFailure:
    model: str
    method: Method
    scenario_id: str
    error: str

    def to_dict(self) -> dict[str, str]:
        return {"model": self.model, "method": self.method.value, "scenario_id": self.scenario_id, "error": self.error}


@dataclass
class RunOutcome:
    run_id: str
    transcripts: int
    failures: list[CellFailure]

    @property
    def ok(self) -> bool:
        return not self.failures


def manifest_digest(manifest: dict[str, Any]) -> str:
    stable = {k: v for k, v in manifest.items() if k not in VOLATILE_MANIFEST_KEYS}
    blob = json.dumps(stable, ensure_ascii=False, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()


def build_manifest(
    run_id: str,
    dataset: Dataset,
    models: Sequence[str],
    methods: Sequence[Method],
    strategies: dict[Method, StrategyConfig],
    backends: dict[str, Backend],
    evaluation: dict[str, Any] | None = None,
) -> dict[str, Any]:
    templates = {}
    for m in methods:
        templates[m.value] = strategies[m].templates().digests()
    manifest = {
        "run_id": run_id,
        "created_at": utc_now(),
        "tool": {"name": "furrow", "version": __version__},
        "dataset": {
            "name": dataset.name,
            "version": dataset.version,
            "digest": dataset.digest,
            "scenarios": len(dataset),
        },
        "models": list(models),
        "methods": [m.value for m in methods],
        "backends": {name: b.describe() for name, b in backends.items()},
        "strategies": {m.value: strategies[m].to_dict() for m in methods},
        "templates": templates,
        "evaluation": evaluation,
    }
    manifest["digest"] = manifest_digest(manifest)
    return manifest


def write_manifest(store: RunStore, manifest: dict[str, Any]) -> Path:
    manifest = dict(manifest)
    manifest["digest"] = manifest_digest(manifest)
    return store.write_manifest(manifest["run_id"], manifest)


def cmd_run(plan: RunPlan, store: RunStore, config: Config | None = None,
            backends: dict[str, Backend] | None = None) -> RunOutcome:
    """Execute every scenario x model x method cell and persist the transcripts.

    Config problems surface before anything is written. Per-cell failures
    are recorded in the run ledger and do not stop the other cells.
    """
    config = config or Config()
    plan.validate()
    if store.run_dir(plan.run_id).exists():
        raise ConfigError(f"run {plan.run_id!r} already exists under {store.root}")
    try:
        dataset = load_dataset(plan.dataset)
    except (OSError, DatasetError) as exc:
        raise ConfigError(f"dataset: {exc}") from exc
    strategies = {m: plan.strategies.get(m) or config.strategy(m) for m in plan.methods}
    if backends is None:
        factory = BackendFactory(plan.backend, config)
        backends = {model: factory.for_model(model) for model in plan.models}
    if plan.record is not None:
        backends = {model: RecordingBackend(b) for model, b in backends.items()}

    run_dir = store.run_dir(plan.run_id)
    run_dir.mkdir(parents=True)
    shutil.copyfile(plan.dataset, run_dir / DATASET_COPY)
    write_manifest(store, build_manifest(plan.run_id, dataset, plan.models, plan.methods, strategies, backends))

    cells = [(model, m, s) for model in plan.models for m in plan.methods for s in dataset.scenarios]
    failures: list[CellFailure] = []

    def work(cell: tuple[str, Method, Scenario]) -> CellFailure | None:
        model, method, s = cell
        try:
            t = run_strategy(s, model, strategies[method], backends[model])
            store.persist_transcript(plan.run_id, t)
        except StrategyError as exc:
            store.persist_failure(plan.run_id, model, method, s.id, str(exc), exc.partial)
            return CellFailure(model, method, s.id, f"{type(exc.cause).__name__}: {exc.cause}")
        except StorageError as exc:
            return CellFailure(model, method, s.id, f"{type(exc).__name__}: {exc}")
        return None

    workers = plan.workers or config.default_workers()
    with ThreadPoolExecutor(max_workers=workers) as pool:
        for result in pool.map(work, cells):
            if result is not None:
                failures.append(result)

    if failures:
        store.append_ledger(plan.run_id, [f.to_dict() for f in failures])
        for f in failures:
            log.error("cell failed: %s/%s/%s: %s", f.model, f.method.value, f.scenario_id, f.error)
    if plan.record is not None:
        merged: dict[str, Any] = {}
        for b in backends.values():
            merged.update(b.snapshot)  # type: ignore[attr-defined]
        save_fixture(plan.record, merged)
    return RunOutcome(plan.run_id, len(cells) - len(failures), failures)


def run_dataset(store: RunStore, run_id: str) -> Dataset:
    return load_dataset(store.require(run_id) / DATASET_COPY)


@dataclass
class EvalOutcome:
    records: int
    failures: list[dict[str, str]]


def cmd_eval(store: RunStore, run_id: str, accuracy: AccuracyConfig = AccuracyConfig(),
             judge: JudgeConfig | None = None, force: bool = False, workers: int = 4) -> EvalOutcome:
    store.require(run_id)
    if store.record_keys(run_id) and not force:
        raise ConfigError(f"run {run_id!r} already has evaluation records; pass --force to overwrite")
    scenarios = run_dataset(store, run_id).by_id()
    keys = store.transcript_keys(run_id)

    def work(key: str) -> dict[str, str] | None:
        t = store.load_transcript(key)
        record, problem = evaluate_transcript(t, scenarios[t.scenario_id], accuracy, judge, key)
        store.persist_record(run_id, record, force=force)
        if problem:
            return {"transcript": key, "error": problem}
        return None

    with ThreadPoolExecutor(max_workers=max(1, workers)) as pool:
        failures = [f for f in pool.map(work, keys) if f is not None]
    if failures:
        store.append_ledger(run_id, failures, name="eval_ledger.jsonl")

    manifest = store.read_manifest(run_id)
    manifest["evaluation"] = {
        "accuracy": accuracy.to_dict(),
        "judge": judge.to_dict() if judge else None,
    }
    write_manifest(store, manifest)
    return EvalOutcome(len(keys), failures)


def cmd_report(store: RunStore, run_id: str, group_by: str = "model", fmt: str = "markdown") -> str:
    manifest = store.read_manifest(run_id)
    records = store.load_records(run_id)
    if not records:
        raise MissingRecords(f"run {run_id!r} has no evaluation records; run `furrow eval {run_id}` first")
    rows = aggregate(records, group_by)
    return render(build_table(rows, model_order=manifest.get("models", ())), fmt)


def format_call(index: int, call: ModelCall) -> str:
    tag = "extraction" if call.auxiliary else f"call {index}"
    prompt = call.request[-1].content
    return f"--- {tag} ---\n>>> {prompt}\n<<< {call.response.content}\n"


def cmd_consult(
    scenario: Scenario,
    model: str,
    cfg: StrategyConfig,
    backend: Backend,
    out: TextIO | None = None,
    interactive: bool = False,
    read_line: Callable[[], str] = input,
) -> Transcript:
    """Run one strategy on one scenario, printing each exchange as it happens."""
    out = out or sys.stdout
    if interactive:
        instruction = cfg.templates().text("context_block").split("\n\n")[0].strip()
        out.write(f"{instruction}\n(finish with an empty line)\n")
        lines = []
        while True:
            try:
                line = read_line()
            except EOFError:
                break
            if not line.strip():
                break
            lines.append(line)
        if lines:
            scenario = replace(scenario, context=(("operator report", "\n".join(lines)),))

    counter = {"main": 0}

    def show(call: ModelCall) -> None:
        if not call.auxiliary:
            counter["main"] += 1
        out.write(format_call(counter["main"], call))
        out.flush()

    out.write(f"=== {scenario.id} | {model} | {cfg.method.display} ===\n")
    transcript = run_strategy(scenario, model, cfg, backend, on_call=show)
    out.write(f"=== final answer ===\n{transcript.final_answer}\n")
    return transcript
