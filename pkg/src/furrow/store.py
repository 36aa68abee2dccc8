"""Scenario datasets and the append-only run store."""

from __future__ import annotations

import hashlib
import json
import os
import re
import tempfile
from collections.abc import Iterator
from dataclasses import dataclass
from pathlib import Path
from typing import Any
from urllib.parse import quote, unquote

from .domain import (
    KNOWN_CATEGORIES,
    OTHER_CATEGORY,
    EvaluationRecord,
    Method,
    Scenario,
    Transcript,
    category_bucket,
    validate_scenario,
)
from .errors import DuplicateKey, MissingRun, ParseError, StorageError, ValidationError

_REQUIRED = ("id", "category", "question", "reference_answer", "answer_keywords")
_SAFE_RUN_ID = re.compile(r"^[A-Za-z0-9][A-Za-z0-9._-]*$")


@dataclass(frozen=True)
class Dataset:
    name: str
    version: str
    scenarios: tuple[Scenario, ...]
    digest: str = ""

    def by_id(self) -> dict[str, Scenario]:
        return {s.id: s for s in self.scenarios}

    def __len__(self) -> int:
        return len(self.scenarios)


def _scenario_from_line(obj: Any) -> tuple[Scenario | None, list[str]]:
    if not isinstance(obj, dict):
        return None, ["expected a JSON object"]
    unknown = sorted(set(obj) - set(Scenario.FIELDS))
    missing = [k for k in _REQUIRED if k not in obj]
    problems = [f"unknown field {k!r}" for k in unknown] + [f"missing field {k!r}" for k in missing]
    if problems:
        return None, problems
    types_ok = (
        all(isinstance(obj[k], str) for k in ("id", "category", "question", "reference_answer"))
        and isinstance(obj.get("source", ""), str)
        and isinstance(obj["answer_keywords"], list)
        and all(isinstance(k, str) for k in obj["answer_keywords"])
        and isinstance(obj.get("context", []), list)
        and all(
            isinstance(p, list) and len(p) == 2 and all(isinstance(x, str) for x in p)
            for p in obj.get("context", [])
        )
    )
    if not types_ok:
        return None, ["field has the wrong type"]
    s = Scenario.from_dict(obj)
    return s, validate_scenario(s)


def scan_dataset(path: str | os.PathLike[str]) -> tuple[list[Scenario], list[tuple[int, str]], list[int]]:
    """Read every line. Returns (valid scenarios, problems, line numbers with JSON errors)."""
    scenarios: list[Scenario] = []
    problems: list[tuple[int, str]] = []
    parse_failures: list[int] = []
    seen: dict[str, int] = {}
    text = Path(path).read_text(encoding="utf-8")
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            problems.append((lineno, "blank line"))
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            problems.append((lineno, f"invalid JSON: {exc.msg}"))
            parse_failures.append(lineno)
            continue
        s, errs = _scenario_from_line(obj)
        if s is not None and s.id in seen:
            errs = errs + [f"duplicate id {s.id!r} (first seen on line {seen[s.id]})"]
        if errs:
            problems.extend((lineno, e) for e in errs)
            continue
        assert s is not None
        seen[s.id] = lineno
        scenarios.append(s)
    return scenarios, problems, parse_failures


def load_dataset(path: str | os.PathLike[str], name: str | None = None) -> Dataset:
    p = Path(path)
    scenarios, problems, parse_failures = scan_dataset(p)
    if parse_failures:
        raise ParseError(f"{p}: unparseable lines", [pr for pr in problems if pr[0] in parse_failures])
    if problems:
        raise ValidationError(f"{p}: invalid scenarios", problems)
    if not scenarios:
        raise ValidationError("empty dataset")
    digest = hashlib.sha256(p.read_bytes()).hexdigest()
    return Dataset(name=name or p.stem, version=digest[:12], scenarios=tuple(scenarios), digest=digest)


def split_by_category(d: Dataset) -> dict[str, list[Scenario]]:
    parts: dict[str, list[Scenario]] = {c: [] for c in (*KNOWN_CATEGORIES, OTHER_CATEGORY)}
    for s in d.scenarios:
        parts[category_bucket(s.category)].append(s)
    return parts


def _segment(name: str) -> str:
    if not name:
        raise StorageError("empty path segment")
    seg = quote(name, safe="")
    if seg in (".", ".."):
        seg = seg.replace(".", "%2E")
    return seg


def check_run_id(run_id: str) -> str:
    if not _SAFE_RUN_ID.match(run_id):
        raise ValueError(f"run id {run_id!r} is not filesystem-safe (use letters, digits, '.', '_', '-')")
    return run_id


def _write_json_tmp(directory: Path, data: Any) -> str:
    directory.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix=".json")
    with os.fdopen(fd, "w", encoding="utf-8") as fh:
        json.dump(data, fh, ensure_ascii=False, indent=2, sort_keys=True)
        fh.write("\n")
    return tmp


class RunStore:
    """Filesystem layout ``<root>/<run_id>/<model>/<method>/<scenario_id>.{transcript,record}.json``."""

    def __init__(self, root: str | os.PathLike[str]):
        self.root = Path(root)

    def run_dir(self, run_id: str) -> Path:
        return self.root / check_run_id(run_id)

    def exists(self, run_id: str) -> bool:
        return (self.run_dir(run_id) / "manifest.json").exists()

    def require(self, run_id: str) -> Path:
        if not self.exists(run_id):
            raise MissingRun(f"no run {run_id!r} under {self.root}")
        return self.run_dir(run_id)

    def cell_key(self, run_id: str, model: str, method: Method, scenario_id: str, kind: str) -> str:
        return "/".join((check_run_id(run_id), _segment(model), Method(method).value, f"{_segment(scenario_id)}.{kind}.json"))

    def path(self, key: str) -> Path:
        return self.root / key

    def _create(self, key: str, data: Any, overwrite: bool = False) -> str:
        target = self.path(key)
        try:
            tmp = _write_json_tmp(target.parent, data)
        except OSError as exc:
            raise StorageError(f"cannot write {target}: {exc}") from exc
        try:
            if overwrite:
                os.replace(tmp, target)
            else:
                # link() refuses to clobber, which makes the create atomic
                os.link(tmp, target)
        except FileExistsError:
            raise DuplicateKey(f"{key} already exists") from None
        except OSError as exc:
            raise StorageError(f"cannot write {target}: {exc}") from exc
        finally:
            if os.path.exists(tmp):
                os.unlink(tmp)
        return key

    def _read(self, key: str) -> Any:
        try:
            return json.loads(self.path(key).read_text(encoding="utf-8"))
        except FileNotFoundError:
            raise StorageError(f"no such entry {key}") from None
        except (OSError, ValueError) as exc:
            raise StorageError(f"cannot read {key}: {exc}") from exc

    def persist_transcript(self, run_id: str, t: Transcript) -> str:
        key = self.cell_key(run_id, t.model_id, t.method, t.scenario_id, "transcript")
        return self._create(key, t.to_dict())

    def load_transcript(self, key: str) -> Transcript:
        return Transcript.from_dict(self._read(key))

    def persist_failure(self, run_id: str, model: str, method: Method, scenario_id: str,
                        error: str, partial: Transcript | None) -> str:
        key = self.cell_key(run_id, model, method, scenario_id, "failed")
        data = {"error": error, "partial_transcript": partial.to_dict() if partial else None}
        return self._create(key, data, overwrite=True)

    def persist_record(self, run_id: str, r: EvaluationRecord, force: bool = False) -> str:
        key = self.cell_key(run_id, r.model_id, r.method, r.scenario_id, "record")
        return self._create(key, r.to_dict(), overwrite=force)

    def load_record(self, key: str) -> EvaluationRecord:
        return EvaluationRecord.from_dict(self._read(key))

    def _keys(self, run_id: str, kind: str) -> list[str]:
        base = self.run_dir(run_id)
        suffix = f".{kind}.json"
        keys = [p.relative_to(self.root).as_posix() for p in base.glob(f"*/*/*{suffix}")]
        return sorted(keys)

    def transcript_keys(self, run_id: str) -> list[str]:
        return self._keys(run_id, "transcript")

    def record_keys(self, run_id: str) -> list[str]:
        return self._keys(run_id, "record")

    def failure_keys(self, run_id: str) -> list[str]:
        return self._keys(run_id, "failed")

    def iter_transcripts(self, run_id: str) -> Iterator[tuple[str, Transcript]]:
        for key in self.transcript_keys(run_id):
            yield key, self.load_transcript(key)

    def load_records(self, run_id: str) -> list[EvaluationRecord]:
        return [self.load_record(k) for k in self.record_keys(run_id)]

    # manifests and ledgers

    def write_manifest(self, run_id: str, manifest: dict[str, Any]) -> Path:
        path = self.run_dir(run_id) / "manifest.json"
        tmp = _write_json_tmp(path.parent, manifest)
        os.replace(tmp, path)
        return path

    def read_manifest(self, run_id: str) -> dict[str, Any]:
        self.require(run_id)
        return json.loads((self.run_dir(run_id) / "manifest.json").read_text(encoding="utf-8"))

    def append_ledger(self, run_id: str, entries: list[dict[str, Any]], name: str = "ledger.jsonl") -> Path:
        path = self.run_dir(run_id) / name
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open("a", encoding="utf-8") as fh:
            for e in entries:
                fh.write(json.dumps(e, ensure_ascii=False, sort_keys=True) + "\n")
        return path

    def read_ledger(self, run_id: str, name: str = "ledger.jsonl") -> list[dict[str, Any]]:
        path = self.run_dir(run_id) / name
        if not path.exists():
            return []
        return [json.loads(line) for line in path.read_text(encoding="utf-8").splitlines() if line.strip()]


def decode_segment(seg: str) -> str:
    return unquote(seg)
