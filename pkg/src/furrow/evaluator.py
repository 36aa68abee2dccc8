"""Accuracy and LLM-judge scoring, plus per-cell aggregation."""

from __future__ import annotations

import math
import re
from collections import defaultdict
from collections.abc import Iterable, Mapping
from dataclasses import dataclass, field
from enum import Enum
from typing import Any

from .domain import (
    METHOD_ORDER,
    AggregateRow,
    EvaluationRecord,
    JudgeScore,
    Scenario,
    Transcript,
    assistant,
    canonicalize_text,
    user,
)
from .errors import EmptyInput, GatewayError, JudgeFormatError
from .gateway import Backend, CompletionRequest
from .templates import DEFAULT_TEMPLATES, Templates, render

JUDGE_LABELS = ("Relevance", "Coherence", "Applicability", "Overall")
_LABELLED_NUMBER = re.compile(
    r"\b(relevance|coherence|applicability|overall)\b[\s*_]*[:=][\s*_]*([-+]?\d+(?:\.\d+)?)(?!\.?\d)",
    re.IGNORECASE,
)
JUDGE_BINARY_CUTOFF = 4.0


class AccuracyMode(str, Enum):
    KEYWORD = "keyword"
    JUDGE = "judge"


@dataclass(frozen=True)
class AccuracyConfig:
    threshold: float = 0.6
    mode: AccuracyMode = AccuracyMode.KEYWORD

    def __post_init__(self) -> None:
        object.__setattr__(self, "mode", AccuracyMode(self.mode))
        if not 0.0 < self.threshold <= 1.0:
            raise ValueError(f"threshold must lie in (0, 1], got {self.threshold}")

    def to_dict(self) -> dict[str, Any]:
        return {"threshold": self.threshold, "mode": self.mode.value}


@dataclass
class JudgeConfig:
    judge_backend: Backend
    rubric_template: str = DEFAULT_TEMPLATES.text("judge")
    scale_min: float = 1.0
    scale_max: float = 5.0
    temperature: float = 0.0
    seed: int | None = 0
    templates: Templates = field(default=DEFAULT_TEMPLATES)

    def __post_init__(self) -> None:
        if not self.scale_min < self.scale_max:
            raise ValueError("scale_min must be below scale_max")
        # validates placeholders
        Templates({"judge": self.rubric_template})

    def to_dict(self) -> dict[str, Any]:
        return {
            "backend": self.judge_backend.describe(),
            "scale": [self.scale_min, self.scale_max],
            "rubric_digest": Templates({"judge": self.rubric_template}).digests()["judge"],
            "sees_reference": "{{reference}}" in self.rubric_template.replace(" ", ""),
            "temperature": self.temperature,
            "seed": self.seed,
        }


def keyword_coverage(answer: str, keywords: Iterable[str]) -> float:
    kws = list(keywords)
    if not kws:
        raise ValueError("keyword set is empty")
    text = canonicalize_text(answer)
    hits = sum(1 for k in kws if canonicalize_text(k) in text)
    return hits / len(kws)


def score_accuracy(
    final_answer: str,
    s: Scenario,
    cfg: AccuracyConfig = AccuracyConfig(),
    judge: JudgeScore | None = None,
    scale_max: float = 5.0,
) -> tuple[float, bool]:
    """Return ``(coverage, correct)``.

    Keyword mode checks what fraction of the scenario's answer keywords
    appear in the canonicalized answer. Judge mode needs ``judge``.
    """
    if cfg.mode is AccuracyMode.KEYWORD:
        coverage = keyword_coverage(final_answer, s.answer_keywords)
        return coverage, coverage >= cfg.threshold
    if judge is None:
        raise ValueError("judge-binary accuracy needs a judge score")
    return judge.overall / scale_max, judge.overall >= JUDGE_BINARY_CUTOFF


def parse_judge_output(text: str, scale_min: float = 1.0, scale_max: float = 5.0) -> JudgeScore:
    found: dict[str, str] = {}
    for m in _LABELLED_NUMBER.finditer(text):
        found[m.group(1).capitalize()] = m.group(2)
    bad = []
    values: dict[str, float] = {}
    for label in JUDGE_LABELS:
        raw = found.get(label)
        if raw is None:
            bad.append(label)
            continue
        v = float(raw)
        if not scale_min <= v <= scale_max:
            bad.append(f"{label}={raw}")
            continue
        values[label.lower()] = v
    if bad:
        raise JudgeFormatError(bad, text)
    return JudgeScore(raw_text=text, **values)


def judge_score(t: Transcript, s: Scenario, cfg: JudgeConfig) -> JudgeScore:
    prompt = render(
        cfg.rubric_template,
        {"question": s.question, "reference": s.reference_answer, "response": t.final_answer},
        "judge",
    ).strip()
    messages = [user(prompt)]
    req = CompletionRequest(tuple(messages), temperature=cfg.temperature, seed=cfg.seed)
    raw = cfg.judge_backend.complete(req).content
    try:
        return parse_judge_output(raw, cfg.scale_min, cfg.scale_max)
    except JudgeFormatError as first:
        problem = ", ".join(first.labels)
    fmt = lambda x: f"{x:g}"  # noqa: E731
    reask = cfg.templates.render("judge_reask", problem=problem,
                                 scale_min=fmt(cfg.scale_min), scale_max=fmt(cfg.scale_max))
    messages += [assistant(raw), user(reask)]
    req = CompletionRequest(tuple(messages), temperature=cfg.temperature, seed=cfg.seed)
    raw = cfg.judge_backend.complete(req).content
    return parse_judge_output(raw, cfg.scale_min, cfg.scale_max)


def evaluate_transcript(
    t: Transcript,
    s: Scenario,
    acc: AccuracyConfig,
    judge: JudgeConfig | None = None,
    transcript_ref: str = "",
) -> tuple[EvaluationRecord, str | None]:
    """Score one transcript. Judge failures are returned as text, not raised."""
    score = None
    judge_error = None
    if judge is not None:
        try:
            score = judge_score(t, s, judge)
        except (JudgeFormatError, GatewayError) as exc:
            judge_error = f"{type(exc).__name__}: {exc}"
    if acc.mode is AccuracyMode.JUDGE and score is None:
        coverage, correct = 0.0, False
        judge_error = judge_error or "judge-binary accuracy requested without a judge"
    else:
        coverage, correct = score_accuracy(
            t.final_answer, s, acc, score, judge.scale_max if judge else 5.0
        )
    record = EvaluationRecord(
        scenario_id=s.id,
        model_id=t.model_id,
        method=t.method,
        correct=correct,
        coverage=coverage,
        judge=score,
        transcript_ref=transcript_ref,
        category=s.category,
    )
    return record, judge_error


GROUPINGS = {
    "model": ("model", "method"),
    "category": ("category", "model", "method"),
}


def aggregate(
    records: Iterable[EvaluationRecord],
    group_by: tuple[str, ...] | str = ("model", "method"),
    categories: Mapping[str, str] | None = None,
) -> list[AggregateRow]:
    if isinstance(group_by, str):
        group_by = GROUPINGS[group_by]
    by_category = "category" in group_by
    cells: dict[tuple, list[EvaluationRecord]] = defaultdict(list)
    for r in records:
        cat = None
        if by_category:
            cat = (categories or {}).get(r.scenario_id, r.category) or ""
        cells[(cat, r.model_id, r.method)].append(r)
    if not cells:
        raise EmptyInput("no evaluation records to aggregate")

    rows = []
    for (cat, model, method), rs in cells.items():
        scores = [r.judge.overall for r in rs if r.judge is not None]
        rows.append(
            AggregateRow(
                model_id=model,
                method=method,
                n=len(rs),
                accuracy=sum(1 for r in rs if r.correct) / len(rs),
                judge_mean=math.fsum(scores) / len(scores) if scores else None,
                category=cat,
            )
        )
    rows.sort(key=lambda r: (r.category or "", r.model_id, METHOD_ORDER[r.method]))
    return rows
