"""Shared value types and text canonicalization."""

from __future__ import annotations

import unicodedata
from dataclasses import dataclass, field
from datetime import datetime, timezone
from enum import Enum
from typing import Any

KNOWN_CATEGORIES = ("MachineryDiagnostics", "MaintenanceScheduling", "EnvironmentalAdjustment")
OTHER_CATEGORY = "Other"

CATEGORY_DISPLAY = {
    "MachineryDiagnostics": "Machinery Diagnostics",
    "MaintenanceScheduling": "Maintenance Scheduling",
    "EnvironmentalAdjustment": "Environmental Adjustment",
}


class Role(str, Enum):
    SYSTEM = "system"
    USER = "user"
    ASSISTANT = "assistant"


class Method(str, Enum):
    BASE = "base"
    COT = "cot"
    THOT = "thot"
    MULTIROUND = "multiround"

    @property
    def display(self) -> str:
        return METHOD_DISPLAY[self]

    @classmethod
    def parse(cls, text: str) -> Method:
        key = text.strip().lower().replace("-", "").replace("_", "")
        for m in cls:
            if m.value == key:
                return m
        raise ValueError(f"unknown method {text!r}; expected one of {[m.value for m in cls]}")


METHOD_DISPLAY = {
    Method.BASE: "Base Model",
    Method.COT: "CoT",
    Method.THOT: "ThoT",
    Method.MULTIROUND: "Our Method",
}
METHOD_ORDER = {m: i for i, m in enumerate(Method)}


def utc_now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="milliseconds").replace("+00:00", "Z")


def canonicalize_text(text: str) -> str:
    """Lowercase, NFC-normalize, turn punctuation into spaces and squeeze whitespace."""
    text = unicodedata.normalize("NFC", unicodedata.normalize("NFC", text).lower())
    chars = [" " if unicodedata.category(c).startswith("P") else c for c in text]
    return " ".join("".join(chars).split())


def category_bucket(category: str) -> str:
    return category if category in KNOWN_CATEGORIES else OTHER_CATEGORY


def category_display(category: str) -> str:
    return CATEGORY_DISPLAY.get(category, category)


@dataclass(frozen=True)
class Scenario:
    id: str
    category: str
    context: tuple[tuple[str, str], ...]
    question: str
    reference_answer: str
    answer_keywords: tuple[str, ...]
    source: str = ""

    FIELDS = ("id", "category", "context", "question", "reference_answer", "answer_keywords", "source")

    def __post_init__(self) -> None:
        object.__setattr__(self, "context", tuple((str(k), str(v)) for k, v in self.context))
        # keyword set semantics, first occurrence wins
        object.__setattr__(self, "answer_keywords", tuple(dict.fromkeys(self.answer_keywords)))

    def context_value(self, *names: str) -> str | None:
        wanted = [n.lower() for n in names]
        for name in wanted:
            for key, value in self.context:
                if key.strip().lower() == name:
                    return value
        return None

    def to_dict(self) -> dict[str, Any]:
        return {
            "id": self.id,
            "category": self.category,
            "context": [[k, v] for k, v in self.context],
            "question": self.question,
            "reference_answer": self.reference_answer,
            "answer_keywords": list(self.answer_keywords),
            "source": self.source,
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> Scenario:
        context = data.get("context", [])
        if isinstance(context, dict):
            context = list(context.items())
        return cls(
            id=data["id"],
            category=data["category"],
            context=tuple((k, v) for k, v in context),
            question=data["question"],
            reference_answer=data["reference_answer"],
            answer_keywords=tuple(data["answer_keywords"]),
            source=data.get("source", ""),
        )


def validate_scenario(s: Scenario) -> list[str]:
    problems = []
    if not s.id.strip():
        problems.append("id empty")
    if not s.category.strip():
        problems.append("category empty")
    if not s.answer_keywords:
        problems.append("answer_keywords empty")
    elif any(not canonicalize_text(k) for k in s.answer_keywords):
        problems.append("keyword empty after canonicalization")
    return problems


@dataclass(frozen=True)
class ChatMessage:
    role: Role
    content: str

    def __post_init__(self) -> None:
        object.__setattr__(self, "role", Role(self.role))
        if not self.content:
            raise ValueError(f"{self.role.value} message content must be non-empty")

    def to_dict(self) -> dict[str, str]:
        return {"role": self.role.value, "content": self.content}

    @classmethod
    def from_dict(cls, data: dict[str, str]) -> ChatMessage:
        return cls(Role(data["role"]), data["content"])


def system(content: str) -> ChatMessage:
    return ChatMessage(Role.SYSTEM, content)


def user(content: str) -> ChatMessage:
    return ChatMessage(Role.USER, content)


def assistant(content: str) -> ChatMessage:
    return ChatMessage(Role.ASSISTANT, content)


def roles_alternate(messages: tuple[ChatMessage, ...] | list[ChatMessage]) -> bool:
    """Leading system messages, then strict user/assistant alternation ending on user."""
    rest = [m for m in messages]
    while rest and rest[0].role is Role.SYSTEM:
        rest.pop(0)
    if not rest or rest[-1].role is not Role.USER:
        return False
    expected = Role.USER
    for m in rest:
        if m.role is not expected:
            return False
        expected = Role.ASSISTANT if expected is Role.USER else Role.USER
    return True


@dataclass(frozen=True)
class ModelCall:
    request: tuple[ChatMessage, ...]
    response: ChatMessage
    latency_ms: float = 0.0
    prompt_tokens: int = 0
    completion_tokens: int = 0
    auxiliary: bool = False

    def to_dict(self) -> dict[str, Any]:
        return {
            "request": [m.to_dict() for m in self.request],
            "response": self.response.to_dict(),
            "latency_ms": self.latency_ms,
            "prompt_tokens": self.prompt_tokens,
            "completion_tokens": self.completion_tokens,
            "auxiliary": self.auxiliary,
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> ModelCall:
        return cls(
            request=tuple(ChatMessage.from_dict(m) for m in data["request"]),
            response=ChatMessage.from_dict(data["response"]),
            latency_ms=data.get("latency_ms", 0.0),
            prompt_tokens=data.get("prompt_tokens", 0),
            completion_tokens=data.get("completion_tokens", 0),
            auxiliary=data.get("auxiliary", False),
        )


@dataclass(frozen=True)
class Transcript:
    scenario_id: str
    model_id: str
    method: Method
    calls: tuple[ModelCall, ...]
    created_at: str = field(default_factory=utc_now)

    def __post_init__(self) -> None:
        object.__setattr__(self, "method", Method(self.method))
        object.__setattr__(self, "calls", tuple(self.calls))
        if not self.calls:
            raise ValueError("a transcript needs at least one model call")

    @property
    def final_answer(self) -> str:
        return self.calls[-1].response.content

    @property
    def main_calls(self) -> tuple[ModelCall, ...]:
        return tuple(c for c in self.calls if not c.auxiliary)

    def to_dict(self) -> dict[str, Any]:
        return {
            "scenario_id": self.scenario_id,
            "model_id": self.model_id,
            "method": self.method.value,
            "calls": [c.to_dict() for c in self.calls],
            "final_answer": self.final_answer,
            "created_at": self.created_at,
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> Transcript:
        t = cls(
            scenario_id=data["scenario_id"],
            model_id=data["model_id"],
            method=Method(data["method"]),
            calls=tuple(ModelCall.from_dict(c) for c in data["calls"]),
            created_at=data["created_at"],
        )
        if "final_answer" in data and data["final_answer"] != t.final_answer:
            raise ValueError("final_answer does not match the last call's response")
        return t


@dataclass(frozen=True)
class JudgeScore:
    relevance: float
    coherence: float
    applicability: float
    overall: float
    raw_text: str = ""

    def to_dict(self) -> dict[str, Any]:
        return {
            "relevance": self.relevance,
            "coherence": self.coherence,
            "applicability": self.applicability,
            "overall": self.overall,
            "raw_text": self.raw_text,
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> JudgeScore:
        return cls(**{k: data[k] for k in ("relevance", "coherence", "applicability", "overall")},
                   raw_text=data.get("raw_text", ""))


@dataclass(frozen=True)
class EvaluationRecord:
    scenario_id: str
    model_id: str
    method: Method
    correct: bool
    coverage: float
    judge: JudgeScore | None = None
    transcript_ref: str = ""
    category: str = ""

    def __post_init__(self) -> None:
        object.__setattr__(self, "method", Method(self.method))
        if not 0.0 <= self.coverage <= 1.0:
            raise ValueError(f"coverage {self.coverage} outside [0, 1]")

    def to_dict(self) -> dict[str, Any]:
        return {
            "scenario_id": self.scenario_id,
            "model_id": self.model_id,
            "method": self.method.value,
            "category": self.category,
            "correct": self.correct,
            "coverage": self.coverage,
            "judge": self.judge.to_dict() if self.judge else None,
            "transcript_ref": self.transcript_ref,
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> EvaluationRecord:
        return cls(
            scenario_id=data["scenario_id"],
            model_id=data["model_id"],
            method=Method(data["method"]),
            correct=bool(data["correct"]),
            coverage=data["coverage"],
            judge=JudgeScore.from_dict(data["judge"]) if data.get("judge") else None,
            transcript_ref=data.get("transcript_ref", ""),
            category=data.get("category", ""),
        )


@dataclass(frozen=True)
class AggregateRow:
    model_id: str
    method: Method
    n: int
    accuracy: float
    judge_mean: float | None = None
    category: str | None = None

    def to_dict(self) -> dict[str, Any]:
        return {
            "category": self.category,
            "model_id": self.model_id,
            "method": self.method.value,
            "n": self.n,
            "accuracy": self.accuracy,
            "judge_mean": self.judge_mean,
        }
