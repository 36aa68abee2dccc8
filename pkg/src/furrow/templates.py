"""Prompt templates with ``{{name}}`` placeholders."""

from __future__ import annotations

import hashlib
import re
from collections.abc import Mapping
from pathlib import Path

from .errors import TemplateError

PLACEHOLDER = re.compile(r"\{\{\s*([A-Za-z_][A-Za-z0-9_]*)\s*\}\}")

DEFAULTS: dict[str, str] = {
    "system": (
        "You are an experienced consultant for intelligent agricultural machinery management. "
        "Give precise, practical advice grounded in the field conditions and machinery details you are given."
    ),
    "context_block": (
        "Describe the current conditions of the agricultural field, including weather, soil moisture, "
        "and crop type. Also, provide details about the machinery being used, including its model, age, "
        "and any known issues.\n\nReported details:\n{{fields}}"
    ),
    "initial": "{{context_block}}\n\nQuestion: {{question}}",
    "cot": (
        "{{initial}}\n\nThink through the problem in numbered logical steps, "
        "then state the final recommendation."
    ),
    "thot_analysis": (
        "{{initial}}\n\nWalk through the context in manageable parts, summarizing and analyzing each part "
        "as you go. Do not give the final recommendation yet."
    ),
    "thot_final": "Given that analysis, state the final recommendation.",
    "extract": (
        "Below is a response about an agricultural machinery situation.\n\n"
        "---\n{{response}}\n---\n\n"
        "List up to {{max_items}} unresolved issues or concerns raised in the response that deserve a "
        "closer look. Write one per line in exactly this form:\n"
        "- <short issue label> | <verbatim phrase copied from the response>\n"
        "If there are no unresolved issues, answer with the single word: none"
    ),
    "followup": (
        "Given the {{label}} reported in the {{machinery}}, "
        "what are the recommended diagnostic steps and potential solutions?"
    ),
    "refine": (
        "Considering everything above, are there remaining risks or details concerning the {{machinery}} "
        "that should be addressed before acting?"
    ),
    "synthesis": "Synthesize the findings above into a single actionable recommendation.",
    "judge": (
        "You are grading an answer to an agricultural machinery management question.\n\n"
        "Question:\n{{question}}\n\nReference answer:\n{{reference}}\n\nAnswer to grade:\n{{response}}\n\n"
        "Rate the answer from 1 to 5 (one decimal allowed) for relevance, coherence and practical "
        "applicability, then give an overall score. Reply with exactly four lines:\n"
        "Relevance: x\nCoherence: x\nApplicability: x\nOverall: x"
    ),
    "judge_reask": (
        "Your previous reply could not be read ({{problem}}). Reply again with exactly four lines "
        "and nothing else, each value between {{scale_min}} and {{scale_max}}:\n"
        "Relevance: x\nCoherence: x\nApplicability: x\nOverall: x"
    ),
}

ALLOWED: dict[str, frozenset[str]] = {
    "system": frozenset(),
    "context_block": frozenset({"fields"}),
    "initial": frozenset({"context_block", "question"}),
    "cot": frozenset({"initial", "question"}),
    "thot_analysis": frozenset({"initial", "question"}),
    "thot_final": frozenset(),
    "extract": frozenset({"response", "max_items"}),
    "followup": frozenset({"label", "machinery"}),
    "refine": frozenset({"machinery"}),
    "synthesis": frozenset(),
    "judge": frozenset({"question", "reference", "response"}),
    "judge_reask": frozenset({"problem", "scale_min", "scale_max"}),
}


def placeholders(text: str) -> set[str]:
    return set(PLACEHOLDER.findall(text))


def render(text: str, values: Mapping[str, object], name: str = "template") -> str:
    def sub(match: re.Match[str]) -> str:
        key = match.group(1)
        if key not in values:
            raise TemplateError(f"{name}: unknown placeholder {{{{{key}}}}}")
        return str(values[key])

    return PLACEHOLDER.sub(sub, text)


class Templates:
    """Default templates plus validated overrides."""

    def __init__(self, overrides: Mapping[str, str] | None = None):
        self._texts = dict(DEFAULTS)
        for name, text in (overrides or {}).items():
            if name not in DEFAULTS:
                raise TemplateError(f"unknown template {name!r}; known: {sorted(DEFAULTS)}")
            unknown = placeholders(text) - ALLOWED[name]
            if unknown:
                raise TemplateError(f"{name}: unknown placeholder(s) {sorted(unknown)}")
            self._texts[name] = text

    @classmethod
    def from_paths(cls, paths: Mapping[str, str | Path], base: Path | None = None) -> Templates:
        texts = {}
        for name, p in paths.items():
            path = Path(p)
            if base is not None and not path.is_absolute():
                path = base / path
            texts[name] = path.read_text(encoding="utf-8")
        return cls(texts)

    def text(self, name: str) -> str:
        return self._texts[name]

    def render(self, name: str, **values: object) -> str:
        return render(self._texts[name], values, name).strip()

    def digests(self) -> dict[str, str]:
        return {k: hashlib.sha256(v.encode("utf-8")).hexdigest()[:16] for k, v in sorted(self._texts.items())}


DEFAULT_TEMPLATES = Templates()
