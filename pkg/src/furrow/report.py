"""Render aggregate rows as comparison tables."""

from __future__ import annotations

import csv
import io
from collections.abc import Sequence
from dataclasses import dataclass
from decimal import ROUND_HALF_UP, Decimal

from .domain import KNOWN_CATEGORIES, AggregateRow, category_display

MODEL_CAPTION = "Comparison of different methods on various models"
CATEGORY_CAPTION = "Comparison of methods in different agricultural scenarios"
ACC_HEADER = "Accuracy (ACC)"
SCORE_HEADER = "GPT-4 Score"
MISSING = "n/a"


def format_percent(x: float) -> str:
    """Fraction to percent with one decimal, halves rounded away from zero."""
    return str((Decimal(repr(x)) * 100).quantize(Decimal("0.1"), rounding=ROUND_HALF_UP))


def format_score(x: float | None) -> str:
    if x is None:
        return MISSING
    return str(Decimal(repr(x)).quantize(Decimal("0.1"), rounding=ROUND_HALF_UP))


@dataclass(frozen=True)
class TableRow:
    row: AggregateRow
    bold_accuracy: bool
    bold_score: bool


@dataclass(frozen=True)
class ReportTable:
    caption: str
    by_category: bool
    groups: tuple[tuple[tuple[str, ...], tuple[TableRow, ...]], ...]

    @property
    def rows(self) -> list[TableRow]:
        return [r for _, rows in self.groups for r in rows]


def _argmax_mask(values: Sequence[float | None]) -> list[bool]:
    present = [v for v in values if v is not None]
    if not present:
        return [False] * len(values)
    best = max(present)
    return [v is not None and v == best for v in values]


def _model_key(order: Sequence[str]):
    rank = {m: i for i, m in enumerate(order)}
    return lambda m: (rank.get(m, len(rank)), m)


def _category_key(c: str | None):
    c = c or ""
    return (KNOWN_CATEGORIES.index(c) if c in KNOWN_CATEGORIES else len(KNOWN_CATEGORIES), c)


def build_table(
    rows: Sequence[AggregateRow],
    model_order: Sequence[str] = (),
    caption: str | None = None,
) -> ReportTable:
    by_category = any(r.category is not None for r in rows)
    mkey = _model_key(model_order)
    grouped: dict[tuple[str, ...], list[AggregateRow]] = {}
    for r in rows:
        key = (r.category or "", r.model_id) if by_category else (r.model_id,)
        grouped.setdefault(key, []).append(r)

    if by_category:
        order = sorted(grouped, key=lambda k: (_category_key(k[0]), mkey(k[1])))
    else:
        order = sorted(grouped, key=lambda k: mkey(k[0]))

    groups = []
    for key in order:
        members = grouped[key]
        acc_mask = _argmax_mask([r.accuracy for r in members])
        score_mask = _argmax_mask([r.judge_mean for r in members])
        groups.append((key, tuple(TableRow(r, a, s) for r, a, s in zip(members, acc_mask, score_mask))))
    cap = caption or (CATEGORY_CAPTION if by_category else MODEL_CAPTION)
    return ReportTable(cap, by_category, tuple(groups))


def _cells(t: ReportTable, tr: TableRow) -> list[str]:
    r = tr.row
    lead = [category_display(r.category or ""), r.model_id] if t.by_category else [r.model_id]
    return lead + [r.method.display, format_percent(r.accuracy), format_score(r.judge_mean)]


def render_markdown(t: ReportTable) -> str:
    header = (["Scenario"] if t.by_category else []) + ["Model", "Method", ACC_HEADER, SCORE_HEADER]
    lines = [f"Table: {t.caption}", "", "| " + " | ".join(header) + " |",
             "|" + "|".join([":---"] * (len(header) - 2) + ["---:"] * 2) + "|"]
    for tr in t.rows:
        cells = _cells(t, tr)
        acc, score = cells[-2] + "%", cells[-1]
        if tr.bold_accuracy:
            acc = f"**{acc}**"
        if tr.bold_score:
            score = f"**{score}**"
        lines.append("| " + " | ".join(cells[:-2] + [acc, score]) + " |")
    return "\n".join(lines) + "\n"


def render_csv(t: ReportTable) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    header = (["scenario"] if t.by_category else []) + ["model", "method", "n", "accuracy_pct", "gpt4_score", "best"]
    w.writerow(header)
    for tr in t.rows:
        cells = _cells(t, tr)
        best = ";".join(name for name, on in (("accuracy", tr.bold_accuracy), ("score", tr.bold_score)) if on)
        w.writerow(cells[:-2] + [tr.row.n] + cells[-2:] + [best])
    return buf.getvalue()


def render(t: ReportTable, fmt: str = "markdown") -> str:
    if fmt == "markdown":
        return render_markdown(t)
    if fmt == "csv":
        return render_csv(t)
    raise ValueError(f"unknown report format {fmt!r}")
