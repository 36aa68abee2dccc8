from __future__ import annotations

import csv
import io
import re

import pytest
from hypothesis import given
from hypothesis import strategies as st

from furrow.domain import AggregateRow, Method
from furrow.report import build_table, format_percent, format_score, render, render_csv, render_markdown


def arow(model, method, acc, score=None, cat=None, n=10):
    return AggregateRow(model, Method(method), n, acc, score, cat)


@pytest.mark.parametrize(
    "x, expected",
    [(0.867, "86.7"), (0.905, "90.5"), (1.0, "100.0"), (0.0, "0.0"), (0.8665, "86.7"), (0.8664, "86.6"),
     (2 / 3, "66.7"), (0.00049, "0.0"), (0.00051, "0.1")],
)
def test_format_percent(x, expected):
    assert format_percent(x) == expected


@pytest.mark.parametrize("x, expected", [(4.8, "4.8"), (4.85, "4.9"), (4.95, "5.0"), (3.25, "3.3"), (None, "n/a")])
def test_format_score(x, expected):
    assert format_score(x) == expected


def test_single_row_group_is_bolded():
    md = render_markdown(build_table([arow("m", "base", 0.5, 3.0)]))
    assert "| m | Base Model | **50.0%** | **3.0** |" in md


def test_tie_bolds_both_rows():
    t = build_table([arow("m", "thot", 0.75, 4.0), arow("m", "multiround", 0.75, 4.5), arow("m", "base", 0.5, 3.0)])
    flags = [(tr.row.method, tr.bold_accuracy, tr.bold_score) for tr in t.rows]
    assert flags == [(Method.THOT, True, False), (Method.MULTIROUND, True, True), (Method.BASE, False, False)]
    assert "best" in render_csv(t).splitlines()[0]


def test_bold_uses_raw_values_not_rounded():
    # both render as 86.7%, only the larger is bold
    t = build_table([arow("m", "thot", 0.8666, None), arow("m", "multiround", 0.8668, None)])
    assert [tr.bold_accuracy for tr in t.rows] == [False, True]


def test_missing_judge_is_never_bold():
    t = build_table([arow("m", "base", 0.5, None), arow("m", "cot", 0.6, None)])
    assert not any(tr.bold_score for tr in t.rows)
    assert "n/a" in render_markdown(t)


def test_model_order_is_honoured():
    rows = [arow("b", "base", 0.1), arow("a", "base", 0.2), arow("c", "base", 0.3)]
    t = build_table(rows, model_order=["c", "a"])
    assert [k for k, _ in t.groups] == [("c",), ("a",), ("b",)]


def test_markdown_layout():
    md = render_markdown(build_table([arow("m", "base", 0.5, 3.0), arow("m", "multiround", 0.9, 4.8)]))
    lines = md.splitlines()
    assert lines[0] == "Table: Comparison of different methods on various models"
    assert lines[2] == "| Model | Method | Accuracy (ACC) | GPT-4 Score |"
    assert lines[3] == "|:---|:---|---:|---:|"
    assert lines[5] == "| m | Our Method | **90.0%** | **4.8** |"


def test_category_layout():
    rows = [arow("m", "base", 0.5, 3.0, "EnvironmentalAdjustment"), arow("m", "base", 0.7, 3.5, "MachineryDiagnostics"),
            arow("m", "base", 0.2, 2.0, "Orchard")]
    t = build_table(rows)
    md = render_markdown(t)
    assert "| Scenario | Model | Method | Accuracy (ACC) | GPT-4 Score |" in md
    cats = [tr.row.category for tr in t.rows]
    assert cats == ["MachineryDiagnostics", "EnvironmentalAdjustment", "Orchard"]
    # each category is its own group, so every row is bold
    assert all(tr.bold_accuracy for tr in t.rows)


def test_unknown_format():
    with pytest.raises(ValueError):
        render(build_table([arow("m", "base", 0.5)]), "html")


rows_strategy = st.lists(
    st.builds(
        arow,
        st.sampled_from(["m1", "m2", "m3"]),
        st.sampled_from([m.value for m in Method]),
        st.sampled_from([0.0, 0.25, 0.5, 0.867, 0.9, 1.0]),
        st.none() | st.sampled_from([1.0, 3.5, 4.8, 5.0]),
    ),
    min_size=1,
    max_size=12,
    unique_by=lambda r: (r.model_id, r.method),
)


@given(rows_strategy)
def test_bold_mask_matches_brute_force_argmax(rows):
    t = build_table(rows)
    for _, members in t.groups:
        for column, flag in (("accuracy", "bold_accuracy"), ("judge_mean", "bold_score")):
            values = [getattr(tr.row, column) for tr in members]
            expected = set()
            for i, v in enumerate(values):
                if v is not None and all(w is None or v >= w for w in values):
                    expected.add(i)
            assert {i for i, tr in enumerate(members) if getattr(tr, flag)} == expected


@given(rows_strategy)
def test_csv_and_markdown_agree(rows):
    t = build_table(rows)
    md_rows = [line for line in render_markdown(t).splitlines()[4:]]
    csv_rows = list(csv.DictReader(io.StringIO(render_csv(t))))
    assert len(md_rows) == len(csv_rows)
    for line, c in zip(md_rows, csv_rows):
        cells = [x.strip().strip("*") for x in line.strip("|").split("|")]
        assert cells[-2] == c["accuracy_pct"] + "%"
        assert cells[-1] == c["gpt4_score"]
        assert ("**" in line.split("|")[-3]) == ("accuracy" in c["best"].split(";"))
        assert ("**" in line.split("|")[-2]) == ("score" in c["best"].split(";"))


@given(rows_strategy)
def test_every_row_rendered_once(rows):
    md = render_markdown(build_table(rows))
    assert len(re.findall(r"^\| m\d ", md, re.M)) == len(rows)
