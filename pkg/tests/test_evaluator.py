from __future__ import annotations

import math
import random
from itertools import combinations

import pytest
from hypothesis import given
from hypothesis import strategies as st

from furrow.domain import ChatMessage, EvaluationRecord, JudgeScore, Method, ModelCall, Scenario, Transcript
from furrow.errors import EmptyInput, JudgeFormatError
from furrow.evaluator import (
    AccuracyConfig,
    AccuracyMode,
    JudgeConfig,
    aggregate,
    evaluate_transcript,
    judge_score,
    keyword_coverage,
    parse_judge_output,
    score_accuracy,
)
from furrow.gateway import RecordingBackend, ScriptedBackend

from .conftest import FOLLOWUP_OUTPUT

FIVES = "Relevance: 5\nCoherence: 5\nApplicability: 5\nOverall: 5"


def scenario(keywords=("a",), sid="s", category="Other") -> Scenario:
    return Scenario(sid, category, (), "q?", "ref", tuple(keywords))


def answer_transcript(text: str, sid="s", model="m", method=Method.BASE) -> Transcript:
    call = ModelCall((ChatMessage("user", "q?"),), ChatMessage("assistant", text))
    return Transcript(sid, model, method, (call,))


def rec(correct: bool, model="m", method=Method.BASE, overall: float | None = None, sid="s", cat="Other"):
    judge = None if overall is None else JudgeScore(overall, overall, overall, overall, "")
    return EvaluationRecord(sid, model, method, correct, 1.0 if correct else 0.0, judge, "", cat)


# keyword accuracy


def test_worked_example_covers_all_keywords(wheat):
    cov, ok = score_accuracy(FOLLOWUP_OUTPUT, wheat)
    assert cov == 1.0 and ok


def test_empty_answer_scores_zero(wheat):
    assert score_accuracy("", wheat) == (0.0, False)


def test_partial_coverage_two_of_three(wheat):
    text = "Check the Hydraulic-fluid levels and inspect HOSES."
    cov, ok = score_accuracy(text, wheat)
    assert cov == pytest.approx(2 / 3, abs=1e-12)
    assert ok


def test_threshold_boundary():
    s = scenario(["a", "b", "c", "d", "e"])
    assert score_accuracy("a b c", s, AccuracyConfig(0.6)) == (0.6, True)
    assert score_accuracy("a b", s, AccuracyConfig(0.6)) == (0.4, False)


def test_keyword_matching_is_substring_on_canonical_text():
    assert keyword_coverage("Re-check the PUMP pressure!", ["pump pressure", "check"]) == 1.0
    assert keyword_coverage("pumppressure", ["pump pressure"]) == 0.0


def test_accuracy_config_rejects_bad_threshold():
    for bad in (0.0, -0.1, 1.5):
        with pytest.raises(ValueError):
            AccuracyConfig(bad)


words = st.sampled_from(["pump", "hose", "fluid", "filter", "belt", "soil", "rain", "oil"])


def brute_coverage(answer: str, keywords: list[str]) -> float:
    # explicit character-window scan; inputs here are already lowercase and unpunctuated
    hits = 0
    for k in keywords:
        hits += any(answer[i:i + len(k)] == k for i in range(len(answer) - len(k) + 1))
    return hits / len(keywords)


@given(st.lists(words, max_size=12), st.lists(words, min_size=1, max_size=5))
def test_coverage_matches_brute_force(answer_words, keywords):
    answer = " ".join(answer_words)
    assert keyword_coverage(answer, keywords) == pytest.approx(brute_coverage(answer, keywords), abs=1e-12)


@given(st.text(max_size=60), st.lists(st.text(min_size=1, max_size=8), min_size=1, max_size=5))
def test_coverage_in_unit_interval(answer, keywords):
    assert 0.0 <= keyword_coverage(answer, keywords) <= 1.0


# judge parsing


def test_parse_clean_output():
    s = parse_judge_output(FIVES)
    assert (s.relevance, s.coherence, s.applicability, s.overall) == (5, 5, 5, 5)
    assert s.raw_text == FIVES


def test_parse_prose_with_labels():
    text = ("The answer is on topic, so **Relevance**: 4. It flows well (Coherence = 4.5). "
            "Applicability: 3 given the tools at hand. Overall: 4.")
    s = parse_judge_output(text)
    assert (s.relevance, s.coherence, s.applicability, s.overall) == (4, 4.5, 3, 4)


def test_parse_last_duplicate_wins():
    s = parse_judge_output(FIVES + "\nOn reflection, Overall: 3")
    assert s.overall == 3


def test_parse_missing_label():
    with pytest.raises(JudgeFormatError) as info:
        parse_judge_output("Relevance: 5\nApplicability: 5\nOverall: 5")
    assert info.value.labels == ["Coherence"]


def test_parse_out_of_range_is_error():
    with pytest.raises(JudgeFormatError) as info:
        parse_judge_output("Relevance: 5\nCoherence: 5\nApplicability: 5\nOverall: 7")
    assert info.value.labels == ["Overall=7"]


def test_parse_respects_custom_scale():
    s = parse_judge_output("Relevance: 9\nCoherence: 10\nApplicability: 1\nOverall: 7", 1, 10)
    assert s.overall == 7


def test_judge_retries_once_then_fails(wheat):
    bad = "Relevance: 5\nCoherence: 5\nApplicability: 5\nOverall: 7"
    b = RecordingBackend(ScriptedBackend([bad, bad]))
    with pytest.raises(JudgeFormatError):
        judge_score(answer_transcript("x"), wheat, JudgeConfig(b))
    assert len(b.snapshot) == 2


def test_judge_reask_recovers(wheat):
    b = ScriptedBackend(["I liked it.", FIVES])
    s = judge_score(answer_transcript("x"), wheat, JudgeConfig(b))
    assert s.overall == 5


def test_judge_prompt_contains_reference_and_response(wheat):
    seen = []
    b = ScriptedBackend([FIVES])
    inner = b.complete
    b.complete = lambda req: seen.append(req) or inner(req)
    judge_score(answer_transcript("the final answer"), wheat, JudgeConfig(b))
    prompt = seen[0].last_user_content
    assert "the final answer" in prompt and wheat.reference_answer in prompt and wheat.question in prompt


def test_judge_config_records_identity():
    cfg = JudgeConfig(ScriptedBackend([], model_name="judge-x"))
    d = cfg.to_dict()
    assert d["sees_reference"] is True and d["scale"] == [1.0, 5.0]
    assert d["rubric_digest"]


# evaluate_transcript


def test_evaluate_without_judge_has_no_judge_field(wheat):
    r, err = evaluate_transcript(answer_transcript(FOLLOWUP_OUTPUT, sid=wheat.id), wheat, AccuracyConfig())
    assert r.judge is None and err is None and r.correct and r.coverage == 1.0
    assert r.category == "MachineryDiagnostics"


def test_evaluate_keeps_record_when_judge_fails(wheat):
    judge = JudgeConfig(ScriptedBackend(["nothing", "still nothing"]))
    r, err = evaluate_transcript(answer_transcript(FOLLOWUP_OUTPUT), wheat, AccuracyConfig(), judge)
    assert r.judge is None and r.correct
    assert err and "JudgeFormatError" in err


@pytest.mark.parametrize("overall, expected", [(4.0, True), (3.9, False), (5, True)])
def test_judge_binary_mode(wheat, overall, expected):
    reply = f"Relevance: 3\nCoherence: 3\nApplicability: 3\nOverall: {overall}"
    judge = JudgeConfig(ScriptedBackend([reply]))
    r, err = evaluate_transcript(answer_transcript("unrelated"), wheat, AccuracyConfig(mode=AccuracyMode.JUDGE), judge)
    assert err is None and r.correct is expected


def test_judge_binary_without_judge_is_incorrect(wheat):
    r, err = evaluate_transcript(answer_transcript(FOLLOWUP_OUTPUT), wheat, AccuracyConfig(mode="judge"))
    assert not r.correct and err


# aggregation


def test_aggregate_simple_fraction():
    (row,) = aggregate([rec(True), rec(True), rec(False)])
    assert row.n == 3 and row.accuracy == pytest.approx(2 / 3, abs=1e-12)
    assert row.judge_mean is None


def test_aggregate_single_record():
    (row,) = aggregate([rec(False, overall=3.5)])
    assert (row.n, row.accuracy, row.judge_mean) == (1, 0.0, 3.5)


def test_aggregate_large_cell():
    rs = [rec(i < 181, sid=f"s{i}") for i in range(200)]
    (row,) = aggregate(rs)
    assert row.accuracy == pytest.approx(0.905, abs=1e-12)


def test_aggregate_empty():
    with pytest.raises(EmptyInput):
        aggregate([])


def test_aggregate_judge_mean_ignores_missing():
    (row,) = aggregate([rec(True, overall=4), rec(True, overall=5), rec(False)])
    assert row.judge_mean == 4.5 and row.n == 3


def test_aggregate_ordering_and_categories():
    rs = [rec(True, model="b", method=Method.MULTIROUND), rec(True, model="b", method=Method.BASE),
          rec(True, model="a", method=Method.THOT, cat="MaintenanceScheduling"),
          rec(False, model="a", method=Method.THOT, cat="MachineryDiagnostics", sid="t")]
    assert [(r.model_id, r.method) for r in aggregate(rs)] == [
        ("a", Method.THOT), ("b", Method.BASE), ("b", Method.MULTIROUND)]
    by_cat = aggregate(rs, "category")
    assert [(r.category, r.model_id) for r in by_cat] == [
        ("MachineryDiagnostics", "a"), ("MaintenanceScheduling", "a"), ("Other", "b"), ("Other", "b")]
    assert sum(r.n for r in by_cat) == len(rs)


record_sets = st.lists(
    st.builds(
        rec,
        st.booleans(),
        st.sampled_from(["m1", "m2", "m3"]),
        st.sampled_from(list(Method)),
        st.none() | st.floats(1, 5, allow_nan=False),
    ),
    min_size=1,
    max_size=40,
)


@given(record_sets, st.randoms())
def test_aggregate_invariant_under_shuffle(rs, rnd):
    shuffled = list(rs)
    rnd.shuffle(shuffled)
    a, b = aggregate(rs), aggregate(shuffled)
    assert [(r.model_id, r.method, r.n, r.accuracy) for r in a] == [(r.model_id, r.method, r.n, r.accuracy) for r in b]
    for x, y in zip(a, b):
        assert (x.judge_mean is None) == (y.judge_mean is None)
        if x.judge_mean is not None:
            assert math.isclose(x.judge_mean, y.judge_mean, rel_tol=1e-12)


@given(record_sets)
def test_aggregate_counts_partition_input(rs):
    rows = aggregate(rs)
    assert sum(r.n for r in rows) == len(rs)
    assert all(0.0 <= r.accuracy <= 1.0 for r in rows)
    assert len({(r.model_id, r.method) for r in rows}) == len(rows)


def test_pairs_of_keywords_exhaustive():
    kws = ["pump", "hose", "fluid"]
    for n in range(len(kws) + 1):
        for present in combinations(kws, n):
            text = " and ".join(present) or "nothing relevant"
            assert keyword_coverage(text, kws) == pytest.approx(n / 3, abs=1e-12)


def test_random_corpus_matches_oracle():
    rnd = random.Random(7)
    vocab = ["pump", "hose", "fluid", "filter", "belt"]
    for _ in range(200):
        kws = rnd.sample(vocab, rnd.randint(1, 4))
        ans = " ".join(rnd.choices(vocab, k=rnd.randint(0, 6)))
        assert keyword_coverage(ans, kws) == pytest.approx(brute_coverage(ans, kws), abs=1e-12)
