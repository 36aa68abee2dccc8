from __future__ import annotations

import dataclasses

import pytest
from hypothesis import given
from hypothesis import strategies as st

from furrow.domain import (
    ChatMessage,
    EvaluationRecord,
    JudgeScore,
    Method,
    ModelCall,
    Role,
    Scenario,
    Transcript,
    canonicalize_text,
    roles_alternate,
    validate_scenario,
)


@pytest.mark.parametrize(
    "raw, expected",
    [
        ("Hydraulic  Pump-Pressure!", "hydraulic pump pressure"),
        ("", ""),
        ("checking the hydraulic fluid levels,", "checking the hydraulic fluid levels"),
        ("John Deere 5075E / PTO", "john deere 5075e pto"),
        ("  \tCafé \n", "café"),
    ],
)
def test_canonicalize_examples(raw, expected):
    assert canonicalize_text(raw) == expected


@given(st.text())
def test_canonicalize_idempotent(text):
    once = canonicalize_text(text)
    assert canonicalize_text(once) == once


@given(st.text())
def test_canonicalize_has_no_edge_or_double_spaces(text):
    out = canonicalize_text(text)
    assert out == out.strip()
    assert "  " not in out


def test_validate_worked_example_scenario(wheat):
    assert validate_scenario(wheat) == []


def test_validate_empty_keywords(wheat):
    assert validate_scenario(dataclasses.replace(wheat, answer_keywords=())) == ["answer_keywords empty"]


def test_validate_whitespace_keyword(wheat):
    s = dataclasses.replace(wheat, answer_keywords=("  ",))
    assert validate_scenario(s) == ["keyword empty after canonicalization"]


def test_validate_punctuation_only_keyword(wheat):
    s = dataclasses.replace(wheat, answer_keywords=("hoses", "--!"))
    assert validate_scenario(s) == ["keyword empty after canonicalization"]


def test_validate_empty_id_and_category(wheat):
    s = dataclasses.replace(wheat, id=" ", category="")
    assert validate_scenario(s) == ["id empty", "category empty"]


def test_validate_does_not_mutate(wheat):
    before = wheat.to_dict()
    validate_scenario(wheat)
    assert wheat.to_dict() == before


def test_keywords_deduplicated_in_order():
    s = Scenario("x", "Other", (), "q", "r", ("b", "a", "b"))
    assert s.answer_keywords == ("b", "a")


def test_chat_message_rejects_empty():
    with pytest.raises(ValueError):
        ChatMessage(Role.USER, "")


def test_roles_alternate():
    sys_, u, a = ChatMessage("system", "s"), ChatMessage("user", "u"), ChatMessage("assistant", "a")
    assert roles_alternate([sys_, u])
    assert roles_alternate([sys_, u, a, u])
    assert roles_alternate([u])
    assert not roles_alternate([sys_, u, a])
    assert not roles_alternate([u, u])
    assert not roles_alternate([sys_])


def test_transcript_needs_calls():
    with pytest.raises(ValueError):
        Transcript("s", "m", Method.BASE, ())


def test_transcript_rejects_inconsistent_final_answer():
    call = ModelCall((ChatMessage("user", "q"),), ChatMessage("assistant", "a"))
    data = Transcript("s", "m", Method.BASE, (call,)).to_dict()
    data["final_answer"] = "something else"
    with pytest.raises(ValueError):
        Transcript.from_dict(data)


# round trips

text = st.text(min_size=1, max_size=30)
messages = st.builds(ChatMessage, st.sampled_from(list(Role)), text)
calls = st.builds(
    ModelCall,
    st.lists(messages, min_size=1, max_size=4).map(tuple),
    st.builds(ChatMessage, st.just(Role.ASSISTANT), text),
    st.floats(0, 1e5, allow_nan=False),
    st.integers(0, 10_000),
    st.integers(0, 10_000),
    st.booleans(),
)
scores = st.builds(
    JudgeScore, *(st.floats(1, 5, allow_nan=False) for _ in range(4)), st.text(max_size=40)
)


@given(
    st.builds(
        Scenario,
        text,
        st.sampled_from(["MachineryDiagnostics", "MaintenanceScheduling", "EnvironmentalAdjustment", "Orchard"]),
        st.lists(st.tuples(text, st.text(max_size=20)), max_size=4).map(tuple),
        text,
        st.text(max_size=40),
        st.lists(text, min_size=1, max_size=4).map(tuple),
        st.text(max_size=20),
    )
)
def test_scenario_round_trip(s):
    assert Scenario.from_dict(s.to_dict()) == s


@given(st.builds(Transcript, text, text, st.sampled_from(list(Method)), st.lists(calls, min_size=1, max_size=3)))
def test_transcript_round_trip(t):
    assert Transcript.from_dict(t.to_dict()) == t


@given(
    st.builds(
        EvaluationRecord,
        text,
        text,
        st.sampled_from(list(Method)),
        st.booleans(),
        st.floats(0, 1, allow_nan=False),
        st.none() | scores,
        st.text(max_size=20),
        st.text(max_size=20),
    )
)
def test_record_round_trip(r):
    assert EvaluationRecord.from_dict(r.to_dict()) == r


def test_method_parse():
    assert Method.parse("MultiRound") is Method.MULTIROUND
    assert Method.parse("multi-round") is Method.MULTIROUND
    assert Method.parse("CoT") is Method.COT
    with pytest.raises(ValueError):
        Method.parse("tot")
