import json
from dataclasses import replace

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import FIXTURES
from logsynth.assembler import CandidateSequence
from logsynth.config import LabelingConfig
from logsynth.labeler import (ANOMALOUS, NORMAL, RULE_KINDS, Event, LabelRuleSet, ParameterizedSequence,
                              SessionFactory, label_sequence, sample_for_review)

GOLDEN = FIXTURES / "labels" / "golden_labels.jsonl"


def _golden():
    with open(GOLDEN, encoding="utf-8") as fh:
        return [json.loads(line) for line in fh if line.strip()]


def _events(rec):
    return [Event(i + 1, lvl, msg) for i, (lvl, msg) in enumerate(rec["events"])]


def test_golden_fixture_shape():
    recs = _golden()
    assert len(recs) == 60
    assert len({r["id"] for r in recs}) == 60
    kinds = {k for r in recs for k, _ in r["evidence"]}
    assert kinds == set(RULE_KINDS)
    blind = {r["category"] for r in recs if r["category"].startswith("blind-spot")}
    assert blind == {"blind-spot:vague-identifier", "blind-spot:state-transition", "blind-spot:recovery-action"}


@pytest.mark.parametrize("rec", _golden(), ids=lambda r: r["id"])
def test_golden_labels(rec):
    label, evidence = label_sequence(_events(rec), LabelRuleSet())
    assert label == rec["label"]
    assert evidence == [tuple(e) for e in rec["evidence"]]


def test_blind_spots_disagree_with_ground_truth():
    # the rules get these wrong on purpose; they document known limits, not bugs
    rules = LabelRuleSet()
    for rec in _golden():
        if "truth" in rec:
            assert label_sequence(_events(rec), rules)[0] != rec["truth"]


def test_agreement_is_total():
    rules = LabelRuleSet()
    recs = _golden()
    agree = sum(label_sequence(_events(r), rules)[0] == r["label"] for r in recs)
    assert agree == len(recs)


def test_evidence_rechecks():
    rules = LabelRuleSet()
    for rec in _golden():
        events = _events(rec)
        label, evidence = label_sequence(events, rules)
        assert (label == ANOMALOUS) == bool(evidence)
        for kind, idx in evidence:
            assert rules.match(kind, events[idx])


def test_spec_examples():
    rules = LabelRuleSet()
    assert label_sequence([Event(1, "INFO", "ok"), Event(2, "FATAL", "x")], rules) == (ANOMALOUS, [("severity", 1)])
    assert label_sequence([Event(1, "INFO", "all good")], rules) == (NORMAL, [])
    assert label_sequence([Event(1, "INFO", "connection refused by peer")], rules) == (ANOMALOUS, [("keyword", 0)])


_text = st.text(alphabet="abcdefghij xyz", min_size=0, max_size=30)


@settings(max_examples=200, deadline=None)
@given(messages=st.lists(_text, min_size=1, max_size=5),
       levels=st.lists(st.sampled_from(["INFO", "WARN", "ERROR", "DEBUG"]), min_size=5, max_size=5),
       extra=st.text(alphabet="abcdefghij ", min_size=1, max_size=6))
def test_adding_a_keyword_never_clears_an_anomaly(messages, levels, extra):
    events = [Event(i, levels[i], m) for i, m in enumerate(messages)]
    base = LabelingConfig()
    before, ev_before = label_sequence(events, LabelRuleSet(base))
    after, ev_after = label_sequence(events, LabelRuleSet(replace(base, keywords=base.keywords + (extra,))))
    if before == ANOMALOUS:
        assert after == ANOMALOUS
        assert set(ev_before) <= set(ev_after)


def _pseq(entry, tids):
    seq = CandidateSequence("S-1", entry, tuple((t, entry) for t in tids), (), (), ())
    return ParameterizedSequence(seq, tuple(Event(t, "INFO", f"m{t}") for t in tids), (), "mock")


def test_session_ids_are_deterministic_and_deduplicated():
    f = SessionFactory(42)
    a = f.make_session(_pseq("e", [1, 2]), NORMAL, [])
    b = f.make_session(_pseq("e", [1, 2]), NORMAL, [])
    c = f.make_session(_pseq("e", [1, 3]), NORMAL, [])
    assert b.session_id == a.session_id + "-1"
    assert f.duplicates == [a.session_id]
    assert c.session_id != a.session_id
    assert SessionFactory(42).make_session(_pseq("e", [1, 2]), NORMAL, []).session_id == a.session_id
    assert SessionFactory(7).make_session(_pseq("e", [1, 2]), NORMAL, []).session_id != a.session_id
    assert a.provenance == "synthetic" and a.context == "entry=e"


def _sessions(n):
    f = SessionFactory(1)
    return [f.make_session(_pseq("e", [i]), NORMAL, []) for i in range(n)]


def test_review_sample_is_seeded():
    pool = _sessions(20)
    a, text_a = sample_for_review(pool, 5, seed=3)
    b, text_b = sample_for_review(pool, 5, seed=3)
    assert [s.session_id for s in a] == [s.session_id for s in b] and text_a == text_b
    assert len({s.session_id for s in a}) == 5
    assert "95.74%" in text_a and "141" in text_a


def test_review_sample_edges():
    pool = _sessions(3)
    assert sample_for_review(pool, 0, 1)[0] == []
    assert len(sample_for_review(pool, 10, 1)[0]) == 3
