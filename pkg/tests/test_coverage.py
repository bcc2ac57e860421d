import random
from fractions import Fraction

import pytest

from conftest import GOLDEN_RUN
from oracles import align_oracle
from logsynth.coverage import (audit_coverage, compute_prf, coverage_from_counts, match_template, read_observed,
                               render_coverage_table)

# (observed, source, expected), each checked by hand
ALIGN_TABLE = [
    ("Received block <*>", "Received block <*>", True),
    ("Received block blk_123", "Received block <*>", True),
    ("Deleting block <*>", "Received block <*>", False),
    ("Received block a b c", "Received block <*>", True),
    ("Received block", "Received block <*>", False),
    ("received block x", "Received block <*>", False),
    ("<*> served block <*> to <*>", "10.0.0.1 served block blk_1 to /10.0.0.2", True),
    ("Served block blk_1 to host", "Served block <*>", True),
    ("Served block blk_1 to host", "Served block <*> to", False),
    ("size=<*>", "size=1024", True),
    ("size=<*>", "len=1024", False),
    ("blk_77 added", "blk_<*> added", True),
    ("Got <*> from host1", "Got <*> from <*>", True),
    ("<*> <*>", "a", False),
    ("Exception in thread main", "Exception in thread <*>", True),
]


@pytest.mark.parametrize("observed,source,expected", ALIGN_TABLE)
def test_alignment_table(observed, source, expected):
    assert match_template(observed, source) is expected
    assert align_oracle(observed, source) is expected


def test_alignment_agrees_with_oracle_on_random_pairs():
    rng = random.Random(31)
    words = ["a", "b", "blk", "<*>", "x=<*>", "x=1"]
    for _ in range(2000):
        o = " ".join(rng.choice(words) for _ in range(rng.randint(1, 5)))
        s = " ".join(rng.choice(words) for _ in range(rng.randint(1, 5)))
        assert match_template(o, s) == align_oracle(o, s), (o, s)


def test_five_sources_two_matched():
    src = ["A <*>", "B <*>", "C", "D", "E <*> F"]
    rep = audit_coverage(src, ["A 1", "E x y F", "Z"])
    assert (rep.n_source, rep.n_observed_matched) == (5, 2)
    assert rep.coverage_pct == "40.00%"
    assert rep.unmatched_observed == ["Z"]


def test_empty_source_is_an_error():
    with pytest.raises(ValueError, match="no source templates"):
        audit_coverage([], ["a"])
    with pytest.raises(ValueError):
        coverage_from_counts(0, 0)


def test_coverage_is_monotone_in_observed():
    rng = random.Random(8)
    src = [f"event {i} <*>" for i in range(20)]
    pool = [f"event {i} v{i}" for i in range(25)]
    for _ in range(50):
        rng.shuffle(pool)
        prev = -1
        for k in range(len(pool) + 1):
            c = audit_coverage(src, pool[:k]).n_observed_matched
            assert c >= prev
            prev = c


def test_per_level_breakdown():
    rep = audit_coverage([("a <*>", "INFO"), ("b", "WARN"), ("c", "INFO")], ["a 1", "b"])
    assert rep.per_level == {"INFO": (1, 2), "WARN": (1, 1)}
    assert "INFO 1/2" in render_coverage_table([rep])


@pytest.mark.parametrize("matched,total,published", [(48, 4846, 0.99), (80, 998, 8.02), (2874, 2889, 99.48)])
def test_published_ratios(matched, total, published):
    assert abs(coverage_from_counts(matched, total) * 100 - published) <= 0.01


def test_golden_coverage_report_lists_both_rows():
    text = (GOLDEN_RUN / "coverage.txt").read_text()
    assert "12" in text and "34.29%" in text and "100.00%" in text


def test_read_observed_normalizes_whitespace(tmp_path):
    (tmp_path / "o.txt").write_text("# comment\nReceived   block <*>\n\n")
    assert read_observed(tmp_path / "o.txt") == ["Received block <*>"]


def test_prf_examples():
    p = compute_prf(1, 0, 0)
    assert (p.precision, p.recall, p.f1) == (1, 1, 1)
    p = compute_prf(1, 1, 0)
    assert p.precision == 0.5 and p.recall == 1 and p.f1 == pytest.approx(2 / 3, rel=1e-12)
    p = compute_prf(0, 0, 0)
    assert (p.precision, p.recall, p.f1) == (0, 0, 0)
    with pytest.raises(ValueError):
        compute_prf(-1, 0, 0)


def test_prf_fuzz_against_exact_arithmetic():
    rng = random.Random(1234)
    for _ in range(1000):
        tp, fp, fn = (rng.choice([0, rng.randint(0, 10), rng.randint(0, 10**6)]) for _ in range(3))
        m = compute_prf(tp, fp, fn)
        P = Fraction(tp, tp + fp) if tp + fp else Fraction(0)
        R = Fraction(tp, tp + fn) if tp + fn else Fraction(0)
        F = 2 * P * R / (P + R) if P + R else Fraction(0)
        for got, want in ((m.precision, P), (m.recall, R), (m.f1, F)):
            assert got == pytest.approx(float(want), rel=1e-12, abs=0 if want else 1e-300)
        if P and R:
            assert min(P, R) <= Fraction(m.f1) * (1 + Fraction(1, 10**12)) and \
                   Fraction(m.f1) <= max(P, R) * (1 + Fraction(1, 10**12))
