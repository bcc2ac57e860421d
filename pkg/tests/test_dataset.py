import hashlib
import random
from fractions import Fraction

import pytest

from conftest import GOLDEN_RUN as GOLDEN
from logsynth.dataset import (DatasetSplit, PoolDeficit, SessionFormatError, apply_augmentation, plan_augmentation,
                              read_sessions, split_guard, target_count, write_sessions)
from logsynth.labeler import ANOMALOUS, NORMAL, Event, Session


def _session(sid, label=NORMAL, provenance="synthetic"):
    return Session(sid, label, provenance, "entry=x", [Event(1, "INFO", f"msg {sid}")], [])


def _pool(n_normal, n_anom, prefix="s"):
    return ([_session(f"{prefix}n{i:03d}", NORMAL) for i in range(n_normal)] +
            [_session(f"{prefix}a{i:03d}", ANOMALOUS) for i in range(n_anom)])


def _half_up_oracle(ratio: Fraction, n: int) -> int:
    # floor(x + 1/2) with x = p/q, in pure integers
    p, q = ratio.numerator * n, ratio.denominator
    return (2 * p + q) // (2 * q)


def test_worked_examples():
    plan = plan_augmentation(1000, _pool(20, 20), Fraction(1, 100), seed=1)
    assert len(plan.picks) == 10 and plan.balance_report == (5, 5)
    assert plan_augmentation(1000, _pool(3, 3), 0, seed=1).picks == []
    # the formula gives 46, not the 460 quoted alongside it in the source material
    assert target_count(Fraction(1, 1000), 46_000) == 46


def test_half_up_on_ties():
    assert target_count(Fraction(1, 2), 1) == 1
    assert target_count(Fraction(1, 2), 3) == 2
    assert target_count(Fraction(1, 4), 2) == 1
    assert target_count("0.25", 6) == 2  # 1.5 rounds up
    with pytest.raises(ValueError):
        target_count(-1, 10)


def test_ratio_exactness_and_balance_randomized():
    rng = random.Random(77)
    pool = _pool(120, 120)
    for _ in range(300):
        ratio = Fraction(rng.randint(0, 400), rng.choice([100, 1000, 7, 3]))
        n_real = rng.randint(0, 500)
        want = _half_up_oracle(ratio, n_real)
        if want > len(pool):
            with pytest.raises(PoolDeficit):
                plan_augmentation(n_real, pool, ratio, seed=rng.randint(0, 99))
            continue
        plan = plan_augmentation(n_real, pool, ratio, seed=rng.randint(0, 99))
        assert plan.n_syn_target == want == len(plan.picks)
        assert len(set(plan.picks)) == len(plan.picks)
        n, a = plan.balance_report
        if want <= 240 and not plan.pool_limited:
            assert abs(n - a) <= 1
        labels = [s.label for s in pool if s.session_id in set(plan.picks)]
        assert (labels.count(NORMAL), labels.count(ANOMALOUS)) == (n, a)


def test_pool_limited_fills_from_other_class():
    plan = plan_augmentation(100, _pool(2, 20), Fraction(1, 10), seed=3)
    assert plan.balance_report == (2, 8) and plan.pool_limited
    assert "pool_limited: true" in plan.render()


def test_deficit_names_the_shortfall():
    with pytest.raises(PoolDeficit, match="deficit 4"):
        plan_augmentation(100, _pool(3, 3), Fraction(1, 10), seed=3)


def test_plan_is_seeded():
    pool = _pool(30, 30)
    a = plan_augmentation(200, pool, Fraction(1, 10), seed=5)
    assert a == plan_augmentation(200, list(reversed(pool)), Fraction(1, 10), seed=5)
    assert a.picks != plan_augmentation(200, pool, Fraction(1, 10), seed=6).picks


def _file_hash(sessions, tmp_path, name):
    write_sessions(sessions, tmp_path / name)
    return hashlib.sha256((tmp_path / name).read_bytes()).hexdigest()


def test_apply_appends_to_train_only(tmp_path):
    train = [_session(f"r{i}", provenance="real") for i in range(100)]
    test = [_session(f"t{i}", provenance="real") for i in range(20)]
    pool = _pool(10, 10)
    plan = plan_augmentation(100, pool, Fraction(1, 10), seed=9)
    before = _file_hash(test, tmp_path, "before.jsonl")
    out = apply_augmentation(DatasetSplit(train, test), pool, plan)
    assert len(out.train) == 110
    assert [s.session_id for s in out.train[100:]] == plan.picks
    assert _file_hash(out.test, tmp_path, "after.jsonl") == before
    again = apply_augmentation(DatasetSplit(train, test), pool, plan)
    assert _file_hash(out.train, tmp_path, "a.jsonl") == _file_hash(again.train, tmp_path, "b.jsonl")
    assert split_guard(out).ok


def test_apply_rejects_unknown_pick():
    pool = _pool(2, 2)
    plan = plan_augmentation(10, pool, Fraction(2, 5), seed=1)
    with pytest.raises(KeyError):
        apply_augmentation(DatasetSplit([], []), pool[:1], plan)


def test_guard_examples():
    train = [_session("r1", provenance="real")]
    test = [_session("t1", provenance="real")]
    assert split_guard(DatasetSplit(train, test)).ok
    bad = split_guard(DatasetSplit(train, test + [_session("syn1")]))
    assert not bad.ok and bad.offending_ids == ["syn1"]
    overlap = split_guard(DatasetSplit(train, test + [_session("r1", provenance="real")]))
    assert overlap.train_test_overlap == ["r1"]
    dup = split_guard(DatasetSplit(train, test + [_session("t1", provenance="real")]))
    assert dup.duplicate_in_test == ["t1"] and "status: FAIL" in dup.render()


def test_guard_detects_every_mutation():
    rng = random.Random(2024)
    detected = 0
    for k in range(100):
        train = [_session(f"r{i}", provenance="real") for i in range(30)] + _pool(5, 5, prefix=f"k{k}")
        test = [_session(f"t{i}", provenance="real") for i in range(15)]
        assert split_guard(DatasetSplit(train, test)).ok
        kind = rng.choice(["synthetic", "overlap", "duplicate"])
        if kind == "synthetic":
            leaked = rng.choice(train[30:])
        elif kind == "overlap":
            leaked = rng.choice(train[:30])
        else:
            leaked = rng.choice(test)
        mutated = list(test)
        mutated.insert(rng.randint(0, len(mutated)), leaked)
        report = split_guard(DatasetSplit(train, mutated))
        if not report.ok and leaked.session_id in report.offending_ids:
            detected += 1
    assert detected == 100


def test_round_trip(tmp_path):
    src = GOLDEN / "sessions.jsonl"
    sessions = read_sessions(src)
    assert sessions
    write_sessions(sessions, tmp_path / "s.jsonl")
    assert (tmp_path / "s.jsonl").read_bytes() == src.read_bytes()
    assert read_sessions(tmp_path / "s.jsonl") == sessions


def test_empty_file(tmp_path):
    (tmp_path / "e.jsonl").write_text("")
    assert read_sessions(tmp_path / "e.jsonl") == []


def test_truncated_line_reports_its_number(tmp_path):
    good = (GOLDEN / "sessions.jsonl").read_text().splitlines()
    (tmp_path / "t.jsonl").write_text("\n".join(good[:2] + [good[2][: len(good[2]) // 2]]) + "\n")
    with pytest.raises(SessionFormatError) as err:
        read_sessions(tmp_path / "t.jsonl")
    assert err.value.line_no == 3


@pytest.mark.parametrize("line,msg", [
    ('{"session_id": "x"}', "missing fields"),
    ('{"session_id": "x", "label": "weird", "provenance": "real", "context": "", "events": []}', "bad label"),
    ("[1, 2]", "not an object"),
])
def test_schema_errors(tmp_path, line, msg):
    (tmp_path / "b.jsonl").write_text(line + "\n")
    with pytest.raises(SessionFormatError, match=msg):
        read_sessions(tmp_path / "b.jsonl")
