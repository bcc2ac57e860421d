"""Session files, ratio-controlled augmentation, and train/test leakage checks."""

from __future__ import annotations

import json
import logging
import math
import random
from dataclasses import dataclass, field
from fractions import Fraction

from .labeler import ANOMALOUS, NORMAL, Session

log = logging.getLogger(__name__)


class SessionFormatError(ValueError):
    def __init__(self, path, line_no: int, message: str):
        super().__init__(f"{path}:{line_no}: {message}")
        self.line_no = line_no


class PoolDeficit(ValueError):
    pass


_REQUIRED = ("session_id", "label", "provenance", "context", "events")


def write_sessions(sessions, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for s in sessions:
            fh.write(json.dumps(s.to_dict(), ensure_ascii=False, sort_keys=False) + "\n")


def read_sessions(path) -> list[Session]:
    out = []
    with open(path, encoding="utf-8") as fh:
        for n, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                d = json.loads(line)
            except json.JSONDecodeError as exc:
                raise SessionFormatError(path, n, f"not valid JSON ({exc.msg})") from None
            if not isinstance(d, dict):
                raise SessionFormatError(path, n, "record is not an object")
            missing = [k for k in _REQUIRED if k not in d]
            if missing:
                raise SessionFormatError(path, n, f"missing fields {missing}")
            if d["label"] not in (NORMAL, ANOMALOUS):
                raise SessionFormatError(path, n, f"bad label {d['label']!r}")
            try:
                out.append(Session.from_dict(d))
            except (KeyError, TypeError, ValueError) as exc:
                raise SessionFormatError(path, n, f"bad event record ({exc})") from None
    return out


def round_half_up(x) -> int:
    """Nearest integer with ties away from zero, exact for non-negative rationals."""
    return math.floor(Fraction(x) + Fraction(1, 2))


def target_count(ratio, n_real: int) -> int:
    """round-half-up(R * n_real), computed exactly."""
    r = Fraction(ratio)
    if r < 0:
        raise ValueError("ratio must be >= 0")
    return round_half_up(r * n_real)


@dataclass
class AugPlan:
    ratio: Fraction
    n_real: int
    n_syn_target: int
    picks: list[str]
    balance_report: tuple[int, int]
    pool_limited: bool = False
    seed: int = 0

    def render(self) -> str:
        lines = [f"ratio: {self.ratio}",
                 f"n_real: {self.n_real}",
                 f"n_syn_target: {self.n_syn_target}",
                 f"normal_picked: {self.balance_report[0]}",
                 f"anomalous_picked: {self.balance_report[1]}",
                 f"pool_limited: {str(self.pool_limited).lower()}",
                 f"seed: {self.seed}",
                 "picks:"]
        lines.extend(f"  {p}" for p in self.picks)
        return "\n".join(lines) + "\n"


def plan_augmentation(n_real: int, pool: list[Session], ratio, seed: int) -> AugPlan:
    """Pick round-half-up(R * n_real) synthetic sessions, half normal (rounded up), half anomalous."""
    ratio = Fraction(ratio)
    n = target_count(ratio, n_real)
    normals = sorted((s for s in pool if s.label == NORMAL), key=lambda s: s.session_id)
    anomalies = sorted((s for s in pool if s.label == ANOMALOUS), key=lambda s: s.session_id)
    if n > len(normals) + len(anomalies):
        raise PoolDeficit(f"need {n} synthetic sessions but the pool has {len(normals) + len(anomalies)} "
                          f"(deficit {n - len(normals) - len(anomalies)})")
    want_n, want_a = (n + 1) // 2, n // 2
    limited = False
    if want_n > len(normals):
        want_a += want_n - len(normals)
        want_n = len(normals)
        limited = True
    if want_a > len(anomalies):
        want_n += want_a - len(anomalies)
        want_a = len(anomalies)
        limited = True
    rng = random.Random(seed)
    picked_n = rng.sample(normals, want_n)
    picked_a = rng.sample(anomalies, want_a)
    picks = [s.session_id for s in picked_n + picked_a]
    if limited:
        log.warning("synthetic pool limits class balance: %d normal, %d anomalous", want_n, want_a)
    return AugPlan(ratio, n_real, n, picks, (want_n, want_a), limited, seed)


@dataclass
class DatasetSplit:
    train: list[Session]
    test: list[Session]


def apply_augmentation(split: DatasetSplit, pool: list[Session], plan: AugPlan) -> DatasetSplit:
    by_id = {s.session_id: s for s in pool}
    missing = [p for p in plan.picks if p not in by_id]
    if missing:
        raise KeyError(f"plan picks missing from pool: {missing}")
    return DatasetSplit(list(split.train) + [by_id[p] for p in plan.picks], split.test)


@dataclass
class GuardReport:
    synthetic_in_test: list[str] = field(default_factory=list)
    duplicate_in_test: list[str] = field(default_factory=list)
    train_test_overlap: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not (self.synthetic_in_test or self.duplicate_in_test or self.train_test_overlap)

    @property
    def offending_ids(self) -> list[str]:
        return sorted(set(self.synthetic_in_test) | set(self.duplicate_in_test) | set(self.train_test_overlap))

    def render(self) -> str:
        lines = [f"status: {'pass' if self.ok else 'FAIL'}"]
        for name in ("synthetic_in_test", "duplicate_in_test", "train_test_overlap"):
            ids = getattr(self, name)
            lines.append(f"{name}: {len(ids)}")
            lines.extend(f"  {i}" for i in ids)
        return "\n".join(lines) + "\n"


def split_guard(split: DatasetSplit) -> GuardReport:
    report = GuardReport()
    seen: set[str] = set()
    for s in split.test:
        if s.provenance != "real":
            report.synthetic_in_test.append(s.session_id)
        if s.session_id in seen and s.session_id not in report.duplicate_in_test:
            report.duplicate_in_test.append(s.session_id)
        seen.add(s.session_id)
    train_ids = {s.session_id for s in split.train}
    report.train_test_overlap = sorted(seen & train_ids)
    return report
