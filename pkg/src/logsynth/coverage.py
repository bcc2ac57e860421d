"""Template coverage auditing and precision/recall/F1."""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from functools import lru_cache

PLACEHOLDER = "<*>"


def _token_matcher(tok: str):
    """Regex for a token holding an embedded ``<*>`` (matches one or more non-space chars)."""
    parts = [re.escape(p) for p in tok.split(PLACEHOLDER)]
    return re.compile(r"\S+?".join(parts) + r"\Z") if len(parts) > 1 else None


def _tok_eq(a: str, b: str) -> bool:
    if a == b:
        return True
    if PLACEHOLDER in b and b != PLACEHOLDER:
        m = _token_matcher(b)
        if m.match(a):
            return True
    if PLACEHOLDER in a and a != PLACEHOLDER:
        m = _token_matcher(a)
        if m.match(b):
            return True
    return False


def match_template(observed: str, source: str) -> bool:
    """Token alignment where a standalone ``<*>`` on either side absorbs a run of >= 1 tokens.

    Tokens are whitespace separated; literal comparison is case-sensitive.
    """
    a = tuple(observed.split())
    b = tuple(source.split())

    @lru_cache(maxsize=None)
    def go(i: int, j: int) -> bool:
        if i == len(a) or j == len(b):
            return i == len(a) and j == len(b)
        # a standalone wildcard on one side eats b[j..k) or a[i..k) with k past the current token
        if a[i] == PLACEHOLDER and any(go(i + 1, k) for k in range(j + 1, len(b) + 1)):
            return True
        if b[j] == PLACEHOLDER and any(go(k, j + 1) for k in range(i + 1, len(a) + 1)):
            return True
        return _tok_eq(a[i], b[j]) and go(i + 1, j + 1)

    return go(0, 0)


@dataclass
class CoverageReport:
    n_source: int
    n_observed_matched: int
    unmatched_observed: list[str] = field(default_factory=list)
    per_level: dict[str, tuple[int, int]] = field(default_factory=dict)
    system: str = ""
    category: str = ""
    n_observed: int = 0

    @property
    def coverage(self) -> float:
        return self.n_observed_matched / self.n_source if self.n_source else 0.0

    @property
    def coverage_pct(self) -> str:
        return f"{self.coverage * 100:.2f}%"


def coverage_from_counts(n_observed_matched: int, n_source: int) -> float:
    if n_source <= 0:
        raise ValueError("no source templates")
    if not 0 <= n_observed_matched <= n_source:
        raise ValueError("matched count must lie in [0, n_source]")
    return n_observed_matched / n_source


def audit_coverage(source_templates, observed_templates: list[str], system: str = "",
                   category: str = "") -> CoverageReport:
    """``source_templates`` are patterns or ``(pattern, level)`` pairs; a source counts once if any observed pattern matches."""
    src = [(s, "") if isinstance(s, str) else (s[0], s[1]) for s in source_templates]
    if not src:
        raise ValueError("no source templates")
    observed = list(dict.fromkeys(observed_templates))
    covered = [False] * len(src)
    unmatched = []
    for o in observed:
        hit = False
        for k, (pat, _) in enumerate(src):
            if match_template(o, pat):
                covered[k] = True
                hit = True
        if not hit:
            unmatched.append(o)
    per_level: dict[str, list[int]] = {}
    for (pat, level), c in zip(src, covered):
        if level:
            tot = per_level.setdefault(level, [0, 0])
            tot[0] += int(c)
            tot[1] += 1
    return CoverageReport(len(src), sum(covered), unmatched, {k: (v[0], v[1]) for k, v in sorted(per_level.items())},
                          system, category, len(observed))


def render_coverage_table(reports: list[CoverageReport]) -> str:
    header = ("System", "Category", "# Source", "# Observed", "Coverage")
    rows = [(r.system or "-", r.category or "-", str(r.n_source), str(r.n_observed_matched), r.coverage_pct)
            for r in reports]
    widths = [max(len(h), *(len(row[i]) for row in rows)) if rows else len(h) for i, h in enumerate(header)]

    def fmt(row):
        return "  ".join(c.ljust(w) if i < 2 else c.rjust(w) for i, (c, w) in enumerate(zip(row, widths))).rstrip()

    lines = [fmt(header), "  ".join("-" * w for w in widths)]
    lines.extend(fmt(r) for r in rows)
    for r in reports:
        if r.per_level:
            lines.append("")
            lines.append(f"{r.system or '-'} per level: " +
                         ", ".join(f"{lvl} {c}/{t}" for lvl, (c, t) in r.per_level.items()))
        if r.unmatched_observed:
            lines.append(f"{r.system or '-'} unmatched observed ({len(r.unmatched_observed)}):")
            lines.extend(f"  {u}" for u in r.unmatched_observed)
    return "\n".join(lines) + "\n"


def read_observed(path) -> list[str]:
    with open(path, encoding="utf-8") as fh:
        return [" ".join(line.split()) for line in fh if line.strip() and not line.startswith("#")]


@dataclass(frozen=True)
class PrfMetrics:
    tp: int
    fp: int
    fn: int
    precision: float
    recall: float
    f1: float


def compute_prf(tp: int, fp: int, fn: int) -> PrfMetrics:
    if min(tp, fp, fn) < 0:
        raise ValueError("counts must be >= 0")
    p = tp / (tp + fp) if tp + fp else 0.0
    r = tp / (tp + fn) if tp + fn else 0.0
    f1 = 2 * p * r / (p + r) if p + r else 0.0
    return PrfMetrics(tp, fp, fn, p, r, f1)
