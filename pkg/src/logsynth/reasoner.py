"""Merge verification and parameter instantiation, live or mocked.

The live client speaks a chat-completions style HTTP API. The mock applies
two literal-contradiction rules and a seeded value generator, so a mock
pipeline is a pure function of its inputs and seed.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import random
import re
import string
import threading
import time
from dataclasses import dataclass, field
from typing import Iterable

from .config import ConfigError, ReasonerConfig
from .frontend import MethodDecl, LogTemplate
from .lcfg import LocalPath, Step

log = logging.getLogger(__name__)

PLACEHOLDER = "<*>"
SYSTEM_PROMPT = ("You are a program analysis assistant. You judge whether an execution path of a "
                 "called method is logically consistent with the state of its caller at the call site.")
SECTION_DELIMS = ("=== CALLER METHOD ===", "=== CANDIDATE CALLEE PATH ===", "=== STATIC HINTS ===")
TASK_DELIM = "=== TASK ==="
REFERENCE_CALLS_PER_ENTRY = 30
REFERENCE_SECONDS_PER_ENTRY = 373


class MalformedOutput(ValueError):
    """Reply contains no usable verdict object."""


class ReasonerFailure(RuntimeError):
    """Retries exhausted; the caller must abandon the affected branch."""


@dataclass(frozen=True)
class Verdict:
    valid: bool
    rationale: str
    source: str  # "live" | "mock"
    attempts: int = 1
    token_estimate: int = 0

    def __post_init__(self):
        if self.attempts < 1:
            raise ValueError("attempts must be >= 1")
        if not self.valid and not self.rationale.strip():
            raise ValueError("a rejecting verdict needs a rationale")


@dataclass(frozen=True)
class PromptDoc:
    sections: tuple[str, str, str]
    rendered: str

    @property
    def key(self) -> str:
        return hashlib.sha256(self.rendered.encode()).hexdigest()


@dataclass(frozen=True)
class MergeRequest:
    """A prompt plus the structured facts it was rendered from (the mock reads these)."""

    prompt: PromptDoc
    bindings: tuple[tuple[str, str], ...]
    callee_conditions: tuple[tuple[str, object], ...]


def _estimate_tokens(*texts: str) -> int:
    return sum(len(t) for t in texts) // 4


def static_hints(caller: MethodDecl, callee: MethodDecl | None, call: Step) -> list[str]:
    hints = []
    if callee is not None:
        for (pname, ptype), arg in zip(callee.params, call.args):
            hints.append(f"parameter `{pname}` has type {ptype}; bound to argument `{arg}`")
            if arg == "null":
                hints.append(f"argument for `{pname}` is the literal null")
            elif arg in ("true", "false"):
                hints.append(f"argument for `{pname}` is the literal {arg}")
        if callee.return_type:
            hints.append(f"callee returns {callee.return_type}")
    for pname, ptype in caller.params:
        hints.append(f"caller parameter `{pname}` has type {ptype}")
    return hints


def build_verification_prompt(caller: MethodDecl, context: dict, callee_path: LocalPath,
                              hints: Iterable[str]) -> PromptDoc:
    """Render the three-section verification prompt.

    ``context`` carries ``call`` (the call Step) and ``conditions`` (path
    conditions that hold at the call, outermost frame first).
    """
    call: Step = context["call"]
    conds = context.get("conditions", ())
    caller_part = [caller.source_text.rstrip(), "",
                   f"Call site {call.site}: {call.callee}({', '.join(call.args)})"]
    if conds:
        caller_part.append("Conditions holding at the call site:")
        caller_part.extend(f"  - ({c}) is {outcome}" for c, outcome in conds)
    else:
        caller_part.append("Conditions holding at the call site: none")

    callee_part = [f"Method: {callee_path.method_id}", "Path:"]
    rendered_path = callee_path.render()
    callee_part.append("  " + (rendered_path or "(straight-line, no logs or calls)"))
    if callee_path.path_conditions:
        callee_part.append("Branch outcomes required by this path:")
        callee_part.extend(f"  - ({c}) is {outcome}" for c, outcome in callee_path.path_conditions)

    hint_lines = [f"- {h}" for h in hints] or ["- none"]
    sections = ("\n".join(caller_part), "\n".join(callee_part), "\n".join(hint_lines))
    task = ("Reason step by step about whether the candidate callee path can execute when the "
            "method is called from the caller at this call site. Then finish with a fenced JSON "
            "object of the form\n```json\n{\"valid\": true, \"rationale\": \"...\"}\n```\n"
            "where `valid` is a boolean and `rationale` briefly explains the judgment.")
    rendered = "\n".join([SECTION_DELIMS[0], sections[0], "", SECTION_DELIMS[1], sections[1], "",
                          SECTION_DELIMS[2], sections[2], "", TASK_DELIM, task]) + "\n"
    return PromptDoc(sections, rendered)


def make_merge_request(caller: MethodDecl, callee: MethodDecl | None, call: Step,
                       conditions: tuple, callee_path: LocalPath) -> MergeRequest:
    hints = static_hints(caller, callee, call)
    prompt = build_verification_prompt(caller, {"call": call, "conditions": conditions}, callee_path, hints)
    bindings = tuple((p[0], a) for p, a in zip(callee.params, call.args)) if callee else ()
    return MergeRequest(prompt, bindings, callee_path.path_conditions)


# ---------------------------------------------------------------------------
# Verdict parsing

def _json_objects(raw: str):
    """Yield ``(start, obj)`` for every JSON object that parses starting at a ``{``."""
    dec = json.JSONDecoder()
    for m in re.finditer(r"\{", raw):
        try:
            obj, _ = dec.raw_decode(raw, m.start())
        except json.JSONDecodeError:
            continue
        if isinstance(obj, dict):
            yield m.start(), obj


def parse_verdict(raw: str) -> tuple[bool, str]:
    """``(valid, rationale)`` from the last-starting object with a boolean ``valid``.

    Prose and code fences around the object are ignored. A rejecting object
    must carry a nonempty string rationale to count.
    """
    best = None
    for start, obj in _json_objects(raw):
        valid = obj.get("valid")
        if not isinstance(valid, bool):
            continue
        rationale = obj.get("rationale", "")
        if not isinstance(rationale, str):
            continue
        if not valid and not rationale.strip():
            continue
        best = (valid, rationale)
    if best is None:
        raise MalformedOutput("no object with a boolean 'valid' field")
    return best


# ---------------------------------------------------------------------------
# Reasoners

_NULL_CHECK = re.compile(r"^\(?\s*(?:(\w+)\s*(==|!=)\s*null|null\s*(==|!=)\s*(\w+))\s*\)?$")
_BOOL_COND = re.compile(r"^\(?\s*(!?)\s*(\w+)\s*(?:(==|!=)\s*(true|false))?\s*\)?$")


def _strip_outer_parens(text: str) -> str:
    text = text.strip()
    while text.startswith("(") and text.endswith(")") and text.count("(") == 1:
        text = text[1:-1].strip()
    return text


def _null_contradiction(cond: str, outcome: object, bindings: dict[str, str]) -> str | None:
    m = _NULL_CHECK.match(_strip_outer_parens(cond))
    if not m or not isinstance(outcome, bool):
        return None
    name, op = (m.group(1), m.group(2)) if m.group(1) else (m.group(4), m.group(3))
    if bindings.get(name) != "null":
        return None
    holds = op == "=="
    if holds != outcome:
        return (f"path requires ({cond}) to be {outcome}, but parameter `{name}` receives the "
                f"literal null at the call site, so it is {holds}")
    return None


def _bool_contradiction(cond: str, outcome: object, bindings: dict[str, str]) -> str | None:
    m = _BOOL_COND.match(_strip_outer_parens(cond))
    if not m or not isinstance(outcome, bool):
        return None
    neg, name, op, lit = m.groups()
    arg = bindings.get(name)
    if arg not in ("true", "false"):
        return None
    value = arg == "true"
    if op:
        value = (value == (lit == "true")) if op == "==" else (value != (lit == "true"))
    if neg:
        value = not value
    if value != outcome:
        return (f"path requires ({cond}) to be {outcome}, but parameter `{name}` receives the "
                f"literal {arg}, so it is {value}")
    return None


class BaseReasoner:
    source = "base"

    def __init__(self):
        self._lock = threading.Lock()
        self.merge_calls = 0
        self.instantiation_calls = 0

    def _count(self, attr: str):
        with self._lock:
            setattr(self, attr, getattr(self, attr) + 1)

    def verify_merge(self, request: MergeRequest) -> Verdict:
        raise NotImplementedError

    def instantiate(self, sequence_id: str, events: list[tuple[int, LogTemplate]], context: str) -> tuple[list[list[str]], str]:
        raise NotImplementedError


class MockReasoner(BaseReasoner):
    """Rejects only literal-constant contradictions; everything else is accepted."""

    source = "mock"

    def __init__(self, seed: int):
        super().__init__()
        if seed is None:
            raise ConfigError("reasoner.seed", "mock mode requires a seed")
        self.seed = seed

    def verify_merge(self, request: MergeRequest) -> Verdict:
        self._count("merge_calls")
        bindings = dict(request.bindings)
        tokens = _estimate_tokens(request.prompt.rendered)
        conds = request.callee_conditions
        reason = None
        if conds:
            reason = _null_contradiction(conds[0][0], conds[0][1], bindings)
        for cond, outcome in conds:
            if reason:
                break
            reason = _bool_contradiction(cond, outcome, bindings)
        if reason:
            return Verdict(False, reason, "mock", 1, tokens)
        return Verdict(True, "no literal argument contradicts the path conditions", "mock", 1, tokens)

    def instantiate(self, sequence_id, events, context=""):
        self._count("instantiation_calls")
        return mock_values(self.seed, sequence_id, events), "mock"


def _token(rng: random.Random, n: int = 8) -> str:
    return "".join(rng.choice(string.ascii_lowercase + string.digits) for _ in range(n))


def mock_value(kind: str, rng: random.Random) -> str:
    if kind == "identifier":
        return f"blk_{rng.randrange(10 ** 10):010d}"
    if kind == "address":
        return f"10.{rng.randrange(256)}.{rng.randrange(256)}.{rng.randrange(1, 255)}:{rng.randrange(1024, 65536)}"
    if kind == "path":
        return f"/data/{_token(rng)}"
    if kind == "numeric":
        return str(rng.randrange(10 ** 6))
    return _token(rng)


def mock_values(seed: int, sequence_id: str, events: list[tuple[int, LogTemplate]]) -> list[list[str]]:
    """Seeded values per placeholder; the same expression text gets the same value within a sequence."""
    out = []
    for index, tmpl in events:
        vals = []
        for k, kind in enumerate(tmpl.placeholder_kinds):
            expr = tmpl.placeholder_exprs[k] if k < len(tmpl.placeholder_exprs) else ""
            key = f"{kind}:{expr}" if expr else f"{kind}:T{tmpl.template_id}.{k}"
            vals.append(mock_value(kind, random.Random(f"{seed}:{sequence_id}:{key}")))
        out.append(vals)
    return out


class LiveReasoner(BaseReasoner):
    """Chat-completion client with retries, bounded concurrency and a JSONL transcript."""

    source = "live"

    def __init__(self, config: ReasonerConfig, client=None, backoff: float = 0.5, fallback_seed: int = 0):
        super().__init__()
        if not config.endpoint_url or not config.api_key_env:
            raise ConfigError("reasoner", "live mode requires endpoint_url and api_key_env")
        self.config = config
        self.api_key = os.environ.get(config.api_key_env, "")
        self.backoff = backoff
        self.fallback_seed = config.seed if config.seed is not None else fallback_seed
        self._sem = threading.BoundedSemaphore(max(1, config.max_inflight))
        self._replay: dict[str, list[str]] = {}
        self._transcript_lock = threading.Lock()
        if config.transcript and os.path.exists(config.transcript):
            with open(config.transcript, encoding="utf-8") as fh:
                for line in fh:
                    if line.strip():
                        rec = json.loads(line)
                        self._replay.setdefault(rec["request_hash"], []).append(rec["reply"])
        if not self.api_key and not self._replay:
            raise ConfigError("reasoner.api_key_env", f"environment variable {config.api_key_env} is not set")
        if client is None:
            import httpx
            client = httpx.Client(timeout=config.request_timeout)
        self.client = client

    def request_body(self, user: str) -> dict:
        return {
            "model": self.config.model_name,
            "messages": [{"role": "system", "content": SYSTEM_PROMPT}, {"role": "user", "content": user}],
            "temperature": self.config.temperature,
        }

    def _chat(self, user: str) -> str:
        body = self.request_body(user)
        req_hash = hashlib.sha256(json.dumps(body, sort_keys=True).encode()).hexdigest()
        with self._transcript_lock:
            queued = self._replay.get(req_hash)
            if queued:
                return queued.pop(0)
        url = self.config.endpoint_url.rstrip("/") + "/chat/completions"
        headers = {"Authorization": f"Bearer {self.api_key}", "Content-Type": "application/json"}
        last_exc: Exception | None = None
        for attempt in range(self.config.max_retries + 1):
            if attempt:
                time.sleep(self.backoff * 2 ** (attempt - 1))
            try:
                with self._sem:
                    resp = self.client.post(url, content=json.dumps(body), headers=headers,
                                            timeout=self.config.request_timeout)
                if resp.status_code >= 500 or resp.status_code == 429:
                    last_exc = ReasonerFailure(f"HTTP {resp.status_code}")
                    continue
                resp.raise_for_status()
                reply = resp.json()["choices"][0]["message"]["content"]
            except ReasonerFailure:
                raise
            except Exception as exc:  # transport, timeout, bad payload
                last_exc = exc
                log.warning("reasoner request failed (attempt %d): %s", attempt + 1, exc)
                continue
            self._record(req_hash, user, reply)
            return reply
        raise ReasonerFailure(f"request failed after {self.config.max_retries + 1} attempts: {last_exc}")

    def _record(self, req_hash: str, prompt: str, reply: str):
        if not self.config.transcript:
            return
        with self._transcript_lock, open(self.config.transcript, "a", encoding="utf-8") as fh:
            fh.write(json.dumps({"request_hash": req_hash, "prompt": prompt, "reply": reply}) + "\n")

    def verify_merge(self, request: MergeRequest) -> Verdict:
        self._count("merge_calls")
        for attempt in range(1, self.config.max_retries + 2):
            raw = self._chat(request.prompt.rendered)
            try:
                valid, rationale = parse_verdict(raw)
            except MalformedOutput:
                log.warning("malformed verdict (attempt %d)", attempt)
                continue
            return Verdict(valid, rationale, "live", attempt, _estimate_tokens(request.prompt.rendered, raw))
        raise ReasonerFailure("no well-formed verdict after retries")

    def instantiate(self, sequence_id, events, context=""):
        self._count("instantiation_calls")
        prompt = instantiation_prompt(events, context)
        for _ in range(2):
            try:
                raw = self._chat(prompt)
            except ReasonerFailure:
                break
            values = parse_instantiation(raw, events)
            if values is not None:
                return values, "live"
        return mock_values(self.fallback_seed, sequence_id, events), "mock-fallback"


def instantiation_prompt(events: list[tuple[int, LogTemplate]], context: str) -> str:
    lines = ["Fill in realistic runtime values for the placeholders <*> of this log sequence.",
             f"Execution context: {context or 'none'}", "Events:"]
    for i, (_, t) in enumerate(events):
        kinds = ", ".join(t.placeholder_kinds) or "no placeholders"
        lines.append(f"  {i}: [{t.level}] {t.pattern}  ({kinds})")
    lines.append("Answer with a fenced JSON object mapping each event index (as a string) to the list "
                 "of values for its placeholders, in order. Keep values consistent across events.")
    return "\n".join(lines) + "\n"


def parse_instantiation(raw: str, events: list[tuple[int, LogTemplate]]) -> list[list[str]] | None:
    """Values per event, or None when counts or types don't fit the templates."""
    found = None
    for _, obj in _json_objects(raw):
        found = obj
    if found is None:
        return None
    out = []
    for i, (_, t) in enumerate(events):
        vals = found.get(str(i), [])
        if not isinstance(vals, list) or len(vals) != len(t.placeholder_kinds):
            return None
        vals = [str(v) for v in vals]
        if any(PLACEHOLDER in v for v in vals):
            return None
        out.append(vals)
    return out


def render_message(pattern: str, values: list[str]) -> str:
    parts = pattern.split(PLACEHOLDER)
    if len(parts) - 1 != len(values):
        raise ValueError(f"{len(parts) - 1} placeholders but {len(values)} values for {pattern!r}")
    out = [parts[0]]
    for v, tail in zip(values, parts[1:]):
        out.append(v)
        out.append(tail)
    return "".join(out)


def make_reasoner(config: ReasonerConfig, client=None) -> BaseReasoner:
    if config.mode == "mock":
        return MockReasoner(config.seed)
    return LiveReasoner(config, client=client)


# ---------------------------------------------------------------------------
# Overhead accounting

@dataclass
class EntryOverhead:
    entry: str
    merge_checks: int
    instantiations: int
    wall_time: float | None = None

    @property
    def calls(self) -> int:
        return self.merge_checks + self.instantiations


@dataclass
class OverheadReport:
    entries: list[EntryOverhead] = field(default_factory=list)

    @property
    def total_calls(self) -> int:
        return sum(e.calls for e in self.entries)

    @property
    def calls_per_entry(self) -> float:
        return self.total_calls / len(self.entries) if self.entries else 0.0

    @property
    def wall_time_per_entry(self) -> float | None:
        times = [e.wall_time for e in self.entries if e.wall_time is not None]
        return sum(times) / len(times) if times else None

    def to_dict(self) -> dict:
        return {
            "entries": len(self.entries),
            "merge_checks": sum(e.merge_checks for e in self.entries),
            "instantiations": sum(e.instantiations for e in self.entries),
            "total_calls": self.total_calls,
            "calls_per_entry": round(self.calls_per_entry, 6),
            "wall_time_per_entry": self.wall_time_per_entry,
        }

    def render(self) -> str:
        lines = [f"# reference scale: ~{REFERENCE_CALLS_PER_ENTRY} calls/entry, "
                 f"~{REFERENCE_SECONDS_PER_ENTRY} s/entry with a hosted model at depth 3",
                 "entry\tmerge_checks\tinstantiations\tcalls\twall_time_s"]
        for e in self.entries:
            wt = "-" if e.wall_time is None else f"{e.wall_time:.3f}"
            lines.append(f"{e.entry}\t{e.merge_checks}\t{e.instantiations}\t{e.calls}\t{wt}")
        wpe = self.wall_time_per_entry
        lines.append(f"calls_per_entry: {self.calls_per_entry:.2f}")
        lines.append(f"wall_time_per_entry: {'-' if wpe is None else f'{wpe:.3f}'}")
        return "\n".join(lines) + "\n"


def account(verdicts_per_entry: dict[str, int], instantiations_per_entry: dict[str, int],
            wall_times: dict[str, float] | None = None) -> OverheadReport:
    """Per-entry call totals; entries are listed in the order of ``verdicts_per_entry``."""
    entries = []
    for entry, checks in verdicts_per_entry.items():
        wt = wall_times.get(entry) if wall_times else None
        entries.append(EntryOverhead(entry, checks, instantiations_per_entry.get(entry, 0), wt))
    return OverheadReport(entries)
