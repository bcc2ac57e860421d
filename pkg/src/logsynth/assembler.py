"""Interprocedural assembly of log sequences with a virtual call stack."""

from __future__ import annotations

import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Iterator

from .callgraph import Subgraph
from .frontend import MethodDecl
from .lcfg import LocalPath, MethodFlow, Step, enumerate_local_paths  # noqa: F401  re-exported
from .reasoner import BaseReasoner, ReasonerFailure, Verdict, make_merge_request

log = logging.getLogger(__name__)

RECURSION_CUT = "recursion_cut"
DEPTH_CUT = "depth_cut"


@dataclass(frozen=True)
class Frame:
    """One activation; ``start``/``end`` index into the sequence's events."""

    method_id: str
    path_index: int
    start: int
    end: int
    depth: int
    parent: int  # index into stack_trace, -1 for the entry frame
    call_site: str = ""
    args: tuple[str, ...] = ()


@dataclass(frozen=True)
class FrameContext:
    method_id: str
    bindings: tuple[tuple[str, str], ...]
    conditions: tuple[tuple[str, object], ...]


@dataclass(frozen=True)
class CandidateSequence:
    sequence_id: str
    entry: str
    events: tuple[tuple[int, str], ...]  # (template_id, emitting method)
    context: tuple[FrameContext, ...]
    verdict_trace: tuple[Verdict, ...]
    stack_trace: tuple[Frame, ...]
    flags: frozenset[str] = frozenset()

    @property
    def template_ids(self) -> tuple[int, ...]:
        return tuple(t for t, _ in self.events)

    def merged_conditions(self) -> tuple[tuple[str, object], ...]:
        return tuple(c for fc in self.context for c in fc.conditions)

    def dump_line(self) -> str:
        flags = ",".join(sorted(self.flags)) or "-"
        return f"{self.sequence_id}\t{self.entry}\t{' '.join(map(str, self.template_ids))}\t{flags}"


@dataclass
class MergeAccounting:
    attempted: int = 0
    accepted: int = 0
    rejected: int = 0
    failed: int = 0
    memo_hits: int = 0

    def record(self, verdict: Verdict | None):
        self.attempted += 1
        if verdict is None:
            self.failed += 1
        elif verdict.valid:
            self.accepted += 1
        else:
            self.rejected += 1

    @property
    def balanced(self) -> bool:
        return self.accepted + self.rejected + self.failed == self.attempted


@dataclass
class AssemblyResult:
    entry: str
    sequences: list[CandidateSequence]
    accounting: MergeAccounting
    truncated: bool = False
    abandoned: int = 0
    empty_dropped: int = 0
    wall_time: float = 0.0
    verdict_log: list[tuple[str, str, int, Verdict | None]] = field(default_factory=list)


@dataclass(frozen=True)
class _State:
    events: tuple[tuple[int, str], ...] = ()
    frames: tuple[Frame, ...] = ()
    contexts: tuple[FrameContext, ...] = ()
    verdicts: tuple[Verdict, ...] = ()
    flags: frozenset[str] = frozenset()


class _Assembler:
    def __init__(self, subgraph: Subgraph, flows: dict[str, MethodFlow], reasoner: BaseReasoner, bounds,
                 prefix: str):
        self.subgraph = subgraph
        self.members = set(subgraph.members)
        self.flows = flows
        self.reasoner = reasoner
        self.bounds = bounds
        self.prefix = prefix
        self.memo: dict[str, Verdict | None] = {}
        self.accounting = MergeAccounting()
        self.abandoned = 0
        self.empty = 0
        self.verdict_log: list[tuple[str, str, int, Verdict | None]] = []

    def check(self, caller: MethodDecl, call: Step, conditions: tuple, callee_path: LocalPath) -> Verdict | None:
        callee = self.flows[call.callee].method
        request = make_merge_request(caller, callee, call, conditions, callee_path)
        key = request.prompt.key
        if key in self.memo:
            self.accounting.memo_hits += 1
            return self.memo[key]
        try:
            verdict = self.reasoner.verify_merge(request)
        except ReasonerFailure as exc:
            log.warning("verdict failure for %s -> %s path %d: %s", caller.method_id, call.callee,
                        callee_path.index, exc)
            verdict = None
        self.memo[key] = verdict
        self.accounting.record(verdict)
        self.verdict_log.append((caller.method_id, call.callee, callee_path.index, verdict))
        return verdict

    def run(self) -> tuple[list[CandidateSequence], bool]:
        entry = self.subgraph.entry
        flow = self.flows[entry]
        out: list[CandidateSequence] = []
        limit = self.bounds.max_sequences_per_entry
        for path in flow.paths:
            for st in self.frame(entry, path, 0, -1, None, (), (entry,), _State()):
                if not st.events:
                    self.empty += 1  # nothing to label or learn from
                    continue
                if len(out) >= limit:
                    return out, True
                sid = f"{self.prefix}-{len(out) + 1:04d}"
                out.append(CandidateSequence(sid, entry, st.events, st.contexts, st.verdicts, st.frames, st.flags))
        return out, False

    def frame(self, method_id: str, path: LocalPath, depth: int, parent: int, call: Step | None,
              inherited: tuple, callstack: tuple[str, ...], state: _State) -> Iterator[_State]:
        """Expand ``path`` as a new frame on top of ``state``; yields the states after it returns."""
        idx = len(state.frames)
        bindings = ()
        if call is not None:
            callee = self.flows[method_id].method
            bindings = tuple((p[0], a) for p, a in zip(callee.params, call.args))
        fr = Frame(method_id, path.index, len(state.events), -1, depth, parent,
                   call.site if call else "", call.args if call else ())
        ctx = FrameContext(method_id, bindings, path.path_conditions)
        state = _State(state.events, state.frames + (fr,), state.contexts + (ctx,), state.verdicts, state.flags)
        for done in self.steps(method_id, path, 0, depth, idx, inherited, callstack, state):
            f = done.frames[idx]
            closed = Frame(f.method_id, f.path_index, f.start, len(done.events), f.depth, f.parent,
                           f.call_site, f.args)
            yield _State(done.events, done.frames[:idx] + (closed,) + done.frames[idx + 1:],
                         done.contexts, done.verdicts, done.flags)

    def steps(self, method_id: str, path: LocalPath, i: int, depth: int, frame_idx: int, inherited: tuple,
              callstack: tuple[str, ...], state: _State) -> Iterator[_State]:
        events = list(state.events)
        flags = state.flags
        while i < len(path.steps):
            st = path.steps[i]
            if st.kind == "log":
                events.append((st.template_id, method_id))
                i += 1
                continue
            cut = self.cut_reason(st.callee, depth, callstack)
            if cut is not None:
                if cut:
                    flags = flags | {cut}
                i += 1
                continue
            # Expandable call: branch on every accepted callee path.
            caller = self.flows[method_id].method
            conds = inherited + path.conditions_before(i)
            base = _State(tuple(events), state.frames, state.contexts, state.verdicts, flags)
            any_ok = False
            # A call the caller leaves through a catch pairs with a raising callee path, and vice versa.
            expect_raise = i in path.raising_steps
            for cpath in self.flows[st.callee].paths:
                if cpath.raises != expect_raise:
                    continue
                verdict = self.check(caller, st, conds, cpath)
                if verdict is None or not verdict.valid:
                    continue
                any_ok = True
                pushed = _State(base.events, base.frames, base.contexts, base.verdicts + (verdict,), base.flags)
                for after in self.frame(st.callee, cpath, depth + 1, frame_idx, st, conds,
                                        callstack + (st.callee,), pushed):
                    yield from self.steps(method_id, path, i + 1, depth, frame_idx, inherited, callstack, after)
            if not any_ok:
                self.abandoned += 1
            return
        yield _State(tuple(events), state.frames, state.contexts, state.verdicts, flags)

    def cut_reason(self, callee: str, depth: int, callstack: tuple[str, ...]) -> str | None:
        """None if the call expands; otherwise the flag to set ('' for silent skips)."""
        flow = self.flows.get(callee)
        if callee not in self.members or flow is None or not flow.paths.paths:
            return ""
        if callstack.count(callee) >= self.bounds.max_recursion_depth:
            return RECURSION_CUT
        if depth + 1 > self.subgraph.depth_limit:
            return DEPTH_CUT
        return None


def assemble(subgraph: Subgraph, lcfgs: dict[str, MethodFlow], reasoner: BaseReasoner, bounds,
             prefix: str = "S") -> AssemblyResult:
    """Sequences for one entry point, in depth-first order of local paths."""
    if subgraph.entry not in lcfgs:
        raise KeyError(f"no flow for entry {subgraph.entry}")
    t0 = time.perf_counter()
    asm = _Assembler(subgraph, lcfgs, reasoner, bounds, prefix)
    seqs, truncated = asm.run()
    if truncated:
        log.info("entry %s truncated at %d sequences", subgraph.entry, len(seqs))
    return AssemblyResult(subgraph.entry, seqs, asm.accounting, truncated, asm.abandoned, asm.empty,
                          time.perf_counter() - t0, asm.verdict_log)


def assemble_all(subgraphs: list[Subgraph], flows: dict[str, MethodFlow], reasoner: BaseReasoner, bounds,
                 workers: int = 1) -> list[AssemblyResult]:
    """Entries in parallel; results come back in subgraph (rank) order."""
    jobs = [(sg, f"E{i + 1:02d}") for i, sg in enumerate(subgraphs)]
    if workers <= 1 or len(jobs) <= 1:
        return [assemble(sg, flows, reasoner, bounds, p) for sg, p in jobs]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(lambda job: assemble(job[0], flows, reasoner, bounds, job[1]), jobs))


# ---------------------------------------------------------------------------
# Structural checks


def check_stack_discipline(seq: CandidateSequence, flows: dict[str, MethodFlow]) -> list[str]:
    """Replay ``stack_trace``: spans must nest, and each frame's own events must equal its local path."""
    problems = []
    frames = seq.stack_trace
    n = len(seq.events)
    children: dict[int, list[int]] = {i: [] for i in range(len(frames))}
    for i, f in enumerate(frames):
        if not (0 <= f.start <= f.end <= n):
            problems.append(f"frame {i} span [{f.start},{f.end}) outside 0..{n}")
            continue
        if f.parent >= 0:
            p = frames[f.parent]
            if f.parent >= i or not (p.start <= f.start and f.end <= p.end):
                problems.append(f"frame {i} not nested in parent {f.parent}")
            if f.depth != p.depth + 1:
                problems.append(f"frame {i} depth {f.depth} != parent depth + 1")
            children[f.parent].append(i)
        elif i != 0:
            problems.append(f"frame {i} has no parent")
    for i, kids in children.items():
        for a, b in zip(kids, kids[1:]):
            if frames[a].end > frames[b].start:
                problems.append(f"sibling frames {a} and {b} overlap")
    for i, f in enumerate(frames):
        own_events = []
        pos = f.start
        for k in children[i]:
            own_events.extend(seq.events[pos:frames[k].start])
            pos = frames[k].end
        own_events.extend(seq.events[pos:f.end])
        own = [t for t, _ in own_events]
        if any(m != f.method_id for _, m in own_events):
            problems.append(f"frame {i} owns events emitted by another method")
        path = flows[f.method_id].paths[f.path_index]
        if tuple(own) != path.log_templates:
            problems.append(f"frame {i} ({f.method_id}) projects to {own}, local path {f.path_index} "
                            f"has {list(path.log_templates)}")
        sites = [frames[k].call_site for k in children[i]]
        call_sites = [s.site for s in path.steps if s.kind == "call"]
        it = iter(call_sites)
        if not all(any(s == c for c in it) for s in sites):
            problems.append(f"frame {i} child call sites {sites} not a subsequence of its path's calls")
    return problems


def write_sequence_dump(results: list[AssemblyResult], path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for r in results:
            for s in r.sequences:
                fh.write(s.dump_line() + "\n")
