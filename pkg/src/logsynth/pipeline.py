"""Stage runners shared by the CLI subcommands.

Each stage writes its artifacts into the output directory and folds its
counts into ``manifest.json``. Later stages recompute the static analysis
from source (it is cheap and deterministic) and read the earlier stages'
data artifacts from disk, so running stages one by one gives the same
directory as a single ``pipeline`` run.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import re
import time
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

from . import __version__
from .assembler import (AssemblyResult, CandidateSequence, Frame, FrameContext, assemble_all,
                        write_sequence_dump)
from .callgraph import build_call_graph, extract_subgraphs, prune
from .config import PipelineConfig
from .coverage import audit_coverage, read_observed, render_coverage_table
from .dataset import (DatasetSplit, PoolDeficit, apply_augmentation, plan_augmentation, read_sessions,
                      split_guard, write_sessions)
from .frontend import extract_templates, parse_source, read_template_dump, write_template_dump
from .labeler import (Event, LabelRuleSet, ParameterizedSequence, SessionFactory, label_sequence, parameterize,
                      sample_for_review)
from .lcfg import analyze_method
from .reasoner import BaseReasoner, Verdict, account, make_reasoner

log = logging.getLogger(__name__)

STAGES = ("analyze", "lcfg", "generate", "label", "augment", "audit-coverage")
MANIFEST = "manifest.json"


class StageError(RuntimeError):
    def __init__(self, stage: str, message: str):
        super().__init__(f"[{stage}] {message}")
        self.stage = stage


class GuardViolation(RuntimeError):
    def __init__(self, report):
        super().__init__("split guard failed: " + ", ".join(report.offending_ids))
        self.report = report


def method_filename(method_id: str) -> str:
    return re.sub(r"[^A-Za-z0-9._-]", "_", method_id.replace("/", "_").replace("<init>", "init")) + ".dot"


def sha256_file(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


# ---------------------------------------------------------------------------
# Serialization of parameterized sequences


def pseq_to_dict(p: ParameterizedSequence) -> dict:
    s = p.sequence
    return {
        "sequence_id": s.sequence_id,
        "entry": s.entry,
        "flags": sorted(s.flags),
        "provenance": p.provenance,
        "events": [{"template_id": e.template_id, "method_id": m, "level": e.level, "message": e.message,
                    "values": list(v)} for e, (_, m), v in zip(p.events, s.events, p.values)],
        "frames": [[f.method_id, f.path_index, f.start, f.end, f.depth, f.parent, f.call_site, list(f.args)]
                   for f in s.stack_trace],
        "context": [{"method_id": c.method_id, "bindings": [list(b) for b in c.bindings],
                     "conditions": [list(x) for x in c.conditions]} for c in s.context],
        "verdicts": [{"valid": v.valid, "rationale": v.rationale, "source": v.source, "attempts": v.attempts,
                      "token_estimate": v.token_estimate} for v in s.verdict_trace],
    }


def pseq_from_dict(d: dict) -> ParameterizedSequence:
    frames = tuple(Frame(m, pi, st, en, dp, pa, site, tuple(args))
                   for m, pi, st, en, dp, pa, site, args in d["frames"])
    ctx = tuple(FrameContext(c["method_id"], tuple(tuple(b) for b in c["bindings"]),
                             tuple(tuple(x) for x in c["conditions"])) for c in d["context"])
    verdicts = tuple(Verdict(**v) for v in d["verdicts"])
    seq = CandidateSequence(d["sequence_id"], d["entry"],
                            tuple((e["template_id"], e["method_id"]) for e in d["events"]),
                            ctx, verdicts, frames, frozenset(d["flags"]))
    events = tuple(Event(e["template_id"], e["level"], e["message"]) for e in d["events"])
    values = tuple(tuple(e["values"]) for e in d["events"])
    return ParameterizedSequence(seq, events, values, d["provenance"])


# ---------------------------------------------------------------------------


@dataclass
class StageResult:
    stage: str
    counts: dict = field(default_factory=dict)
    artifacts: list[str] = field(default_factory=list)
    notes: list[str] = field(default_factory=list)
    overhead: dict | None = None
    error: Exception | None = None  # raised after the manifest is written


class Run:
    """Lazily computed analysis state for one configuration."""

    def __init__(self, config: PipelineConfig, reasoner: BaseReasoner | None = None):
        self.config = config
        self.out = Path(config.output_dir)
        self._reasoner = reasoner

    @property
    def reasoner(self) -> BaseReasoner:
        if self._reasoner is None:
            self._reasoner = make_reasoner(self.config.reasoner)
        return self._reasoner

    @cached_property
    def index(self):
        root = Path(self.config.source_root)
        if not root.is_dir():
            raise StageError("analyze", f"source root {root} is not a directory")
        return parse_source(root, self.config.subset)

    @cached_property
    def templates(self):
        return extract_templates(self.index, self.config.subset.logging)

    @cached_property
    def callgraph(self):
        return build_call_graph(self.index, self.templates)

    @cached_property
    def pruned(self):
        return prune(self.callgraph)

    @cached_property
    def selection(self):
        return extract_subgraphs(self.pruned, self.config.t_entry, self.config.t_depth)

    @cached_property
    def flows(self):
        members = sorted({m for sg in self.selection.subgraphs for m in sg.members})
        out = {}
        for mid in members:
            method = self.index.methods.get(mid)
            if method is None or method.body is None:
                continue
            out[mid] = analyze_method(method, self.templates, self.config.bounds)
        return out

    def write(self, rel: str, text: str) -> str:
        path = self.out / rel
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        return rel

    # -- stages ---------------------------------------------------------

    def analyze(self) -> StageResult:
        res = StageResult("analyze")
        tt = self.templates
        self.out.mkdir(parents=True, exist_ok=True)
        write_template_dump(tt, self.out / "templates.tsv")
        res.artifacts.append("templates.tsv")
        res.artifacts.append(self.write("callgraph.dot", self.callgraph.to_dot("callgraph")))
        res.artifacts.append(self.write("pruned.dot", self.pruned.graph.to_dot("pruned")))
        res.artifacts.append(self.write("pruning_report.txt", self.pruned.report.render()))
        sel = self.selection
        lines = [f"# t_entry={self.config.t_entry} t_depth={self.config.t_depth}", "# candidates (entry, reachable templates):"]
        lines.extend(f"#   {c}\t{n}" for c, n in sel.candidates)
        lines.extend(sg.render() for sg in sel.subgraphs)
        lines.extend(f"# warning: {w}" for w in sel.warnings)
        res.artifacts.append(self.write("subgraphs.txt", "\n".join(lines) + "\n"))
        if self.pruned.no_logging:
            res.notes.append("no logging detected")
        for issue in self.index.errors:
            res.notes.append(f"parse error: {os.path.basename(issue.path)}: {issue.message}")
        res.counts = {
            "methods": len(self.index.methods),
            "templates": len(tt),
            "callgraph_nodes": self.pruned.report.original_nodes,
            "pruned_nodes": self.pruned.report.retained_nodes,
            "subgraphs": len(sel.subgraphs),
        }
        return res

    def lcfg(self) -> StageResult:
        res = StageResult("lcfg")
        paths_lines = []
        n_paths = 0
        truncated = 0
        for mid, flow in self.flows.items():
            res.artifacts.append(self.write(f"lcfg/{method_filename(mid)}", flow.lcfg.to_dot()))
            n_paths += len(flow.paths)
            truncated += int(flow.paths.truncated)
            flag = " (truncated)" if flow.paths.truncated else ""
            paths_lines.append(f"{mid}: {len(flow.paths)} local paths{flag}")
            paths_lines.extend(f"  [{p.index}] {p.render()}" for p in flow.paths)
        res.artifacts.append(self.write("local_paths.txt", "\n".join(paths_lines) + "\n"))
        res.counts = {"lcfgs": len(self.flows), "local_paths": n_paths, "truncated_methods": truncated}
        return res

    def generate(self) -> StageResult:
        res = StageResult("generate")
        reasoner = self.reasoner
        live = self.config.reasoner.mode == "live"
        workers = self.config.effective_workers()
        results: list[AssemblyResult] = assemble_all(self.selection.subgraphs, self.flows, reasoner,
                                                     self.config.bounds, workers)
        write_sequence_dump(results, self.out / "sequences.txt")
        res.artifacts.append("sequences.txt")
        lookup = {t.template_id: t for t in self.templates.templates}
        pseqs = []
        inst_counts: dict[str, int] = {}
        wall: dict[str, float] = {}
        for r in results:
            t0 = time.perf_counter()
            for s in r.sequences:
                pseqs.append(parameterize(s, lookup, reasoner))
            inst_counts[r.entry] = len(r.sequences)
            wall[r.entry] = r.wall_time + (time.perf_counter() - t0)
        lines = [json.dumps(pseq_to_dict(p), ensure_ascii=False) for p in pseqs]
        res.artifacts.append(self.write("parameterized.jsonl", "".join(l + "\n" for l in lines)))
        report = account({r.entry: r.accounting.attempted for r in results}, inst_counts,
                         wall if live else None)
        res.artifacts.append(self.write("overhead.txt", report.render()))
        res.overhead = report.to_dict()
        acc = [r.accounting for r in results]
        res.counts = {
            "sequences": len(pseqs),
            "merge_checks": sum(a.attempted for a in acc),
            "merge_accepted": sum(a.accepted for a in acc),
            "merge_rejected": sum(a.rejected for a in acc),
            "merge_failed": sum(a.failed for a in acc),
            "instantiations": sum(inst_counts.values()),
            "abandoned_branches": sum(r.abandoned for r in results),
            "empty_dropped": sum(r.empty_dropped for r in results),
            "truncated_entries": sum(int(r.truncated) for r in results),
        }
        return res

    def label(self) -> StageResult:
        res = StageResult("label")
        src = self.out / "parameterized.jsonl"
        if not src.exists():
            raise StageError("label", "parameterized.jsonl not found; run generate first")
        rules = LabelRuleSet(self.config.labeling)
        factory = SessionFactory(self.config.reasoner.seed if self.config.reasoner.seed is not None else 0)
        sessions = []
        with open(src, encoding="utf-8") as fh:
            for line in fh:
                if line.strip():
                    p = pseq_from_dict(json.loads(line))
                    label, evidence = label_sequence(p.events, rules)
                    sessions.append(factory.make_session(p, label, evidence))
        write_sessions(sessions, self.out / "sessions.jsonl")
        res.artifacts.append("sessions.jsonl")
        _, bundle = sample_for_review(sessions, min(self.config.dataset.review_sample, len(sessions)),
                                      self.config.dataset.seed)
        res.artifacts.append(self.write("review.txt", bundle))
        res.counts = {
            "sessions": len(sessions),
            "anomalous": sum(s.label == "anomalous" for s in sessions),
            "normal": sum(s.label == "normal" for s in sessions),
            "deduplicated": len(factory.duplicates),
        }
        return res

    def augment(self) -> StageResult:
        res = StageResult("augment")
        ds = self.config.dataset
        if not ds.train or not ds.test:
            res.notes.append("augment skipped: dataset.train/test not configured")
            return res
        pool_path = self.out / "sessions.jsonl"
        if not pool_path.exists():
            raise StageError("augment", "sessions.jsonl not found; run label first")
        pool = read_sessions(pool_path)
        train, test = read_sessions(ds.train), read_sessions(ds.test)
        try:
            plan = plan_augmentation(len(train), pool, ds.ratio, ds.seed)
        except PoolDeficit as exc:
            raise StageError("augment", str(exc)) from None
        split = apply_augmentation(DatasetSplit(train, test), pool, plan)
        write_sessions(split.train, self.out / "train_augmented.jsonl")
        write_sessions(split.test, self.out / "test.jsonl")
        res.artifacts += ["train_augmented.jsonl", "test.jsonl"]
        res.artifacts.append(self.write("aug_plan.txt", plan.render()))
        guard = split_guard(split)
        res.artifacts.append(self.write("guard_report.txt", guard.render()))
        res.counts = {"train_real": len(train), "test": len(test), "synthetic_picked": len(plan.picks),
                      "train_augmented": len(split.train), "pool_limited": int(plan.pool_limited)}
        if not guard.ok:
            res.notes.append("split guard violation: " + ", ".join(guard.offending_ids))
            res.error = GuardViolation(guard)
        return res

    def audit_coverage(self) -> StageResult:
        res = StageResult("audit-coverage")
        dump = self.out / "templates.tsv"
        templates = read_template_dump(dump) if dump.exists() else self.templates.templates
        if not templates:
            raise StageError("audit-coverage", "no source templates")
        source = [(t.pattern, t.level) for t in templates]
        by_id = {t.template_id: t.pattern for t in templates}
        reports = []
        for obs_path in self.config.observed:
            observed = read_observed(obs_path)
            reports.append(audit_coverage(source, observed, Path(obs_path).stem, "observed"))
        sessions_path = self.out / "sessions.jsonl"
        if sessions_path.exists():
            seen = sorted({e.template_id for s in read_sessions(sessions_path) for e in s.events})
            reports.append(audit_coverage(source, [by_id[t] for t in seen if t in by_id], "generated", "synthetic"))
        res.artifacts.append(self.write("coverage.txt", render_coverage_table(reports)))
        res.counts = {"source_templates": len(source)}
        for r in reports:
            res.counts[f"covered[{r.system}]"] = r.n_observed_matched
        return res


# ---------------------------------------------------------------------------
# Manifest


def _load_manifest(out: Path) -> dict:
    path = out / MANIFEST
    if path.exists():
        try:
            return json.loads(path.read_text(encoding="utf-8"))
        except json.JSONDecodeError:
            log.warning("ignoring unreadable manifest")
    return {}


def update_manifest(run: Run, result: StageResult, fresh: bool = False) -> dict:
    out = run.out
    out.mkdir(parents=True, exist_ok=True)
    old = {} if fresh else _load_manifest(out)
    if old.get("config_hash") not in (None, run.config.config_hash()):
        log.warning("output directory was produced under a different configuration; resetting manifest")
        old = {}
    stages = [s for s in old.get("stages", []) if s != result.stage] + [result.stage]
    stages.sort(key=STAGES.index)
    counts = dict(old.get("counts", {}))
    counts.update(result.counts)
    notes = [n for n in old.get("notes", []) if not n.startswith(f"{result.stage}:")]
    notes += [f"{result.stage}: {n}" for n in result.notes]
    manifest = {
        "tool_version": __version__,
        "config_hash": run.config.config_hash(),
        "seed": run.config.reasoner.seed,
        "reasoner_mode": run.config.reasoner.mode,
        "stages": stages,
        "counts": dict(sorted(counts.items())),
        "overhead": result.overhead if result.overhead is not None else old.get("overhead"),
        "notes": notes,
    }
    artifacts = {}
    for path in sorted(out.rglob("*")):
        if path.is_file() and path.name != MANIFEST:
            artifacts[path.relative_to(out).as_posix()] = sha256_file(path)
    manifest["artifacts"] = artifacts
    with open(out / MANIFEST, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return manifest


def clear_previous(out: Path):
    """Remove artifacts listed in an earlier manifest so stale files never leak into a new run."""
    old = _load_manifest(out)
    for rel in old.get("artifacts", {}):
        p = out / rel
        if p.is_file():
            p.unlink()
    lcfg_dir = out / "lcfg"
    if lcfg_dir.is_dir() and not any(lcfg_dir.iterdir()):
        lcfg_dir.rmdir()


def run_stage(run: Run, stage: str) -> StageResult:
    fn = {"analyze": run.analyze, "lcfg": run.lcfg, "generate": run.generate, "label": run.label,
          "augment": run.augment, "audit-coverage": run.audit_coverage}[stage]
    if stage == "analyze":
        clear_previous(run.out)
    try:
        result = fn()
    except (StageError, GuardViolation):
        raise
    except Exception as exc:  # anything else is reported under the stage name
        raise StageError(stage, f"{type(exc).__name__}: {exc}") from exc
    update_manifest(run, result, fresh=stage == "analyze")
    if result.error is not None:
        raise result.error
    return result


def run_pipeline(config: PipelineConfig, reasoner: BaseReasoner | None = None,
                 stages: tuple[str, ...] = STAGES) -> list[StageResult]:
    run = Run(config, reasoner)
    results = []
    for stage in stages:
        log.info("stage %s", stage)
        results.append(run_stage(run, stage))
    return results
