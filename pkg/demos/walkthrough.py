#!/usr/bin/env python3
# Stage-by-stage tour of the fixture corpus: from Java sources to an augmented training split.
# Run from the repository root:  python3 demos/walkthrough.py

import tempfile
from pathlib import Path

from logsynth.assembler import assemble
from logsynth.config import load_config
from logsynth.labeler import LabelRuleSet, SessionFactory, label_sequence, parameterize
from logsynth.pipeline import Run
from logsynth.reasoner import MockReasoner

CONFIG = Path(__file__).resolve().parents[1] / "tests" / "fixtures" / "corpus" / "logsynth.yaml"
out = tempfile.mkdtemp(prefix="logsynth-demo-")
run = Run(load_config(CONFIG, {"out": out}))

# %% templates: every logging call becomes a pattern with <*> slots
print(f"{len(run.index.methods)} methods, {len(run.templates)} templates")
for t in run.templates.templates[:5]:
    print(f"  T{t.template_id:<3} {t.level:<5} {t.pattern}")

# %% call graph pruning keeps only methods that can reach a log statement
rep = run.pruned.report
print(f"\ncall graph: {rep.original_nodes} nodes -> {rep.retained_nodes} after pruning")

# %% entry points are ranked by how many templates they can reach
for sg in run.selection.subgraphs[:3]:
    print(f"  entry {sg.entry}: {len(sg.members)} members, {len(sg.contained_templates)} templates")

# %% local paths through one method, with the branch decisions that select them
entry = run.selection.subgraphs[0].entry
flow = run.flows[entry]
print(f"\n{entry}: {len(flow.paths)} local paths")
for p in list(flow.paths)[:4]:
    print("  ", p.render())

# %% stitch callee paths into the caller; the mock reasoner vetoes contradictions
reasoner = MockReasoner(42)
res = assemble(run.selection.subgraphs[0], run.flows, reasoner, run.config.bounds)
acc = res.accounting
print(f"\nassembled {len(res.sequences)} sequences "
      f"({acc.attempted} merge checks: {acc.accepted} accepted, {acc.rejected} rejected)")
for *_, verdict in res.verdict_log:
    if verdict is not None and not verdict.valid:
        print("  rejected:", verdict.rationale)
        break

# %% fill placeholders, label with the rule set, wrap as sessions
lookup = {t.template_id: t for t in run.templates.templates}
rules, factory = LabelRuleSet(), SessionFactory(42)
for seq in res.sequences[:3]:
    pseq = parameterize(seq, lookup, reasoner)
    label, evidence = label_sequence(pseq.events, rules)
    s = factory.make_session(pseq, label, evidence)
    print(f"\nsession {s.session_id} [{s.label}] evidence={s.label_evidence}")
    for e in s.events:
        print(f"  {e.level:<5} {e.message}")

# %% the full pipeline writes every artifact plus a manifest
from logsynth.pipeline import run_pipeline  # noqa: E402

for r in run_pipeline(run.config):
    print(f"{r.stage:>15}: {r.counts}")
print("\nartifacts in", out)
print((Path(out) / "coverage.txt").read_text())
