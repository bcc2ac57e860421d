import json
import subprocess
import sys
import time
from pathlib import Path

import pytest
import yaml

from conftest import CORPUS_CONFIG, GOLDEN_RUN
from logsynth.cli import main
from logsynth.config import load_config
from logsynth.dataset import read_sessions, write_sessions
from logsynth.pipeline import STAGES, run_pipeline, sha256_file
from logsynth.reasoner import MockReasoner

CORPUS = CORPUS_CONFIG.parent


def _tree(root: Path) -> dict:
    return {p.relative_to(root).as_posix(): p.read_bytes() for p in sorted(root.rglob("*")) if p.is_file()}


def _config_variant(tmp_path, **changes) -> Path:
    data = yaml.safe_load(CORPUS_CONFIG.read_text())
    data["source_root"] = str(CORPUS / "src")
    data["dataset"]["train"] = str(CORPUS / "sessions" / "train.jsonl")
    data["dataset"]["test"] = str(CORPUS / "sessions" / "test.jsonl")
    data["coverage"]["observed"] = [str(CORPUS / "observed" / "minidfs_loghub.txt")]
    for key, value in changes.items():
        section, _, field = key.partition("__")
        if field:
            data[section][field] = value
        else:
            data[section] = value
    path = tmp_path / "cfg.yaml"
    path.write_text(yaml.safe_dump(data))
    return path


def test_pipeline_matches_golden_and_is_repeatable(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    t0 = time.perf_counter()
    assert main(["pipeline", "--config", str(CORPUS_CONFIG), "--out", str(a)]) == 0
    assert time.perf_counter() - t0 < 10
    assert main(["pipeline", "--config", str(CORPUS_CONFIG), "--out", str(b)]) == 0
    assert _tree(a) == _tree(b) == _tree(GOLDEN_RUN)


def test_rerun_into_same_directory_is_stable(tmp_path):
    out = tmp_path / "o"
    for _ in range(2):
        assert main(["pipeline", "--config", str(CORPUS_CONFIG), "--out", str(out)]) == 0
    assert _tree(out) == _tree(GOLDEN_RUN)


def test_subcommands_compose_to_one_pipeline_run(tmp_path):
    out = tmp_path / "steps"
    for stage in STAGES:
        assert main([stage, "--config", str(CORPUS_CONFIG), "--out", str(out)]) == 0, stage
    assert _tree(out) == _tree(GOLDEN_RUN)


def test_manifest_lists_every_artifact_with_its_hash():
    manifest = json.loads((GOLDEN_RUN / "manifest.json").read_text())
    files = {p.relative_to(GOLDEN_RUN).as_posix() for p in GOLDEN_RUN.rglob("*") if p.is_file()}
    assert set(manifest["artifacts"]) == files - {"manifest.json"}
    for rel, digest in manifest["artifacts"].items():
        assert sha256_file(GOLDEN_RUN / rel) == digest
    assert manifest["seed"] == 42 and manifest["reasoner_mode"] == "mock"
    assert len(manifest["config_hash"]) == 64


class _CountingMock(MockReasoner):
    """Counts calls on its own, without relying on the reasoner's internal counters."""

    def __init__(self, seed):
        super().__init__(seed)
        self.seen_merges = 0
        self.seen_instantiations = 0

    def verify_merge(self, request):
        self.seen_merges += 1
        return super().verify_merge(request)

    def instantiate(self, sequence_id, events, context=""):
        self.seen_instantiations += 1
        return super().instantiate(sequence_id, events, context)


def test_calls_per_entry_equals_counted_calls(tmp_path):
    config = load_config(CORPUS_CONFIG, {"out": str(tmp_path / "o")})
    reasoner = _CountingMock(42)
    run_pipeline(config, reasoner=reasoner)
    manifest = json.loads((tmp_path / "o" / "manifest.json").read_text())
    oh = manifest["overhead"]
    counted = reasoner.seen_merges + reasoner.seen_instantiations
    assert oh["total_calls"] == counted
    assert oh["calls_per_entry"] == counted / oh["entries"]
    assert oh["entries"] == manifest["counts"]["subgraphs"]


def test_bad_config_exits_1(tmp_path, capsys):
    assert main(["pipeline", "--config", str(tmp_path / "missing.yaml")]) == 1
    bad = _config_variant(tmp_path, analysis__t_entry=0)
    assert main(["analyze", "--config", str(bad), "--out", str(tmp_path / "o")]) == 1
    assert "t_entry" in capsys.readouterr().err


def test_stage_failure_exits_2_with_stage_name(tmp_path, capsys):
    assert main(["label", "--config", str(CORPUS_CONFIG), "--out", str(tmp_path / "empty")]) == 2
    assert "label" in capsys.readouterr().err


def test_augment_deficit_exits_nonzero_naming_it(tmp_path, capsys):
    code = main(["pipeline", "--config", str(CORPUS_CONFIG), "--out", str(tmp_path / "o"), "--ratio", "10"])
    assert code == 2
    assert "deficit" in capsys.readouterr().err


def test_guard_violation_exits_3(tmp_path, capsys):
    test = read_sessions(CORPUS / "sessions" / "test.jsonl")
    test[0].provenance = "synthetic"
    write_sessions(test, tmp_path / "leaky.jsonl")
    cfg = _config_variant(tmp_path, dataset__test=str(tmp_path / "leaky.jsonl"))
    assert main(["pipeline", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 3
    assert test[0].session_id in capsys.readouterr().err
    assert "status: FAIL" in (tmp_path / "o" / "guard_report.txt").read_text()


def test_no_logging_apis_is_a_note_not_an_error(tmp_path, capsys):
    cfg = _config_variant(tmp_path, logging_apis=[])
    assert main(["analyze", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 0
    assert "no logging detected" in capsys.readouterr().out
    assert "no logging detected" in (tmp_path / "o" / "pruning_report.txt").read_text()


def test_overrides_change_the_config_hash(tmp_path):
    base = load_config(CORPUS_CONFIG)
    assert load_config(CORPUS_CONFIG, {"seed": 7}).config_hash() != base.config_hash()
    assert load_config(CORPUS_CONFIG, {"depth": 1}).t_depth == 1
    assert load_config(CORPUS_CONFIG, {"entries": 2}).t_entry == 2


def test_module_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "logsynth.cli", "analyze", "--config", str(CORPUS_CONFIG),
                           "--out", str(tmp_path / "o")], capture_output=True, text=True, timeout=60)
    assert proc.returncode == 0, proc.stderr
    assert proc.stdout.startswith("analyze: methods=46")


def test_help_lists_every_subcommand(capsys):
    with pytest.raises(SystemExit):
        main(["--help"])
    out = capsys.readouterr().out
    for name in (*STAGES, "pipeline"):
        assert name in out
