import sys
from pathlib import Path

import pytest

TESTS = Path(__file__).resolve().parent
sys.path.insert(0, str(TESTS))

FIXTURES = TESTS / "fixtures"
CORPUS_CONFIG = FIXTURES / "corpus" / "logsynth.yaml"
SMALL_CONFIG = FIXTURES / "small" / "logsynth.yaml"
GOLDEN_RUN = FIXTURES / "golden" / "pipeline"


@pytest.fixture(scope="session")
def corpus_config():
    from logsynth.config import load_config
    return load_config(CORPUS_CONFIG)


@pytest.fixture(scope="session")
def corpus_run(corpus_config, tmp_path_factory):
    """Analysis state of the fixture corpus (index, templates, flows, ...)."""
    from dataclasses import replace
    from logsynth.pipeline import Run
    out = tmp_path_factory.mktemp("corpus_run")
    return Run(replace(corpus_config, output_dir=str(out)))


@pytest.fixture(scope="session")
def corpus_assembly(corpus_run):
    """Assembly of every corpus entry with a fresh mock reasoner."""
    from logsynth.assembler import assemble_all
    from logsynth.reasoner import MockReasoner
    reasoner = MockReasoner(42)
    results = assemble_all(corpus_run.selection.subgraphs, corpus_run.flows, reasoner,
                           corpus_run.config.bounds, workers=1)
    return results, reasoner


@pytest.fixture()
def logging_config():
    from logsynth.config import LogApiPattern, LoggingConfig
    return LoggingConfig(tuple(LogApiPattern(f"*Logger.{m}", m.upper())
                               for m in ("trace", "debug", "info", "warn", "error")))


LOG_APIS = [{"pattern": f"*Logger.{m}", "level": m.upper()} for m in ("trace", "debug", "info", "warn", "error")]


def java_run(tmp_path, source: str, **extra):
    """A Run over a one-file project ``source`` (class body of package ``t``), mock seed 42."""
    from logsynth.config import config_from_dict
    from logsynth.pipeline import Run
    src = tmp_path / "src"
    src.mkdir(exist_ok=True)
    (src / "T.java").write_text("package t;\nimport org.slf4j.Logger;\nclass T {\n"
                                "  static final Logger LOG = null;\n" + source + "\n}\n")
    data = {"source_root": str(src), "output_dir": str(tmp_path / "out"), "logging_apis": LOG_APIS,
            "reasoner": {"mode": "mock", "seed": 42}, "workers": 1}
    for key, value in extra.items():
        data[key] = value
    return Run(config_from_dict(data))


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(results):
        ok, name, detail = results[num]
        terminalreporter.write_line(f"[{'PASS' if ok else 'FAIL'}] AC{num:02d} {name}: {detail}")
