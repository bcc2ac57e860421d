import os

import pytest

from conftest import CORPUS_CONFIG, SMALL_CONFIG
from logsynth.config import ConfigError, LogApiPattern, LoggingConfig, SubsetConfig, config_from_dict, load_config
from logsynth.frontend import (DuplicateMethodError, EmptyLogMessage, FrontendError, ProjectIndex, deserialize_ast,
                               extract_template, extract_templates, infer_placeholder_kind, parse_snippet,
                               parse_source, read_template_dump, recognize_log_calls, serialize_ast,
                               write_template_dump)

PRELUDE = ("String blockId; String blk; String addr; String host; String msg; String y; int a; int b;"
           " int n; int i; int p; long size; Exception e;")

# Written by hand before the normalizer: raw call -> (pattern, placeholder count).
NORMALIZATION_TABLE = [
    ('LOG.info("Received block " + blockId);', "Received block <*>", 1),
    ('LOG.warn("shutting down");', "shutting down", 0),
    ('LOG.error("Deleting block {} file {}", a, b);', "Deleting block <*> file <*>", 2),
    ('LOG.info("Served " + blk + " to " + addr);', "Served <*> to <*>", 2),
    ('LOG.info(blockId + " received");', "<*> received", 1),
    ('LOG.debug("a" + "b" + y);', "ab<*>", 1),
    ('LOG.info("  many   spaces  " + y);', "many spaces <*>", 1),
    ('LOG.info(String.format("Got %d bytes from %s", n, host));', "Got <*> bytes from <*>", 2),
    ('LOG.info("Progress 100%% done");', "Progress 100%% done", 0),
    ('LOG.info(String.format("Progress %d%% done", p));', "Progress <*>% done", 1),
    ('LOG.info("Block {} (size {})", blockId, size);', "Block <*> (size <*>)", 2),
    ('LOG.info("tab\\there");', "tab here", 0),
    ("LOG.info(msg);", "<*>", 1),
    ('LOG.info("value=" + (a + b));', "value=<*>", 1),
    ('LOG.info("id=" + e.getMessage());', "id=<*>", 1),
    ('LOG.error("failed: {}", e.getMessage(), e);', "failed: <*>", 1),
    ("LOG.info(\"x\" + 'c' + y);", "xc<*>", 1),
    ('LOG.info("line1\\nline2");', "line1 line2", 0),
    ('LOG.warn("{} of {} done", i, n);', "<*> of <*> done", 2),
    ('LOG.info("Received block <*>");', "Received block <*>", 1),
]


def _single_template(call, logging_config):
    m = parse_snippet(call, logging_config, prelude=PRELUDE)
    hits = recognize_log_calls(m, logging_config)
    assert len(hits) == 1, call
    node, level = hits[0]
    return extract_template(node, level, m.method_id)


@pytest.mark.parametrize("call,pattern,count", NORMALIZATION_TABLE)
def test_normalization_golden_table(call, pattern, count, logging_config):
    t = _single_template(call, logging_config)
    assert t.pattern == pattern
    assert len(t.placeholder_kinds) == count == t.pattern.count("<*>")


def test_normalization_is_idempotent(logging_config):
    for call, pattern, _ in NORMALIZATION_TABLE:
        again = _single_template(f"LOG.info({_java_string(pattern)});", logging_config)
        assert again.pattern == pattern


def _java_string(s):
    return '"' + s.replace("\\", "\\\\").replace('"', '\\"') + '"'


def test_levels_come_from_api_pattern(logging_config):
    m = parse_snippet('LOG.info("a ERROR b"); LOG.error("fine");', logging_config)
    assert [lvl for _, lvl in recognize_log_calls(m, logging_config)] == ["INFO", "ERROR"]


def test_arithmetic_only_method_has_no_log_calls(logging_config):
    m = parse_snippet("int x = 1 + 2; x = x * 3;", logging_config)
    assert recognize_log_calls(m, logging_config) == []


def test_missing_message_is_skipped_with_warning(logging_config):
    m = parse_snippet("LOG.info();", logging_config)
    node, level = recognize_log_calls(m, logging_config)[0]
    with pytest.raises(EmptyLogMessage):
        extract_template(node, level)
    table = extract_templates(ProjectIndex({m.method_id: m}), logging_config)
    assert len(table) == 0 and len(table.warnings) == 1


@pytest.mark.parametrize("expr,numeric,kind", [
    ("blockId", False, "identifier"), ("blk", False, "identifier"), ("datanodeAddr", False, "address"),
    ("host", False, "address"), ("filePath", False, "path"), ("count", True, "numeric"),
    ("paths.size()", True, "numeric"), ("reason", False, "generic"),
])
def test_placeholder_kind_heuristic(expr, numeric, kind):
    assert infer_placeholder_kind(expr, numeric) == kind


# -- project parsing ---------------------------------------------------------


def test_small_fixture_has_seven_methods():
    cfg = load_config(SMALL_CONFIG)
    index = parse_source(cfg.source_root, cfg.subset)
    assert len(index) == 7
    assert not index.errors
    assert {u.qualified_type_name for u in index.units} == {"demo.Store", "demo.Helper", "demo.Client"}
    assert all(m.source_text.startswith("public") for m in index.methods.values())


def test_lambda_body_is_one_opaque_statement():
    cfg = load_config(SMALL_CONFIG)
    run = parse_source(cfg.source_root, cfg.subset)["demo.Client.run/1"]
    kinds = [(n.kind, n.detail.get("construct")) for n in run.body.walk()]
    assert ("other-statement", "lambda_expression") in kinds
    # the LOG.warn inside the lambda is not a log call of run/1
    assert [n.kind for n in run.body.walk()].count("log-call") == 0


def test_wrapper_is_not_an_anchor_but_its_caller_is_transitive():
    from logsynth.callgraph import ANCHOR, TRANSITIVE, build_call_graph
    cfg = load_config(SMALL_CONFIG)
    index = parse_source(cfg.source_root, cfg.subset)
    run = index["demo.Client.run/1"]
    assert recognize_log_calls(run, cfg.subset.logging) == []  # myLogHelper(...) is not a logging API
    graph = build_call_graph(index, extract_templates(index, cfg.subset.logging))
    assert graph.role["demo.Helper.myLogHelper/1"] == ANCHOR
    assert graph.role["demo.Client.run/1"] == TRANSITIVE


def test_empty_directory(tmp_path):
    index = parse_source(tmp_path, SubsetConfig())
    assert len(index) == 0 and index.errors == []


def test_unreadable_file_is_recorded_and_parsing_continues(tmp_path):
    (tmp_path / "A.java").write_text("class A { void f() {} }")
    (tmp_path / "B.java").write_bytes(b"class B { void g() { String s = \"\xff\xfe\"; } }")
    index = parse_source(tmp_path, SubsetConfig())
    assert "A.f/0" in index
    assert [e.path for e in index.errors] == ["B.java"]


def test_duplicate_method_id_names_both_locations(tmp_path):
    # same name and arity in one class collapses to one method id
    (tmp_path / "A.java").write_text("package p;\nclass A {\n void f(int x) {}\n void f(String s) {}\n}")
    with pytest.raises(DuplicateMethodError) as exc:
        parse_source(tmp_path, SubsetConfig())
    assert "A.java:3" in str(exc.value) and "A.java:4" in str(exc.value)


def test_duplicate_type_across_files_is_fatal(tmp_path):
    (tmp_path / "A.java").write_text("package p; class A { void f() {} }")
    (tmp_path / "B.java").write_text("package p; class A { void f() {} }")
    with pytest.raises(FrontendError) as exc:
        parse_source(tmp_path, SubsetConfig())
    assert "A.java" in str(exc.value) and "B.java" in str(exc.value)


def test_invalid_logging_pattern_fails_at_config_load():
    with pytest.raises(ConfigError):
        config_from_dict({"source_root": "x", "logging_apis": [{"pattern": "Log ger.info", "level": "INFO"}]})
    with pytest.raises(ConfigError):
        config_from_dict({"source_root": "x", "logging_apis": [{"pattern": "*.info", "level": "LOUD"}]})


def test_ast_round_trip_on_corpus():
    cfg = load_config(CORPUS_CONFIG)
    index = parse_source(cfg.source_root, cfg.subset)
    for m in index.methods.values():
        if m.body is not None:
            again = deserialize_ast(serialize_ast(m.body))
            assert again == m.body
            assert serialize_ast(again) == serialize_ast(m.body)


def test_template_ids_are_deterministic_and_dense(tmp_path):
    cfg = load_config(CORPUS_CONFIG)
    a = extract_templates(parse_source(cfg.source_root, cfg.subset), cfg.subset.logging)
    b = extract_templates(parse_source(cfg.source_root, cfg.subset), cfg.subset.logging)
    assert [t.dump_line() for t in a.templates] == [t.dump_line() for t in b.templates]
    assert [t.template_id for t in a.templates] == list(range(1, len(a) + 1))


def test_template_dump_round_trip(tmp_path):
    cfg = load_config(CORPUS_CONFIG)
    table = extract_templates(parse_source(cfg.source_root, cfg.subset), cfg.subset.logging)
    path = tmp_path / "templates.tsv"
    write_template_dump(table, path)
    raw = path.read_bytes()
    assert b"\r" not in raw
    back = read_template_dump(path)
    assert [(t.template_id, t.level, t.location, t.pattern) for t in back] == \
           [(t.template_id, t.level, t.location, t.pattern) for t in table.templates]
    for line in raw.decode().splitlines():
        assert len(line.split("\t")) == 5


def test_corpus_shape():
    cfg = load_config(CORPUS_CONFIG)
    index = parse_source(cfg.source_root, cfg.subset)
    table = extract_templates(index, cfg.subset.logging)
    files = [f for _, _, fs in os.walk(cfg.source_root) for f in fs if f.endswith(".java")]
    assert 12 <= len(files) <= 18
    assert 25 <= len(table) <= 40
    for t in table.templates:
        assert t.pattern.count("<*>") == len(t.placeholder_kinds)
        assert t.level in ("TRACE", "DEBUG", "INFO", "WARN", "ERROR", "FATAL")


def test_log_inside_lambda_in_corpus_is_not_extracted():
    cfg = load_config(CORPUS_CONFIG)
    index = parse_source(cfg.source_root, cfg.subset)
    table = extract_templates(index, cfg.subset.logging)
    assert all("lambda" not in t.pattern.lower() for t in table.templates)
    lambdas = [n for m in index.methods.values() if m.body for n in m.body.walk()
               if n.detail.get("construct") == "lambda_expression"]
    assert lambdas


def test_logging_config_with_no_apis(tmp_path, logging_config):
    m = parse_snippet('LOG.info("x");', LoggingConfig(()))
    assert recognize_log_calls(m, LoggingConfig(())) == []
    assert recognize_log_calls(m, LoggingConfig((LogApiPattern("*Logger.info", "INFO"),))) != []
