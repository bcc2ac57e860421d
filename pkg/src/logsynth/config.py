"""Configuration loading.

One YAML file drives every stage. Top-level sections::

    language:       {extensions: [".java"], exclude_dirs: ["test"]}
    logging_apis:   [{pattern: "*.Logger.info", level: INFO}, ...]
    labeling:       {severity_triggers, exception_names, keywords, status_patterns}
    analysis:       {t_entry: 10, t_depth: 3}
    assembly:       {max_local_paths_per_method, max_sequences_per_entry,
                     max_recursion_depth, loop_unroll}
    reasoner:       {mode: mock|live, seed, endpoint_url, model_name,
                     api_key_env, max_retries, request_timeout, max_inflight,
                     transcript, temperature}
    dataset:        {train, test, ratio, seed, review_sample}
    coverage:       {observed: [paths]}
    source_root:    path
    output_dir:     path
    workers:        int

Relative paths are resolved against the directory holding the config file.
"""

from __future__ import annotations

import hashlib
import json
import os
import re
from dataclasses import asdict, dataclass, field, replace
from fractions import Fraction
from pathlib import Path
from typing import Any

import yaml

LEVELS = ("TRACE", "DEBUG", "INFO", "WARN", "ERROR", "FATAL")

_PATTERN_RE = re.compile(r"^[A-Za-z_$*?][A-Za-z0-9_$*?]*(\.[A-Za-z_$*?][A-Za-z0-9_$*?]*)*$")


class ConfigError(ValueError):
    """Invalid configuration; ``field`` names the offending key."""

    def __init__(self, field_name: str, message: str):
        super().__init__(f"{field_name}: {message}")
        self.field = field_name


@dataclass(frozen=True)
class LogApiPattern:
    pattern: str
    level: str


@dataclass(frozen=True)
class LoggingConfig:
    apis: tuple[LogApiPattern, ...] = ()


@dataclass(frozen=True)
class SubsetConfig:
    extensions: tuple[str, ...] = (".java",)
    exclude_dirs: tuple[str, ...] = ()
    logging: LoggingConfig = field(default_factory=LoggingConfig)


@dataclass(frozen=True)
class AssemblyBounds:
    max_local_paths_per_method: int = 64
    max_sequences_per_entry: int = 256
    max_recursion_depth: int = 1
    loop_unroll: frozenset[int] = frozenset({0, 1})

    def __post_init__(self):
        for name in ("max_local_paths_per_method", "max_sequences_per_entry", "max_recursion_depth"):
            value = getattr(self, name)
            if not isinstance(value, int) or value < 1:
                raise ConfigError(f"assembly.{name}", f"must be a positive integer, got {value!r}")
        if not self.loop_unroll or not set(self.loop_unroll) <= {0, 1, 2}:
            raise ConfigError("assembly.loop_unroll", "must be a nonempty subset of {0, 1, 2}")


@dataclass(frozen=True)
class ReasonerConfig:
    mode: str = "mock"
    seed: int | None = 42
    endpoint_url: str = ""
    model_name: str = ""
    api_key_env: str = ""
    max_retries: int = 2
    request_timeout: float = 60.0
    max_inflight: int = 4
    transcript: str | None = None

    # Fixed; requests always carry temperature 0.
    @property
    def temperature(self) -> int:
        return 0


@dataclass(frozen=True)
class LabelingConfig:
    severity_triggers: tuple[str, ...] = ("ERROR", "FATAL")
    exception_names: tuple[str, ...] = (
        "IOError",
        "NullPointerException",
        "IOException",
        "FileNotFoundException",
        "IllegalStateException",
        "IllegalArgumentException",
        "InterruptedException",
        "TimeoutException",
        "SocketException",
        "SocketTimeoutException",
        "OutOfMemoryError",
    )
    keywords: tuple[str, ...] = ("timeout", "refused", "invalid state")
    status_patterns: tuple[str, ...] = (
        r"(?i)\b(?:status|code|http)(?:/\d(?:\.\d)?)?\s*[:=]?\s*[45]\d\d\b",
    )


@dataclass(frozen=True)
class DatasetConfig:
    train: str | None = None
    test: str | None = None
    ratio: Fraction = Fraction(0)
    seed: int = 42
    review_sample: int = 10


@dataclass(frozen=True)
class PipelineConfig:
    source_root: str
    output_dir: str
    subset: SubsetConfig = field(default_factory=SubsetConfig)
    labeling: LabelingConfig = field(default_factory=LabelingConfig)
    t_entry: int = 10
    t_depth: int = 3
    bounds: AssemblyBounds = field(default_factory=AssemblyBounds)
    reasoner: ReasonerConfig = field(default_factory=ReasonerConfig)
    dataset: DatasetConfig = field(default_factory=DatasetConfig)
    observed: tuple[str, ...] = ()
    workers: int = 0
    raw_text: str = ""

    def config_hash(self) -> str:
        """Hash of the effective configuration (file text plus overrides)."""
        payload = json.dumps(self.to_dict(), sort_keys=True, default=str)
        return hashlib.sha256(payload.encode()).hexdigest()

    def to_dict(self) -> dict[str, Any]:
        d = asdict(self)
        d.pop("raw_text")
        # Paths are recorded relative to nothing machine-specific.
        for key in ("source_root", "output_dir"):
            d.pop(key)
        d["dataset"].pop("train")
        d["dataset"].pop("test")
        d.pop("observed")
        d["bounds"]["loop_unroll"] = sorted(self.bounds.loop_unroll)
        d["dataset"]["ratio"] = str(self.dataset.ratio)
        d["reasoner"].pop("transcript")
        return d

    def effective_workers(self) -> int:
        return self.workers if self.workers > 0 else (os.cpu_count() or 1)


def parse_ratio(value: Any) -> Fraction:
    """Parse an augmentation ratio exactly (``0.001`` is 1/1000, not a float)."""
    try:
        r = Fraction(str(value))
    except (ValueError, ZeroDivisionError) as exc:
        raise ConfigError("dataset.ratio", f"not a number: {value!r}") from exc
    if r < 0:
        raise ConfigError("dataset.ratio", "must be nonnegative")
    return r


def load_logging_config(items: Any) -> LoggingConfig:
    if items is None:
        return LoggingConfig()
    if not isinstance(items, list):
        raise ConfigError("logging_apis", "must be a list of {pattern, level}")
    apis = []
    for i, item in enumerate(items):
        if not isinstance(item, dict) or "pattern" not in item or "level" not in item:
            raise ConfigError(f"logging_apis[{i}]", "needs 'pattern' and 'level'")
        pattern, level = str(item["pattern"]), str(item["level"]).upper()
        if not _PATTERN_RE.match(pattern):
            raise ConfigError(f"logging_apis[{i}].pattern", f"invalid pattern syntax {pattern!r}")
        if level not in LEVELS:
            raise ConfigError(f"logging_apis[{i}].level", f"unknown level {level!r}")
        apis.append(LogApiPattern(pattern, level))
    return LoggingConfig(tuple(apis))


def _str_tuple(value: Any, name: str, lower: bool = False) -> tuple[str, ...]:
    if not isinstance(value, (list, tuple)) or not all(isinstance(v, str) for v in value):
        raise ConfigError(name, "must be a list of strings")
    if not value:
        raise ConfigError(name, "must not be empty")
    return tuple(v.lower() if lower else v for v in value)


def load_labeling_config(data: Any) -> LabelingConfig:
    data = data or {}
    defaults = LabelingConfig()
    kwargs = {}
    for key in ("severity_triggers", "exception_names", "keywords", "status_patterns"):
        if key in data:
            kwargs[key] = _str_tuple(data[key], f"labeling.{key}", lower=(key == "keywords"))
    cfg = replace(defaults, **kwargs)
    for lvl in cfg.severity_triggers:
        if lvl not in LEVELS:
            raise ConfigError("labeling.severity_triggers", f"unknown level {lvl!r}")
    for pat in cfg.status_patterns:
        try:
            re.compile(pat)
        except re.error as exc:
            raise ConfigError("labeling.status_patterns", f"bad regex {pat!r}: {exc}") from exc
    return cfg


def _int(data: dict, key: str, default: int, section: str, minimum: int = 0) -> int:
    value = data.get(key, default)
    if not isinstance(value, int) or isinstance(value, bool) or value < minimum:
        raise ConfigError(f"{section}.{key}", f"must be an integer >= {minimum}, got {value!r}")
    return value


def load_config(path: str | os.PathLike, overrides: dict[str, Any] | None = None) -> PipelineConfig:
    """Load and validate a pipeline config; ``overrides`` mirror the CLI flags."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError("config", f"cannot read {path}: {exc}") from exc
    try:
        data = yaml.safe_load(text) or {}
    except yaml.YAMLError as exc:
        raise ConfigError("config", f"invalid YAML: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError("config", "top level must be a mapping")
    return config_from_dict(data, base=path.parent, overrides=overrides, raw_text=text)


def config_from_dict(data: dict, base: Path | None = None, overrides: dict[str, Any] | None = None,
                     raw_text: str = "") -> PipelineConfig:
    base = base or Path.cwd()
    overrides = {k: v for k, v in (overrides or {}).items() if v is not None}

    def resolve(p: str | None) -> str | None:
        if p is None:
            return None
        q = Path(p)
        return str(q if q.is_absolute() else (base / q))

    lang = data.get("language") or {}
    subset = SubsetConfig(
        extensions=tuple(lang.get("extensions", [".java"])),
        exclude_dirs=tuple(lang.get("exclude_dirs", [])),
        logging=load_logging_config(data.get("logging_apis")),
    )

    analysis = data.get("analysis") or {}
    t_entry = _int(analysis, "t_entry", 10, "analysis", minimum=1)
    t_depth = _int(analysis, "t_depth", 3, "analysis", minimum=0)
    if "entries" in overrides:
        t_entry = overrides["entries"]
        if t_entry < 1:
            raise ConfigError("analysis.t_entry", "must be >= 1")
    if "depth" in overrides:
        t_depth = overrides["depth"]
        if t_depth < 0:
            raise ConfigError("analysis.t_depth", "must be >= 0")

    asm = data.get("assembly") or {}
    defaults = AssemblyBounds()
    bounds = AssemblyBounds(
        max_local_paths_per_method=asm.get("max_local_paths_per_method", defaults.max_local_paths_per_method),
        max_sequences_per_entry=asm.get("max_sequences_per_entry", defaults.max_sequences_per_entry),
        max_recursion_depth=asm.get("max_recursion_depth", defaults.max_recursion_depth),
        loop_unroll=frozenset(asm.get("loop_unroll", sorted(defaults.loop_unroll))),
    )

    rs = data.get("reasoner") or {}
    if "temperature" in rs and rs["temperature"] != 0:
        raise ConfigError("reasoner.temperature", "is fixed at 0 and cannot be overridden")
    mode = "mock" if overrides.get("mock") else rs.get("mode", "mock")
    if mode not in ("mock", "live"):
        raise ConfigError("reasoner.mode", f"must be 'mock' or 'live', got {mode!r}")
    seed = overrides.get("seed", rs.get("seed"))
    reasoner = ReasonerConfig(
        mode=mode,
        seed=seed,
        endpoint_url=rs.get("endpoint_url", ""),
        model_name=rs.get("model_name", ""),
        api_key_env=rs.get("api_key_env", ""),
        max_retries=_int(rs, "max_retries", 2, "reasoner"),
        request_timeout=float(rs.get("request_timeout", 60.0)),
        max_inflight=_int(rs, "max_inflight", 4, "reasoner", minimum=1),
        transcript=resolve(rs.get("transcript")),
    )
    if mode == "mock" and (seed is None or not isinstance(seed, int)):
        raise ConfigError("reasoner.seed", "mock mode requires an integer seed")
    if mode == "live":
        if not reasoner.endpoint_url:
            raise ConfigError("reasoner.endpoint_url", "live mode requires an endpoint")
        if not reasoner.api_key_env:
            raise ConfigError("reasoner.api_key_env", "live mode requires the API key variable name")

    ds = data.get("dataset") or {}
    ratio = parse_ratio(overrides["ratio"] if "ratio" in overrides else ds.get("ratio", 0))
    dataset = DatasetConfig(
        train=resolve(ds.get("train")),
        test=resolve(ds.get("test")),
        ratio=ratio,
        seed=_int(ds, "seed", seed if isinstance(seed, int) else 42, "dataset"),
        review_sample=_int(ds, "review_sample", 10, "dataset"),
    )

    cov = data.get("coverage") or {}
    observed = tuple(resolve(p) for p in cov.get("observed", []))

    source_root = data.get("source_root")
    if not source_root:
        raise ConfigError("source_root", "is required")
    out = overrides.get("out") or data.get("output_dir") or "out"
    out_path = out if "out" in overrides else resolve(out)

    return PipelineConfig(
        source_root=resolve(source_root),
        output_dir=str(out_path),
        subset=subset,
        labeling=load_labeling_config(data.get("labeling")),
        t_entry=t_entry,
        t_depth=t_depth,
        bounds=bounds,
        reasoner=reasoner,
        dataset=dataset,
        observed=observed,
        workers=_int(data, "workers", 0, "config"),
        raw_text=raw_text,
    )
