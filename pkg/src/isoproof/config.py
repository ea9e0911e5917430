"""Run configuration loaded from a TOML file.

Relative paths are resolved against the config file's directory. Secrets
never live in the file: the endpoint credential is read from the environment
variable named by ``endpoint.api_key_env``.

Example::

    [run]
    manifest = "work/manifest.jsonl"
    workspace = "work"
    seed = 0
    k = 1
    categories = ["P1", "P2", "P3", "D"]

    [augment]
    similar = true

    [prover]
    kind = "mock"
    timeout_seconds = 600

    [endpoint]
    kind = "openai"
    base_url = "http://localhost:8000/v1"
    model = "gpt-4"
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field, fields
from pathlib import Path

from ._compat import TOMLDecodeError, load_toml
from .errors import ConfigError
from .evaluation.endpoint import EndpointConfig
from .evaluation.prompts import SamplingParams
from .prover.base import ProverConfig

BENCH_CATEGORY_NAMES = ("P1", "P2", "P3", "D")
SECRET_KEYS = frozenset({"api_key", "key", "token", "password", "secret", "authorization"})


@dataclass
class AugmentFlags:
    similar: bool = False
    dependency: bool = False
    fixing: bool = False
    try_again: bool = False
    dependency_on_d: bool = False  # retrieval of dependencies is skipped for D unless forced

    def enabled(self):
        return [n for n in ("similar", "dependency", "fixing", "try_again") if getattr(self, n)]

    def validate(self):
        if self.fixing and self.try_again:
            raise ConfigError("fixing and try_again are mutually exclusive: try_again is fixing without the error message")


@dataclass
class RunConfig:
    manifest: Path
    workspace: Path
    prover: ProverConfig = field(default_factory=ProverConfig)
    endpoint: EndpointConfig = field(default_factory=EndpointConfig)
    sampling: SamplingParams = field(default_factory=SamplingParams)
    augment: AugmentFlags = field(default_factory=AugmentFlags)
    categories: tuple = BENCH_CATEGORY_NAMES
    seed: int = 0
    short_circuit: bool = False
    workers: int = 1
    chunk_library: Path | None = None  # default: <workspace>/chunks.jsonl
    runs_dir: Path | None = None  # default: <workspace>/runs
    source: Path | None = None

    def __post_init__(self):
        self.manifest, self.workspace = Path(self.manifest), Path(self.workspace)
        self.chunk_library = Path(self.chunk_library or self.workspace / "chunks.jsonl")
        self.runs_dir = Path(self.runs_dir or self.workspace / "runs")
        self.categories = tuple(self.categories)

    @property
    def k(self):
        return self.sampling.k

    def validate(self, check_files=True):
        self.augment.validate()
        bad = [c for c in self.categories if c not in BENCH_CATEGORY_NAMES]
        if bad or not self.categories:
            raise ConfigError(f"categories must be a non-empty subset of {BENCH_CATEGORY_NAMES}, got {bad}")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")
        if check_files:
            if not self.manifest.is_file():
                raise ConfigError(f"manifest not found: {self.manifest}")
            needs_library = self.augment.similar or self.augment.dependency
            if needs_library and not self.chunk_library.is_file():
                raise ConfigError(f"similar/dependency augmentation needs a chunk library; run `isoproof chunks` "
                                  f"to create {self.chunk_library}")
        return self

    def describe(self):
        """Provenance record: everything that shapes results, nothing secret, no absolute paths."""
        return {
            "categories": list(self.categories), "seed": self.seed, "k": self.k,
            "sampling": self.sampling.to_record(), "augmentations": self.augment.enabled(),
            "dependency_on_d": self.augment.dependency_on_d, "short_circuit": self.short_circuit,
            "endpoint": self.endpoint.describe(),
            "prover": {"kind": self.prover.kind, "timeout_seconds": self.prover.timeout_seconds},
        }

    def digest(self):
        blob = json.dumps(self.describe(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:8]


def _reject_secrets(section, data):
    for key in data:
        if key.lower() in SECRET_KEYS:
            raise ConfigError(f"[{section}] {key}: credentials must come from the environment "
                              f"(set endpoint.api_key_env), not the config file")


def _build(cls, section, data, **extra):
    allowed = {f.name for f in fields(cls)}
    unknown = sorted(set(data) - allowed)
    if unknown:
        raise ConfigError(f"[{section}] unknown keys: {', '.join(unknown)}")
    try:
        return cls(**{**data, **extra})
    except TypeError as e:
        raise ConfigError(f"[{section}] {e}")


def load_config(path, overrides=None):
    """Read a RunConfig from TOML; ``overrides`` maps dotted keys (``augment.fixing``) to values."""
    path = Path(path)
    try:
        data = load_toml(path)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}")
    except TOMLDecodeError as e:
        raise ConfigError(f"{path}: {e}")
    for dotted, value in (overrides or {}).items():
        section, _, key = dotted.rpartition(".")
        data.setdefault(section or "run", {})[key] = value
    return config_from_dict(data, base=path.parent, source=path)


def config_from_dict(data, base=".", source=None):
    base = Path(base)
    unknown = sorted(set(data) - {"run", "prover", "endpoint", "sampling", "augment"})
    if unknown:
        raise ConfigError(f"unknown config sections: {', '.join(unknown)}")
    for section, body in data.items():
        _reject_secrets(section, body)
    run = dict(data.get("run", {}))

    def rel(p):
        return None if p is None else (base / p).resolve()

    for key in ("manifest", "workspace"):
        if key not in run:
            raise ConfigError(f"[run] {key} is required")
    prover = dict(data.get("prover", {}))
    if "cache_dir" in prover:
        prover["cache_dir"] = str(rel(prover["cache_dir"]))
    else:
        prover["cache_dir"] = str(rel(run["workspace"]) / "prover-cache")
    prover["session_dirs"] = [str(rel(p)) for p in prover.get("session_dirs", [])]
    endpoint = dict(data.get("endpoint", {}))
    if endpoint.get("script"):
        endpoint["script"] = str(rel(endpoint["script"]))
    sampling = dict(data.get("sampling", {}))
    if "k" in run:
        sampling.setdefault("k", run.pop("k"))
    allowed_run = {"manifest", "workspace", "categories", "seed", "short_circuit", "workers",
                   "chunk_library", "runs_dir"}
    unknown = sorted(set(run) - allowed_run)
    if unknown:
        raise ConfigError(f"[run] unknown keys: {', '.join(unknown)}")
    cfg = RunConfig(
        manifest=rel(run["manifest"]), workspace=rel(run["workspace"]),
        prover=_build(ProverConfig, "prover", prover),
        endpoint=_build(EndpointConfig, "endpoint", endpoint),
        sampling=_build(SamplingParams, "sampling", sampling),
        augment=_build(AugmentFlags, "augment", data.get("augment", {})),
        categories=tuple(run.get("categories", BENCH_CATEGORY_NAMES)),
        seed=int(run.get("seed", 0)), short_circuit=bool(run.get("short_circuit", False)),
        workers=int(run.get("workers", 1)),
        chunk_library=rel(run.get("chunk_library")), runs_dir=rel(run.get("runs_dir")),
        source=source)
    cfg.augment.validate()
    return cfg


def dump_describe(cfg):
    return json.dumps(cfg.describe(), indent=2, sort_keys=True) + "\n"

