"""Shared prover types: configuration, results and the deadline helper."""

from __future__ import annotations

import os
import time
from dataclasses import dataclass, field
from enum import Enum

from ..errors import ConfigError

DEFAULT_TIMEOUT = 600.0
EXECUTABLE_ENV = "ISOPROOF_ISABELLE"


class Status(str, Enum):
    SUCCESS = "success"
    FAILURE = "failure"
    TIMEOUT = "timeout"


@dataclass(frozen=True)
class VerifyResult:
    status: Status
    message: str = ""
    elapsed_seconds: float = 0.0
    rebuilt_theories: int | None = None

    @property
    def ok(self):
        return self.status is Status.SUCCESS

    def to_record(self):
        return {"status": self.status.value, "message": self.message,
                "elapsed_seconds": self.elapsed_seconds, "rebuilt_theories": self.rebuilt_theories}

    @classmethod
    def from_record(cls, d):
        return cls(Status(d["status"]), d.get("message", ""), d.get("elapsed_seconds", 0.0),
                   d.get("rebuilt_theories"))


@dataclass
class ProverConfig:
    kind: str = "mock"  # "mock" or "external"
    executable: str | None = None
    cache_dir: str = ".isoproof-cache"
    timeout_seconds: float = DEFAULT_TIMEOUT
    # extra directories holding ROOT files (the "-d" dirs of a session build)
    session_dirs: list[str] = field(default_factory=list)
    max_workers: int = 2
    extra_args: list[str] = field(default_factory=list)

    def __post_init__(self):
        if self.kind not in ("mock", "external"):
            raise ConfigError(f"unknown prover kind {self.kind!r}")
        if not self.timeout_seconds or self.timeout_seconds <= 0:
            raise ConfigError("timeout_seconds must be positive")

    def resolved_executable(self):
        return self.executable or os.environ.get(EXECUTABLE_ENV) or "isabelle"


class Deadline:
    """Cooperative wall-clock limit used by the mock prover."""

    def __init__(self, seconds, clock=time.monotonic):
        self.clock = clock
        self.start = clock()
        self.limit = seconds

    @property
    def elapsed(self):
        return self.clock() - self.start

    def expired(self):
        return self.elapsed >= self.limit

    def sleep(self, seconds):
        """Sleep ``seconds`` but never past the deadline; True if the deadline hit."""
        remaining = self.limit - self.elapsed
        if seconds >= remaining:
            # land just past the limit so elapsed >= limit holds for the caller
            time.sleep(max(remaining, 0) + 0.01)
            return True
        time.sleep(seconds)
        return False


class TimedOut(Exception):
    pass
