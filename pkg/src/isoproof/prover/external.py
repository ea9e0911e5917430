"""Adapter around a real ``isabelle build`` subprocess."""

from __future__ import annotations

import os
import shutil
import signal
import subprocess
import time
from pathlib import Path

from ..errors import ExecutableNotFound
from .base import ProverConfig, Status, VerifyResult


def first_error(output):
    """The first ``***``-prefixed error block of a build log, prefix stripped."""
    lines = output.splitlines()
    block = []
    for line in lines:
        if line.startswith("***"):
            block.append(line[3:].strip())
        elif block:
            break
    if block:
        return "\n".join(b for b in block if b) or "build failed"
    tail = [l for l in lines if l.strip()]
    return tail[-1] if tail else "build failed"


class ExternalProver:
    kind = "external"

    def __init__(self, config: ProverConfig):
        self.config = config
        exe = config.resolved_executable()
        found = shutil.which(exe) or (exe if Path(exe).is_file() and os.access(exe, os.X_OK) else None)
        if found is None:
            raise ExecutableNotFound(f"prover executable {exe!r} not found")
        self.executable = found

    def command(self, root_dir, session):
        cmd = [self.executable, "build", "-b", *self.config.extra_args, "-d", str(root_dir)]
        for d in self.config.session_dirs:
            cmd += ["-d", str(d)]
        return cmd + [session]

    def build_session(self, root_dir, session):
        start = time.monotonic()
        limit = self.config.timeout_seconds
        proc = subprocess.Popen(self.command(root_dir, session), stdout=subprocess.PIPE,
                                stderr=subprocess.STDOUT, text=True, start_new_session=True)
        try:
            out, _ = proc.communicate(timeout=limit)
        except subprocess.TimeoutExpired:
            # the build spawns worker processes; kill the whole group
            try:
                os.killpg(proc.pid, signal.SIGKILL)
            except ProcessLookupError:
                pass
            proc.communicate()
            return VerifyResult(Status.TIMEOUT, f"Timeout after {limit:g}s",
                                max(time.monotonic() - start, limit))
        elapsed = time.monotonic() - start
        if proc.returncode == 0:
            return VerifyResult(Status.SUCCESS, "", elapsed)
        return VerifyResult(Status.FAILURE, first_error(out or ""), elapsed)
