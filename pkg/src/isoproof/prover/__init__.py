"""Prover drivers: a subprocess adapter for a real Isabelle and a mock."""

from .base import DEFAULT_TIMEOUT, EXECUTABLE_ENV, Deadline, ProverConfig, Status, VerifyResult
from .checker import term_tags
from .external import ExternalProver, first_error
from .mock import MockProver, mock_verify


def make_prover(config: ProverConfig):
    if config.kind == "external":
        return ExternalProver(config)
    return MockProver(config)


def build_session(config: ProverConfig, root_dir, session):
    return make_prover(config).build_session(root_dir, session)


__all__ = ["DEFAULT_TIMEOUT", "EXECUTABLE_ENV", "Deadline", "ExternalProver", "MockProver",
           "ProverConfig", "Status", "VerifyResult", "build_session", "first_error",
           "make_prover", "mock_verify", "term_tags"]
