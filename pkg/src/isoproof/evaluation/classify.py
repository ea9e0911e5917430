"""Pre-verification checks on generations and the three-way error taxonomy."""

from __future__ import annotations

import re
from dataclasses import dataclass
from functools import lru_cache

from .._compat import data_text, load_toml, load_toml_text

OK, REFUSED_OR_EMPTY, TOO_LONG, BANNED_TOKEN = "ok", "refused_or_empty", "too_long", "banned_token"
UNDEFINED, LOGIC, OTHER = "undefined", "logic", "other"
ERROR_CLASSES = (UNDEFINED, LOGIC, OTHER)
UNMATCHED = "unmatched"

_COMMENT = re.compile(r"\(\*.*?\*\)", re.DOTALL)
_BANNED = re.compile(r"\b(?:sorry|oops)\b", re.IGNORECASE)


@lru_cache(maxsize=None)
def refusal_patterns(path=None):
    text = data_text("refusal_patterns.txt") if path is None else open(path, encoding="utf-8").read()
    return tuple(re.compile(line.strip(), re.IGNORECASE) for line in text.splitlines()
                 if line.strip() and not line.lstrip().startswith("#"))


@lru_cache(maxsize=None)
def error_patterns(path=None):
    data = load_toml_text(data_text("error_patterns.toml")) if path is None else load_toml(path)
    out = []
    for name, cls, regex in data["patterns"]:
        if cls not in ERROR_CLASSES:
            raise ValueError(f"error pattern {name}: unknown class {cls}")
        out.append((name, cls, re.compile(regex)))
    return tuple(out)


def generation_units(text, reported=None):
    """Endpoint-reported token usage when available, whitespace tokens otherwise."""
    if reported is not None:
        return int(reported)
    return len(text.split())


@dataclass(frozen=True)
class Precheck:
    status: str
    flags: tuple = ()  # every rule that fired, in rule order

    @property
    def ok(self):
        return self.status == OK


def precheck(generation, max_units=2048, reported_units=None, refusals=None):
    """Screen a generation before it reaches the prover.

    Refusal/empty wins over a banned token, which wins over length; all
    conditions that hold are kept in ``flags``.
    """
    refusals = refusal_patterns() if refusals is None else refusals
    flags = []
    stripped = generation.strip()
    if not stripped or any(p.search(generation) for p in refusals):
        flags.append(REFUSED_OR_EMPTY)
    if _BANNED.search(_COMMENT.sub(" ", generation)):
        flags.append(BANNED_TOKEN)
    if generation_units(generation, reported_units) > max_units:
        flags.append(TOO_LONG)
    return Precheck(flags[0] if flags else OK, tuple(flags))


def precheck_message(check, max_units=2048):
    """Error text handed to a fixing round when a generation never reached the prover."""
    return {
        REFUSED_OR_EMPTY: "No proof was produced",
        BANNED_TOKEN: "The proof uses sorry or oops, which are not accepted",
        TOO_LONG: f"The proof is longer than {max_units} tokens",
    }.get(check.status, "")


def classify_message(message):
    """(class, pattern name) for a raw prover message."""
    for name, cls, rx in error_patterns():
        if rx.search(message or ""):
            return cls, name
    return OTHER, UNMATCHED


def classify_error(record):
    """Error class of a failed trial record: precheck failures and timeouts are
    ``other``; prover messages go through the pattern table."""
    return classify_record(record.precheck, record.verify)[0]


def classify_record(precheck_status, verify):
    if precheck_status != OK:
        return OTHER, precheck_status
    if verify is None:
        return OTHER, UNMATCHED
    if verify.status.value == "timeout":
        return OTHER, "timeout"
    return classify_message(verify.message)
