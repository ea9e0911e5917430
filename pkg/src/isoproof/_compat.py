"""Small helpers shared by several modules: TOML loading and bundled data files."""

from __future__ import annotations

import sys
from importlib import resources

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover - exercised on 3.10 only
    import tomli as tomllib


def data_text(name):
    return resources.files("isoproof").joinpath("data", name).read_text(encoding="utf-8")


def load_toml_text(text):
    return tomllib.loads(text)


def load_toml(path):
    with open(path, "rb") as f:
        return tomllib.load(f)


TOMLDecodeError = tomllib.TOMLDecodeError
