"""Sampling settings, demonstration selection and chat prompt assembly."""

from __future__ import annotations

import hashlib
import json
import logging
import random
from dataclasses import dataclass, field
from functools import lru_cache

from .._compat import data_text, load_toml, load_toml_text
from ..errors import ConfigError

log = logging.getLogger(__name__)

N_DEMONSTRATIONS = 5
AUGMENTATIONS = ("similar", "dependency", "fixing", "try_again")


@dataclass
class SamplingParams:
    k: int = 1
    temperature: float | None = None  # None picks the default for k
    top_p: float = 0.95
    max_generation_units: int = 2048

    def __post_init__(self):
        if self.temperature is None:
            self.temperature = 0.0 if self.k == 1 else 0.5
        if self.k < 1:
            raise ConfigError("k must be >= 1")
        if self.temperature < 0:
            raise ConfigError("temperature must be >= 0")
        if not 0 < self.top_p <= 1:
            raise ConfigError("top_p must lie in (0, 1]")
        if self.max_generation_units < 1:
            raise ConfigError("max_generation_units must be >= 1")

    def to_record(self):
        return {"k": self.k, "temperature": self.temperature, "top_p": self.top_p,
                "max_generation_units": self.max_generation_units}


@lru_cache(maxsize=None)
def prompt_texts(path=None):
    data = load_toml_text(data_text("prompts.toml")) if path is None else load_toml(path)
    return {k: v.strip() for k, v in data.items()}


def instruction(augmentations=(), texts=None):
    """Base instruction plus one paragraph per enabled augmentation, in a fixed order."""
    texts = texts or prompt_texts()
    parts = [texts["base"]] + [texts[a] for a in AUGMENTATIONS if a in augmentations]
    return "\n\n".join(parts)


@dataclass
class Demonstration:
    lemma_id: str
    spec: str
    proof: str
    blocks: str = ""  # augmentation blocks shown before the spec
    failed_proof: str | None = None  # first-round attempt for fixing demonstrations
    error: str | None = None


@dataclass
class PromptBundle:
    instruction: str
    demonstrations: list = field(default_factory=list)
    augmentation_blocks: str = ""
    target_spec: str = ""
    target_id: str = ""

    def __post_init__(self):
        if any(d.lemma_id == self.target_id for d in self.demonstrations):
            raise ValueError(f"{self.target_id} is among its own demonstrations")


def user_text(blocks, spec):
    return f"{blocks}\n\n{spec}" if blocks else spec


def error_turn(message):
    return "{" + message.strip() + "}"


def assemble_prompt(bundle: PromptBundle, second_round=None, try_again_text=None):
    """Ordered chat messages for one request.

    ``second_round`` is ``(previous proof, error message or None)``; with it
    the first-round exchange is followed by the error in curly brackets, or
    by the try-again request when the error is withheld.
    """
    again = try_again_text or prompt_texts()["try_again_request"]
    msgs = [{"role": "system", "content": bundle.instruction}]
    for d in bundle.demonstrations:
        msgs.append({"role": "user", "content": user_text(d.blocks, d.spec)})
        if d.failed_proof is not None:
            msgs.append({"role": "assistant", "content": d.failed_proof})
            msgs.append({"role": "user", "content": error_turn(d.error) if d.error else again})
        msgs.append({"role": "assistant", "content": d.proof})
    msgs.append({"role": "user", "content": user_text(bundle.augmentation_blocks, bundle.target_spec)})
    if second_round is not None:
        previous, error = second_round
        msgs.append({"role": "assistant", "content": previous})
        msgs.append({"role": "user", "content": error_turn(error) if error is not None else again})
    return msgs


def prompt_digest(messages):
    blob = json.dumps(messages, sort_keys=True, ensure_ascii=False).encode()
    return hashlib.sha256(blob).hexdigest()


def select_demonstrations(pools, seed, n=N_DEMONSTRATIONS):
    """Pick ``n`` demonstration lemmas per category.

    ``pools`` maps category -> lemma ids (or objects with ``.id``). Returns
    ``(demos, remaining)``, both category -> list, where ``remaining`` is
    the evaluation set with the demonstrations removed. Deterministic in
    ``seed``; a category with fewer than ``n + 1`` lemmas keeps at most ``n``
    demonstrations and logs a warning.
    """
    demos, rest = {}, {}
    for cat in sorted(pools):
        items = sorted(pools[cat], key=_ident)
        if len(items) <= n:
            log.warning("category %s has only %d lemmas; all become demonstrations", cat, len(items))
        rng = random.Random(f"{seed}:{cat}")
        chosen = rng.sample(items, min(n, len(items)))
        chosen_ids = {_ident(x) for x in chosen}
        demos[cat] = sorted(chosen, key=_ident)
        rest[cat] = [x for x in items if _ident(x) not in chosen_ids]
    return demos, rest


def _ident(x):
    return getattr(x, "id", x)
