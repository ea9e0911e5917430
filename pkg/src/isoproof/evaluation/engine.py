"""One lemma's trials: generate, precheck, splice, verify, classify, and the
optional second round that feeds the error back."""

from __future__ import annotations

import logging
import re
from dataclasses import dataclass, field

from ..errors import EndpointError, IsoproofError
from ..isolation import verify_proof
from ..prover.base import Status, VerifyResult
from .classify import OK, REFUSED_OR_EMPTY, Precheck, classify_record, precheck, precheck_message
from .metrics import FIRST, FIXING
from .prompts import Demonstration, PromptBundle, SamplingParams, assemble_prompt, prompt_digest

log = logging.getLogger(__name__)

_FENCE = re.compile(r"```[^\n`]*\n(.*?)```", re.DOTALL)


def clean_generation(text):
    """Unwrap a fenced code block if the model used one; otherwise keep the text."""
    m = _FENCE.search(text)
    return m.group(1).strip("\n") if m else text.strip("\n")


@dataclass
class TrialRecord:
    lemma_id: str
    category: str
    trial_index: int
    round: str
    sampling: dict
    prompt_digest: str
    generation_text: str
    units: int | None = None
    precheck: str = OK
    precheck_flags: list = field(default_factory=list)
    verify: VerifyResult | None = None
    error_class: str | None = None
    error_pattern: str | None = None
    note: str = ""

    @property
    def verified(self):
        return self.precheck == OK and self.verify is not None and self.verify.ok

    @property
    def failure_message(self):
        """Text given back to the model in a fixing round."""
        if self.precheck != OK:
            return self.note or precheck_message_for(self.precheck, self.sampling)
        return self.verify.message if self.verify is not None else self.note

    def to_record(self):
        d = {k: getattr(self, k) for k in self.__dataclass_fields__}
        d["verify"] = self.verify.to_record() if self.verify is not None else None
        d["precheck_flags"] = list(self.precheck_flags)
        return d

    @classmethod
    def from_record(cls, d):
        d = dict(d)
        d.pop("record", None)
        if d.get("verify") is not None:
            d["verify"] = VerifyResult.from_record(d["verify"])
        return cls(**d)


def precheck_message_for(status, sampling):
    return precheck_message(Precheck(status, (status,)), sampling.get("max_generation_units", 2048))


@dataclass
class EvalContext:
    """Everything a trial needs besides the lemma itself."""
    instruction: str
    demonstrations: dict  # category -> list of Demonstration
    sampling: SamplingParams
    augmentations: frozenset = frozenset()
    short_circuit: bool = False

    @property
    def second_round(self):
        if "fixing" in self.augmentations:
            return "fixing"
        if "try_again" in self.augmentations:
            return "try_again"
        return None


def run_trial(bench, lemma, messages, endpoint, prover, sampling, trial_index, rnd):
    rec = TrialRecord(lemma.id, lemma.category.value, trial_index, rnd, sampling.to_record(),
                      prompt_digest(messages), "")
    try:
        completion = endpoint.complete(messages, sampling)
    except EndpointError as e:
        # an unreachable endpoint is an empty output for this trial, never a crash
        rec.precheck, rec.precheck_flags = REFUSED_OR_EMPTY, [REFUSED_OR_EMPTY]
        rec.note = f"endpoint error: {e}"
        rec.error_class, rec.error_pattern = "other", "endpoint_error"
        return rec
    rec.generation_text = completion.text
    rec.units = completion.completion_tokens
    check = precheck(completion.text, sampling.max_generation_units, completion.completion_tokens)
    rec.precheck, rec.precheck_flags = check.status, list(check.flags)
    if check.ok:
        try:
            rec.verify = verify_proof(bench, clean_generation(completion.text), prover)
        except IsoproofError as e:
            rec.verify = VerifyResult(Status.FAILURE, f"{type(e).__name__}: {e}")
    if not rec.verified:
        rec.error_class, rec.error_pattern = classify_record(rec.precheck, rec.verify)
    return rec


def target_bundle(lemma, ctx, blocks=""):
    demos = [d for d in ctx.demonstrations.get(lemma.category.value, []) if d.lemma_id != lemma.id]
    return PromptBundle(ctx.instruction, demos, blocks, lemma.statement, lemma.id)


def evaluate_lemma(bench, lemma, k, augmentations, prover, endpoint, ctx, blocks=""):
    """Run ``k`` first-round trials (plus second rounds) for one lemma.

    ``augmentations`` overrides ``ctx.augmentations`` when given; ``blocks``
    are the retrieval blocks already computed for this lemma.
    """
    if augmentations is not None:
        ctx = EvalContext(ctx.instruction, ctx.demonstrations, ctx.sampling,
                          frozenset(augmentations), ctx.short_circuit)
    bundle = target_bundle(lemma, ctx, blocks)
    first = assemble_prompt(bundle)
    records = []
    for i in range(k):
        rec = run_trial(bench, lemma, first, endpoint, prover, ctx.sampling, i, FIRST)
        records.append(rec)
        if not rec.verified and ctx.second_round is not None:
            error = rec.failure_message if ctx.second_round == "fixing" else None
            msgs = assemble_prompt(bundle, second_round=(rec.generation_text, error))
            rec2 = run_trial(bench, lemma, msgs, endpoint, prover, ctx.sampling, i, FIXING)
            records.append(rec2)
        if ctx.short_circuit and any(r.verified for r in records):
            break
    return records


# ---------------------------------------------------------------------------
# fixing demonstrations

def bootstrap_fixing_demos(demos, benches, instruction_text, prover, endpoint, sampling):
    """Collect first-round mistakes on the demonstration lemmas.

    Each demonstration lemma is attempted once with the other demonstrations
    of its category as context. Returns category -> list of entries
    ``{"lemma_id", "failed_proof", "error"}`` (``failed_proof`` is None when
    the attempt verified).
    """
    out = {}
    one_shot = SamplingParams(k=1, temperature=sampling.temperature if sampling.k == 1 else 0.0,
                              top_p=sampling.top_p, max_generation_units=sampling.max_generation_units)
    for cat in sorted(demos):
        entries = []
        for lem in demos[cat]:
            others = [Demonstration(d.id, d.statement, d.proof_text) for d in demos[cat] if d.id != lem.id]
            bundle = PromptBundle(instruction_text, others, "", lem.statement, lem.id)
            rec = run_trial(benches[lem.id], lem, assemble_prompt(bundle), endpoint, prover,
                            one_shot, 0, FIRST)
            entries.append({"lemma_id": lem.id,
                            "failed_proof": None if rec.verified else rec.generation_text,
                            "error": None if rec.verified else rec.failure_message})
            log.info("fixing demo %s: %s", lem.id, "verified" if rec.verified else rec.error_class)
        out[cat] = entries
    return out
