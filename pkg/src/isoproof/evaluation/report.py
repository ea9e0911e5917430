"""Aggregate trial records into the ACC#k and error-composition tables."""

from __future__ import annotations

import json
from collections import defaultdict
from dataclasses import dataclass, field

from .classify import ERROR_CLASSES, UNMATCHED
from .metrics import FIRST, counted_records, format_count_pct, percentage

CATEGORY_ORDER = ("P1", "P2", "P3", "D")
REPORT_FORMAT = 1


def acc_levels(k):
    return sorted({1, k})


def failing_attempt(records, k):
    """The last counted attempt of an unsolved lemma: it decides the error class."""
    recs = counted_records(records, k)
    return recs[-1] if recs else None


@dataclass
class CategoryRow:
    category: str
    lemmas: int
    solved: dict  # "ACC#j" -> count of solved lemmas
    acc: dict  # "ACC#j" -> percentage
    errors: dict  # class -> count, over lemmas unsolved at ACC#k
    unmatched: int = 0

    @property
    def failed(self):
        return sum(self.errors.values())


@dataclass
class RunReport:
    k: int
    rows: list
    config: dict = field(default_factory=dict)
    retrieval: dict = field(default_factory=dict)

    def row(self, category):
        return next(r for r in self.rows if r.category == category)

    def to_json(self):
        return {"format": REPORT_FORMAT, "k": self.k, "config": self.config,
                "retrieval": self.retrieval,
                "categories": [{
                    "category": r.category, "lemmas": r.lemmas, "solved": r.solved,
                    "acc": r.acc, "failed": r.failed,
                    "errors": {c: {"count": r.errors[c], "percent": percentage(r.errors[c], r.failed, 0),
                                   "cell": format_count_pct(r.errors[c], r.failed)}
                               for c in ERROR_CLASSES},
                    "unmatched_messages": r.unmatched} for r in self.rows]}

    def dumps(self):
        return json.dumps(self.to_json(), indent=2, sort_keys=True) + "\n"

    def render_text(self):
        levels = [f"ACC#{j}" for j in acc_levels(self.k)]
        head = ["Category", "Lemmas", *levels, "Undefined", "Logic", "Other"]
        body = []
        for r in self.rows:
            body.append([r.category, str(r.lemmas), *(f"{r.acc[x]:.1f}" for x in levels),
                         *(format_count_pct(r.errors[c], r.failed) for c in ERROR_CLASSES)])
        widths = [max(len(row[i]) for row in [head] + body) for i in range(len(head))]
        fmt = lambda row: "  ".join(c.ljust(w) if i == 0 else c.rjust(w)
                                    for i, (c, w) in enumerate(zip(row, widths)))
        lines = [fmt(head), "  ".join("-" * w for w in widths)] + [fmt(b) for b in body]
        unmatched = sum(r.unmatched for r in self.rows)
        lines.append("")
        lines.append("Errors are counted over lemmas unsolved at ACC#%d: count(percent of failures)." % self.k)
        if unmatched:
            lines.append(f"{unmatched} failure message(s) matched no pattern and were counted as other.")
        cfg = self.config
        if cfg:
            aug = ", ".join(cfg.get("augmentations", [])) or "none"
            lines.append(f"augmentations: {aug}; seed: {cfg.get('seed')}; k: {self.k}")
        if self.retrieval:
            lines.append("dependency facts located/skipped: {located}/{skipped}".format(**self.retrieval))
        return "\n".join(lines) + "\n"


def build_report(records, k, config=None, retrieval=None, categories=None):
    """Report over ``records`` (TrialRecord objects) at ACC#k.

    ``categories`` fixes the rows shown (default: the four benchmark
    categories that have at least one lemma).
    """
    by_lemma = defaultdict(list)
    cat_of = {}
    for r in records:
        by_lemma[r.lemma_id].append(r)
        cat_of[r.lemma_id] = r.category
    cats = categories or [c for c in CATEGORY_ORDER if c in cat_of.values()]
    cats = list(cats) + sorted(set(cat_of.values()) - set(cats) - set(CATEGORY_ORDER))
    rows = []
    for cat in cats:
        lemmas = sorted(l for l, c in cat_of.items() if c == cat)
        solved, acc = {}, {}
        for j in acc_levels(k):
            n = sum(any(r.verified for r in counted_records(by_lemma[l], j)) for l in lemmas)
            solved[f"ACC#{j}"] = n
            acc[f"ACC#{j}"] = percentage(n, len(lemmas), 1)
        errors = {c: 0 for c in ERROR_CLASSES}
        unmatched = 0
        for l in lemmas:
            recs = sorted(by_lemma[l], key=lambda r: (r.trial_index, r.round != FIRST))
            if any(r.verified for r in counted_records(recs, k)):
                continue
            last = failing_attempt(recs, k)
            if last is None:
                continue
            errors[last.error_class or "other"] += 1
            unmatched += last.error_pattern == UNMATCHED
        rows.append(CategoryRow(cat, len(lemmas), solved, acc, errors, unmatched))
    return RunReport(k, rows, config or {}, retrieval or {})


def load_report(path):
    data = json.loads(open(path, encoding="utf-8").read())
    rows = [CategoryRow(c["category"], c["lemmas"], c["solved"], c["acc"],
                        {e: c["errors"][e]["count"] for e in ERROR_CLASSES}, c["unmatched_messages"])
            for c in data["categories"]]
    return RunReport(data["k"], rows, data["config"], data["retrieval"])

