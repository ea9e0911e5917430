"""ACC#k and the count/percentage formatting used in the report tables.

All rounding is half-up on exact fractions, so 58/139 gives 41.7 and 38/81
gives 47 regardless of binary floating point.
"""

from __future__ import annotations

from decimal import ROUND_HALF_UP, Decimal
from fractions import Fraction

FIRST, FIXING = "first", "fixing"


def round_half_up(value, digits=0):
    """Round a Fraction (or int) half-up to ``digits`` decimals; returns a float."""
    value = Fraction(value)
    exact = Decimal(value.numerator) / Decimal(value.denominator)
    q = Decimal(1).scaleb(-digits)
    return float(exact.quantize(q, rounding=ROUND_HALF_UP))


def percentage(num, den, digits=1):
    if den == 0:
        return 0.0
    return round_half_up(Fraction(100 * num, den), digits)


def format_acc(num, den):
    return f"{percentage(num, den, 1):.1f}"


def format_count_pct(count, total):
    """``38(47%)``: absolute count with its integer percentage of ``total``."""
    return f"{count}({int(percentage(count, total, 0))}%)"


def counted_records(records, k):
    """The records that decide a lemma's ACC#k outcome.

    First-round trials with index < k count, plus any fixing round attached
    to one of those trials.
    """
    return [r for r in records if r.trial_index < k]


def lemma_solved(records, k):
    return any(r.verified for r in counted_records(records, k))


def acc_at_k(records_by_lemma, k, category_of=None):
    """Per-category ACC#k percentages.

    ``records_by_lemma`` maps lemma id -> list of trial records (objects with
    ``trial_index`` and ``verified``). ``category_of`` maps lemma id to its
    category; without it every lemma lands in the single category "all".
    Returns {category: percentage rounded to one decimal}.
    """
    solved, total = {}, {}
    for lemma_id, recs in records_by_lemma.items():
        cat = category_of(lemma_id) if category_of else "all"
        total[cat] = total.get(cat, 0) + 1
        solved[cat] = solved.get(cat, 0) + int(lemma_solved(recs, k))
    return {cat: percentage(solved[cat], total[cat], 1) for cat in total}
