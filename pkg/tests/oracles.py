"""Independent reference implementations used only to check the real ones.

These are deliberate re-derivations from the published formulas, written
without looking at the package code paths they validate: plain loops over
Fractions, no shared helpers.
"""

from __future__ import annotations

import random
from fractions import Fraction


class DegenerateKappa(Exception):
    pass


def brute_fleiss(rows: list[dict[str, int]]) -> Fraction:
    """Fleiss' kappa straight from the textbook definition.

    rows: per-item category counts; every row must sum to the same n >= 2.
    """
    n = sum(rows[0].values())
    assert n >= 2
    for row in rows:
        assert sum(row.values()) == n
    item_agreements = []
    for row in rows:
        pairs = sum(c * (c - 1) for c in row.values())
        item_agreements.append(Fraction(pairs, n * (n - 1)))
    p_bar_o = sum(item_agreements, Fraction(0)) / len(rows)
    total = n * len(rows)
    mass: dict[str, int] = {}
    for row in rows:
        for category, count in row.items():
            mass[category] = mass.get(category, 0) + count
    p_bar_e = sum(Fraction(m, total) ** 2 for m in mass.values())
    if p_bar_e == 1:
        raise DegenerateKappa
    return (p_bar_o - p_bar_e) / (1 - p_bar_e)


def brute_agreement(rows: list[dict[str, int]]) -> Fraction:
    n = sum(rows[0].values())
    total = Fraction(0)
    for row in rows:
        pairs = sum(c * (c - 1) for c in row.values())
        total += Fraction(pairs, n * (n - 1))
    return total / len(rows)


def random_rating_rows(
    rng: random.Random,
    max_items: int = 10,
    max_categories: int = 4,
    max_raters: int = 5,
) -> list[dict[str, int]]:
    """A random small rating matrix: constant rater count per item."""
    items = rng.randint(1, max_items)
    categories = [f"cat{i}" for i in range(rng.randint(1, max_categories))]
    n = rng.randint(2, max_raters)
    rows = []
    for _ in range(items):
        counts: dict[str, int] = {}
        for _ in range(n):
            label = rng.choice(categories)
            counts[label] = counts.get(label, 0) + 1
        rows.append(counts)
    return rows


def brute_micro(
    gold: dict[str, str], pred: dict[str, str], negative: str = "NO_RELATION"
) -> tuple[Fraction, Fraction, Fraction]:
    """Micro P/R/F1 by direct counting; negative class excluded."""
    assert set(gold) == set(pred)
    tp = pp = gp = 0
    for item_id in gold:
        g, p = gold[item_id], pred[item_id]
        if p != negative:
            pp += 1
        if g != negative:
            gp += 1
        if p == g and g != negative:
            tp += 1
    precision = Fraction(tp, pp) if pp else Fraction(0)
    recall = Fraction(tp, gp) if gp else Fraction(0)
    f1 = (
        2 * precision * recall / (precision + recall)
        if precision + recall
        else Fraction(0)
    )
    return precision, recall, f1
