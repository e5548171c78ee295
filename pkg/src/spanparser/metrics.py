"""Labeled bracket precision / recall / F1 (PARSEVAL style)."""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Tuple


class MetricsError(ValueError):
    pass


@dataclass(frozen=True)
class F1Report:
    matched: int
    predicted: int
    gold: int

    @property
    def recall(self) -> Fraction:
        return Fraction(self.matched, self.gold)

    @property
    def precision(self) -> Fraction:
        return Fraction(self.matched, self.predicted) if self.predicted else Fraction(0)

    @property
    def f1(self) -> Fraction:
        # 2rp/(r+p) reduces to 2m/(pred+gold); zero when nothing matches
        if self.matched == 0:
            return Fraction(0)
        return Fraction(2 * self.matched, self.predicted + self.gold)

    def __add__(self, other):
        return F1Report(
            self.matched + other.matched,
            self.predicted + other.predicted,
            self.gold + other.gold,
        )

    def format(self) -> str:
        return "LR {:.2f} LP {:.2f} F1 {:.2f}".format(
            100 * float(self.recall), 100 * float(self.precision), 100 * float(self.f1)
        )


def parseval(pred: Iterable, gold: Iterable) -> F1Report:
    pred, gold = set(pred), set(gold)
    if not gold:
        raise MetricsError("gold bracket set is empty")
    return F1Report(len(pred & gold), len(pred), len(gold))


def corpus_parseval(pairs: Iterable[Tuple[Iterable, Iterable]]) -> F1Report:
    """Micro-averaged report over (pred, gold) pairs."""
    total = None
    for pred, gold in pairs:
        report = parseval(pred, gold)
        total = report if total is None else total + report
    if total is None:
        raise MetricsError("no sentences to evaluate")
    return total


def macro_f1(pairs: Iterable[Tuple[Iterable, Iterable]]) -> Fraction:
    scores = [parseval(p, g).f1 for p, g in pairs]
    if not scores:
        raise MetricsError("no sentences to evaluate")
    return sum(scores, Fraction(0)) / len(scores)
