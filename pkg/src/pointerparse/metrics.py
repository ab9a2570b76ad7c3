"""Prediction scoring: exact match, intent accuracy, well-formedness rate.

Exact match compares linearized symbol sequences after stripping BOS/EOS/PAD
framing; for deterministic linearization this equals tree equality.  Intent
accuracy only applies to styles with an intent root, so a corpus of span-set
annotations reports it as None (not applicable) rather than zero.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence, Union

from .linearize import Style, SymKind, TargetSequence, validate


class LengthMismatch(ValueError):
    pass


def exact_match(pred: TargetSequence, gold: TargetSequence) -> bool:
    """Symbol-for-symbol equality after removing BOS/EOS/PAD."""
    return pred.strip_framing().symbols == gold.strip_framing().symbols


def intent_of(seq: TargetSequence) -> Optional[str]:
    """The parse's intent: its first symbol, when that symbol is an intent."""
    stripped = seq.strip_framing()
    if not len(stripped):
        return None
    head = stripped[0]
    if head.sym in (SymKind.INTENT_TAG, SymKind.INTENT_OPEN):
        return head.label
    return None


def first_divergence(pred: TargetSequence, gold: TargetSequence) -> Optional[int]:
    """Position of the first differing symbol, or None when equal."""
    a = pred.strip_framing().symbols
    b = gold.strip_framing().symbols
    for i, (x, y) in enumerate(zip(a, b)):
        if x != y:
            return i
    if len(a) != len(b):
        return min(len(a), len(b))
    return None


@dataclass
class ExampleRecord:
    index: int
    exact: bool
    well_formed: bool
    intent_match: Optional[bool]  # None for styles without an intent root
    first_divergence: Optional[int]
    violations: list[str] = field(default_factory=list)

    def to_json(self) -> dict:
        return {
            "index": self.index,
            "exact": self.exact,
            "well_formed": self.well_formed,
            "intent_match": self.intent_match,
            "first_divergence": self.first_divergence,
            "violations": self.violations,
        }


@dataclass
class EvalReport:
    em_accuracy: float
    intent_accuracy: Optional[float]
    well_formed_rate: float
    records: list[ExampleRecord]

    def to_json(self) -> dict:
        return {
            "em_accuracy": self.em_accuracy,
            "intent_accuracy": self.intent_accuracy,
            "well_formed_rate": self.well_formed_rate,
            "examples": len(self.records),
        }


def evaluate(
    predictions: Sequence[TargetSequence],
    references: Sequence[TargetSequence],
    lengths: Sequence[int],
    styles: Union[Style, Sequence[Style]],
) -> EvalReport:
    """Score aligned prediction/reference lists.

    ``lengths`` are the source lengths (pointer range for well-formedness);
    ``styles`` is one style for the whole corpus or one per example.
    References are assumed well-formed, which makes em <= well_formed_rate.
    """
    if len(predictions) != len(references) or len(predictions) != len(lengths):
        raise LengthMismatch(
            f"{len(predictions)} predictions, {len(references)} references, "
            f"{len(lengths)} lengths"
        )
    if isinstance(styles, Style):
        styles = [styles] * len(predictions)
    elif len(styles) != len(predictions):
        raise LengthMismatch(f"{len(styles)} styles for {len(predictions)} predictions")

    records = []
    exact_hits = 0
    wf_hits = 0
    intent_hits = 0
    intent_total = 0
    for i, (pred, gold, n, style) in enumerate(zip(predictions, references, lengths, styles)):
        is_exact = exact_match(pred, gold)
        report = validate(pred.strip_framing(), n, style)
        intent_match: Optional[bool] = None
        if style is not Style.SPANSET:
            gold_intent = intent_of(gold)
            intent_match = intent_of(pred) == gold_intent and gold_intent is not None
            intent_total += 1
            intent_hits += intent_match
        exact_hits += is_exact
        wf_hits += report.ok
        records.append(
            ExampleRecord(
                index=i,
                exact=is_exact,
                well_formed=report.ok,
                intent_match=intent_match,
                first_divergence=first_divergence(pred, gold),
                violations=[v.value for v in report.violations],
            )
        )
    total = len(predictions)
    return EvalReport(
        em_accuracy=exact_hits / total if total else 0.0,
        intent_accuracy=(intent_hits / intent_total) if intent_total else None,
        well_formed_rate=wf_hits / total if total else 0.0,
        records=records,
    )
