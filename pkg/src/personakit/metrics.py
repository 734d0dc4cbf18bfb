"""Extraction quality metrics.

Two families: reference-based scores against gold triplets (per-field
accuracy, per-label precision/recall/F1, token-level tail overlap) and
intrinsic statistics of an extraction run (coverage, uniqueness,
first-person rate, persona recall against profile descriptions).

Metrics that would divide by zero are reported as absent (None), never as
a fake zero; canonical comparison is lowercase and trimmed everywhere.
"""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from typing import Iterable, Sequence

from .graph import consolidate
from .templates import PersonaTriplet, RelationType


def is_first_person_head(head: str) -> bool:
    """True for bare first-person heads and "my …" possessives."""
    head = head.strip().lower()
    return head in ("i", "me", "my") or head.startswith("my ")


def _persona_triplets(triplets: Iterable[PersonaTriplet]) -> list[PersonaTriplet]:
    return [t for t in triplets if t.relation is not RelationType.no_relation]


def coverage(triplets: Sequence[PersonaTriplet], utterance_count: int, unique: bool = False) -> float:
    """Extracted persona triplets per utterance.

    no_relation outputs never count. With unique=True, canonical
    duplicates collapse before counting.
    """
    if utterance_count <= 0:
        raise ValueError("utterance_count must be positive")
    persona = _persona_triplets(triplets)
    if unique:
        return len({t.key() for t in persona}) / utterance_count
    return len(persona) / utterance_count


def first_person_ratio(triplets: Sequence[PersonaTriplet]) -> float | None:
    persona = _persona_triplets(triplets)
    if not persona:
        return None
    hits = sum(1 for t in persona if is_first_person_head(t.head))
    return hits / len(persona)


def unique_entity_ratios(triplets: Sequence[PersonaTriplet]) -> tuple[float, float] | None:
    """(distinct heads / total, distinct tails / total), canonical text.

    Operates on exactly the triplets given; callers wanting persona-only
    ratios filter no_relation first.
    """
    if not triplets:
        return None
    heads = {t.head.strip().lower() for t in triplets}
    tails = {t.tail.strip().lower() for t in triplets}
    return len(heads) / len(triplets), len(tails) / len(triplets)


def persona_recall(
    dialogue_triplets: Sequence[PersonaTriplet],
    description_triplets: Sequence[PersonaTriplet],
) -> float | None:
    """Fraction of distinct profile triplets recovered from dialogue.

    Both sides are consolidated first so first-person variants compare
    equal. Absent when the profile side has no persona triplets.
    """
    desc = {t.key() for t in consolidate(_persona_triplets(description_triplets))}
    if not desc:
        return None
    dia = {t.key() for t in consolidate(_persona_triplets(dialogue_triplets))}
    return len(desc & dia) / len(desc)


@dataclass(frozen=True)
class ReferenceScores:
    head_acc: float
    tail_acc: float
    label_acc: float
    triplet_acc: float
    tail_overlap: float
    per_label: dict[str, dict[str, float]]
    macro_precision: float
    macro_recall: float
    macro_f1: float

    def to_report_dict(self) -> dict:
        return {
            "head_acc": self.head_acc,
            "label_acc": self.label_acc,
            "macro_f1": self.macro_f1,
            "macro_precision": self.macro_precision,
            "macro_recall": self.macro_recall,
            "per_label": self.per_label,
            "tail_acc": self.tail_acc,
            "tail_overlap": self.tail_overlap,
            "triplet_acc": self.triplet_acc,
        }


def _tail_overlap_one(gold_tail: str, pred_tail: str) -> float:
    gold_tokens = set(gold_tail.split())
    pred_tokens = set(pred_tail.split())
    if not gold_tokens:
        return 1.0 if not pred_tokens else 0.0
    return len(gold_tokens & pred_tokens) / len(gold_tokens)


def reference_scores(
    predictions: Sequence[PersonaTriplet], golds: Sequence[PersonaTriplet]
) -> ReferenceScores:
    """Aligned prediction/gold scoring.

    Field accuracy is exact canonical match; tail overlap is token-set
    recall of the gold tail. Per-label P/R/F1 covers every label present
    on either side; macro averages over exactly those labels.
    """
    if len(predictions) != len(golds):
        raise ValueError(
            f"predictions ({len(predictions)}) and golds ({len(golds)}) must align"
        )
    if not golds:
        raise ValueError("cannot score an empty prediction list")

    n = len(golds)
    head_hits = tail_hits = label_hits = triplet_hits = 0
    overlap_total = 0.0
    for pred, gold in zip(predictions, golds):
        ph, pt = pred.head.strip().lower(), pred.tail.strip().lower()
        gh, gt = gold.head.strip().lower(), gold.tail.strip().lower()
        head_ok = ph == gh
        tail_ok = pt == gt
        label_ok = pred.relation is gold.relation
        head_hits += head_ok
        tail_hits += tail_ok
        label_hits += label_ok
        triplet_hits += head_ok and tail_ok and label_ok
        overlap_total += _tail_overlap_one(gt, pt)

    labels = sorted(
        {g.relation.value for g in golds} | {p.relation.value for p in predictions}
    )
    per_label: dict[str, dict[str, float]] = {}
    for label in labels:
        tp = sum(
            1
            for p, g in zip(predictions, golds)
            if p.relation.value == label and g.relation.value == label
        )
        pred_n = sum(1 for p in predictions if p.relation.value == label)
        gold_n = sum(1 for g in golds if g.relation.value == label)
        precision = tp / pred_n if pred_n else 0.0
        recall = tp / gold_n if gold_n else 0.0
        f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
        per_label[label] = {"precision": precision, "recall": recall, "f1": f1}

    return ReferenceScores(
        head_acc=head_hits / n,
        tail_acc=tail_hits / n,
        label_acc=label_hits / n,
        triplet_acc=triplet_hits / n,
        tail_overlap=overlap_total / n,
        per_label=per_label,
        macro_precision=sum(v["precision"] for v in per_label.values()) / len(per_label),
        macro_recall=sum(v["recall"] for v in per_label.values()) / len(per_label),
        macro_f1=sum(v["f1"] for v in per_label.values()) / len(per_label),
    )


@dataclass(frozen=True)
class CharacterExtraction:
    """One character's extraction results, ready for intrinsic scoring."""

    character_id: str
    name: str
    utterance_count: int
    dialogue_triplets: tuple[PersonaTriplet, ...]
    description_triplets: tuple[PersonaTriplet, ...] | None = None


def _intrinsic_row(
    triplets: Sequence[PersonaTriplet], utterance_count: int
) -> dict:
    persona = _persona_triplets(triplets)
    ratios = unique_entity_ratios(persona)
    return {
        "utterance_count": utterance_count,
        "persona_count": len(persona),
        "coverage": coverage(triplets, utterance_count) if utterance_count else None,
        "unique_coverage": coverage(triplets, utterance_count, unique=True)
        if utterance_count
        else None,
        "first_person_ratio": first_person_ratio(triplets),
        "unique_head_ratio": ratios[0] if ratios else None,
        "unique_tail_ratio": ratios[1] if ratios else None,
    }


def build_intrinsic_report(extractions: Sequence[CharacterExtraction]) -> dict:
    """Per-character and pooled intrinsic statistics.

    Persona recall appears per character only; pooled recall across
    characters with different profiles is not a meaningful quantity.
    """
    per_character = {}
    all_triplets: list[PersonaTriplet] = []
    total_utterances = 0
    for ext in extractions:
        row = _intrinsic_row(ext.dialogue_triplets, ext.utterance_count)
        row["name"] = ext.name
        row["persona_recall"] = (
            persona_recall(ext.dialogue_triplets, ext.description_triplets)
            if ext.description_triplets is not None
            else None
        )
        per_character[ext.character_id] = row
        all_triplets.extend(ext.dialogue_triplets)
        total_utterances += ext.utterance_count
    return {
        "overall": _intrinsic_row(all_triplets, total_utterances),
        "per_character": per_character,
    }


_CSV_COLUMNS = (
    "character_id",
    "name",
    "utterance_count",
    "persona_count",
    "coverage",
    "unique_coverage",
    "first_person_ratio",
    "unique_head_ratio",
    "unique_tail_ratio",
    "persona_recall",
)


def intrinsic_report_csv(report: dict) -> str:
    """Per-character table as CSV; absent metrics render as empty cells."""

    def cell(value) -> str:
        if value is None:
            return ""
        if isinstance(value, float):
            return f"{value:.4f}"
        return str(value)

    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(_CSV_COLUMNS)
    for char_id in sorted(report["per_character"]):
        row = report["per_character"][char_id]
        writer.writerow([char_id] + [cell(row.get(col)) for col in _CSV_COLUMNS[1:]])
    return buffer.getvalue()
