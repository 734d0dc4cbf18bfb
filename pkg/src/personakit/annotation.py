"""Interactive triplet annotation and inter-annotator agreement.

Annotators judge consolidated triplets one at a time against a character
profile, picking one of six categories; the top-level accept/reject split
is derived, never asked separately. Session files are append-only JSONL,
so a session can stop and resume at any point, and a finished session
re-runs to a no-op.

Agreement is Krippendorff's alpha for nominal data via the coincidence
matrix; items seen by fewer than two annotators contribute nothing.
"""
from __future__ import annotations

import datetime as _dt
import os
from collections import Counter
from dataclasses import dataclass
from enum import Enum
from typing import Callable, Iterable, Sequence

from .datasets import CharacterProfile, split_description_sentences
from .errors import DataError, UndefinedAgreementError
from .graph import ConsolidatedTriplet
from .jsonio import dumps_record, read_jsonl, stable_text_hash
from .templates import PersonaTriplet, RelationType


class Verdict(str, Enum):
    yes_directly = "yes_directly"
    yes_reasonable = "yes_reasonable"
    no_contradictory = "no_contradictory"
    no_unreasonable = "no_unreasonable"
    no_nonspecific = "no_nonspecific"
    no_malformed = "no_malformed"

    @property
    def accepted(self) -> bool:
        return self.value.startswith("yes_")


_MENU: tuple[tuple[str, Verdict, str], ...] = (
    ("1", Verdict.yes_directly, "stated outright by the profile or dialogue"),
    ("2", Verdict.yes_reasonable, "not stated, but a sensible inference for this character"),
    ("3", Verdict.no_contradictory, "clashes with the profile or an earlier statement"),
    ("4", Verdict.no_unreasonable, "nothing supports it and it does not fit the character"),
    ("5", Verdict.no_nonspecific, "relation label is wrong or too vague for the content"),
    ("6", Verdict.no_malformed, "garbled, empty, or not a real statement"),
)

GUIDANCE = (
    "Judge each statement on its own; accepting one statement never "
    "obliges you to reject another, even when the two conflict.\n"
    "Judge in the present tense: if the profile already makes something "
    "true of the character now, a claim that they merely want it "
    "contradicts the profile."
)


def triplet_id(triplet: PersonaTriplet | ConsolidatedTriplet) -> str:
    head, relation, tail = triplet.key()
    return stable_text_hash(f"{head}\t{relation}\t{tail}", length=16)


@dataclass(frozen=True)
class AnnotationRecord:
    triplet_id: str
    annotator: str
    verdict: Verdict
    timestamp: str

    def to_json(self) -> dict:
        return {
            "triplet_id": self.triplet_id,
            "annotator": self.annotator,
            "verdict": self.verdict.value,
            "timestamp": self.timestamp,
        }


def load_session(path: str) -> list[AnnotationRecord]:
    if not os.path.exists(path):
        return []
    records = []
    for lineno, doc in read_jsonl(path):
        try:
            records.append(
                AnnotationRecord(
                    triplet_id=doc["triplet_id"],
                    annotator=doc["annotator"],
                    verdict=Verdict(doc["verdict"]),
                    timestamp=doc.get("timestamp", ""),
                )
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise DataError(f"{path}:{lineno}: bad annotation record: {exc}") from exc
    return records


def _utc_now() -> str:
    return _dt.datetime.now(_dt.timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")


def _is_malformed(triplet) -> bool:
    head, relation, tail = triplet.key()
    return not head or not tail or relation == RelationType.no_relation.value


def _sentence(triplet) -> str:
    head, relation, tail = triplet.key()
    return f"({head}, {relation}, {tail})"


def annotation_session(
    triplets: Sequence[PersonaTriplet | ConsolidatedTriplet],
    profile: CharacterProfile,
    annotator: str,
    session_path: str,
    ask: Callable[[str], str] = input,
    emit: Callable[[str], None] = print,
    now: Callable[[], str] = _utc_now,
) -> list[AnnotationRecord]:
    """Run (or resume) one annotator's pass over a triplet list.

    Already-answered triplets are skipped; malformed triplets are recorded
    as no_malformed without prompting. Entering q stops early, leaving the
    session resumable. Returns every record in the file afterwards.
    """
    existing = load_session(session_path)
    done = {r.triplet_id for r in existing if r.annotator == annotator}
    pending = [t for t in triplets if triplet_id(t) not in done]
    if not pending:
        return existing

    emit(f"Character: {profile.name}")
    for sentence in split_description_sentences(profile.description):
        emit(f"  {sentence}")
    emit("")
    emit(GUIDANCE)
    emit("")
    for key, verdict, hint in _MENU:
        emit(f"  {key}  {verdict.value}: {hint}")
    emit("  q  stop now and resume later")
    emit("")

    by_key = {key: verdict for key, verdict, _ in _MENU}
    new_records: list[AnnotationRecord] = []
    with open(session_path, "a", encoding="utf-8") as fh:
        for triplet in pending:
            tid = triplet_id(triplet)
            if _is_malformed(triplet):
                record = AnnotationRecord(tid, annotator, Verdict.no_malformed, now())
                fh.write(dumps_record(record.to_json()) + "\n")
                fh.flush()
                new_records.append(record)
                continue
            while True:
                answer = ask(f"{_sentence(triplet)}> ").strip().lower()
                if answer == "q":
                    return existing + new_records
                if answer in by_key:
                    record = AnnotationRecord(tid, annotator, by_key[answer], now())
                    fh.write(dumps_record(record.to_json()) + "\n")
                    fh.flush()
                    new_records.append(record)
                    break
                emit("pick 1-6 or q")
    return existing + new_records


def acceptance_ratio(records: Sequence[AnnotationRecord]) -> tuple[float, dict[str, int]]:
    """(accepted fraction, per-category histogram)."""
    if not records:
        raise ValueError("no annotation records to summarize")
    histogram = Counter(r.verdict.value for r in records)
    accepted = sum(1 for r in records if r.verdict.accepted)
    return accepted / len(records), dict(sorted(histogram.items()))


def _items_by_annotator(
    records: Iterable[AnnotationRecord], binary: bool
) -> dict[str, dict[str, str]]:
    items: dict[str, dict[str, str]] = {}
    for r in records:
        label = ("yes" if r.verdict.accepted else "no") if binary else r.verdict.value
        # first answer wins if an annotator somehow answered twice
        items.setdefault(r.triplet_id, {}).setdefault(r.annotator, label)
    return items


def krippendorff_alpha(records: Sequence[AnnotationRecord], level: str = "detailed") -> float:
    """Nominal-data alpha over the multiply-annotated items.

    level "binary" collapses verdicts to the accept/reject split first;
    "detailed" keeps all six categories. Raises when no item has two or
    more annotators.
    """
    if level not in ("binary", "detailed"):
        raise ValueError(f"unknown agreement level {level!r}")
    items = _items_by_annotator(records, binary=level == "binary")

    coincidence: dict[tuple[str, str], float] = {}
    any_shared = False
    for labels_by_annotator in items.values():
        labels = sorted(labels_by_annotator.values())
        m = len(labels)
        if m < 2:
            continue
        any_shared = True
        for i, a in enumerate(labels):
            for j, b in enumerate(labels):
                if i == j:
                    continue
                coincidence[(a, b)] = coincidence.get((a, b), 0.0) + 1.0 / (m - 1)
    if not any_shared:
        raise UndefinedAgreementError(
            "alpha is undefined: no item was labeled by two or more annotators"
        )

    categories = sorted({c for pair in coincidence for c in pair})
    n_c = {c: sum(coincidence.get((c, k), 0.0) for k in categories) for c in categories}
    total = sum(n_c.values())
    observed = sum(coincidence.get((c, c), 0.0) for c in categories) / total
    expected = sum(v * (v - 1) for v in n_c.values()) / (total * (total - 1))
    if expected >= 1.0:
        # a single category everywhere: no variation to disagree about
        return 1.0
    return (observed - expected) / (1.0 - expected)
