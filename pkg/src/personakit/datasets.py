"""Dataset construction: conversion, splitting, NLI pairs, corpus ingest.

The conversion half turns fine-grained labeled records into the coarse
five-relation schema, folding the fine relation name into the tail so no
information is lost: tail_phrase = fine name with underscores as spaces,
a space, then the original tail, all lowercase.

The corpus half reads dialogue JSONL (one turn per line) and dedupes
character profiles by (name, description); profile descriptions are split
into sentences, utterances never are.
"""
from __future__ import annotations

import random
import re
import warnings
from dataclasses import dataclass
from importlib import resources
from typing import Callable, Iterable, Sequence

from .errors import DataError, UnknownRelationError
from .jsonio import read_jsonl, stable_text_hash
from .templates import PersonaTriplet, RelationType

RELATION_MAP_VERSION = 1

# fact relation types eligible for entailment pairs
DEFAULT_FACT_WHITELIST = frozenset(
    {
        "HasProperty",
        "CapableOf",
        "Desires",
        "xNeed",
        "xAttr",
        "xEffect",
        "xReact",
        "xWant",
        "xIntent",
    }
)

_RPA_SPELLINGS = {"rpa", "relevant without context"}

_relation_map_cache: dict[str, RelationType] | None = None


def load_relation_map() -> dict[str, RelationType]:
    """Bundled fine-name -> RelationType table (the `not` bucket folds
    into no_relation)."""
    global _relation_map_cache
    if _relation_map_cache is not None:
        return _relation_map_cache
    text = resources.files("personakit.data").joinpath("relation_map.tsv").read_text("utf-8")
    mapping: dict[str, RelationType] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip() or line.startswith("#"):
            continue
        try:
            fine, bucket = line.split("\t")
        except ValueError:
            raise DataError(f"relation_map.tsv:{lineno}: expected two tab-separated columns")
        if fine in mapping:
            raise DataError(f"relation_map.tsv:{lineno}: duplicate fine relation {fine!r}")
        if bucket == "not":
            mapping[fine] = RelationType.no_relation
        else:
            try:
                mapping[fine] = RelationType(bucket)
            except ValueError:
                raise DataError(f"relation_map.tsv:{lineno}: unknown bucket {bucket!r}") from None
    _relation_map_cache = mapping
    return mapping


def map_relation(fine_name: str) -> RelationType:
    mapping = load_relation_map()
    try:
        return mapping[fine_name]
    except KeyError:
        raise UnknownRelationError(fine_name) from None


def make_tail_phrase(fine_name: str, tail: str) -> str:
    return f"{fine_name.replace('_', ' ')} {tail}".strip().lower()


@dataclass(frozen=True)
class LabeledExtractionRecord:
    utterance: str
    gold: PersonaTriplet


def convert_record(record: dict) -> LabeledExtractionRecord:
    """One fine-grained record -> coarse-schema training record.

    The utterance passes through byte-for-byte; head and tail become
    canonical lowercase. Unknown fine relations raise; they are not data
    to silently drop.
    """
    for field_name in ("utterance", "head", "relation", "tail"):
        if field_name not in record:
            raise DataError(f"record missing field {field_name!r}: {record!r}")
    head = str(record["head"]).strip().lower()
    if not head:
        raise DataError(f"record has empty head: {record!r}")
    relation = map_relation(str(record["relation"]))
    tail = make_tail_phrase(str(record["relation"]), str(record["tail"]))
    return LabeledExtractionRecord(
        utterance=str(record["utterance"]),
        gold=PersonaTriplet(
            head=head,
            relation=relation,
            tail=tail,
            source_id=str(record.get("source_id", "")),
        ),
    )


def record_to_json(record: LabeledExtractionRecord, split: str | None = None) -> dict:
    doc = {
        "utterance": record.utterance,
        "head": record.gold.head,
        "relation": record.gold.relation.value,
        "tail": record.gold.tail,
        "source_id": record.gold.source_id,
    }
    if split is not None:
        doc["split"] = split
    return doc


def record_from_json(doc: dict) -> LabeledExtractionRecord:
    try:
        return LabeledExtractionRecord(
            utterance=doc["utterance"],
            gold=PersonaTriplet(
                head=doc["head"],
                relation=RelationType(doc["relation"]),
                tail=doc["tail"],
                source_id=doc.get("source_id", ""),
            ),
        )
    except (KeyError, ValueError) as exc:
        raise DataError(f"bad converted record {doc!r}: {exc}") from exc


def _default_label(record) -> str:
    return record.gold.relation.value


def stratified_split(
    records: Sequence,
    ratios: tuple[float, float, float],
    seed: int,
    label_of: Callable = _default_label,
) -> tuple[list, list, list]:
    """Label-stratified train/dev/test split.

    Within each label, per-split counts come from largest-remainder
    rounding of the exact quotas (remainder ties resolve train, dev,
    test), and membership from a per-label seeded shuffle. A label with
    fewer records than splits cannot be stratified; it warns and lands in
    train whole.
    """
    if len(ratios) != 3:
        raise ValueError("ratios must be a (train, dev, test) triple")
    if any(r <= 0 for r in ratios):
        raise ValueError(f"ratios must be positive: {ratios!r}")
    if abs(sum(ratios) - 1.0) > 1e-9:
        raise ValueError(f"ratios must sum to 1: {ratios!r}")

    by_label: dict[str, list] = {}
    for record in records:
        by_label.setdefault(label_of(record), []).append(record)

    splits: tuple[list, list, list] = ([], [], [])
    for label, group in by_label.items():
        n = len(group)
        if n < len(ratios):
            warnings.warn(
                f"label {label!r} has {n} record(s), fewer than {len(ratios)} splits; "
                "assigning all to train",
                stacklevel=2,
            )
            splits[0].extend(group)
            continue
        quotas = [n * r for r in ratios]
        counts = [int(q) for q in quotas]
        leftover = n - sum(counts)
        order = sorted(range(3), key=lambda i: (-(quotas[i] - counts[i]), i))
        for i in order[:leftover]:
            counts[i] += 1
        shuffled = list(group)
        random.Random(f"{seed}:{label}").shuffle(shuffled)
        start = 0
        for split_list, count in zip(splits, counts):
            split_list.extend(shuffled[start : start + count])
            start += count
    return splits


@dataclass(frozen=True)
class NliExample:
    premise: str
    hypothesis: str
    label: str  # "entailment" | "no_entailment"


def build_nli_dataset(
    records: Iterable[dict],
    whitelist: frozenset[str] = DEFAULT_FACT_WHITELIST,
    blocklist: frozenset[str] = frozenset(),
) -> tuple[list[NliExample], int]:
    """Statement/fact pairs -> entailment examples.

    Positives are pairs tagged relevant-without-context whose fact
    relation is whitelisted; pairs with no relation label at all become
    no_entailment negatives. Whitelisted pairs with any other relevance
    tag are ambiguous and excluded, as are non-whitelisted relations.
    Premises on the blocklist are dropped wholesale (held-out leakage
    guard). Returns (examples, malformed_skip_count).
    """
    examples: list[NliExample] = []
    skipped = 0
    for record in records:
        statement = record.get("statement")
        fact = record.get("fact")
        if not isinstance(statement, str) or not statement.strip():
            skipped += 1
            continue
        if not isinstance(fact, str) or not fact.strip():
            skipped += 1
            continue
        if statement in blocklist:
            continue
        relation = record.get("relation")
        if relation in (None, ""):
            examples.append(NliExample(statement, fact, "no_entailment"))
            continue
        if relation not in whitelist:
            continue
        relevance = record.get("relevance")
        if isinstance(relevance, str) and relevance.strip().lower() in _RPA_SPELLINGS:
            examples.append(NliExample(statement, fact, "entailment"))
    return examples, skipped


@dataclass(frozen=True)
class UtteranceRecord:
    dialogue_id: str
    character: str
    description: str
    turn: int
    text: str


@dataclass(frozen=True)
class CharacterProfile:
    name: str
    description: str

    @property
    def character_id(self) -> str:
        return stable_text_hash(f"{self.name}\n{self.description}")


_CORPUS_FIELDS = {
    "dialogue_id": str,
    "character": str,
    "description": str,
    "turn": int,
    "text": str,
}


def ingest_dialogue_corpus(
    paths: Sequence[str],
) -> tuple[list[UtteranceRecord], list[CharacterProfile]]:
    """Read one-turn-per-line dialogue JSONL files.

    Characters sharing a name but not a description count as distinct
    profiles. Schema violations name the file and line.
    """
    utterances: list[UtteranceRecord] = []
    profiles: list[CharacterProfile] = []
    seen: set[tuple[str, str]] = set()
    for path in paths:
        for lineno, doc in read_jsonl(path):
            if not isinstance(doc, dict):
                raise DataError(f"{path}:{lineno}: expected a JSON object")
            for field_name, field_type in _CORPUS_FIELDS.items():
                if field_name not in doc:
                    raise DataError(f"{path}:{lineno}: missing field {field_name!r}")
                if not isinstance(doc[field_name], field_type) or isinstance(doc[field_name], bool):
                    raise DataError(
                        f"{path}:{lineno}: field {field_name!r} must be {field_type.__name__}"
                    )
            record = UtteranceRecord(
                dialogue_id=doc["dialogue_id"],
                character=doc["character"],
                description=doc["description"],
                turn=doc["turn"],
                text=doc["text"],
            )
            utterances.append(record)
            key = (record.character, record.description)
            if key not in seen:
                seen.add(key)
                profiles.append(CharacterProfile(*key))
    return utterances, profiles


_SENTENCE_BREAK = re.compile(r"(?<=[.!?])\s+")


def split_description_sentences(text: str) -> list[str]:
    """Segment a profile description on terminal punctuation.

    Conservative on purpose: only ., !, ? followed by whitespace break; a
    trailing fragment without punctuation still counts as a sentence.
    """
    stripped = text.strip()
    if not stripped:
        return []
    return [part.strip() for part in _SENTENCE_BREAK.split(stripped) if part.strip()]


def light_dump_to_corpus(doc) -> list[UtteranceRecord]:
    """Adapter for role-play dialogue dumps with agent lists.

    Accepts {"dialogues": [...]} or a bare list. Each dialogue carries an
    id, an agents list ({"name", "persona"}), and turns as {"speaker",
    "text"} where speaker is an agent index or name. Produces the same
    records ingest_dialogue_corpus reads.
    """
    dialogues = doc.get("dialogues") if isinstance(doc, dict) else doc
    if not isinstance(dialogues, list):
        raise DataError("dump must be a list of dialogues or {'dialogues': [...]}")
    out: list[UtteranceRecord] = []
    for di, dialogue in enumerate(dialogues):
        if not isinstance(dialogue, dict):
            raise DataError(f"dialogue {di}: expected a JSON object")
        dialogue_id = str(dialogue.get("dialogue_id", dialogue.get("id", di)))
        agents = dialogue.get("agents")
        turns = dialogue.get("turns", dialogue.get("dialogue"))
        if not isinstance(agents, list) or not agents:
            raise DataError(f"dialogue {dialogue_id}: missing agents list")
        if not isinstance(turns, list):
            raise DataError(f"dialogue {dialogue_id}: missing turns list")
        names = []
        personas = {}
        for agent in agents:
            name = str(agent.get("name", "")).strip()
            if not name:
                raise DataError(f"dialogue {dialogue_id}: agent without a name")
            names.append(name)
            personas[name] = str(agent.get("persona", agent.get("description", "")))
        for ti, turn in enumerate(turns):
            if not isinstance(turn, dict) or "text" not in turn:
                raise DataError(f"dialogue {dialogue_id} turn {ti}: expected {{speaker, text}}")
            speaker = turn.get("speaker")
            if isinstance(speaker, int):
                if not 0 <= speaker < len(names):
                    raise DataError(f"dialogue {dialogue_id} turn {ti}: speaker index out of range")
                speaker = names[speaker]
            elif isinstance(speaker, str) and speaker in personas:
                pass
            else:
                raise DataError(f"dialogue {dialogue_id} turn {ti}: unknown speaker {speaker!r}")
            out.append(
                UtteranceRecord(
                    dialogue_id=dialogue_id,
                    character=speaker,
                    description=personas[speaker],
                    turn=ti,
                    text=str(turn["text"]),
                )
            )
    return out
