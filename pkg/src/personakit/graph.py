"""Triplet consolidation and per-character persona graphs.

Consolidation canonicalizes text (lowercase, trimmed), folds the bare
first-person heads "i", "me", "my" into the reserved node "self", and
merges exact duplicates by summing support. Possessive heads such as
"my mother" name someone else and stay distinct nodes. The operation is
idempotent, so defensive re-consolidation is free.

Graphs drop no_relation triplets; node ids are stable hashes of canonical
entity text so exports diff cleanly across runs.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Iterable, Sequence

from .errors import DataError
from .jsonio import stable_text_hash
from .templates import PersonaTriplet, RelationType

SELF_NODE = "self"
GRAPH_SCHEMA_VERSION = 1

_FIRST_PERSON_EXACT = {"i", "me", "my"}


@dataclass(frozen=True)
class ConsolidatedTriplet:
    head: str
    relation: RelationType
    tail: str
    support: int = 1
    source_ids: tuple[str, ...] = ()

    def key(self) -> tuple[str, str, str]:
        return (self.head, self.relation.value, self.tail)


def _canonical_head(head: str) -> str:
    head = head.strip().lower()
    return SELF_NODE if head in _FIRST_PERSON_EXACT else head


def consolidate(
    triplets: Iterable[PersonaTriplet | ConsolidatedTriplet],
) -> list[ConsolidatedTriplet]:
    """Merge duplicates after canonicalization; order of first appearance.

    Accepts raw or already-consolidated triplets (support defaults to 1),
    which is what makes consolidate(consolidate(x)) == consolidate(x).
    """
    merged: dict[tuple[str, str, str], ConsolidatedTriplet] = {}
    for t in triplets:
        head = _canonical_head(t.head)
        tail = t.tail.strip().lower()
        support = getattr(t, "support", 1)
        if isinstance(t, ConsolidatedTriplet):
            sources = t.source_ids
        else:
            sources = (t.source_id,) if t.source_id else ()
        key = (head, t.relation.value, tail)
        existing = merged.get(key)
        if existing is None:
            merged[key] = ConsolidatedTriplet(head, t.relation, tail, support, tuple(sources))
        else:
            merged[key] = ConsolidatedTriplet(
                head,
                t.relation,
                tail,
                existing.support + support,
                existing.source_ids + tuple(s for s in sources if s not in existing.source_ids),
            )
    return list(merged.values())


@dataclass(frozen=True)
class GraphEdge:
    head: str  # canonical entity text, not node id
    relation: RelationType
    tail: str
    support: int
    source_ids: tuple[str, ...]


@dataclass(frozen=True)
class PersonaGraph:
    character_id: str
    nodes: tuple[str, ...]  # canonical entity texts, sorted
    edges: tuple[GraphEdge, ...]  # sorted by (head, relation, tail)

    @staticmethod
    def node_id(text: str) -> str:
        return stable_text_hash(text)


def build_graph(
    character_id: str, triplets: Sequence[PersonaTriplet | ConsolidatedTriplet]
) -> PersonaGraph:
    """Persona graph for one character.

    Input is consolidated defensively (idempotent), no_relation edges are
    dropped, and nodes/edges are stored sorted so equal graphs compare
    equal regardless of input order.
    """
    if not character_id:
        raise ValueError("character_id must be non-empty")
    consolidated = [
        t for t in consolidate(triplets) if t.relation is not RelationType.no_relation
    ]
    nodes: set[str] = set()
    edges = []
    for t in consolidated:
        nodes.add(t.head)
        nodes.add(t.tail)
        edges.append(
            GraphEdge(t.head, t.relation, t.tail, t.support, tuple(sorted(set(t.source_ids))))
        )
    edges.sort(key=lambda e: (e.head, e.relation.value, e.tail))
    return PersonaGraph(
        character_id=character_id,
        nodes=tuple(sorted(nodes)),
        edges=tuple(edges),
    )


def graph_to_json(graph: PersonaGraph) -> str:
    doc = {
        "version": GRAPH_SCHEMA_VERSION,
        "character": graph.character_id,
        "nodes": [
            {"id": PersonaGraph.node_id(text), "text": text} for text in graph.nodes
        ],
        "edges": [
            {
                "head": PersonaGraph.node_id(e.head),
                "relation": e.relation.value,
                "tail": PersonaGraph.node_id(e.tail),
                "support": e.support,
                "source_ids": list(e.source_ids),
            }
            for e in graph.edges
        ],
    }
    return json.dumps(doc, sort_keys=True, ensure_ascii=False, separators=(", ", ": ")) + "\n"


def graph_from_json(text: str) -> PersonaGraph:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise DataError(f"bad graph JSON: {exc}") from exc
    if doc.get("version") != GRAPH_SCHEMA_VERSION:
        raise DataError(f"unsupported graph schema version {doc.get('version')!r}")
    try:
        id_to_text = {n["id"]: n["text"] for n in doc["nodes"]}
        edges = tuple(
            GraphEdge(
                head=id_to_text[e["head"]],
                relation=RelationType(e["relation"]),
                tail=id_to_text[e["tail"]],
                support=int(e["support"]),
                source_ids=tuple(e["source_ids"]),
            )
            for e in doc["edges"]
        )
        return PersonaGraph(
            character_id=doc["character"],
            nodes=tuple(sorted(n["text"] for n in doc["nodes"])),
            edges=edges,
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise DataError(f"bad graph document: {exc}") from exc


def _dot_quote(text: str) -> str:
    return '"' + text.replace("\\", "\\\\").replace('"', '\\"') + '"'


def graph_to_dot(graph: PersonaGraph) -> str:
    """Graphviz digraph; nodes keyed by stable id, labeled by text."""
    lines = [f"digraph {_dot_quote(graph.character_id)} {{"]
    for text in graph.nodes:
        lines.append(f"  {_dot_quote(PersonaGraph.node_id(text))} [label={_dot_quote(text)}];")
    for e in graph.edges:
        lines.append(
            f"  {_dot_quote(PersonaGraph.node_id(e.head))} -> "
            f"{_dot_quote(PersonaGraph.node_id(e.tail))} "
            f"[label={_dot_quote(e.relation.value)}];"
        )
    lines.append("}")
    return "\n".join(lines) + "\n"
