"""Sequence templates for persona triplet extraction.

A template turns an utterance into a model input string and defines the
exact shape of a valid output: marker tokens opening each slot, slot fill
kinds, and an optional trailing suffix. The grammar half of this module
walks that shape token by token so a decoder can mask everything else out.

Four variants ship by default. Three use bracketed special markers; the
``paed`` variant reproduces a plain-text scaffold with idiosyncratic
spacing, kept byte-for-byte on purpose.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from functools import lru_cache
from typing import Iterable


class RelationType(str, Enum):
    characteristic = "characteristic"
    routine_habit = "routine_habit"
    goal_plan = "goal_plan"
    experience = "experience"
    no_relation = "no_relation"

    @property
    def token(self) -> str:
        return f"[{self.value}]"


RELATION_TOKEN_TO_TYPE = {r.token: r for r in RelationType}
RELATION_TOKENS = tuple(r.token for r in RelationType)

CONTEXT_PLACEHOLDER = "{context}"
MASK_PLACEHOLDER = "{mask}"

FILL_KINDS = ("relation", "head", "tail")


@dataclass(frozen=True)
class PersonaTriplet:
    head: str
    relation: RelationType
    tail: str
    source_id: str = ""

    def key(self) -> tuple[str, str, str]:
        """Canonical identity: lowercased, trimmed fields."""
        return (self.head.strip().lower(), self.relation.value, self.tail.strip().lower())


@dataclass(frozen=True)
class MalformedOutput:
    """A decoded string that could not be parsed into a full triplet."""

    missing: frozenset[str]
    raw: str


@dataclass(frozen=True)
class Slot:
    marker: str
    fill: str  # one of FILL_KINDS

    def __post_init__(self):
        if self.fill not in FILL_KINDS:
            raise ValueError(f"unknown slot fill kind: {self.fill!r}")
        if not self.marker:
            raise ValueError("slot marker must be non-empty")


@dataclass(frozen=True)
class TemplateSpec:
    """One input/output template variant.

    input_parts are literal strings joined by single spaces after
    substituting the context and mask placeholders; a part that is exactly
    the context placeholder disappears when the utterance is empty, which
    keeps the rendered string single-spaced.
    """

    variant: str
    slots: tuple[Slot, ...]
    mask_token: str
    input_parts: tuple[str, ...]
    output_suffix: str = ""

    def __post_init__(self):
        if not self.slots:
            raise ValueError("template needs at least one output slot")
        fills = [s.fill for s in self.slots]
        if len(set(fills)) != len(fills):
            raise ValueError(f"duplicate fill kinds in template {self.variant!r}")

    def slot_for(self, fill: str) -> Slot | None:
        for s in self.slots:
            if s.fill == fill:
                return s
        return None

    @property
    def structural_spellings(self) -> frozenset[str]:
        """Every literal spelling that can never appear as slot content."""
        literals = [p for p in self.input_parts if CONTEXT_PLACEHOLDER not in p]
        literals = [p.replace(MASK_PLACEHOLDER, self.mask_token) for p in literals]
        spellings = set(literals)
        spellings.update(s.marker for s in self.slots)
        spellings.update(RELATION_TOKENS)
        if self.output_suffix:
            spellings.add(self.output_suffix)
        if self.mask_token:
            spellings.add(self.mask_token)
        spellings.discard("")
        return frozenset(spellings)

    def to_json_dict(self) -> dict:
        return {
            "version": 1,
            "variant": self.variant,
            "mask_token": self.mask_token,
            "input_parts": list(self.input_parts),
            "slots": [{"marker": s.marker, "fill": s.fill} for s in self.slots],
            "output_suffix": self.output_suffix,
        }

    @classmethod
    def from_json_dict(cls, doc: dict) -> "TemplateSpec":
        if doc.get("version") != 1:
            raise ValueError(f"unsupported template document version: {doc.get('version')!r}")
        return cls(
            variant=doc["variant"],
            slots=tuple(Slot(s["marker"], s["fill"]) for s in doc["slots"]),
            mask_token=doc["mask_token"],
            input_parts=tuple(doc["input_parts"]),
            output_suffix=doc.get("output_suffix", ""),
        )


def _bracket_variant(name: str, order: tuple[str, ...], mask: str, masked_input: bool) -> TemplateSpec:
    marker = {"relation": "[RELATION]", "head": "[HEAD]", "tail": "[TAIL]"}
    parts: list[str] = ["[CONTEXT]", CONTEXT_PLACEHOLDER]
    if masked_input:
        for fill in order:
            parts.extend([marker[fill], MASK_PLACEHOLDER])
    return TemplateSpec(
        variant=name,
        slots=tuple(Slot(marker[f], f) for f in order),
        mask_token=mask,
        input_parts=tuple(parts),
    )


TEMPLATES: dict[str, TemplateSpec] = {
    "tokens": _bracket_variant("tokens", ("head", "tail", "relation"), "<mask>", True),
    "relation_first": _bracket_variant(
        "relation_first", ("relation", "head", "tail"), "<MASK>", True
    ),
    "relation_first_nomask": _bracket_variant(
        "relation_first_nomask", ("relation", "head", "tail"), "<MASK>", False
    ),
    "paed": TemplateSpec(
        variant="paed",
        slots=(
            Slot("Head Entity :", "head"),
            Slot(", Tail Entity :", "tail"),
            Slot(", Relation :", "relation"),
        ),
        mask_token="<mask>",
        input_parts=(
            "Context :",
            CONTEXT_PLACEHOLDER,
            "Head Entity :",
            MASK_PLACEHOLDER + ",",
            "Tail Entity :",
            MASK_PLACEHOLDER,
            ",",
            "Relation :",
            MASK_PLACEHOLDER,
            ".",
        ),
        output_suffix=".",
    ),
}


def template_spec(name: str) -> TemplateSpec:
    try:
        return TEMPLATES[name]
    except KeyError:
        known = ", ".join(sorted(TEMPLATES))
        raise ValueError(f"unknown template variant {name!r} (known: {known})") from None


def render_input(utterance: str, spec: TemplateSpec) -> str:
    """Template input string for one utterance. Empty utterance is legal."""
    parts = []
    for part in spec.input_parts:
        if part == CONTEXT_PLACEHOLDER:
            if utterance:
                parts.append(utterance)
            continue
        parts.append(part.replace(MASK_PLACEHOLDER, spec.mask_token))
    return " ".join(parts)


def render_output(triplet: PersonaTriplet, spec: TemplateSpec) -> str:
    """The canonical output string a model is trained to produce."""
    values = {
        "relation": triplet.relation.token,
        "head": triplet.head,
        "tail": triplet.tail,
    }
    parts = []
    for slot in spec.slots:
        parts.extend([slot.marker, values[slot.fill]])
    if spec.output_suffix:
        parts.append(spec.output_suffix)
    return " ".join(parts)


def parse_output(text: str, spec: TemplateSpec, source_id: str = "") -> PersonaTriplet | MalformedOutput:
    """Split decoded text on the template's markers and pull out the fields.

    Fields are trimmed and lowercased. Anything absent or empty lands in
    MalformedOutput.missing; malformedness is a value here, not an error.
    """
    markers = [s.marker for s in spec.slots]
    if spec.output_suffix:
        markers.append(spec.output_suffix)
    positions: list[tuple[int, int] | None] = []
    cursor = 0
    for marker in markers:
        idx = text.find(marker, cursor)
        if idx < 0:
            positions.append(None)
        else:
            positions.append((idx, idx + len(marker)))
            cursor = idx + len(marker)

    fields: dict[str, str] = {}
    missing: set[str] = set()
    for i, slot in enumerate(spec.slots):
        if positions[i] is None:
            missing.add(slot.fill)
            continue
        start = positions[i][1]
        end = len(text)
        for later in positions[i + 1 :]:
            if later is not None:
                end = later[0]
                break
        value = text[start:end].strip().lower()
        if not value:
            missing.add(slot.fill)
        else:
            fields[slot.fill] = value

    relation: RelationType | None = None
    if "relation" in fields:
        relation = RELATION_TOKEN_TO_TYPE.get(fields["relation"])
        if relation is None:
            missing.add("relation")

    # a template that never fills a field cannot yield a whole triplet
    template_fields = {s.fill for s in spec.slots}
    missing.update({"head", "relation", "tail"} - template_fields)

    if missing:
        return MalformedOutput(missing=frozenset(missing), raw=text)
    assert relation is not None
    return PersonaTriplet(
        head=fields.get("head", ""),
        relation=relation,
        tail=fields.get("tail", ""),
        source_id=source_id,
    )


def triplet_to_sentence(triplet: PersonaTriplet) -> str:
    """Natural-language statement of one triplet: head followed by tail.

    The relation name never appears; tails already carry the relation's
    verb phrase. Refuses no_relation and empty fields.
    """
    if triplet.relation is RelationType.no_relation:
        raise ValueError("no_relation triplets have no sentence form")
    head = triplet.head.strip().lower()
    tail = triplet.tail.strip().lower()
    if not head or not tail:
        raise ValueError("head and tail must be non-empty to form a sentence")
    return f"{head} {tail}"


@dataclass(frozen=True)
class Vocabulary:
    """Ordered token inventory shared by grammar and scorers."""

    tokens: tuple[str, ...]
    eos_token: str = "</s>"

    def __post_init__(self):
        if len(set(self.tokens)) != len(self.tokens):
            raise ValueError("vocabulary has duplicate token spellings")
        if self.eos_token not in self.tokens:
            raise ValueError(f"eos token {self.eos_token!r} missing from vocabulary")

    def __len__(self) -> int:
        return len(self.tokens)

    @property
    def token_to_id(self) -> dict[str, int]:
        # tiny vocabs throughout; rebuilding the map is cheap and keeps the
        # dataclass hashable
        return {t: i for i, t in enumerate(self.tokens)}

    def id_of(self, token: str) -> int:
        try:
            return self.token_to_id[token]
        except KeyError:
            raise ValueError(f"token {token!r} not in vocabulary") from None

    @property
    def eos_id(self) -> int:
        return self.id_of(self.eos_token)

    def text_of(self, token_ids: Iterable[int], skip_eos: bool = True) -> str:
        out = []
        for tid in token_ids:
            if skip_eos and tid == self.eos_id:
                continue
            out.append(self.tokens[tid])
        return " ".join(out)


@dataclass(frozen=True)
class GrammarState:
    """Cursor into a template's output shape.

    slot is the current slot index (== slot count once all slots are done);
    emitted counts tokens emitted inside the current slot, marker included.
    Past the slots, emitted counts the suffix and end-of-sequence tokens.
    """

    slot: int
    emitted: int


class Grammar:
    """Token-level automaton for one (spec, vocabulary) pair."""

    def __init__(self, spec: TemplateSpec, vocab: Vocabulary):
        self.spec = spec
        self.vocab = vocab
        self.marker_ids = tuple(vocab.id_of(s.marker) for s in spec.slots)
        self.suffix_id = vocab.id_of(spec.output_suffix) if spec.output_suffix else None
        self.eos_id = vocab.eos_id
        needs_relations = any(s.fill == "relation" for s in spec.slots)
        self.relation_ids = frozenset(
            vocab.token_to_id[t] for t in RELATION_TOKENS if t in vocab.token_to_id
        )
        if needs_relations and len(self.relation_ids) != len(RELATION_TOKENS):
            raise ValueError(
                f"vocabulary must contain all relation tokens for template {spec.variant!r}"
            )
        structural = {
            vocab.token_to_id[s] for s in spec.structural_spellings if s in vocab.token_to_id
        }
        structural.add(self.eos_id)
        structural.update(self.relation_ids)
        self.ordinary_ids = frozenset(range(len(vocab))) - frozenset(structural)
        if any(s.fill in ("head", "tail") for s in spec.slots) and not self.ordinary_ids:
            raise ValueError("vocabulary has no ordinary tokens to fill content slots")
        self._n = len(spec.slots)
        self._post_len = 2 if spec.output_suffix else 1

    def initial(self) -> GrammarState:
        return GrammarState(0, 0)

    def is_terminal(self, state: GrammarState) -> bool:
        return state.slot == self._n and state.emitted >= self._post_len

    def _check(self, state: GrammarState) -> None:
        if state.slot < 0 or state.slot > self._n or state.emitted < 0:
            raise ValueError(f"grammar state out of range: {state}")

    def _closing_ids(self, slot_index: int) -> frozenset[int]:
        """What may follow a completed slot."""
        if slot_index + 1 < self._n:
            return frozenset({self.marker_ids[slot_index + 1]})
        if self.suffix_id is not None:
            return frozenset({self.suffix_id})
        return frozenset({self.eos_id})

    def allowed(self, state: GrammarState) -> frozenset[int]:
        self._check(state)
        if self.is_terminal(state):
            return frozenset()
        if state.slot == self._n:
            # past the slots: forced suffix, then forced end
            if self.suffix_id is not None and state.emitted == 0:
                return frozenset({self.suffix_id})
            return frozenset({self.eos_id})
        slot = self.spec.slots[state.slot]
        if state.emitted == 0:
            return frozenset({self.marker_ids[state.slot]})
        if slot.fill == "relation":
            return self.relation_ids
        if state.emitted == 1:
            # a content slot must produce at least one token before closing
            return self.ordinary_ids
        return self.ordinary_ids | self._closing_ids(state.slot)

    def advance(self, state: GrammarState, token_id: int) -> GrammarState:
        if token_id not in self.allowed(state):
            raise ValueError(
                f"token id {token_id} ({self.vocab.tokens[token_id]!r}) not allowed in state {state}"
            )
        if state.slot == self._n:
            return GrammarState(self._n, state.emitted + 1)
        slot = self.spec.slots[state.slot]
        if state.emitted == 0:
            return GrammarState(state.slot, 1)
        if slot.fill == "relation":
            # single relation token completes the slot
            return self._after_slot(state.slot)
        if token_id in self.ordinary_ids:
            return GrammarState(state.slot, state.emitted + 1)
        if state.slot + 1 < self._n:
            return GrammarState(state.slot + 1, 1)
        # closed the final content slot with suffix or eos
        return GrammarState(self._n, 1)

    def _after_slot(self, slot_index: int) -> GrammarState:
        if slot_index + 1 < self._n:
            return GrammarState(slot_index + 1, 0)
        return GrammarState(self._n, 0)


@lru_cache(maxsize=64)
def _grammar_cached(spec: TemplateSpec, vocab: Vocabulary) -> Grammar:
    return Grammar(spec, vocab)


def grammar_for(spec: TemplateSpec, vocab: Vocabulary) -> Grammar:
    return _grammar_cached(spec, vocab)


def allowed_next_tokens(state: GrammarState, spec: TemplateSpec, vocab: Vocabulary) -> frozenset[int]:
    """Token ids legal in `state`; empty exactly at the terminal state."""
    return grammar_for(spec, vocab).allowed(state)
