"""Shared builders for the test suite.

Toy template specs keep decoding instances small enough to enumerate
exhaustively; SeededScorer gives reproducible random logits without any
table bookkeeping. Everything here is deterministic given a seed.
"""
from __future__ import annotations

import math
import random

from personakit.scorers import TableScorer
from personakit.templates import (
    RELATION_TOKENS,
    Slot,
    TemplateSpec,
    Vocabulary,
    grammar_for,
)

EOS = "</s>"


def toy_tail_spec() -> TemplateSpec:
    """One content slot: [X] word+ </s>."""
    return TemplateSpec(
        variant="toy_tail",
        slots=(Slot("[X]", "tail"),),
        mask_token="<mask>",
        input_parts=("[CTX]", "{utterance}"),
    )


def toy_relation_spec() -> TemplateSpec:
    """One relation slot: [R] <relation-token> </s>."""
    return TemplateSpec(
        variant="toy_relation",
        slots=(Slot("[R]", "relation"),),
        mask_token="<mask>",
        input_parts=("[CTX]", "{utterance}"),
    )


def toy_pair_spec() -> TemplateSpec:
    """Two content slots: [H] word+ [T] word+ </s>."""
    return TemplateSpec(
        variant="toy_pair",
        slots=(Slot("[H]", "head"), Slot("[T]", "tail")),
        mask_token="<mask>",
        input_parts=("[CTX]", "{utterance}"),
    )


def vocab_for(spec: TemplateSpec, words: tuple[str, ...]) -> Vocabulary:
    base = tuple(sorted(spec.structural_spellings))
    extra = tuple(w for w in words if w not in spec.structural_spellings)
    return Vocabulary(tokens=base + extra + (EOS,))


class SeededScorer:
    """Deterministic pseudo-random scorer; vectors are normalized exactly.

    The vector for a (context, prefix) pair depends only on the seed and
    that pair, so repeated calls agree and batches equal loops.
    """

    def __init__(self, vocab: Vocabulary, seed: int = 0):
        self.vocab = vocab
        self._seed = seed

    def next_logprobs(self, context, prefix):
        key = f"{self._seed}|{context}|{','.join(str(t) for t in prefix)}"
        rng = random.Random(key)
        weights = [rng.random() + 1e-3 for _ in range(len(self.vocab))]
        total = sum(weights)
        return [math.log(w / total) for w in weights]

    def next_logprobs_batch(self, context, prefixes):
        return [self.next_logprobs(context, p) for p in prefixes]


def _reachable_prefixes(spec: TemplateSpec, vocab: Vocabulary, max_length: int):
    """Every decodable prefix (and its state) up to max_length - 1 tokens."""
    grammar = grammar_for(spec, vocab)
    frontier = [((), grammar.initial())]
    seen = []
    while frontier:
        tokens, state = frontier.pop()
        if grammar.is_terminal(state) or len(tokens) >= max_length:
            continue
        seen.append(tokens)
        for tid in grammar.allowed(state):
            frontier.append((tokens + (tid,), grammar.advance(state, tid)))
    return seen


def make_full_table(
    spec: TemplateSpec,
    vocab: Vocabulary,
    live: tuple[str, ...],
    max_length: int,
    rng: random.Random,
    context: str,
) -> TableScorer:
    """TableScorer with a random entry for every reachable prefix.

    Probability mass is spread over `live` tokens only; everything else is
    exactly zero (serialized as the log floor), which keeps zero-mass
    continuations strictly below every live sequence in any ranking.
    """
    live_ids = [vocab.id_of(w) for w in live]
    floor = -1e9
    entries = {}
    for prefix in _reachable_prefixes(spec, vocab, max_length):
        weights = [rng.random() + 0.05 for _ in live_ids]
        total = sum(weights)
        vec = [floor] * len(vocab)
        for tid, w in zip(live_ids, weights):
            vec[tid] = math.log(w / total)
        entries[(context, prefix)] = tuple(vec)
    return TableScorer(vocab, entries)


TRACE_CTX = "[CTX] hello"


def build_trace_scorer():
    """The hand-traced instance: [X], then one of a/b/c, then EOS at 0.7.

    Word probabilities are a 0.4, b 0.35, c 0.25. Every expected score in
    the hand-trace tests is worked out from these numbers by hand.
    """
    spec = toy_tail_spec()
    vocab = Vocabulary(tokens=("[X]", "</s>", "a", "b", "c"))
    floor = -1e9
    entries = {
        (TRACE_CTX, ()): tuple([-math.log(5)] * 5),
        (TRACE_CTX, (0,)): (floor, floor, math.log(0.4), math.log(0.35), math.log(0.25)),
        (TRACE_CTX, (0, 2)): (floor, math.log(0.7)) + (math.log(0.1),) * 3,
        (TRACE_CTX, (0, 3)): (floor, math.log(0.7)) + (math.log(0.1),) * 3,
        (TRACE_CTX, (0, 4)): (floor, math.log(0.7)) + (math.log(0.1),) * 3,
    }
    return spec, TableScorer(vocab, entries)
