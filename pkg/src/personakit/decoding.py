"""Grammar-constrained decoding: greedy, beam, and diverse beam search.

Every step masks the scorer's log-probability vector down to the tokens the
template grammar allows, renormalizes over that set, and only then selects.
Masking happens in log space; renormalization never changes the argmax.

Beam search here is length-synchronous over cumulative renormalized
log-probability with one deliberate twist: a candidate that selects the
end-of-sequence token leaves the beam and is collected, so beam width
gates open prefixes only. On instances small enough that open prefixes
never exceed the width, the search is exhaustive.

Ranking of returned candidates uses average per-token log-probability by
default; cumulative sum is available via DecodeConfig.rank_by.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Protocol, Sequence, runtime_checkable

from .errors import BackendError
from .templates import GrammarState, TemplateSpec, Vocabulary, grammar_for

METHODS = ("greedy", "beam", "diverse_beam")
RANK_KEYS = ("avg", "sum")


@runtime_checkable
class TokenScorer(Protocol):
    """Anything that yields next-token log-probabilities over a vocabulary.

    Implementations must be deterministic for identical inputs and return
    vectors normalized to 1 in probability space (within 1e-6).
    """

    @property
    def vocab(self) -> Vocabulary: ...

    def next_logprobs(self, context: str, prefix: Sequence[int]) -> Sequence[float]: ...

    def next_logprobs_batch(
        self, context: str, prefixes: Sequence[Sequence[int]]
    ) -> list[Sequence[float]]: ...


@dataclass(frozen=True)
class DecodeConfig:
    method: str = "greedy"
    beam_count: int = 5
    group_count: int = 5
    diversity_strength: float = 0.4
    max_length: int = 64
    seed: int = 0
    rank_by: str = "avg"

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"unknown decode method {self.method!r}")
        if self.rank_by not in RANK_KEYS:
            raise ValueError(f"unknown rank key {self.rank_by!r}")
        if self.beam_count < 1 or self.group_count < 1 or self.max_length < 1:
            raise ValueError("beam_count, group_count, and max_length must be >= 1")
        if self.method == "diverse_beam" and self.beam_count % self.group_count:
            raise ValueError(
                f"beam_count ({self.beam_count}) must be divisible by "
                f"group_count ({self.group_count})"
            )
        if self.diversity_strength < 0:
            raise ValueError("diversity_strength must be >= 0")


def avg_logprob(logprobs: Sequence[float]) -> float:
    if not logprobs:
        raise ValueError("cannot average an empty log-prob sequence")
    return sum(logprobs) / len(logprobs)


@dataclass(frozen=True)
class ScoredCandidate:
    tokens: tuple[int, ...]
    text: str
    lm_score: float
    nli: object | None = None  # NliVerdict once adjudicated
    final_score: float | None = None

    def __post_init__(self):
        if self.final_score is None:
            object.__setattr__(self, "final_score", self.lm_score)
        elif self.nli is None and self.final_score != self.lm_score:
            raise ValueError("final_score must equal lm_score before adjudication")


def _renormalize(vec: Sequence[float], allowed: Sequence[int]) -> dict[int, float]:
    """Log-softmax restricted to `allowed` token ids."""
    vals = [vec[i] for i in allowed]
    m = max(vals)
    lse = m + math.log(sum(math.exp(v - m) for v in vals))
    return {i: vec[i] - lse for i in allowed}

def _argmax_lowest_id(scores: dict[int, float]) -> int:
    best_id, best = None, -math.inf
    for tid in sorted(scores):
        if scores[tid] > best:
            best_id, best = tid, scores[tid]
    assert best_id is not None
    return best_id


def _score_step(scorer: TokenScorer, context: str, prefixes: list[tuple[int, ...]]) -> list[Sequence[float]]:
    try:
        if len(prefixes) == 1:
            return [scorer.next_logprobs(context, prefixes[0])]
        return scorer.next_logprobs_batch(context, prefixes)
    except BackendError:
        raise
    except Exception as exc:
        step = len(prefixes[0]) if prefixes else 0
        raise BackendError(f"scorer failed at step {step}: {exc}") from exc


def _vector_ok(vec: Sequence[float], size: int) -> None:
    if len(vec) != size:
        raise BackendError(f"scorer returned vector of length {len(vec)}, expected {size}")


@dataclass
class _Open:
    tokens: tuple[int, ...]
    logprobs: tuple[float, ...]
    state: GrammarState
    select_score: float  # cumulative, diversity penalties included


@dataclass
class _Done:
    tokens: tuple[int, ...]
    logprobs: tuple[float, ...]
    truncated: bool


def _rank_key(cfg: DecodeConfig, item: _Done) -> float:
    if cfg.rank_by == "sum":
        return sum(item.logprobs)
    return avg_logprob(item.logprobs)


def _to_candidate(item: _Done, vocab: Vocabulary) -> ScoredCandidate:
    return ScoredCandidate(
        tokens=item.tokens,
        text=vocab.text_of(item.tokens),
        lm_score=avg_logprob(item.logprobs),
    )


def decode_greedy(
    scorer: TokenScorer, input_text: str, spec: TemplateSpec, cfg: DecodeConfig
) -> ScoredCandidate:
    """Single pass picking the highest renormalized log-prob each step.

    Ties go to the lowest token id. Stops at the grammar's terminal state
    or at cfg.max_length, whichever comes first; a length-capped output can
    parse malformed and is returned regardless.
    """
    grammar = grammar_for(spec, scorer.vocab)
    state = grammar.initial()
    tokens: list[int] = []
    logprobs: list[float] = []
    while not grammar.is_terminal(state) and len(tokens) < cfg.max_length:
        allowed = sorted(grammar.allowed(state))
        (vec,) = _score_step(scorer, input_text, [tuple(tokens)])
        _vector_ok(vec, len(scorer.vocab))
        renorm = _renormalize(vec, allowed)
        chosen = _argmax_lowest_id(renorm)
        tokens.append(chosen)
        logprobs.append(renorm[chosen])
        state = grammar.advance(state, chosen)
    return _to_candidate(_Done(tuple(tokens), tuple(logprobs), not grammar.is_terminal(state)), scorer.vocab)


def _expand_group(
    grammar,
    scorer: TokenScorer,
    input_text: str,
    opens: list[_Open],
    width: int,
    cfg: DecodeConfig,
    penalties: dict[int, int],
    finished: list[_Done],
    truncated: list[_Done],
    step_selected: list[int],
) -> list[_Open]:
    """One timestep for one beam group. Returns the surviving open beams.

    End-of-sequence children are harvested into `finished` without
    occupying beam slots. `penalties` holds per-token selection counts from
    earlier groups at this timestep; every selection made here is appended
    to `step_selected` for the groups after us.
    """
    if not opens:
        return []
    vecs = _score_step(scorer, input_text, [o.tokens for o in opens])
    contenders = []  # (select_score, token_id, generation_order, parent, renorm_lp)
    order = 0
    strength = cfg.diversity_strength
    for parent, vec in zip(opens, vecs):
        _vector_ok(vec, len(scorer.vocab))
        allowed = sorted(grammar.allowed(parent.state))
        renorm = _renormalize(vec, allowed)
        for tid in allowed:
            lp = renorm[tid]
            penalty = strength * penalties.get(tid, 0)
            child_state = grammar.advance(parent.state, tid)
            child_tokens = parent.tokens + (tid,)
            child_lps = parent.logprobs + (lp,)
            if grammar.is_terminal(child_state):
                finished.append(_Done(child_tokens, child_lps, truncated=False))
                step_selected.append(tid)
                continue
            if len(child_tokens) >= cfg.max_length:
                truncated.append(_Done(child_tokens, child_lps, truncated=True))
                continue
            contenders.append(
                (parent.select_score + lp - penalty, tid, order, parent, lp, child_state)
            )
            order += 1
    contenders.sort(key=lambda c: (-c[0], c[1], c[2]))
    survivors = []
    for select_score, tid, _, parent, lp, child_state in contenders[:width]:
        survivors.append(
            _Open(parent.tokens + (tid,), parent.logprobs + (lp,), child_state, select_score)
        )
        step_selected.append(tid)
    return survivors


def _ranked_output(
    finished: list[_Done], truncated: list[_Done], count: int, cfg: DecodeConfig, vocab: Vocabulary
) -> list[ScoredCandidate]:
    ranked = sorted(finished, key=lambda d: -_rank_key(cfg, d))
    if len(ranked) < count:
        ranked += sorted(truncated, key=lambda d: -_rank_key(cfg, d))
    return [_to_candidate(d, vocab) for d in ranked[:count]]


def decode_beam(
    scorer: TokenScorer, input_text: str, spec: TemplateSpec, cfg: DecodeConfig
) -> list[ScoredCandidate]:
    """Beam search; returns up to cfg.beam_count candidates, best first.

    Length-capped prefixes only pad the output when fewer complete
    sequences than beam_count exist.
    """
    grammar = grammar_for(spec, scorer.vocab)
    opens = [_Open((), (), grammar.initial(), 0.0)]
    finished: list[_Done] = []
    truncated: list[_Done] = []
    while opens:
        opens = _expand_group(
            grammar, scorer, input_text, opens, cfg.beam_count, cfg,
            penalties={}, finished=finished, truncated=truncated, step_selected=[],
        )
    return _ranked_output(finished, truncated, cfg.beam_count, cfg, scorer.vocab)


def decode_diverse_beam(
    scorer: TokenScorer, input_text: str, spec: TemplateSpec, cfg: DecodeConfig
) -> list[ScoredCandidate]:
    """Diverse beam search over cfg.group_count groups.

    Groups take turns each timestep; a token already selected at this
    timestep by earlier groups costs later groups
    cfg.diversity_strength per prior selection. With strength 0 every
    group independently reproduces a standard beam search of its size.
    """
    grammar = grammar_for(spec, scorer.vocab)
    width = cfg.beam_count // cfg.group_count
    groups = [[_Open((), (), grammar.initial(), 0.0)] for _ in range(cfg.group_count)]
    finished: list[_Done] = []
    truncated: list[_Done] = []
    while any(groups):
        step_counts: dict[int, int] = {}
        for gi in range(cfg.group_count):
            selected: list[int] = []
            groups[gi] = _expand_group(
                grammar, scorer, input_text, groups[gi], width, cfg,
                penalties=step_counts, finished=finished, truncated=truncated,
                step_selected=selected,
            )
            for tid in selected:
                step_counts[tid] = step_counts.get(tid, 0) + 1
    return _ranked_output(finished, truncated, cfg.beam_count, cfg, scorer.vocab)


def decode(
    scorer: TokenScorer, input_text: str, spec: TemplateSpec, cfg: DecodeConfig
) -> list[ScoredCandidate]:
    """Dispatch on cfg.method; always returns a list."""
    if cfg.method == "greedy":
        return [decode_greedy(scorer, input_text, spec, cfg)]
    if cfg.method == "beam":
        return decode_beam(scorer, input_text, spec, cfg)
    return decode_diverse_beam(scorer, input_text, spec, cfg)
