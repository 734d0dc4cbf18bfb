"""Entailment adjudication of decoded candidates.

A three-way entailment distribution is collapsed to a binary verdict:
entailed only when the entailment log-probability strictly exceeds both
alternatives. Two adjudication modes build on that verdict:

* rerank: entailed candidates gain their entailment log-probability on top
  of the language-model score; everything is re-sorted.
* neutral_removed: only entailed candidates survive; an empty survivor set
  collapses to a no_relation sentinel so downstream stages see an explicit
  "nothing extractable" value instead of silence.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Protocol, Sequence

from .decoding import ScoredCandidate
from .templates import (
    MalformedOutput,
    PersonaTriplet,
    RelationType,
    TemplateSpec,
    parse_output,
    triplet_to_sentence,
)

# Serialized stand-in for log(0); exp() underflows it to exactly 0.0.
LOGPROB_FLOOR = -1e9

NORMALIZATION_TOLERANCE = 1e-4

MODES = ("none", "rerank", "neutral_removed")


@dataclass(frozen=True)
class NliVerdict:
    entailed: bool
    logp_entailment: float
    logp_neutral: float
    logp_contradiction: float

    def as_tuple(self) -> tuple[float, float, float]:
        return (self.logp_entailment, self.logp_neutral, self.logp_contradiction)


class NliBackend(Protocol):
    def nli_logprobs_batch(
        self, pairs: Sequence[tuple[str, str]]
    ) -> list[tuple[float, float, float]]: ...


def collapse_binary(logprobs: Sequence[float]) -> NliVerdict:
    """Three-way (entailment, neutral, contradiction) to binary.

    Input must be normalized within 1e-4 in probability space; the stored
    verdict is renormalized exactly. A tie for the top is not entailment.
    """
    if len(logprobs) != 3:
        raise ValueError(f"expected 3 log-probs, got {len(logprobs)}")
    total = sum(math.exp(lp) for lp in logprobs)
    if abs(total - 1.0) > NORMALIZATION_TOLERANCE:
        raise ValueError(f"log-probs not normalized: probabilities sum to {total!r}")
    m = max(logprobs)
    lse = m + math.log(sum(math.exp(lp - m) for lp in logprobs))
    lpe, lpn, lpc = (lp - lse for lp in logprobs)
    return NliVerdict(
        entailed=lpe > lpn and lpe > lpc,
        logp_entailment=lpe,
        logp_neutral=lpn,
        logp_contradiction=lpc,
    )


NOT_ENTAILED_NO_CALL = NliVerdict(
    entailed=False,
    logp_entailment=LOGPROB_FLOOR,
    logp_neutral=0.0,
    logp_contradiction=LOGPROB_FLOOR,
)


def _check_aligned(candidates: Sequence[ScoredCandidate], verdicts: Sequence[NliVerdict]) -> None:
    if len(candidates) != len(verdicts):
        raise ValueError(
            f"candidates ({len(candidates)}) and verdicts ({len(verdicts)}) must align"
        )


def rerank(
    candidates: Sequence[ScoredCandidate], verdicts: Sequence[NliVerdict]
) -> list[ScoredCandidate]:
    """Entailment-aware re-sort; returns new candidates, inputs untouched.

    final_score = lm_score + logp_entailment when entailed, else lm_score.
    The sort is stable, so equal scores keep their input order.
    """
    _check_aligned(candidates, verdicts)
    rescored = []
    for cand, verdict in zip(candidates, verdicts):
        bonus = verdict.logp_entailment if verdict.entailed else 0.0
        rescored.append(replace(cand, nli=verdict, final_score=cand.lm_score + bonus))
    return sorted(rescored, key=lambda c: -c.final_score)


def no_relation_sentinel(source_id: str = "") -> PersonaTriplet:
    return PersonaTriplet(head="", relation=RelationType.no_relation, tail="", source_id=source_id)


def filter_neutral_removed(
    candidates: Sequence[ScoredCandidate],
    verdicts: Sequence[NliVerdict],
    source_id: str = "",
) -> list[ScoredCandidate] | PersonaTriplet:
    """Keep only entailed candidates, in their input order.

    When nothing survives, returns the no_relation sentinel triplet with
    the source id preserved, so the caller still emits a record.
    """
    _check_aligned(candidates, verdicts)
    kept = [
        replace(cand, nli=verdict, final_score=cand.lm_score)
        for cand, verdict in zip(candidates, verdicts)
        if verdict.entailed
    ]
    if not kept:
        return no_relation_sentinel(source_id)
    return kept


def judge_candidates(
    utterance: str,
    candidates: Sequence[ScoredCandidate],
    spec: TemplateSpec,
    backend: NliBackend,
) -> list[NliVerdict]:
    """One verdict per candidate, batching the backend call.

    The premise is the full utterance; the hypothesis is the candidate's
    sentence form. Candidates with no sentence form (malformed parses and
    no_relation outputs) are judged not entailed without touching the
    backend at all.
    """
    sentences: list[str | None] = []
    for cand in candidates:
        parsed = parse_output(cand.text, spec)
        if isinstance(parsed, MalformedOutput) or parsed.relation is RelationType.no_relation:
            sentences.append(None)
        else:
            sentences.append(triplet_to_sentence(parsed))
    pairs = [(utterance, s) for s in sentences if s is not None]
    scored = iter(backend.nli_logprobs_batch(pairs) if pairs else [])
    verdicts = []
    for sentence in sentences:
        if sentence is None:
            verdicts.append(NOT_ENTAILED_NO_CALL)
        else:
            verdicts.append(collapse_binary(next(scored)))
    return verdicts


def adjudicate(
    utterance: str,
    candidates: Sequence[ScoredCandidate],
    spec: TemplateSpec,
    backend: NliBackend | None,
    mode: str,
    source_id: str = "",
) -> list[ScoredCandidate] | PersonaTriplet:
    """Apply one adjudication mode to a candidate list.

    mode "none" passes candidates through untouched and needs no backend.
    """
    if mode not in MODES:
        raise ValueError(f"unknown adjudication mode {mode!r}")
    if mode == "none":
        return list(candidates)
    if backend is None:
        raise ValueError(f"mode {mode!r} requires an entailment backend")
    verdicts = judge_candidates(utterance, candidates, spec, backend)
    if mode == "rerank":
        return rerank(candidates, verdicts)
    return filter_neutral_removed(candidates, verdicts, source_id)
