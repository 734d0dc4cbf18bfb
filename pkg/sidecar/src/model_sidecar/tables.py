"""Readers for the mock-mode data files.

The server's only coupling to its clients is the wire protocol plus
three JSON file formats: the scorer table, the entailment table, and
the template document. These parsers implement the file formats from
their documentation; they share no code with any client.

Scorer table:

    {"version": 1, "eos_token": "</s>", "tokens": [...],
     "uniform_fallback": true,
     "entries": [{"context": "...", "prefix": [0, 4], "logprobs": [...]}]}

Entailment table:

    {"version": 1, "default": [0.7, 0.2, 0.1] | null,
     "pairs": [{"premise": "...", "hypothesis": "...",
                "probs": [0.9, 0.07, 0.03]}]}

Template document:

    {"version": 1, "variant": "...", "mask_token": "...",
     "input_parts": [...], "slots": [{"marker": "...", "fill": "..."}],
     "output_suffix": ""}
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass

# -inf stands in for log(0) so every serialized vector stays finite JSON
LOGPROB_FLOOR = -1e9
PROB_TOLERANCE = 1e-6

# protocol constants shared with every client
RELATION_TOKENS = (
    "[characteristic]",
    "[routine_habit]",
    "[goal_plan]",
    "[experience]",
    "[no_relation]",
)
CONTEXT_PLACEHOLDER = "{context}"
MASK_PLACEHOLDER = "{mask}"


class TableError(ValueError):
    """A data file failed validation."""


def _load_doc(path: str, what: str) -> dict:
    try:
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise TableError(f"cannot read {what} {path}: {exc}") from exc
    if not isinstance(doc, dict) or doc.get("version") != 1:
        raise TableError(f"{path}: unsupported {what} version")
    return doc


def log_floor(p: float) -> float:
    return math.log(p) if p > 0.0 else LOGPROB_FLOOR


def _check_vector(logprobs: list[float], what: str) -> None:
    total = sum(math.exp(x) for x in logprobs)
    if abs(total - 1.0) > PROB_TOLERANCE:
        raise TableError(f"{what}: probabilities sum to {total!r}, expected 1")


@dataclass(frozen=True)
class ScorerTable:
    tokens: tuple[str, ...]
    eos_id: int
    uniform_fallback: bool
    entries: dict[tuple[str, tuple[int, ...]], tuple[float, ...]]

    @classmethod
    def load(cls, path: str) -> "ScorerTable":
        doc = _load_doc(path, "scorer table")
        tokens = tuple(str(t) for t in doc.get("tokens", ()))
        if len(set(tokens)) != len(tokens) or not tokens:
            raise TableError(f"{path}: tokens must be non-empty and unique")
        eos_token = str(doc.get("eos_token", "</s>"))
        if eos_token not in tokens:
            raise TableError(f"{path}: eos token {eos_token!r} missing from tokens")
        entries = {}
        for row in doc.get("entries", ()):
            key = (str(row["context"]), tuple(int(t) for t in row["prefix"]))
            vec = tuple(float(x) for x in row["logprobs"])
            if len(vec) != len(tokens):
                raise TableError(
                    f"{path}: entry {key!r} has {len(vec)} log-probs for "
                    f"{len(tokens)} tokens"
                )
            _check_vector(list(vec), f"{path}: entry {key!r}")
            entries[key] = vec
        return cls(
            tokens=tokens,
            eos_id=tokens.index(eos_token),
            uniform_fallback=bool(doc.get("uniform_fallback", False)),
            entries=entries,
        )

    def logprobs(self, context: str, prefix: tuple[int, ...]) -> list[float]:
        hit = self.entries.get((context, prefix))
        if hit is not None:
            return list(hit)
        if self.uniform_fallback:
            return [-math.log(len(self.tokens))] * len(self.tokens)
        raise TableError(f"no entry for context={context!r} prefix={prefix!r}")


@dataclass(frozen=True)
class EntailmentTable:
    pairs: dict[tuple[str, str], tuple[float, float, float]]
    default: tuple[float, float, float] | None

    @staticmethod
    def _check_probs(probs: tuple[float, ...], what: str) -> tuple[float, float, float]:
        if len(probs) != 3:
            raise TableError(f"{what}: expected 3 probabilities")
        if any(p < 0 or p > 1 for p in probs):
            raise TableError(f"{what}: probabilities must lie in [0, 1]")
        if abs(sum(probs) - 1.0) > PROB_TOLERANCE:
            raise TableError(f"{what}: probabilities sum to {sum(probs)!r}")
        return probs  # type: ignore[return-value]

    @classmethod
    def load(cls, path: str) -> "EntailmentTable":
        doc = _load_doc(path, "entailment table")
        pairs = {}
        for row in doc.get("pairs", ()):
            key = (str(row["premise"]), str(row["hypothesis"]))
            probs = tuple(float(p) for p in row["probs"])
            pairs[key] = cls._check_probs(probs, f"{path}: pair {key!r}")
        default = doc.get("default")
        if default is not None:
            default = cls._check_probs(
                tuple(float(p) for p in default), f"{path}: default"
            )
        return cls(pairs=pairs, default=default)

    def logprobs(self, premise: str, hypothesis: str) -> tuple[float, float, float]:
        if not premise:
            raise TableError("premise must be non-empty")
        probs = self.pairs.get((premise, hypothesis), self.default)
        if probs is None:
            raise TableError(
                f"no entry for premise={premise!r} hypothesis={hypothesis!r}"
            )
        return tuple(log_floor(p) for p in probs)  # type: ignore[return-value]


@dataclass(frozen=True)
class TemplateDoc:
    variant: str
    mask_token: str
    input_parts: tuple[str, ...]
    slot_markers: tuple[str, ...]
    output_suffix: str

    @classmethod
    def load(cls, path: str) -> "TemplateDoc":
        doc = _load_doc(path, "template document")
        try:
            return cls(
                variant=str(doc["variant"]),
                mask_token=str(doc["mask_token"]),
                input_parts=tuple(str(p) for p in doc["input_parts"]),
                slot_markers=tuple(str(s["marker"]) for s in doc["slots"]),
                output_suffix=str(doc.get("output_suffix", "")),
            )
        except (KeyError, TypeError) as exc:
            raise TableError(f"{path}: malformed template document: {exc}") from exc

    def structural_spellings(self) -> frozenset[str]:
        """Literal spellings that can never be slot content.

        Input literals (minus the context part, with the mask placeholder
        substituted), slot markers, relation tokens, the suffix, and the
        mask token itself.
        """
        literals = [p for p in self.input_parts if CONTEXT_PLACEHOLDER not in p]
        literals = [p.replace(MASK_PLACEHOLDER, self.mask_token) for p in literals]
        spellings = set(literals)
        spellings.update(self.slot_markers)
        spellings.update(RELATION_TOKENS)
        if self.output_suffix:
            spellings.add(self.output_suffix)
        if self.mask_token:
            spellings.add(self.mask_token)
        spellings.discard("")
        return frozenset(spellings)
