"""Scorer backends: deterministic table files and a remote HTTP client.

Table files make every pipeline stage hermetic and reproducible; the
remote client speaks a small JSON protocol to a model server exposing the
same operations. Both are observationally interchangeable to the decoder.

Scorer table file (JSON):

    {"version": 1, "eos_token": "</s>", "tokens": [...],
     "uniform_fallback": true,
     "entries": [{"context": "...", "prefix": [0, 4], "logprobs": [...]}]}

Entailment table file (JSON):

    {"version": 1, "default": [0.0, 1.0, 0.0] | null,
     "pairs": [{"premise": "...", "hypothesis": "...",
                "probs": [0.9, 0.07, 0.03]}]}

Stored probabilities of zero serialize to log-space as LOGPROB_FLOOR
(-1e9), which exp() maps back to exactly 0.0.
"""
from __future__ import annotations

import json
import math
import threading
import time
from dataclasses import dataclass
from typing import Sequence

import requests

from .errors import (
    BackendUnavailableError,
    DataError,
    MissingEntryError,
    ProtocolError,
)
from .nli import LOGPROB_FLOOR
from .templates import Vocabulary

VECTOR_TOLERANCE = 1e-6


def _check_normalized(logprobs: Sequence[float], what: str) -> None:
    total = sum(math.exp(lp) for lp in logprobs)
    if abs(total - 1.0) > VECTOR_TOLERANCE:
        raise DataError(f"{what}: probabilities sum to {total!r}, expected 1")


def log_floor(p: float) -> float:
    return math.log(p) if p > 0.0 else LOGPROB_FLOOR


class TableScorer:
    """Exact-lookup scorer: (context, prefix) -> log-prob vector.

    Misses raise MissingEntryError unless uniform_fallback is set, in which
    case a uniform distribution over the vocabulary stands in.
    """

    def __init__(
        self,
        vocab: Vocabulary,
        entries: dict[tuple[str, tuple[int, ...]], tuple[float, ...]],
        uniform_fallback: bool = False,
        source: str = "<memory>",
    ):
        for key, vec in entries.items():
            if len(vec) != len(vocab):
                raise DataError(
                    f"{source}: entry {key!r} has {len(vec)} log-probs, "
                    f"vocabulary has {len(vocab)} tokens"
                )
            _check_normalized(vec, f"{source}: entry {key!r}")
        self.vocab = vocab
        self._entries = entries
        self._uniform_fallback = uniform_fallback
        self._source = source
        self._uniform = tuple([-math.log(len(vocab))] * len(vocab))

    @classmethod
    def from_file(cls, path: str) -> "TableScorer":
        try:
            with open(path, encoding="utf-8") as fh:
                doc = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise DataError(f"cannot read scorer table {path}: {exc}") from exc
        if doc.get("version") != 1:
            raise DataError(f"{path}: unsupported scorer table version {doc.get('version')!r}")
        vocab = Vocabulary(tuple(doc["tokens"]), eos_token=doc.get("eos_token", "</s>"))
        entries = {}
        for entry in doc.get("entries", []):
            key = (entry["context"], tuple(entry["prefix"]))
            entries[key] = tuple(float(x) for x in entry["logprobs"])
        return cls(
            vocab,
            entries,
            uniform_fallback=bool(doc.get("uniform_fallback", False)),
            source=path,
        )

    def next_logprobs(self, context: str, prefix: Sequence[int]) -> Sequence[float]:
        key = (context, tuple(prefix))
        hit = self._entries.get(key)
        if hit is not None:
            return hit
        if self._uniform_fallback:
            return self._uniform
        raise MissingEntryError(f"{self._source}: no entry for context={context!r} prefix={key[1]!r}")

    def next_logprobs_batch(
        self, context: str, prefixes: Sequence[Sequence[int]]
    ) -> list[Sequence[float]]:
        return [self.next_logprobs(context, p) for p in prefixes]


class NliTable:
    """Exact-lookup entailment scorer keyed by (premise, hypothesis)."""

    def __init__(
        self,
        pairs: dict[tuple[str, str], tuple[float, float, float]],
        default: tuple[float, float, float] | None = None,
        source: str = "<memory>",
    ):
        for key, probs in pairs.items():
            self._check_probs(probs, f"{source}: pair {key!r}")
        if default is not None:
            self._check_probs(default, f"{source}: default")
        self._pairs = pairs
        self._default = default
        self._source = source

    @staticmethod
    def _check_probs(probs: Sequence[float], what: str) -> None:
        if len(probs) != 3:
            raise DataError(f"{what}: expected 3 probabilities")
        if any(p < 0 or p > 1 for p in probs):
            raise DataError(f"{what}: probabilities must lie in [0, 1]")
        if abs(sum(probs) - 1.0) > VECTOR_TOLERANCE:
            raise DataError(f"{what}: probabilities sum to {sum(probs)!r}")

    @classmethod
    def from_file(cls, path: str) -> "NliTable":
        try:
            with open(path, encoding="utf-8") as fh:
                doc = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise DataError(f"cannot read entailment table {path}: {exc}") from exc
        if doc.get("version") != 1:
            raise DataError(f"{path}: unsupported entailment table version {doc.get('version')!r}")
        pairs = {}
        for row in doc.get("pairs", []):
            pairs[(row["premise"], row["hypothesis"])] = tuple(float(p) for p in row["probs"])
        default = doc.get("default")
        if default is not None:
            default = tuple(float(p) for p in default)
        return cls(pairs, default=default, source=path)

    def nli_logprobs(self, premise: str, hypothesis: str) -> tuple[float, float, float]:
        if not premise:
            raise ValueError("premise must be non-empty")
        probs = self._pairs.get((premise, hypothesis), self._default)
        if probs is None:
            raise MissingEntryError(
                f"{self._source}: no entry for premise={premise!r} hypothesis={hypothesis!r}"
            )
        return tuple(log_floor(p) for p in probs)

    def nli_logprobs_batch(
        self, pairs: Sequence[tuple[str, str]]
    ) -> list[tuple[float, float, float]]:
        return [self.nli_logprobs(p, h) for p, h in pairs]


@dataclass(frozen=True)
class RemoteConfig:
    timeout: float = 30.0
    retries: int = 3
    backoff: float = 0.1
    max_concurrent: int = 4


class RemoteScorer:
    """HTTP client for a model server.

    Endpoints: GET /v1/vocab, POST /v1/logits, POST /v1/nli. Connection
    failures and 503 (model loading) retry with backoff before giving up;
    malformed replies surface as ProtocolError with a payload excerpt.
    """

    def __init__(self, base_url: str, config: RemoteConfig | None = None):
        self.base_url = base_url.rstrip("/")
        self.config = config or RemoteConfig()
        self._session = requests.Session()
        self._gate = threading.Semaphore(self.config.max_concurrent)
        self._vocab: Vocabulary | None = None

    def _request(self, method: str, path: str, payload: dict | None = None) -> dict:
        url = self.base_url + path
        last_exc: Exception | None = None
        for attempt in range(self.config.retries + 1):
            if attempt:
                time.sleep(self.config.backoff * attempt)
            try:
                with self._gate:
                    resp = self._session.request(
                        method, url, json=payload, timeout=self.config.timeout
                    )
            except (requests.ConnectionError, requests.Timeout) as exc:
                last_exc = exc
                continue
            if resp.status_code == 503:
                last_exc = BackendUnavailableError(f"{url}: model still loading (503)")
                continue
            if resp.status_code != 200:
                raise ProtocolError(
                    f"{url}: HTTP {resp.status_code}: {resp.text[:200]}"
                )
            try:
                return resp.json()
            except ValueError as exc:
                raise ProtocolError(f"{url}: non-JSON reply: {resp.text[:200]}") from exc
        raise BackendUnavailableError(
            f"{url}: unreachable after {self.config.retries + 1} attempts: {last_exc}"
        )

    @property
    def vocab(self) -> Vocabulary:
        if self._vocab is None:
            doc = self._request("GET", "/v1/vocab")
            try:
                tokens = tuple(doc["tokens"])
                eos_id = int(doc["eos_id"])
                marker_ids = dict(doc.get("marker_ids", {}))
            except (KeyError, TypeError, ValueError) as exc:
                raise ProtocolError(f"/v1/vocab: bad payload: {str(doc)[:200]}") from exc
            if not 0 <= eos_id < len(tokens):
                raise ProtocolError(f"/v1/vocab: eos_id {eos_id} out of range")
            for marker, tid in marker_ids.items():
                if not (0 <= int(tid) < len(tokens)) or tokens[int(tid)] != marker:
                    raise ProtocolError(
                        f"/v1/vocab: marker {marker!r} advertised at id {tid} "
                        f"but tokens[{tid}] is {tokens[int(tid)] if 0 <= int(tid) < len(tokens) else None!r}"
                    )
            self._vocab = Vocabulary(tokens, eos_token=tokens[eos_id])
        return self._vocab

    def next_logprobs(self, context: str, prefix: Sequence[int]) -> Sequence[float]:
        return self.next_logprobs_batch(context, [prefix])[0]

    def next_logprobs_batch(
        self, context: str, prefixes: Sequence[Sequence[int]]
    ) -> list[Sequence[float]]:
        payload = {"context": context, "prefixes": [list(p) for p in prefixes]}
        doc = self._request("POST", "/v1/logits", payload)
        vectors = doc.get("logprobs")
        if not isinstance(vectors, list) or len(vectors) != len(prefixes):
            raise ProtocolError(f"/v1/logits: bad payload: {str(doc)[:200]}")
        size = len(self.vocab)
        out = []
        for vec in vectors:
            if not isinstance(vec, list) or len(vec) != size:
                raise ProtocolError(f"/v1/logits: vector length != vocabulary size {size}")
            vec = [float(x) for x in vec]
            total = sum(math.exp(x) for x in vec)
            if abs(total - 1.0) > VECTOR_TOLERANCE:
                raise ProtocolError(f"/v1/logits: vector sums to {total!r} in probability space")
            out.append(vec)
        return out

    def nli_logprobs_batch(
        self, pairs: Sequence[tuple[str, str]]
    ) -> list[tuple[float, float, float]]:
        payload = {"pairs": [{"premise": p, "hypothesis": h} for p, h in pairs]}
        doc = self._request("POST", "/v1/nli", payload)
        rows = doc.get("logprobs")
        if not isinstance(rows, list) or len(rows) != len(pairs):
            raise ProtocolError(f"/v1/nli: bad payload: {str(doc)[:200]}")
        out = []
        for row in rows:
            try:
                triple = (
                    float(row["entailment"]),
                    float(row["neutral"]),
                    float(row["contradiction"]),
                )
            except (KeyError, TypeError, ValueError) as exc:
                raise ProtocolError(f"/v1/nli: bad row: {str(row)[:200]}") from exc
            total = sum(math.exp(x) for x in triple)
            if abs(total - 1.0) > VECTOR_TOLERANCE:
                raise ProtocolError(f"/v1/nli: row sums to {total!r} in probability space")
            out.append(triple)
        return out


def parse_backend_spec(spec_str: str) -> tuple[str, str]:
    """Split a backend specifier into (kind, argument).

    Accepted forms: "table:PATH" and "remote:URL".
    """
    kind, sep, arg = spec_str.partition(":")
    if not sep or kind not in ("table", "remote") or not arg:
        raise ValueError(
            f"bad backend specifier {spec_str!r}; expected table:PATH or remote:URL"
        )
    return kind, arg


def load_token_scorer(spec_str: str, remote_config: RemoteConfig | None = None):
    kind, arg = parse_backend_spec(spec_str)
    if kind == "table":
        return TableScorer.from_file(arg)
    return RemoteScorer(arg, remote_config)


def load_nli_backend(spec_str: str, remote_config: RemoteConfig | None = None):
    kind, arg = parse_backend_spec(spec_str)
    if kind == "table":
        return NliTable.from_file(arg)
    return RemoteScorer(arg, remote_config)
