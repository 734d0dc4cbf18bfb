"""Scoring state machine behind the HTTP handlers.

The service starts in "loading", becomes "ok" once its backends are
ready, and answers every scoring call by delegating to the active
backend in chunks no larger than the configured batch cap.
"""
from __future__ import annotations

import threading
from typing import Protocol, Sequence

from .config import SidecarConfig
from .tables import EntailmentTable, ScorerTable, TableError, TemplateDoc


class NotReadyError(RuntimeError):
    """A scoring endpoint was hit while the model is still loading."""


class RequestError(ValueError):
    """The request body is well-formed JSON but semantically invalid."""


class TokenBackend(Protocol):
    def vocab_tokens(self) -> tuple[str, ...]: ...
    def eos_id(self) -> int: ...
    def logprobs_batch(
        self, context: str, prefixes: Sequence[tuple[int, ...]]
    ) -> list[list[float]]: ...


class NliBackend(Protocol):
    def rows_batch(
        self, pairs: Sequence[tuple[str, str]]
    ) -> list[tuple[float, float, float]]: ...


class TableTokenBackend:
    def __init__(self, table: ScorerTable):
        self._table = table

    def vocab_tokens(self) -> tuple[str, ...]:
        return self._table.tokens

    def eos_id(self) -> int:
        return self._table.eos_id

    def logprobs_batch(self, context, prefixes):
        return [self._table.logprobs(context, p) for p in prefixes]


class TableNliBackend:
    def __init__(self, table: EntailmentTable):
        self._table = table

    def rows_batch(self, pairs):
        return [self._table.logprobs(p, h) for p, h in pairs]


def _chunks(items: Sequence, size: int):
    for start in range(0, len(items), size):
        yield items[start : start + size]


class ScoringService:
    def __init__(self, config: SidecarConfig):
        self.config = config
        self._lock = threading.Lock()
        self._status = "loading"
        self._tokens: TokenBackend | None = None
        self._nli: NliBackend | None = None
        self._template: TemplateDoc | None = None

    @property
    def status(self) -> str:
        with self._lock:
            return self._status

    def load(self) -> None:
        """Parse tables or load checkpoints, then flip to "ok".

        Safe to call once; the server runs it in a background thread so
        the health endpoint answers "loading" in the meantime.
        """
        cfg = self.config
        template = TemplateDoc.load(cfg.template_path) if cfg.template_path else None
        if cfg.mock_table:
            tokens: TokenBackend = TableTokenBackend(ScorerTable.load(cfg.mock_table))
        else:
            from .real_models import Seq2SeqBackend

            tokens = Seq2SeqBackend(cfg.seq2seq_model)
        if cfg.mock_nli_table:
            nli: NliBackend = TableNliBackend(EntailmentTable.load(cfg.mock_nli_table))
        else:
            from .real_models import NliModelBackend

            nli = NliModelBackend(cfg.nli_model)
        with self._lock:
            self._tokens = tokens
            self._nli = nli
            self._template = template
            self._status = "ok"

    def _ready_tokens(self) -> TokenBackend:
        with self._lock:
            if self._status != "ok" or self._tokens is None:
                raise NotReadyError("model is loading")
            return self._tokens

    def _ready_nli(self) -> NliBackend:
        with self._lock:
            if self._status != "ok" or self._nli is None:
                raise NotReadyError("model is loading")
            return self._nli

    def vocab_payload(self) -> dict:
        backend = self._ready_tokens()
        tokens = backend.vocab_tokens()
        marker_ids: dict[str, int] = {}
        with self._lock:
            template = self._template
        if template is not None:
            ids = {t: i for i, t in enumerate(tokens)}
            for spelling in sorted(template.structural_spellings()):
                if spelling in ids:
                    marker_ids[spelling] = ids[spelling]
        return {
            "tokens": list(tokens),
            "marker_ids": marker_ids,
            "eos_id": backend.eos_id(),
        }

    def token_logprobs(
        self, context: str, prefixes: Sequence[tuple[int, ...]]
    ) -> list[list[float]]:
        backend = self._ready_tokens()
        size = len(backend.vocab_tokens())
        for prefix in prefixes:
            for tid in prefix:
                if not 0 <= tid < size:
                    raise RequestError(
                        f"prefix token id {tid} outside vocabulary of {size} tokens"
                    )
        out: list[list[float]] = []
        for chunk in _chunks(list(prefixes), self.config.batch_cap):
            try:
                out.extend(backend.logprobs_batch(context, chunk))
            except TableError as exc:
                raise RequestError(str(exc)) from exc
        return out

    def nli_rows(
        self, pairs: Sequence[tuple[str, str]]
    ) -> list[tuple[float, float, float]]:
        backend = self._ready_nli()
        out: list[tuple[float, float, float]] = []
        for chunk in _chunks(list(pairs), self.config.batch_cap):
            try:
                out.extend(backend.rows_batch(chunk))
            except TableError as exc:
                raise RequestError(str(exc)) from exc
        return out
