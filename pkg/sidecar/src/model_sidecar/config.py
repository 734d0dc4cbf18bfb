"""Service configuration."""
from __future__ import annotations

from dataclasses import dataclass


@dataclass(frozen=True)
class SidecarConfig:
    """What to serve and how.

    Exactly one source per scorer: a mock table file serves both
    endpoints deterministically, otherwise checkpoint names load real
    models. The template document tells the vocabulary endpoint which
    marker spellings to advertise.
    """

    mock_table: str | None = None
    mock_nli_table: str | None = None
    seq2seq_model: str | None = None
    nli_model: str | None = None
    template_path: str | None = None
    host: str = "127.0.0.1"
    port: int = 8741
    batch_cap: int = 16

    def __post_init__(self):
        if self.batch_cap < 1:
            raise ValueError("batch_cap must be at least 1")
        if bool(self.mock_table) == bool(self.seq2seq_model):
            raise ValueError("configure exactly one of mock_table, seq2seq_model")
        if bool(self.mock_nli_table) == bool(self.nli_model):
            raise ValueError("configure exactly one of mock_nli_table, nli_model")
