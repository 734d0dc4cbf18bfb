"""Checkpoint-backed scorers. Imported only when a model name is configured.

Both backends return full normalized distributions in log space; the
protocol never exposes raw logits. Values are whatever the checkpoint
says they are; only shapes and normalization are contractual.
"""
from __future__ import annotations

from typing import Sequence


class Seq2SeqBackend:
    """Next-token log-probs from an encoder-decoder checkpoint."""

    def __init__(self, model_name: str):
        import torch
        from transformers import AutoModelForSeq2SeqLM, AutoTokenizer

        self._torch = torch
        self._tokenizer = AutoTokenizer.from_pretrained(model_name)
        self._model = AutoModelForSeq2SeqLM.from_pretrained(model_name)
        self._model.eval()
        size = self._model.get_output_embeddings().weight.shape[0]
        self._tokens = tuple(
            self._tokenizer.convert_ids_to_tokens(i) or f"<unused_{i}>"
            for i in range(size)
        )
        eos = self._model.config.eos_token_id
        if eos is None:
            raise ValueError(f"{model_name}: checkpoint declares no eos token")
        self._eos_id = int(eos)

    def vocab_tokens(self) -> tuple[str, ...]:
        return self._tokens

    def eos_id(self) -> int:
        return self._eos_id

    def logprobs_batch(
        self, context: str, prefixes: Sequence[tuple[int, ...]]
    ) -> list[list[float]]:
        torch = self._torch
        start = self._model.config.decoder_start_token_id
        if start is None:
            start = self._model.config.pad_token_id
        encoded = self._tokenizer([context], return_tensors="pt")
        out = []
        with torch.no_grad():
            encoder_out = self._model.get_encoder()(**encoded)
            for prefix in prefixes:
                decoder_ids = torch.tensor([[start, *prefix]])
                result = self._model(
                    encoder_outputs=encoder_out,
                    attention_mask=encoded["attention_mask"],
                    decoder_input_ids=decoder_ids,
                )
                logits = result.logits[0, -1, :]
                out.append(torch.log_softmax(logits, dim=-1).tolist())
        return out


class NliModelBackend:
    """Three-way entailment distribution from a classifier checkpoint."""

    _WANTED = ("entailment", "neutral", "contradiction")

    def __init__(self, model_name: str):
        import torch
        from transformers import AutoModelForSequenceClassification, AutoTokenizer

        self._torch = torch
        self._tokenizer = AutoTokenizer.from_pretrained(model_name)
        self._model = AutoModelForSequenceClassification.from_pretrained(model_name)
        self._model.eval()
        by_label = {
            label.lower(): idx
            for idx, label in self._model.config.id2label.items()
        }
        try:
            self._order = tuple(by_label[w] for w in self._WANTED)
        except KeyError as exc:
            raise ValueError(
                f"{model_name}: id2label {self._model.config.id2label!r} does not "
                f"cover entailment/neutral/contradiction"
            ) from exc

    def rows_batch(
        self, pairs: Sequence[tuple[str, str]]
    ) -> list[tuple[float, float, float]]:
        torch = self._torch
        premises = [p for p, _ in pairs]
        hypotheses = [h for _, h in pairs]
        encoded = self._tokenizer(
            premises, hypotheses, return_tensors="pt", padding=True, truncation=True
        )
        with torch.no_grad():
            logits = self._model(**encoded).logits
            logprobs = torch.log_softmax(logits, dim=-1)
        rows = []
        for row in logprobs:
            e, n, c = (float(row[i]) for i in self._order)
            rows.append((e, n, c))
        return rows
