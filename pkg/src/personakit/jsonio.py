"""JSON and JSONL helpers with deterministic byte output.

Two serialization policies on purpose:

* stage files (JSONL): sorted keys, full float precision, one record per
  line. Scores must survive a round-trip exactly, so floats use repr.
* reports: sorted keys and fixed 4-decimal number literals, so two runs of
  the same computation are byte-identical and diffs stay readable.
"""
from __future__ import annotations

import hashlib
import json
import os
import tempfile
from typing import Any, Iterable, Iterator


def dumps_record(obj: Any) -> str:
    return json.dumps(obj, sort_keys=True, ensure_ascii=False, separators=(", ", ": "))


def write_jsonl(path: str, records: Iterable[Any]) -> None:
    atomic_write_text(path, "".join(dumps_record(r) + "\n" for r in records))


def read_jsonl(path: str) -> Iterator[tuple[int, Any]]:
    """Yield (1-based line number, parsed object). Blank lines are skipped."""
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                yield lineno, json.loads(line)
            except json.JSONDecodeError as exc:
                from .errors import DataError

                raise DataError(f"{path}:{lineno}: invalid JSON: {exc}") from exc


def _format_fixed(value: Any) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return f"{value:.4f}"
    if isinstance(value, int):
        return str(value)
    if value is None:
        return "null"
    if isinstance(value, str):
        return json.dumps(value, ensure_ascii=False)
    if isinstance(value, dict):
        items = sorted(value.items(), key=lambda kv: kv[0])
        inner = ", ".join(f"{json.dumps(k, ensure_ascii=False)}: {_format_fixed(v)}" for k, v in items)
        return "{" + inner + "}"
    if isinstance(value, (list, tuple)):
        return "[" + ", ".join(_format_fixed(v) for v in value) + "]"
    raise TypeError(f"cannot serialize {type(value).__name__} in a report")


def report_json(obj: Any) -> str:
    """Canonical report text: sorted keys, floats as 4-decimal fixed point."""
    return _format_fixed(obj) + "\n"


def canonical_json(obj: Any) -> str:
    """Compact canonical JSON (sorted keys, full float precision)."""
    return json.dumps(obj, sort_keys=True, ensure_ascii=False, separators=(",", ":"))


def atomic_write_text(path: str, text: str) -> None:
    """Write via a temp file in the same directory, then rename over."""
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix=".part")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def sha256_file(path: str) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(65536), b""):
            digest.update(chunk)
    return "sha256:" + digest.hexdigest()


def stable_text_hash(text: str, length: int = 12) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()[:length]
