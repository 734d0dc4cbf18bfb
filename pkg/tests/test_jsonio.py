"""Deterministic JSON serialization and file helpers."""
import hashlib
import json
import math
import os

import pytest
from hypothesis import given
from hypothesis import strategies as st

from personakit.errors import DataError
from personakit.jsonio import (
    atomic_write_text,
    canonical_json,
    dumps_record,
    read_jsonl,
    report_json,
    sha256_file,
    stable_text_hash,
    write_jsonl,
)


def test_dumps_record_sorted_keys_full_precision():
    text = dumps_record({"b": 1 / 3, "a": "x"})
    assert text == '{"a": "x", "b": 0.3333333333333333}'
    assert json.loads(text)["b"] == 1 / 3


def test_dumps_record_keeps_unicode():
    assert dumps_record({"name": "café"}) == '{"name": "café"}'


@given(st.floats(allow_nan=False, allow_infinity=False))
def test_record_floats_round_trip_exactly(value):
    assert json.loads(dumps_record({"v": value}))["v"] == value


def test_write_then_read_jsonl(tmp_path):
    path = str(tmp_path / "rows.jsonl")
    write_jsonl(path, [{"i": 0}, {"i": 1}])
    assert list(read_jsonl(path)) == [(1, {"i": 0}), (2, {"i": 1})]


def test_read_jsonl_skips_blank_lines_and_reports_bad_ones(tmp_path):
    path = tmp_path / "rows.jsonl"
    path.write_text('{"i": 0}\n\n{"i": 2}\nnot json\n')
    rows = read_jsonl(str(path))
    assert next(rows) == (1, {"i": 0})
    assert next(rows) == (3, {"i": 2})
    with pytest.raises(DataError, match="rows.jsonl:4"):
        next(rows)


def test_report_json_fixed_decimals_and_ordering():
    text = report_json({"z": 0.5, "a": True, "m": None, "k": [1.0, 2], "s": "x"})
    assert text == '{"a": true, "k": [1.0000, 2], "m": null, "s": "x", "z": 0.5000}\n'


def test_report_json_nested_and_rejects_exotic_types():
    assert report_json({"outer": {"b": 2, "a": 1.25}}) == '{"outer": {"a": 1.2500, "b": 2}}\n'
    with pytest.raises(TypeError):
        report_json({"x": object()})


def test_report_json_bools_are_not_ints():
    assert report_json([True, False, 1, 0]) == "[true, false, 1, 0]\n"


def test_report_json_is_parseable_json():
    doc = {"ratio": 2 / 3, "rows": [{"v": 0.1}], "flag": False}
    assert json.loads(report_json(doc)) == {
        "ratio": 0.6667,
        "rows": [{"v": 0.1}],
        "flag": False,
    }


def test_canonical_json_compact():
    assert canonical_json({"b": 1, "a": [1, 2]}) == '{"a":[1,2],"b":1}'


def test_atomic_write_creates_parents_and_leaves_no_temp(tmp_path):
    path = str(tmp_path / "deep" / "file.txt")
    atomic_write_text(path, "hello")
    with open(path) as fh:
        assert fh.read() == "hello"
    assert os.listdir(tmp_path / "deep") == ["file.txt"]


def test_atomic_write_replaces_existing(tmp_path):
    path = str(tmp_path / "f.txt")
    atomic_write_text(path, "one")
    atomic_write_text(path, "two")
    with open(path) as fh:
        assert fh.read() == "two"


def test_sha256_file_matches_hashlib(tmp_path):
    path = tmp_path / "blob.bin"
    path.write_bytes(b"abc" * 1000)
    expected = hashlib.sha256(b"abc" * 1000).hexdigest()
    assert sha256_file(str(path)) == f"sha256:{expected}"


def test_stable_text_hash_prefix_lengths():
    full = hashlib.sha256("persona".encode()).hexdigest()
    assert stable_text_hash("persona") == full[:12]
    assert stable_text_hash("persona", length=16) == full[:16]


def test_report_json_negative_and_tiny_floats():
    assert report_json({"neg": -0.12345, "tiny": 1e-9}) == '{"neg": -0.1235, "tiny": 0.0000}\n'
    assert not math.isnan(json.loads(report_json({"v": -0.0}))["v"])
