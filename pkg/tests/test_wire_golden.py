"""Frozen wire-protocol exchanges.

tests/data/golden holds a scorer table, an entailment table, a template
document, and one request/response file pair per protocol exchange. The
response files hold the exact canonical bytes a conforming server must
return for the paired request; they are derived here from the table
backends, so the table backends are the semantics oracle for any server
implementation that serves the same files.

Running this module directly with --write regenerates every golden file
from the literals below.
"""
from __future__ import annotations

import json
import math
import os
import sys
import threading
from http.server import BaseHTTPRequestHandler, HTTPServer

import pytest

from personakit.jsonio import canonical_json
from personakit.scorers import NliTable, RemoteConfig, RemoteScorer, TableScorer
from personakit.templates import TemplateSpec

GOLDEN_DIR = os.path.join(os.path.dirname(__file__), "data", "golden")
FLOOR = -1e9
CONTEXT = "[CTX] hello"

TABLE_DOC = {
    "version": 1,
    "eos_token": "</s>",
    "tokens": ["[X]", "</s>", "a", "b", "c"],
    "uniform_fallback": True,
    "entries": [
        {"context": CONTEXT, "prefix": [], "logprobs": [-math.log(5)] * 5},
        {
            "context": CONTEXT,
            "prefix": [0],
            "logprobs": [FLOOR, FLOOR, math.log(0.4), math.log(0.35), math.log(0.25)],
        },
        {
            "context": CONTEXT,
            "prefix": [0, 2],
            "logprobs": [FLOOR, math.log(0.7)] + [math.log(0.1)] * 3,
        },
        {
            "context": CONTEXT,
            "prefix": [0, 3],
            "logprobs": [FLOOR, math.log(0.7)] + [math.log(0.1)] * 3,
        },
        {
            "context": CONTEXT,
            "prefix": [0, 4],
            "logprobs": [FLOOR, math.log(0.7)] + [math.log(0.1)] * 3,
        },
    ],
}

NLI_DOC = {
    "version": 1,
    "default": [0.05, 0.15, 0.8],
    "pairs": [
        {
            "premise": "the pirate sails at dawn",
            "hypothesis": "self routine habit sail",
            "probs": [0.7, 0.2, 0.1],
        },
        {
            "premise": "the pirate sails at dawn",
            "hypothesis": "self goal plan retire",
            "probs": [0.0, 1.0, 0.0],
        },
        {
            "premise": "café über allés",
            "hypothesis": "self characteristic drink café",
            "probs": [0.25, 0.5, 0.25],
        },
    ],
}

TEMPLATE_DOC = {
    "version": 1,
    "variant": "golden_toy",
    "mask_token": "<mask>",
    "input_parts": ["[CTX]", "{context}"],
    "slots": [{"marker": "[X]", "fill": "tail"}],
    "output_suffix": "",
}

NLI_REQUEST_PAIRS = [
    {"premise": "the pirate sails at dawn", "hypothesis": "self routine habit sail"},
    {"premise": "the pirate sails at dawn", "hypothesis": "self goal plan retire"},
    {"premise": "café über allés", "hypothesis": "self characteristic drink café"},
    {"premise": "the pirate sails at dawn", "hypothesis": "self experience born at sea"},
]

REQUESTS = {
    "vocab": {"method": "GET", "path": "/v1/vocab"},
    "health": {"method": "GET", "path": "/v1/health"},
    "logits_single": {
        "method": "POST",
        "path": "/v1/logits",
        "body": {"context": CONTEXT, "prefixes": [[0]]},
    },
    "logits_batch": {
        "method": "POST",
        "path": "/v1/logits",
        "body": {"context": CONTEXT, "prefixes": [[], [0], [0, 2], [0, 4]]},
    },
    "logits_fallback": {
        "method": "POST",
        "path": "/v1/logits",
        "body": {"context": CONTEXT, "prefixes": [[4, 4]]},
    },
    "nli_pairs": {
        "method": "POST",
        "path": "/v1/nli",
        "body": {"pairs": NLI_REQUEST_PAIRS},
    },
}

EXCHANGE_NAMES = sorted(REQUESTS)


def _golden_path(name: str, kind: str) -> str:
    return os.path.join(GOLDEN_DIR, f"{name}.{kind}.json")


def load_backends():
    table = TableScorer.from_file(os.path.join(GOLDEN_DIR, "scorer_table.json"))
    nli = NliTable.from_file(os.path.join(GOLDEN_DIR, "nli_table.json"))
    with open(os.path.join(GOLDEN_DIR, "template.json"), encoding="utf-8") as fh:
        spec = TemplateSpec.from_json_dict(json.load(fh))
    return table, nli, spec


def expected_response(name: str, table: TableScorer, nli: NliTable, spec: TemplateSpec) -> bytes:
    """What a conforming server must answer, as exact bytes."""
    if name == "health":
        doc = {"status": "ok"}
    elif name == "vocab":
        ids = table.vocab.token_to_id
        doc = {
            "tokens": list(table.vocab.tokens),
            "marker_ids": {
                s: ids[s] for s in sorted(spec.structural_spellings) if s in ids
            },
            "eos_id": ids[table.vocab.eos_token],
        }
    elif name.startswith("logits"):
        body = REQUESTS[name]["body"]
        vectors = table.next_logprobs_batch(
            body["context"], [tuple(p) for p in body["prefixes"]]
        )
        doc = {"logprobs": [list(v) for v in vectors]}
    else:
        rows = nli.nli_logprobs_batch(
            [(p["premise"], p["hypothesis"]) for p in REQUESTS[name]["body"]["pairs"]]
        )
        doc = {
            "logprobs": [
                {"entailment": e, "neutral": n, "contradiction": c} for e, n, c in rows
            ]
        }
    return canonical_json(doc).encode("utf-8")


def write_goldens() -> None:
    os.makedirs(GOLDEN_DIR, exist_ok=True)
    for filename, doc in (
        ("scorer_table.json", TABLE_DOC),
        ("nli_table.json", NLI_DOC),
        ("template.json", TEMPLATE_DOC),
    ):
        with open(os.path.join(GOLDEN_DIR, filename), "w", encoding="utf-8") as fh:
            json.dump(doc, fh, indent=1, ensure_ascii=False)
            fh.write("\n")
    table, nli, spec = load_backends()
    for name in EXCHANGE_NAMES:
        with open(_golden_path(name, "request"), "wb") as fh:
            fh.write(canonical_json(REQUESTS[name]).encode("utf-8"))
        with open(_golden_path(name, "response"), "wb") as fh:
            fh.write(expected_response(name, table, nli, spec))


# ----------------------------------------------------------------- tests


@pytest.fixture(scope="module")
def backends():
    return load_backends()


@pytest.mark.parametrize("name", EXCHANGE_NAMES)
def test_golden_request_files_match_literals(name):
    with open(_golden_path(name, "request"), "rb") as fh:
        assert fh.read() == canonical_json(REQUESTS[name]).encode("utf-8")


@pytest.mark.parametrize("name", EXCHANGE_NAMES)
def test_golden_response_files_match_table_semantics(name, backends):
    table, nli, spec = backends
    with open(_golden_path(name, "response"), "rb") as fh:
        assert fh.read() == expected_response(name, table, nli, spec)


def test_golden_responses_are_canonical_json():
    # canonical form: parse and re-serialize is the identity
    for name in EXCHANGE_NAMES:
        with open(_golden_path(name, "response"), "rb") as fh:
            raw = fh.read()
        assert canonical_json(json.loads(raw)).encode("utf-8") == raw


class _ReplayHandler(BaseHTTPRequestHandler):
    """Answers every golden request with the checked-in response bytes."""

    def log_message(self, *args):
        pass

    def _respond(self, payload: bytes, code: int = 200):
        self.send_response(code)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(payload)))
        self.end_headers()
        self.wfile.write(payload)

    def _golden_bytes(self, name: str) -> bytes:
        with open(_golden_path(name, "response"), "rb") as fh:
            return fh.read()

    def do_GET(self):
        for name in ("vocab", "health"):
            if self.path == REQUESTS[name]["path"]:
                self._respond(self._golden_bytes(name))
                return
        self._respond(b'{"error":"unknown path"}', 404)

    def do_POST(self):
        length = int(self.headers.get("Content-Length", 0))
        body = json.loads(self.rfile.read(length))
        for name in EXCHANGE_NAMES:
            request = REQUESTS[name]
            if request["method"] != "POST" or request["path"] != self.path:
                continue
            if body == request["body"]:
                self.server.matched.append(name)
                self._respond(self._golden_bytes(name))
                return
        self._respond(b'{"error":"request does not match any golden body"}', 404)


@pytest.fixture
def replay_server():
    httpd = HTTPServer(("127.0.0.1", 0), _ReplayHandler)
    httpd.matched = []
    thread = threading.Thread(target=httpd.serve_forever, daemon=True)
    thread.start()
    yield httpd
    httpd.shutdown()
    thread.join(timeout=2)


def test_remote_client_round_trips_golden_exchanges(replay_server, backends):
    table, nli, _ = backends
    url = f"http://127.0.0.1:{replay_server.server_address[1]}"
    client = RemoteScorer(url, RemoteConfig(timeout=5, retries=0, backoff=0.01))

    assert client.vocab.tokens == table.vocab.tokens
    assert client.vocab.eos_token == table.vocab.eos_token

    single = client.next_logprobs(CONTEXT, (0,))
    assert single == list(table.next_logprobs(CONTEXT, (0,)))

    batch_prefixes = [(), (0,), (0, 2), (0, 4)]
    batch = client.next_logprobs_batch(CONTEXT, batch_prefixes)
    assert batch == [list(v) for v in table.next_logprobs_batch(CONTEXT, batch_prefixes)]

    fallback = client.next_logprobs(CONTEXT, (4, 4))
    assert fallback == [-math.log(5)] * 5

    pairs = [(p["premise"], p["hypothesis"]) for p in NLI_REQUEST_PAIRS]
    assert client.nli_logprobs_batch(pairs) == nli.nli_logprobs_batch(pairs)

    # each POST body the client produced matched a golden request file
    assert sorted(replay_server.matched) == [
        "logits_batch", "logits_fallback", "logits_single", "nli_pairs",
    ]


if __name__ == "__main__":
    if "--write" in sys.argv:
        write_goldens()
        print(f"golden files written to {GOLDEN_DIR}")
    else:
        print("usage: python tests/test_wire_golden.py --write", file=sys.stderr)
        sys.exit(2)
