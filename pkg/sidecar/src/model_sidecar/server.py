"""HTTP layer: four endpoints, canonical JSON bytes in and out.

Responses are serialized once, with sorted keys and no whitespace, so
that identical requests against identical data produce byte-identical
bodies. Request bodies are validated strictly: unknown keys, wrong
types, and out-of-range token ids are all 400s with {"error": text}.
"""
from __future__ import annotations

import contextlib
import json
import threading

from fastapi import FastAPI, Request, Response
from starlette.concurrency import run_in_threadpool

from .config import SidecarConfig
from .service import NotReadyError, RequestError, ScoringService


def canonical_bytes(doc) -> bytes:
    return json.dumps(
        doc, sort_keys=True, ensure_ascii=False, separators=(",", ":")
    ).encode("utf-8")


def _json_response(doc, status_code: int = 200) -> Response:
    return Response(
        content=canonical_bytes(doc),
        status_code=status_code,
        media_type="application/json",
    )


def _error(message: str, status_code: int) -> Response:
    return _json_response({"error": message}, status_code)


def _require_keys(body: dict, allowed: set[str], required: set[str]) -> None:
    if not isinstance(body, dict):
        raise RequestError("body must be a JSON object")
    unknown = set(body) - allowed
    if unknown:
        raise RequestError(f"unknown keys: {sorted(unknown)}")
    missing = required - set(body)
    if missing:
        raise RequestError(f"missing keys: {sorted(missing)}")


def _parse_logits_body(body) -> tuple[str, list[tuple[int, ...]]]:
    _require_keys(body, {"context", "prefixes"}, {"context", "prefixes"})
    context = body["context"]
    if not isinstance(context, str):
        raise RequestError("context must be a string")
    raw = body["prefixes"]
    if not isinstance(raw, list):
        raise RequestError("prefixes must be a list of token id lists")
    prefixes = []
    for i, prefix in enumerate(raw):
        if not isinstance(prefix, list):
            raise RequestError(f"prefixes[{i}] must be a list of token ids")
        for tid in prefix:
            if isinstance(tid, bool) or not isinstance(tid, int):
                raise RequestError(f"prefixes[{i}] contains a non-integer token id")
        prefixes.append(tuple(prefix))
    return context, prefixes


def _parse_nli_body(body) -> list[tuple[str, str]]:
    _require_keys(body, {"pairs"}, {"pairs"})
    raw = body["pairs"]
    if not isinstance(raw, list):
        raise RequestError("pairs must be a list")
    pairs = []
    for i, row in enumerate(raw):
        _require_keys(row, {"premise", "hypothesis"}, {"premise", "hypothesis"})
        premise, hypothesis = row["premise"], row["hypothesis"]
        if not isinstance(premise, str) or not isinstance(hypothesis, str):
            raise RequestError(f"pairs[{i}]: premise and hypothesis must be strings")
        pairs.append((premise, hypothesis))
    return pairs


def create_app(config: SidecarConfig, service: ScoringService | None = None) -> FastAPI:
    """Build the ASGI app; the caller owns when load() happens.

    Started under a real server, the lifespan hook loads in a background
    thread so /v1/health reports "loading" until the backends are ready.
    """
    svc = service if service is not None else ScoringService(config)

    @contextlib.asynccontextmanager
    async def lifespan(_app: FastAPI):
        threading.Thread(target=svc.load, daemon=True).start()
        yield

    app = FastAPI(lifespan=lifespan, docs_url=None, redoc_url=None, openapi_url=None)
    app.state.service = svc
    gate = threading.Semaphore(config.batch_cap)

    def _gated(fn, *args):
        with gate:
            return fn(*args)

    async def _read_body(request: Request) -> dict:
        try:
            return json.loads(await request.body())
        except (json.JSONDecodeError, UnicodeDecodeError) as exc:
            raise RequestError(f"body is not valid JSON: {exc}") from exc

    @app.get("/v1/health")
    async def health() -> Response:
        return _json_response({"status": svc.status})

    @app.get("/v1/vocab")
    async def vocab() -> Response:
        try:
            payload = await run_in_threadpool(_gated, svc.vocab_payload)
        except NotReadyError as exc:
            return _error(str(exc), 503)
        return _json_response(payload)

    @app.post("/v1/logits")
    async def logits(request: Request) -> Response:
        # loading wins over body validation: clients see 503, not 400
        if svc.status != "ok":
            return _error("model is loading", 503)
        try:
            context, prefixes = _parse_logits_body(await _read_body(request))
            vectors = await run_in_threadpool(
                _gated, svc.token_logprobs, context, prefixes
            )
        except RequestError as exc:
            return _error(str(exc), 400)
        except NotReadyError as exc:
            return _error(str(exc), 503)
        return _json_response({"logprobs": vectors})

    @app.post("/v1/nli")
    async def nli(request: Request) -> Response:
        if svc.status != "ok":
            return _error("model is loading", 503)
        try:
            pairs = _parse_nli_body(await _read_body(request))
            rows = await run_in_threadpool(_gated, svc.nli_rows, pairs)
        except RequestError as exc:
            return _error(str(exc), 400)
        except NotReadyError as exc:
            return _error(str(exc), 503)
        return _json_response({
            "logprobs": [
                {"entailment": e, "neutral": n, "contradiction": c}
                for e, n, c in rows
            ]
        })

    return app
