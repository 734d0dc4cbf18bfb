"""Golden-exchange files, response schemas, and request dispatch helpers."""
import json
import pathlib

REPO_ROOT = pathlib.Path(__file__).resolve().parents[2]
GOLDEN_DIR = REPO_ROOT / "tests" / "data" / "golden"
SCHEMA_DIR = pathlib.Path(__file__).resolve().parents[1] / "schemas"

# response schema per golden exchange name prefix
RESPONSE_SCHEMAS = {
    "vocab": "vocab_response",
    "health": "health_response",
    "logits": "logits_response",
    "nli": "nli_response",
}
REQUEST_SCHEMAS = {"logits": "logits_request", "nli": "nli_request"}


def golden_names() -> list[str]:
    return sorted(p.name[: -len(".request.json")] for p in GOLDEN_DIR.glob("*.request.json"))


def golden_request(name: str) -> dict:
    return json.loads((GOLDEN_DIR / f"{name}.request.json").read_bytes())


def golden_response_bytes(name: str) -> bytes:
    return (GOLDEN_DIR / f"{name}.response.json").read_bytes()


def load_schema(name: str) -> dict:
    return json.loads((SCHEMA_DIR / f"{name}.schema.json").read_text(encoding="utf-8"))


def schema_for(exchange: str, table: dict[str, str]) -> dict | None:
    for prefix, schema_name in table.items():
        if exchange.split("_")[0] == prefix:
            return load_schema(schema_name)
    return None


def dispatch(client, request_doc: dict):
    """Send one golden request through a test client, body bytes verbatim."""
    if request_doc["method"] == "GET":
        return client.get(request_doc["path"])
    body = json.dumps(request_doc["body"], ensure_ascii=False).encode("utf-8")
    return client.post(
        request_doc["path"], content=body, headers={"Content-Type": "application/json"}
    )
