"""Command-line pipeline around the extraction toolkit.

Every batch subcommand writes its outputs atomically into --out together
with manifest.json recording the resolved configuration, SHA-256 digests
of inputs and outputs, and the package version. No timestamps: identical
invocations on identical inputs produce byte-identical trees.

Exit codes: 0 success, 1 usage, 2 data error, 3 backend error.
"""
from __future__ import annotations

import argparse
import os
import platform
import sys
from dataclasses import dataclass

from . import __version__
from .annotation import (
    acceptance_ratio,
    annotation_session,
    krippendorff_alpha,
    load_session,
)
from .datasets import (
    CharacterProfile,
    build_nli_dataset,
    convert_record,
    ingest_dialogue_corpus,
    record_from_json,
    record_to_json,
    split_description_sentences,
    stratified_split,
)
from .decoding import DecodeConfig, ScoredCandidate, decode
from .errors import BackendError, DataError, PersonakitError
from .graph import build_graph, consolidate, graph_to_dot, graph_to_json
from .jsonio import (
    atomic_write_text,
    dumps_record,
    read_jsonl,
    report_json,
    sha256_file,
)
from .metrics import (
    CharacterExtraction,
    build_intrinsic_report,
    intrinsic_report_csv,
    reference_scores,
)
from .nli import adjudicate as adjudicate_candidates
from .nli import MODES
from .scorers import load_nli_backend, load_token_scorer
from .templates import (
    MalformedOutput,
    PersonaTriplet,
    RelationType,
    parse_output,
    render_input,
    template_spec,
)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_BACKEND = 3

REMOTE_URL_ENV = "PERSONAKIT_REMOTE_URL"
PROGRESS_EVERY = 200


def _progress(done: int, label: str) -> None:
    if done and done % PROGRESS_EVERY == 0:
        print(f"{label}: {done} records", file=sys.stderr)


def _resolve_backend_spec(spec_str: str | None) -> str | None:
    """Apply the environment override to remote backend specifiers."""
    if spec_str is None:
        return None
    override = os.environ.get(REMOTE_URL_ENV)
    if override and spec_str.startswith("remote:"):
        return f"remote:{override}"
    return spec_str


@dataclass
class _Run:
    """Collects outputs so digests and the manifest are written once."""

    command: str
    out_dir: str
    config: dict
    inputs: list[str]

    def __post_init__(self):
        os.makedirs(self.out_dir, exist_ok=True)
        self._outputs: list[str] = []

    def write(self, name: str, text: str) -> None:
        atomic_write_text(os.path.join(self.out_dir, name), text)
        self._outputs.append(name)

    def finish(self) -> None:
        manifest = {
            "command": self.command,
            "config": self.config,
            "inputs": {path: sha256_file(path) for path in self.inputs},
            "outputs": {
                name: sha256_file(os.path.join(self.out_dir, name))
                for name in sorted(self._outputs)
            },
            "versions": {
                "personakit": __version__,
                "python": platform.python_version(),
            },
        }
        atomic_write_text(
            os.path.join(self.out_dir, "manifest.json"), report_json(manifest)
        )


def _read_records(path: str) -> list[dict]:
    records = []
    for lineno, doc in read_jsonl(path):
        if not isinstance(doc, dict):
            raise DataError(f"{path}:{lineno}: expected a JSON object")
        records.append(doc)
    return records


def _read_triplets(path: str) -> list[PersonaTriplet]:
    """Triplet stage files; malformed-output lines are skipped."""
    triplets = []
    for lineno, doc in read_jsonl(path):
        if "malformed" in doc:
            continue
        try:
            triplets.append(
                PersonaTriplet(
                    head=doc["head"],
                    relation=RelationType(doc["relation"]),
                    tail=doc["tail"],
                    source_id=doc.get("source_id", ""),
                )
            )
        except (KeyError, ValueError) as exc:
            raise DataError(f"{path}:{lineno}: bad triplet record: {exc}") from exc
    return triplets


def _triplet_line(parsed, source_id: str) -> dict:
    if isinstance(parsed, MalformedOutput):
        return {
            "source_id": source_id,
            "malformed": {"missing": sorted(parsed.missing), "raw": parsed.raw},
        }
    return {
        "source_id": source_id,
        "head": parsed.head,
        "relation": parsed.relation.value,
        "tail": parsed.tail,
    }


# ---------------------------------------------------------------- convert


def _cmd_convert(args) -> int:
    run = _Run("convert", args.out, {"in": args.input}, [args.input])
    lines = []
    for i, doc in enumerate(_read_records(args.input)):
        record = convert_record(doc)
        lines.append(dumps_record(record_to_json(record)))
        _progress(i + 1, "convert")
    run.write("converted.jsonl", "".join(line + "\n" for line in lines))
    run.finish()
    return EXIT_OK


# ------------------------------------------------------------------ split


def _parse_ratios(text: str) -> tuple[float, float, float]:
    parts = text.split(",")
    if len(parts) != 3:
        raise ValueError(f"--ratios needs three comma-separated numbers, got {text!r}")
    return tuple(float(p) for p in parts)  # type: ignore[return-value]


def _cmd_split(args) -> int:
    ratios = _parse_ratios(args.ratios)
    run = _Run(
        "split",
        args.out,
        {"in": args.input, "ratios": list(ratios), "seed": args.seed},
        [args.input],
    )
    records = [record_from_json(doc) for doc in _read_records(args.input)]
    train, dev, test = stratified_split(records, ratios, args.seed)
    for name, chunk in (("train", train), ("dev", dev), ("test", test)):
        run.write(
            f"{name}.jsonl",
            "".join(dumps_record(record_to_json(r, split=name)) + "\n" for r in chunk),
        )
    run.finish()
    return EXIT_OK


# -------------------------------------------------------------- build-nli


def _cmd_build_nli(args) -> int:
    inputs = [args.input] + ([args.blocklist] if args.blocklist else [])
    run = _Run(
        "build-nli",
        args.out,
        {"in": args.input, "blocklist": args.blocklist},
        inputs,
    )
    blocklist: frozenset[str] = frozenset()
    if args.blocklist:
        with open(args.blocklist, encoding="utf-8") as fh:
            blocklist = frozenset(line.rstrip("\n") for line in fh if line.strip())
    examples, skipped = build_nli_dataset(_read_records(args.input), blocklist=blocklist)
    if skipped:
        print(f"build-nli: skipped {skipped} malformed record(s)", file=sys.stderr)
    run.write(
        "nli.jsonl",
        "".join(
            dumps_record(
                {"premise": e.premise, "hypothesis": e.hypothesis, "label": e.label}
            )
            + "\n"
            for e in examples
        ),
    )
    run.finish()
    return EXIT_OK


# ---------------------------------------------------------------- extract


def _decode_config(args) -> DecodeConfig:
    return DecodeConfig(
        method=args.method.replace("-", "_"),
        beam_count=args.beams,
        group_count=args.groups,
        diversity_strength=args.diversity,
        max_length=args.max_length,
        seed=args.seed,
    )


def _extract_units(args) -> list[tuple[str, str]]:
    """(source_id, text) pairs from either input schema."""
    records = _read_records(args.input)
    if not records:
        return []
    corpus_keys = {"dialogue_id", "character", "description", "turn", "text"}
    if corpus_keys.issubset(records[0].keys()):
        utterances, profiles = ingest_dialogue_corpus([args.input])
        if args.unit == "descriptions":
            units = []
            for profile in profiles:
                for i, sentence in enumerate(split_description_sentences(profile.description)):
                    units.append((f"desc:{profile.character_id}:{i}", sentence))
            return units
        return [(f"utt:{u.dialogue_id}:{u.turn}", u.text) for u in utterances]
    units = []
    for i, doc in enumerate(records):
        if "text" not in doc:
            raise DataError(f"{args.input}: record {i} has no text field")
        units.append((str(doc.get("source_id", i)), doc["text"]))
    return units


def _cmd_extract(args) -> int:
    backend_spec = _resolve_backend_spec(args.backend)
    if backend_spec is None:
        raise ValueError("extract requires --backend table:PATH or remote:URL")
    cfg = _decode_config(args)
    run = _Run(
        "extract",
        args.out,
        {
            "in": args.input,
            "unit": args.unit,
            "template": args.template,
            "method": args.method,
            "beams": args.beams,
            "groups": args.groups,
            "lambda": args.diversity,
            "max_length": args.max_length,
            "seed": args.seed,
            "backend": backend_spec,
        },
        [args.input],
    )
    spec = template_spec(args.template)
    scorer = load_token_scorer(backend_spec)
    candidate_lines = []
    triplet_lines = []
    for i, (source_id, text) in enumerate(_extract_units(args)):
        rendered = render_input(text, spec)
        candidates = decode(scorer, rendered, spec, cfg)
        candidate_lines.append(
            dumps_record(
                {
                    "source_id": source_id,
                    "utterance": text,
                    "template": spec.variant,
                    "candidates": [
                        {
                            "tokens": list(c.tokens),
                            "text": c.text,
                            "lm_score": c.lm_score,
                        }
                        for c in candidates
                    ],
                }
            )
        )
        top = parse_output(candidates[0].text, spec, source_id=source_id)
        triplet_lines.append(dumps_record(_triplet_line(top, source_id)))
        _progress(i + 1, "extract")
    run.write("candidates.jsonl", "".join(line + "\n" for line in candidate_lines))
    run.write("triplets.jsonl", "".join(line + "\n" for line in triplet_lines))
    run.finish()
    return EXIT_OK


# ------------------------------------------------------------- adjudicate


def _candidate_from_json(doc: dict) -> ScoredCandidate:
    return ScoredCandidate(
        tokens=tuple(doc["tokens"]),
        text=doc["text"],
        lm_score=float(doc["lm_score"]),
    )


def _nli_json(verdict) -> dict | None:
    if verdict is None:
        return None
    return {
        "entailed": verdict.entailed,
        "logp_entailment": verdict.logp_entailment,
        "logp_neutral": verdict.logp_neutral,
        "logp_contradiction": verdict.logp_contradiction,
    }


def _cmd_adjudicate(args) -> int:
    mode = args.mode.replace("-", "_")
    if mode not in MODES:
        raise ValueError(f"unknown adjudication mode {args.mode!r}")
    backend_spec = _resolve_backend_spec(args.backend)
    if mode != "none" and backend_spec is None:
        raise ValueError(f"--mode {args.mode} requires --backend table:PATH or remote:URL")
    run = _Run(
        "adjudicate",
        args.out,
        {"in": args.input, "mode": args.mode, "backend": backend_spec},
        [args.input],
    )
    backend = load_nli_backend(backend_spec) if mode != "none" else None
    scored_lines = []
    triplet_lines = []
    for i, doc in enumerate(_read_records(args.input)):
        source_id = doc.get("source_id", "")
        utterance = doc["utterance"]
        spec = template_spec(doc["template"])
        candidates = [_candidate_from_json(c) for c in doc["candidates"]]
        outcome = adjudicate_candidates(
            utterance, candidates, spec, backend, mode, source_id=source_id
        )
        if isinstance(outcome, PersonaTriplet):
            # nothing survived the entailment filter
            kept: list[ScoredCandidate] = []
            triplet_lines.append(
                dumps_record(
                    {
                        "source_id": source_id,
                        "head": outcome.head,
                        "relation": outcome.relation.value,
                        "tail": outcome.tail,
                    }
                )
            )
        else:
            kept = outcome
            if mode == "neutral_removed":
                chosen = kept
            else:
                chosen = kept[:1]
            for cand in chosen:
                triplet_lines.append(
                    dumps_record(
                        _triplet_line(parse_output(cand.text, spec, source_id), source_id)
                    )
                )
        scored_lines.append(
            dumps_record(
                {
                    "source_id": source_id,
                    "utterance": utterance,
                    "template": spec.variant,
                    "mode": mode,
                    "candidates": [
                        {
                            "tokens": list(c.tokens),
                            "text": c.text,
                            "lm_score": c.lm_score,
                            "final_score": c.final_score,
                            "nli": _nli_json(c.nli),
                        }
                        for c in kept
                    ],
                }
            )
        )
        _progress(i + 1, "adjudicate")
    run.write("candidates_scored.jsonl", "".join(line + "\n" for line in scored_lines))
    run.write("triplets.jsonl", "".join(line + "\n" for line in triplet_lines))
    run.finish()
    return EXIT_OK


# ---------------------------------------------------------------- metrics


def _corpus_attribution(corpus_path: str):
    utterances, profiles = ingest_dialogue_corpus([corpus_path])
    by_turn = {}
    counts: dict[str, int] = {}
    by_character_id = {p.character_id: p for p in profiles}
    profile_of = {(p.name, p.description): p for p in profiles}
    for u in utterances:
        profile = profile_of[(u.character, u.description)]
        by_turn[(u.dialogue_id, u.turn)] = profile
        counts[profile.character_id] = counts.get(profile.character_id, 0) + 1
    return by_turn, by_character_id, counts, profiles


def _attribute(source_id: str, by_turn, by_character_id) -> CharacterProfile:
    kind, _, rest = source_id.partition(":")
    if kind == "utt":
        dialogue_id, _, turn = rest.rpartition(":")
        key = (dialogue_id, int(turn))
        if key not in by_turn:
            raise DataError(f"source id {source_id!r} not found in corpus")
        return by_turn[key]
    if kind == "desc":
        character_id = rest.split(":")[0]
        if character_id not in by_character_id:
            raise DataError(f"source id {source_id!r} names an unknown character")
        return by_character_id[character_id]
    raise DataError(f"cannot attribute source id {source_id!r} to a character")


def _cmd_metrics(args) -> int:
    if args.task == "reference":
        if not args.pred or not args.gold:
            raise ValueError("metrics --task reference needs --pred and --gold")
        run = _Run(
            "metrics",
            args.out,
            {"task": "reference", "pred": args.pred, "gold": args.gold},
            [args.pred, args.gold],
        )
        golds = [record_from_json(doc).gold for doc in _read_records(args.gold)]
        preds = []
        for lineno, doc in read_jsonl(args.pred):
            if "malformed" in doc:
                # unparseable output scores as a miss, not a crash
                preds.append(
                    PersonaTriplet("", RelationType.no_relation, "", doc.get("source_id", ""))
                )
            else:
                preds.append(
                    PersonaTriplet(
                        doc["head"], RelationType(doc["relation"]), doc["tail"],
                        doc.get("source_id", ""),
                    )
                )
        scores = reference_scores(preds, golds)
        run.write("report.json", report_json(scores.to_report_dict()))
        run.finish()
        return EXIT_OK

    if not args.triplets or not args.corpus:
        raise ValueError("metrics --task intrinsic needs --triplets and --corpus")
    inputs = [args.triplets, args.corpus]
    if args.description_triplets:
        inputs.append(args.description_triplets)
    run = _Run(
        "metrics",
        args.out,
        {
            "task": "intrinsic",
            "triplets": args.triplets,
            "corpus": args.corpus,
            "description_triplets": args.description_triplets,
        },
        inputs,
    )
    by_turn, by_character_id, counts, profiles = _corpus_attribution(args.corpus)
    dialogue: dict[str, list[PersonaTriplet]] = {p.character_id: [] for p in profiles}
    for t in _read_triplets(args.triplets):
        profile = _attribute(t.source_id, by_turn, by_character_id)
        dialogue[profile.character_id].append(t)
    description: dict[str, list[PersonaTriplet]] | None = None
    if args.description_triplets:
        description = {p.character_id: [] for p in profiles}
        for t in _read_triplets(args.description_triplets):
            profile = _attribute(t.source_id, by_turn, by_character_id)
            description[profile.character_id].append(t)
    extractions = [
        CharacterExtraction(
            character_id=p.character_id,
            name=p.name,
            utterance_count=counts.get(p.character_id, 0),
            dialogue_triplets=tuple(dialogue[p.character_id]),
            description_triplets=(
                tuple(description[p.character_id]) if description is not None else None
            ),
        )
        for p in profiles
    ]
    report = build_intrinsic_report(extractions)
    run.write("report.json", report_json(report))
    if args.csv:
        run.write("report.csv", intrinsic_report_csv(report))
    run.finish()
    return EXIT_OK


# ------------------------------------------------------------------ graph


def _cmd_graph(args) -> int:
    if bool(args.character) == bool(args.corpus):
        raise ValueError("graph needs exactly one of --character or --corpus")
    inputs = [args.triplets] + ([args.corpus] if args.corpus else [])
    run = _Run(
        "graph",
        args.out,
        {
            "triplets": args.triplets,
            "character": args.character,
            "corpus": args.corpus,
            "format": args.format,
        },
        inputs,
    )
    triplets = _read_triplets(args.triplets)
    groups: list[tuple[str, list[PersonaTriplet]]]
    if args.character:
        groups = [(args.character, triplets)]
    else:
        by_turn, by_character_id, _, profiles = _corpus_attribution(args.corpus)
        grouped: dict[str, list[PersonaTriplet]] = {p.character_id: [] for p in profiles}
        for t in triplets:
            grouped[_attribute(t.source_id, by_turn, by_character_id).character_id].append(t)
        groups = [(cid, ts) for cid, ts in grouped.items() if ts]
    for character_id, chunk in groups:
        g = build_graph(character_id, consolidate(chunk))
        safe = character_id.replace(os.sep, "_").replace(":", "_") or "graph"
        if args.format in ("json", "both"):
            run.write(f"graph-{safe}.json", graph_to_json(g))
        if args.format in ("dot", "both"):
            run.write(f"graph-{safe}.dot", graph_to_dot(g))
    run.finish()
    return EXIT_OK


# --------------------------------------------------------------- annotate


def _cmd_annotate(args) -> int:
    triplets = consolidate(_read_triplets(args.triplets))
    profile = CharacterProfile(name=args.name, description=args.description)
    records = annotation_session(
        triplets, profile, args.annotator, args.session
    )
    mine = [r for r in records if r.annotator == args.annotator]
    if mine:
        ratio, histogram = acceptance_ratio(mine)
        print(f"accepted {ratio:.4f} of {len(mine)} triplets: {histogram}")
    return EXIT_OK


# -------------------------------------------------------------- agreement


def _cmd_agreement(args) -> int:
    run = _Run("agreement", args.out, {"sessions": list(args.sessions)}, list(args.sessions))
    records = []
    for path in args.sessions:
        records.extend(load_session(path))
    if not records:
        raise DataError("no annotation records in the given sessions")
    ratio, histogram = acceptance_ratio(records)
    items = {r.triplet_id for r in records}
    by_item: dict[str, set[str]] = {}
    for r in records:
        by_item.setdefault(r.triplet_id, set()).add(r.annotator)
    report = {
        "acceptance_ratio": ratio,
        "alpha_binary": krippendorff_alpha(records, "binary"),
        "alpha_detailed": krippendorff_alpha(records, "detailed"),
        "annotator_count": len({r.annotator for r in records}),
        "histogram": histogram,
        "item_count": len(items),
        "record_count": len(records),
        "shared_item_count": sum(1 for v in by_item.values() if len(v) >= 2),
    }
    run.write("report.json", report_json(report))
    run.finish()
    return EXIT_OK


# ------------------------------------------------------------------ wiring


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="personakit",
        description="Persona triplet extraction, adjudication, and graph building",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("convert", help="fine-grained records to the coarse schema")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_convert)

    p = sub.add_parser("split", help="label-stratified train/dev/test split")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--ratios", default="0.8,0.1,0.1")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_split)

    p = sub.add_parser("build-nli", help="statement/fact pairs to entailment examples")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--blocklist", help="text file of premises to drop, one per line")
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_build_nli)

    p = sub.add_parser("extract", help="decode triplet candidates for each input")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--unit", choices=("utterances", "descriptions"), default="utterances")
    p.add_argument("--template", default="relation_first")
    p.add_argument("--method", choices=("greedy", "beam", "diverse-beam"), default="greedy")
    p.add_argument("--beams", type=int, default=5)
    p.add_argument("--groups", type=int, default=5)
    p.add_argument("--lambda", dest="diversity", type=float, default=0.4)
    p.add_argument("--max-length", type=int, default=64)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--backend", help="table:PATH or remote:URL")
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_extract)

    p = sub.add_parser("adjudicate", help="entailment-check candidate lists")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--mode", choices=("none", "rerank", "neutral-removed"), default="none")
    p.add_argument("--backend", help="table:PATH or remote:URL")
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_adjudicate)

    p = sub.add_parser("metrics", help="reference or intrinsic extraction metrics")
    p.add_argument("--task", choices=("reference", "intrinsic"), required=True)
    p.add_argument("--pred")
    p.add_argument("--gold")
    p.add_argument("--triplets")
    p.add_argument("--corpus")
    p.add_argument("--description-triplets", dest="description_triplets")
    p.add_argument("--csv", action="store_true", help="also write per-character CSV")
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_metrics)

    p = sub.add_parser("graph", help="build persona graphs from triplets")
    p.add_argument("--triplets", required=True)
    p.add_argument("--character", help="build one graph under this character id")
    p.add_argument("--corpus", help="group triplets per corpus character instead")
    p.add_argument("--format", choices=("json", "dot", "both"), default="json")
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_graph)

    p = sub.add_parser("annotate", help="interactively judge consolidated triplets")
    p.add_argument("--triplets", required=True)
    p.add_argument("--name", required=True, help="character name shown in the header")
    p.add_argument("--description", required=True, help="character profile text")
    p.add_argument("--annotator", required=True)
    p.add_argument("--session", required=True, help="append-only JSONL session file")
    p.set_defaults(func=_cmd_annotate)

    p = sub.add_parser("agreement", help="inter-annotator agreement report")
    p.add_argument("--sessions", nargs="+", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_agreement)

    return parser


def run(argv: list[str]) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_USAGE
    try:
        return args.func(args)
    except BackendError as exc:
        print(f"backend error: {exc}", file=sys.stderr)
        return EXIT_BACKEND
    except PersonakitError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except OSError as exc:
        print(f"file error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


def main() -> None:
    sys.exit(run(sys.argv[1:]))
