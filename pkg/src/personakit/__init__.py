"""Persona triplet extraction toolkit.

Turns dialogue utterances into (head, relation, tail) persona facts via
template-constrained decoding over a pluggable scorer backend, adjudicates
candidates with an entailment model, consolidates them into per-character
graphs, and measures extraction quality.
"""

__version__ = "0.1.0"

from .annotation import (
    AnnotationRecord,
    Verdict,
    acceptance_ratio,
    annotation_session,
    krippendorff_alpha,
)
from .datasets import (
    CharacterProfile,
    LabeledExtractionRecord,
    NliExample,
    UtteranceRecord,
    build_nli_dataset,
    convert_record,
    ingest_dialogue_corpus,
    map_relation,
    stratified_split,
)
from .decoding import DecodeConfig, ScoredCandidate, decode
from .errors import (
    BackendError,
    BackendUnavailableError,
    DataError,
    MissingEntryError,
    PersonakitError,
    ProtocolError,
    UndefinedAgreementError,
    UnknownRelationError,
)
from .graph import ConsolidatedTriplet, PersonaGraph, build_graph, consolidate
from .metrics import (
    CharacterExtraction,
    build_intrinsic_report,
    coverage,
    first_person_ratio,
    persona_recall,
    reference_scores,
)
from .nli import NliVerdict, adjudicate, collapse_binary, filter_neutral_removed, rerank
from .scorers import NliTable, RemoteScorer, TableScorer, load_nli_backend, load_token_scorer
from .templates import (
    Grammar,
    MalformedOutput,
    PersonaTriplet,
    RelationType,
    TemplateSpec,
    Vocabulary,
    parse_output,
    render_input,
    render_output,
    template_spec,
    triplet_to_sentence,
)

__all__ = [
    "AnnotationRecord",
    "BackendError",
    "BackendUnavailableError",
    "CharacterExtraction",
    "CharacterProfile",
    "ConsolidatedTriplet",
    "DataError",
    "DecodeConfig",
    "Grammar",
    "LabeledExtractionRecord",
    "MalformedOutput",
    "MissingEntryError",
    "NliExample",
    "NliTable",
    "NliVerdict",
    "PersonaGraph",
    "PersonaTriplet",
    "PersonakitError",
    "ProtocolError",
    "RelationType",
    "RemoteScorer",
    "ScoredCandidate",
    "TableScorer",
    "TemplateSpec",
    "UndefinedAgreementError",
    "UnknownRelationError",
    "UtteranceRecord",
    "Verdict",
    "Vocabulary",
    "acceptance_ratio",
    "adjudicate",
    "annotation_session",
    "build_graph",
    "build_intrinsic_report",
    "build_nli_dataset",
    "collapse_binary",
    "consolidate",
    "convert_record",
    "coverage",
    "decode",
    "filter_neutral_removed",
    "first_person_ratio",
    "ingest_dialogue_corpus",
    "krippendorff_alpha",
    "load_nli_backend",
    "load_token_scorer",
    "map_relation",
    "parse_output",
    "persona_recall",
    "reference_scores",
    "render_input",
    "render_output",
    "rerank",
    "stratified_split",
    "template_spec",
    "triplet_to_sentence",
]
