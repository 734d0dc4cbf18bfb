"""Reference-based and intrinsic extraction metrics."""
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from personakit.metrics import (
    CharacterExtraction,
    build_intrinsic_report,
    coverage,
    first_person_ratio,
    intrinsic_report_csv,
    is_first_person_head,
    persona_recall,
    reference_scores,
    unique_entity_ratios,
)
from personakit.templates import PersonaTriplet, RelationType

from oracles import field_accuracies

R = RelationType


def t(head, rel, tail):
    return PersonaTriplet(head, rel, tail)


# ---------------------------------------------------------------- coverage


def test_coverage_counts_persona_triplets_per_utterance():
    trips = [
        t("i", R.goal_plan, "want gold"),
        t("i", R.characteristic, "have pet dog"),
        t("i", R.no_relation, "misc"),
    ]
    assert coverage(trips, 4) == pytest.approx(0.5)


def test_coverage_unique_collapses_canonical_duplicates():
    trips = [
        t("i", R.goal_plan, "want gold"),
        t(" I ", R.goal_plan, "Want Gold"),
        t("i", R.goal_plan, "want silver"),
    ]
    assert coverage(trips, 2) == pytest.approx(1.5)
    assert coverage(trips, 2, unique=True) == pytest.approx(1.0)


def test_coverage_rejects_nonpositive_count():
    with pytest.raises(ValueError):
        coverage([], 0)


# ------------------------------------------------------------ first person


def test_first_person_head_rule():
    assert is_first_person_head("i")
    assert is_first_person_head(" Me ")
    assert is_first_person_head("my")
    assert is_first_person_head("my dog")
    assert not is_first_person_head("mystery")
    assert not is_first_person_head("the king")


def test_first_person_ratio_ignores_no_relation():
    trips = [
        t("i", R.goal_plan, "want gold"),
        t("the king", R.goal_plan, "want tax"),
        t("the king", R.no_relation, "misc"),
    ]
    assert first_person_ratio(trips) == pytest.approx(0.5)


def test_first_person_ratio_absent_without_persona_triplets():
    assert first_person_ratio([]) is None
    assert first_person_ratio([t("i", R.no_relation, "x")]) is None


# -------------------------------------------------------- entity uniqueness


def test_unique_entity_ratios():
    trips = [
        t("i", R.goal_plan, "want gold"),
        t("I ", R.goal_plan, "want silver"),
        t("the king", R.goal_plan, "want gold"),
    ]
    heads, tails = unique_entity_ratios(trips)
    assert heads == pytest.approx(2 / 3)
    assert tails == pytest.approx(2 / 3)
    assert unique_entity_ratios([]) is None


# ----------------------------------------------------------- persona recall


def test_persona_recall_consolidates_both_sides():
    desc = [
        t("i", R.routine_habit, "has profession pirate"),
        t("i", R.goal_plan, "want to pillage"),
    ]
    dia = [
        t("Me", R.routine_habit, "Has Profession Pirate"),
        t("i", R.characteristic, "have pet dog"),
    ]
    assert persona_recall(dia, desc) == pytest.approx(0.5)


def test_persona_recall_absent_without_profile_triplets():
    assert persona_recall([t("i", R.goal_plan, "x")], []) is None
    assert persona_recall([], [t("i", R.no_relation, "x")]) is None


# -------------------------------------------------------- reference scores


def test_reference_scores_hand_example():
    golds = [
        t("i", R.goal_plan, "want gold"),
        t("i", R.characteristic, "have pet dog"),
        t("i", R.routine_habit, "drink coffee"),
        t("the king", R.experience, "place origin village"),
    ]
    preds = [
        t("i", R.goal_plan, "want gold"),           # all right
        t("i", R.characteristic, "have pet cat"),   # tail wrong
        t("me", R.routine_habit, "drink coffee"),   # head wrong
        t("the king", R.goal_plan, "place origin village"),  # label wrong
    ]
    scores = reference_scores(preds, golds)
    assert scores.head_acc == pytest.approx(0.75)
    assert scores.tail_acc == pytest.approx(0.75)
    assert scores.label_acc == pytest.approx(0.75)
    assert scores.triplet_acc == pytest.approx(0.25)
    # gold tails have 3/3/2/3 tokens; pred recovers 3, 2 ("have pet"), 2, 3
    assert scores.tail_overlap == pytest.approx((1.0 + 2 / 3 + 1.0 + 1.0) / 4)
    gp = scores.per_label["goal_plan"]
    assert gp["precision"] == pytest.approx(0.5)
    assert gp["recall"] == pytest.approx(1.0)
    assert gp["f1"] == pytest.approx(2 / 3)
    # experience never predicted: recall 0, precision 0 by convention
    assert scores.per_label["experience"] == {"precision": 0.0, "recall": 0.0, "f1": 0.0}


def test_reference_scores_match_independent_oracle():
    golds = [
        t("i", R.goal_plan, "want gold"),
        t("i", R.characteristic, "have pet dog"),
        t("me", R.routine_habit, "drink tea"),
        t("i", R.no_relation, ""),
        t("the king", R.experience, "fought wars"),
    ]
    preds = [
        t("I", R.goal_plan, "want gold "),
        t("i", R.goal_plan, "have pet dog"),
        t("me", R.routine_habit, "drink coffee"),
        t("i", R.no_relation, ""),
        t("king", R.experience, "fought wars"),
    ]
    scores = reference_scores(preds, golds)
    oracle = field_accuracies(preds, golds)
    assert scores.head_acc == pytest.approx(oracle["head"])
    assert scores.tail_acc == pytest.approx(oracle["tail"])
    assert scores.label_acc == pytest.approx(oracle["relation"])
    assert scores.triplet_acc == pytest.approx(oracle["triplet"])


def test_tail_overlap_empty_edge_cases():
    golds = [t("i", R.no_relation, ""), t("i", R.no_relation, "")]
    both_empty = reference_scores([t("i", R.no_relation, "")] * 2, golds)
    assert both_empty.tail_overlap == pytest.approx(1.0)
    pred_not_empty = reference_scores(
        [t("i", R.no_relation, "stuff"), t("i", R.no_relation, "")], golds
    )
    assert pred_not_empty.tail_overlap == pytest.approx(0.5)


def test_reference_scores_alignment_errors():
    with pytest.raises(ValueError):
        reference_scores([t("i", R.goal_plan, "x")], [])
    with pytest.raises(ValueError):
        reference_scores([], [])


@settings(max_examples=60)
@given(
    st.lists(
        st.tuples(
            st.sampled_from(["i", "me", "the king"]),
            st.sampled_from(list(R)),
            st.sampled_from(["want gold", "drink tea", "own sword"]),
        ),
        min_size=1,
        max_size=10,
    ),
    st.randoms(use_true_random=False),
)
def test_triplet_acc_never_exceeds_any_field_acc(rows, rng):
    golds = [t(*row) for row in rows]
    preds = [
        t(
            rng.choice(["i", "me", "the king"]),
            rng.choice(list(R)),
            rng.choice(["want gold", "drink tea", "own sword"]),
        )
        for _ in rows
    ]
    scores = reference_scores(preds, golds)
    assert scores.triplet_acc <= min(scores.head_acc, scores.tail_acc, scores.label_acc) + 1e-12


# --------------------------------------------------------- intrinsic report


def _extractions():
    pirate = CharacterExtraction(
        character_id="c1",
        name="Pirate",
        utterance_count=4,
        dialogue_triplets=(
            t("i", R.routine_habit, "has profession pirate"),
            t("I ", R.routine_habit, "Has Profession Pirate"),
            t("i", R.goal_plan, "want to pillage"),
            t("i", R.no_relation, "misc"),
        ),
        description_triplets=(
            t("i", R.routine_habit, "has profession pirate"),
            t("i", R.characteristic, "have pet dog"),
        ),
    )
    king = CharacterExtraction(
        character_id="c2",
        name="King, The",
        utterance_count=2,
        dialogue_triplets=(),
    )
    return [pirate, king]


def test_intrinsic_report_structure_and_values():
    report = build_intrinsic_report(_extractions())
    row = report["per_character"]["c1"]
    assert row["name"] == "Pirate"
    assert row["persona_count"] == 3
    assert row["coverage"] == pytest.approx(0.75)
    assert row["unique_coverage"] == pytest.approx(0.5)
    assert row["first_person_ratio"] == pytest.approx(1.0)
    assert row["persona_recall"] == pytest.approx(0.5)
    empty = report["per_character"]["c2"]
    assert empty["persona_count"] == 0
    assert empty["coverage"] == 0.0  # utterances seen, nothing extracted
    assert empty["first_person_ratio"] is None
    assert empty["persona_recall"] is None
    overall = report["overall"]
    assert overall["utterance_count"] == 6
    assert overall["coverage"] == pytest.approx(0.5)
    assert "persona_recall" not in overall


def test_intrinsic_csv_quotes_commas_and_blanks_absent_metrics():
    text = intrinsic_report_csv(build_intrinsic_report(_extractions()))
    lines = text.splitlines()
    assert lines[0].startswith("character_id,name,utterance_count")
    assert len(lines) == 3
    assert '"King, The"' in lines[2]
    assert lines[2].endswith("0.0000,0.0000,,,,")  # undefined ratios blank
    assert "0.7500" in lines[1]
