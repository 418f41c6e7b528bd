import pytest

from modelkit.dataset import LabeledSegment, load_dataset
from modelkit.labels import TOPIC_MISCONDUCT, hypothesis, nli_input
from modelkit.pairs import TOP_LEVEL_TOPICS, build_nli_pairs, oversample_to_parity


def segment(index, true_labels, text="players must avoid cheating"):
    return LabeledSegment("d", index, text, set(true_labels))


def test_seventeen_pairs_per_segment():
    pairs = build_nli_pairs([segment(0, {"misconduct", "exploiting_and_cheating"})])
    assert len(pairs) == 17
    assert len({p.label for p in pairs}) == 17


def test_pair_count_scales_with_segments(corpus_files):
    dataset = load_dataset(corpus_files["train"], test_path=corpus_files["test"])
    pairs = build_nli_pairs(dataset.train)
    assert len(pairs) == 17 * len(dataset.train)


def test_targets_follow_annotations():
    premise = ("Exploitation of any new or known bug or glitch for personal gain is "
               "strictly forbidden and may result in character rollback, Account "
               "suspension or revocation.")
    seg = LabeledSegment("d", 0, premise,
                         {"misconduct", "exploiting_and_cheating",
                          "moderation", "moderation_consequence"})
    by_label = {p.label: p for p in build_nli_pairs([seg])}
    assert by_label[TOPIC_MISCONDUCT].target == "yes"
    assert by_label["privacy_breach"].target == "no"
    assert hypothesis(TOPIC_MISCONDUCT) in by_label[TOPIC_MISCONDUCT].input_text
    assert by_label[TOPIC_MISCONDUCT].input_text == nli_input(premise, TOPIC_MISCONDUCT)


def test_inconsistent_annotation_rejected_with_ref():
    bad = segment(3, {"privacy_breach"})  # subtopic without parent topic
    with pytest.raises(ValueError, match="d:3"):
        build_nli_pairs([segment(0, {"misconduct", "privacy_breach"}), bad])


def test_oversample_reaches_parity_without_changing_text():
    segments = (
        [segment(i, {"misconduct", "exploiting_and_cheating"}) for i in range(8)]
        + [segment(10 + i, {"moderation", "moderation_consequence"}) for i in range(2)]
        + [segment(20 + i, {"expected_conduct"}) for i in range(3)]
        + [segment(30 + i, {"value_justification"}) for i in range(1)]
    )
    out = oversample_to_parity(segments, seed=4)
    counts = {topic: sum(1 for s in out if topic in s.true_labels)
              for topic in TOP_LEVEL_TOPICS}
    assert len(set(counts.values())) == 1  # all at parity with the largest
    # Frequencies change, segment objects do not.
    originals = {id(s) for s in segments}
    assert all(id(s) in originals for s in out)
    assert len(out) > len(segments)


def test_oversample_deterministic():
    segments = ([segment(i, {"misconduct", "fraud_and_scamming"}) for i in range(5)]
                + [segment(9, {"expected_conduct"})])
    a = oversample_to_parity(segments, seed=11)
    b = oversample_to_parity(segments, seed=11)
    assert [s.ref for s in a] == [s.ref for s in b]
