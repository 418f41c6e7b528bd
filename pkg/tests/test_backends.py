import numpy as np

from cocscope.backends.stub import (HashingEncoder, KeywordEntailmentBackend,
                                    KeywordQaBackend)
from cocscope.labeler import DEFAULT_SCHEME


def test_entailment_stub_covers_all_hypotheses():
    backend = KeywordEntailmentBackend()
    for label in DEFAULT_SCHEME.labels:
        decision, confidence = backend.entails("nothing relevant",
                                               DEFAULT_SCHEME.hypothesis(label))
        assert decision is False
        assert confidence == 0.0


def test_entailment_confidence_grows_with_hits():
    backend = KeywordEntailmentBackend()
    hypothesis = DEFAULT_SCHEME.hypothesis("exploiting_and_cheating")
    _, one_hit = backend.entails("no cheating", hypothesis)
    _, two_hits = backend.entails("no cheating or hacking", hypothesis)
    assert one_hit == 0.5
    assert two_hits > one_hit


def test_qa_stub_is_deterministic_with_exact_offsets():
    backend = KeywordQaBackend()
    from cocscope.extractor import DEFAULT_CATEGORIES

    query = next(c.query_text for c in DEFAULT_CATEGORIES
                 if c.id == "moderation_consequence")
    context = "Violations lead to a warning, then suspension, then a permanent ban."
    first = backend.answer(context, query)
    second = backend.answer(context, query)
    assert first == second
    for text, start, end in first:
        assert context[start:end] == text
    assert [t for t, _, _ in first] == ["warning", "suspension", "ban"]


def test_hashing_encoder_stable_and_unit_norm():
    enc_a = HashingEncoder(dim=24)
    enc_b = HashingEncoder(dim=24)
    matrix_a, offsets_a = enc_a.encode("No aimbot use")
    matrix_b, offsets_b = enc_b.encode("No aimbot use")
    assert offsets_a == offsets_b == [(0, 2), (3, 9), (10, 13)]
    assert np.allclose(matrix_a, matrix_b)
    assert np.allclose(np.linalg.norm(matrix_a, axis=1), 1.0)
    # Same token, different casing: same vector.
    m1, _ = enc_a.encode("Aimbot")
    m2, _ = enc_a.encode("aimbot")
    assert np.allclose(m1, m2)


def test_hashing_encoder_empty_text():
    matrix, offsets = HashingEncoder(dim=8).encode("   ")
    assert matrix.shape == (0, 8)
    assert offsets == []
