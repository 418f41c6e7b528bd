"""Inference backends.

``stub`` backends are deterministic keyword rules for pipeline runs without
model weights; ``portable`` backends load exported inference artifacts
(TorchScript graph + tokenizer) and require the ``portable`` extra.
"""

from .stub import HashingEncoder, KeywordEntailmentBackend, KeywordQaBackend

__all__ = [
    "HashingEncoder",
    "KeywordEntailmentBackend",
    "KeywordQaBackend",
]
