"""Backends over exported inference artifacts.

An artifact directory contains a TorchScript graph, a tokenizer file, and
``metadata.json`` describing shapes and special token ids:

    nli.pt / encoder.pt     fixed-shape TorchScript module
    tokenizer.json          fast-tokenizer definition
    metadata.json           {"max_input_len": ..., "pad_token_id": ...,
                             "yes_token_id": ..., "no_token_id": ...,
                             "decoder_start_token_id": ...,
                             "input_template": ..., "labels": [...]}

Inference happens at the exported fixed length (pad/truncate), matching the
training-side decision rule exactly.  Module calls are serialized with a
lock, so instances are safe to share across threads.

Requires the ``portable`` extra (torch + tokenizers).
"""

from __future__ import annotations

import json
import logging
import math
import threading
from pathlib import Path

import numpy as np

log = logging.getLogger(__name__)


def _load_artifact(model_dir, graph_name):
    import torch
    from tokenizers import Tokenizer

    model_dir = Path(model_dir)
    with open(model_dir / "metadata.json", "r", encoding="utf-8") as fh:
        metadata = json.load(fh)
    tokenizer = Tokenizer.from_file(str(model_dir / "tokenizer.json"))
    module = torch.jit.load(str(model_dir / graph_name), map_location="cpu")
    module.eval()
    return module, tokenizer, metadata


class PortableEntailmentBackend:
    """Entailment over an exported two-way (yes/no) seq2seq classifier.

    Confidence is the yes-probability among {yes, no} first-step logits;
    the decision is confidence >= 0.5.
    """

    def __init__(self, model_dir):
        self._module, self._tokenizer, self.metadata = _load_artifact(model_dir, "nli.pt")
        self.max_input_len = int(self.metadata["max_input_len"])
        self._pad = int(self.metadata["pad_token_id"])
        self._yes = int(self.metadata["yes_token_id"])
        self._no = int(self.metadata["no_token_id"])
        self._decoder_start = int(self.metadata["decoder_start_token_id"])
        self._template = self.metadata.get(
            "input_template", "premise: {premise} hypothesis: {hypothesis}")
        self._lock = threading.Lock()

    def entails(self, premise: str, hypothesis: str) -> tuple[bool, float]:
        import torch

        text = self._template.format(premise=premise, hypothesis=hypothesis)
        ids = self._tokenizer.encode(text).ids
        if len(ids) > self.max_input_len:
            log.warning("input truncated to %d tokens", self.max_input_len)
            ids = ids[: self.max_input_len]
        mask = [1] * len(ids) + [0] * (self.max_input_len - len(ids))
        ids = ids + [self._pad] * (self.max_input_len - len(ids))
        with self._lock, torch.no_grad():
            logits = self._module(torch.tensor([ids]), torch.tensor([mask]),
                                  torch.tensor([[self._decoder_start]]))
        yes = float(logits[0, -1, self._yes])
        no = float(logits[0, -1, self._no])
        p_yes = 1.0 / (1.0 + math.exp(no - yes))
        return p_yes >= 0.5, p_yes


class PortableSentenceEncoder:
    """Contextual token embeddings from an exported encoder.

    ``encode`` returns one vector per real input token plus the token's
    character offsets, ready for overlap mean-pooling.
    """

    def __init__(self, encoder_dir):
        self._module, self._tokenizer, self.metadata = _load_artifact(encoder_dir, "encoder.pt")
        self.max_input_len = int(self.metadata["max_input_len"])
        self._pad = int(self.metadata["pad_token_id"])
        self._lock = threading.Lock()

    def encode(self, text: str) -> tuple[np.ndarray, list[tuple[int, int]]]:
        import torch

        encoding = self._tokenizer.encode(text)
        pairs = [(i, offset) for i, offset in enumerate(encoding.offsets)
                 if offset[0] != offset[1]]  # zero-width offsets mark specials
        pairs = pairs[: self.max_input_len]
        keep = [i for i, _ in pairs]
        offsets = [tuple(offset) for _, offset in pairs]

        ids = encoding.ids[: self.max_input_len]
        mask = [1] * len(ids) + [0] * (self.max_input_len - len(ids))
        ids = ids + [self._pad] * (self.max_input_len - len(ids))
        with self._lock, torch.no_grad():
            hidden = self._module(torch.tensor([ids]), torch.tensor([mask]))
        matrix = hidden[0].numpy().astype(np.float64)
        if not keep:
            return np.zeros((0, matrix.shape[1])), []
        return matrix[keep], offsets
