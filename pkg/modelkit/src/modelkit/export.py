"""Export to the portable inference format the pipeline consumes.

An export directory holds a fixed-shape TorchScript graph, the tokenizer
file, and metadata (shapes, special token ids, templates, label names, and
the full training configuration), so the consuming side needs only torch and
tokenizers.
"""

from __future__ import annotations

import hashlib
import json
import logging
from pathlib import Path

import torch

from .labels import DISPLAY_NAMES, HYPOTHESIS_TEMPLATE, INPUT_TEMPLATE, LABELS
from .lora import merge_adapters
from .train import TrainedArtifact

log = logging.getLogger(__name__)


class NliCore(torch.nn.Module):
    """Single decoder step: logits over the vocabulary for yes/no scoring."""

    def __init__(self, model):
        super().__init__()
        self.model = model

    def forward(self, input_ids, attention_mask, decoder_input_ids):
        out = self.model(input_ids=input_ids, attention_mask=attention_mask,
                         decoder_input_ids=decoder_input_ids, return_dict=False)
        return out[0]


class EncoderCore(torch.nn.Module):
    """Contextual token embeddings: [batch, seq, dim]."""

    def __init__(self, model):
        super().__init__()
        self.model = model

    def forward(self, input_ids, attention_mask):
        out = self.model(input_ids=input_ids, attention_mask=attention_mask,
                         return_dict=False)
        return out[0]


def _weights_digest(model) -> str:
    h = hashlib.sha256()
    for name, tensor in sorted(model.state_dict().items()):
        h.update(name.encode("utf-8"))
        h.update(tensor.detach().cpu().numpy().tobytes())
    return h.hexdigest()


def _write_metadata(path: Path, metadata: dict):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(metadata, fh, sort_keys=True, indent=1)


def save_artifact(artifact: TrainedArtifact, out_dir) -> Path:
    """Persist the trained (adapter-carrying) model for a later export."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    torch.save(artifact.model.state_dict(), out_dir / "state.pt")
    artifact.tokenizer.save(str(out_dir / "tokenizer.json"))
    _write_metadata(out_dir / "artifact.json", {
        "model_config": artifact.model.config.to_dict(),
        "training": artifact.config.to_record(),
        "epochs_run": artifact.epochs_run,
        "losses": artifact.losses,
        "final_flip_rate": artifact.final_flip_rate,
        "special_ids": artifact.special_ids,
    })
    return out_dir


def load_artifact(artifact_dir) -> TrainedArtifact:
    """Reconstruct a saved training artifact (backbone + adapters)."""
    from tokenizers import Tokenizer
    from transformers import T5Config, T5ForConditionalGeneration

    from .lora import apply_lora
    from .train import TrainingConfig

    artifact_dir = Path(artifact_dir)
    with open(artifact_dir / "artifact.json", "r", encoding="utf-8") as fh:
        meta = json.load(fh)
    config = TrainingConfig(**meta["training"])
    model = T5ForConditionalGeneration(T5Config(**meta["model_config"]))
    apply_lora(model, config.rank, config.alpha)
    state = torch.load(artifact_dir / "state.pt", map_location="cpu")
    model.load_state_dict(state)
    tokenizer = Tokenizer.from_file(str(artifact_dir / "tokenizer.json"))
    return TrainedArtifact(model, tokenizer, config, meta["epochs_run"],
                           meta["losses"], meta["final_flip_rate"],
                           {k: int(v) for k, v in meta["special_ids"].items()})


def export_nli(artifact: TrainedArtifact, out_dir) -> Path:
    """Merge adapters, trace the classifier at fixed shape, write the
    artifact directory."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    model = artifact.model
    merged = merge_adapters(model)
    log.info("merged %d adapters into base weights", merged)
    model.eval()

    max_len = artifact.config.max_input_len
    pad = artifact.special_ids["pad_token_id"]
    decoder_start = int(model.config.decoder_start_token_id)
    example = (torch.full((1, max_len), pad, dtype=torch.long),
               torch.zeros((1, max_len), dtype=torch.long),
               torch.tensor([[decoder_start]], dtype=torch.long))
    core = NliCore(model)
    with torch.no_grad():
        traced = torch.jit.trace(core, example)
    traced.save(str(out_dir / "nli.pt"))
    artifact.tokenizer.save(str(out_dir / "tokenizer.json"))

    metadata = {
        "artifact": "nli-classifier",
        "max_input_len": max_len,
        "pad_token_id": pad,
        "eos_token_id": artifact.special_ids["eos_token_id"],
        "yes_token_id": artifact.special_ids["yes_token_id"],
        "no_token_id": artifact.special_ids["no_token_id"],
        "decoder_start_token_id": decoder_start,
        "input_template": INPUT_TEMPLATE,
        "hypothesis_template": HYPOTHESIS_TEMPLATE,
        "labels": [DISPLAY_NAMES[label] for label in LABELS],
        "label_ids": list(LABELS),
        "training": artifact.config.to_record(),
        "epochs_run": artifact.epochs_run,
        "final_flip_rate": artifact.final_flip_rate,
        "weights_sha256": _weights_digest(model),
    }
    _write_metadata(out_dir / "metadata.json", metadata)
    return out_dir


def export_encoder(model, tokenizer, out_dir, max_input_len: int = 256,
                   pad_token: str = "[PAD]", identity: str = "sentence-encoder") -> Path:
    """Trace a contextual encoder at fixed shape and write its directory."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    model.eval()
    pad = tokenizer.token_to_id(pad_token)
    if pad is None:
        raise ValueError(f"tokenizer lacks pad token {pad_token!r}")
    example = (torch.full((1, max_input_len), pad, dtype=torch.long),
               torch.zeros((1, max_input_len), dtype=torch.long))
    core = EncoderCore(model)
    with torch.no_grad():
        traced = torch.jit.trace(core, example)
    traced.save(str(out_dir / "encoder.pt"))
    tokenizer.save(str(out_dir / "tokenizer.json"))
    _write_metadata(out_dir / "metadata.json", {
        "artifact": "sentence-encoder",
        "identity": identity,
        "max_input_len": max_input_len,
        "pad_token_id": pad,
        "hidden_size": int(getattr(model.config, "hidden_size",
                                   getattr(model.config, "d_model", 0))),
        "weights_sha256": _weights_digest(model),
    })
    return out_dir
