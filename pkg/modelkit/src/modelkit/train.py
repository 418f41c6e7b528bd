"""Adapter fine-tuning of the two-way (yes/no) entailment classifier.

Early stopping is validation-free: training stops once the fraction of
training-set predictions that flip between consecutive epochs falls below a
threshold, so every annotated segment stays in the training pool.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import torch

from .labels import NEGATIVE_TARGET, POSITIVE_TARGET
from .lora import apply_lora, trainable_parameters
from .pairs import NliPair

log = logging.getLogger(__name__)


@dataclass
class TrainingConfig:
    rank: int = 8
    alpha: int = 16
    learning_rate: float = 3e-4
    batch_size: int = 8
    max_epochs: int = 60
    # Stop when < this fraction of training predictions flip between epochs.
    early_stop_flip_rate: float = 0.005
    min_epochs: int = 2
    oversample: bool = True
    seed: int = 0
    max_input_len: int = 256
    deterministic: bool = True

    def to_record(self) -> dict:
        return {"rank": self.rank, "alpha": self.alpha,
                "learning_rate": self.learning_rate, "batch_size": self.batch_size,
                "max_epochs": self.max_epochs,
                "early_stop_flip_rate": self.early_stop_flip_rate,
                "min_epochs": self.min_epochs, "oversample": self.oversample,
                "seed": self.seed, "max_input_len": self.max_input_len}


@dataclass
class TrainedArtifact:
    model: object
    tokenizer: object
    config: TrainingConfig
    epochs_run: int
    losses: list[float]
    final_flip_rate: float
    special_ids: dict = field(default_factory=dict)


def resolve_special_ids(tokenizer, pad_token="[PAD]", eos_token="</s>") -> dict:
    def token_id(token):
        tid = tokenizer.token_to_id(token)
        if tid is None:
            raise ValueError(f"tokenizer lacks required token {token!r}")
        return tid

    return {
        "pad_token_id": token_id(pad_token),
        "eos_token_id": token_id(eos_token),
        "yes_token_id": token_id(POSITIVE_TARGET),
        "no_token_id": token_id(NEGATIVE_TARGET),
    }


def encode_batch(tokenizer, texts, max_len, pad_id):
    ids_batch, mask_batch = [], []
    for text in texts:
        ids = tokenizer.encode(text).ids[:max_len]
        mask = [1] * len(ids) + [0] * (max_len - len(ids))
        ids = ids + [pad_id] * (max_len - len(ids))
        ids_batch.append(ids)
        mask_batch.append(mask)
    return torch.tensor(ids_batch), torch.tensor(mask_batch)


@torch.no_grad()
def predict_pairs(model, tokenizer, pairs: list[NliPair], config: TrainingConfig,
                  special_ids: dict) -> list[bool]:
    """Yes/no decision per pair: compare first-step yes vs no logits."""
    model.eval()
    decoder_start = int(model.config.decoder_start_token_id)
    yes_id, no_id = special_ids["yes_token_id"], special_ids["no_token_id"]
    out: list[bool] = []
    for start in range(0, len(pairs), config.batch_size):
        chunk = pairs[start:start + config.batch_size]
        ids, mask = encode_batch(tokenizer, [p.input_text for p in chunk],
                                 config.max_input_len, special_ids["pad_token_id"])
        decoder_ids = torch.full((len(chunk), 1), decoder_start, dtype=torch.long)
        logits = model(input_ids=ids, attention_mask=mask,
                       decoder_input_ids=decoder_ids).logits[:, -1, :]
        out.extend((logits[:, yes_id] > logits[:, no_id]).tolist())
    return out


def train(model, tokenizer, pairs: list[NliPair], config: TrainingConfig,
          special_ids: dict | None = None) -> TrainedArtifact:
    """Fine-tune adapters on the NLI pairs.

    The backbone stays frozen; only rank-``config.rank`` adapters on the
    attention query/value projections receive gradients.  Aborts on a
    non-finite loss.
    """
    if config.deterministic:
        torch.manual_seed(config.seed)
        torch.use_deterministic_algorithms(True, warn_only=True)

    special_ids = special_ids or resolve_special_ids(tokenizer)
    wrapped = apply_lora(model, config.rank, config.alpha)
    log.info("adapted %d projections (rank=%d alpha=%d)", wrapped, config.rank,
             config.alpha)
    optimizer = torch.optim.AdamW(trainable_parameters(model), lr=config.learning_rate)

    pad_id = special_ids["pad_token_id"]
    eos_id = special_ids["eos_token_id"]
    target_ids = {POSITIVE_TARGET: special_ids["yes_token_id"],
                  NEGATIVE_TARGET: special_ids["no_token_id"]}

    generator = torch.Generator().manual_seed(config.seed)
    losses: list[float] = []
    previous_predictions: list[bool] | None = None
    flip_rate = 1.0
    epochs_run = 0

    for epoch in range(config.max_epochs):
        model.train()
        order = torch.randperm(len(pairs), generator=generator).tolist()
        epoch_loss = 0.0
        for start in range(0, len(order), config.batch_size):
            batch = [pairs[i] for i in order[start:start + config.batch_size]]
            ids, mask = encode_batch(tokenizer, [p.input_text for p in batch],
                                     config.max_input_len, pad_id)
            labels = torch.tensor([[target_ids[p.target], eos_id] for p in batch])
            output = model(input_ids=ids, attention_mask=mask, labels=labels)
            loss = output.loss
            if not torch.isfinite(loss):
                raise RuntimeError(
                    f"training diverged: non-finite loss at epoch {epoch}, "
                    f"batch {start // config.batch_size} "
                    f"(last finite losses: {losses[-3:]})")
            optimizer.zero_grad()
            loss.backward()
            optimizer.step()
            epoch_loss += float(loss) * len(batch)
        losses.append(epoch_loss / len(pairs))
        epochs_run = epoch + 1

        predictions = predict_pairs(model, tokenizer, pairs, config, special_ids)
        if previous_predictions is not None:
            flips = sum(1 for a, b in zip(previous_predictions, predictions) if a != b)
            flip_rate = flips / len(predictions)
            log.info("epoch %d: loss %.4f, flip rate %.4f", epoch, losses[-1], flip_rate)
            if epochs_run >= config.min_epochs and flip_rate < config.early_stop_flip_rate:
                break
        previous_predictions = predictions

    return TrainedArtifact(model, tokenizer, config, epochs_run, losses, flip_rate,
                           special_ids)
