"""Sequence encoders that score serialized examples with one logit.

Two interchangeable encoders:

- TinyByteEncoder, the default: a small bidirectional transformer over raw
  bytes, trained from scratch. No pretrained weights, no tokenizer files,
  works offline. Mean-pooling over byte positions (which carry sinusoidal
  position signals) lets the head read sequence-length structure as well as
  content.
- PretrainedEncoder: wraps a local bidirectional-encoder checkpoint loaded
  with `transformers` (install the `hf` extra). Use this for UniXcoder-class
  models when a checkpoint directory is available.

Both expose ``encode_batch(texts) -> (ids, mask)`` and ``forward(ids, mask)
-> logits`` and declare a ``default_learning_rate``: 1e-3 when training from
scratch, the conventional 2e-5 when fine-tuning pretrained weights.
"""
from __future__ import annotations

import math

import torch
from torch import nn


class TinyByteEncoder(nn.Module):
    PAD = 256  # one id past the byte range

    default_learning_rate = 1e-3

    def __init__(
        self,
        d_model: int = 64,
        n_layers: int = 2,
        n_heads: int = 4,
        ffn_dim: int = 128,
        max_len: int = 512,
    ) -> None:
        super().__init__()
        if max_len < 1:
            raise ValueError("max_len must be >= 1")
        self.max_len = max_len
        self.embedding = nn.Embedding(257, d_model, padding_idx=self.PAD)
        layer = nn.TransformerEncoderLayer(
            d_model=d_model,
            nhead=n_heads,
            dim_feedforward=ffn_dim,
            dropout=0.0,  # a single epoch leaves no room for stochastic regularizers
            batch_first=True,
        )
        # the nested-tensor fast path only kicks in under no_grad and varies
        # across torch builds; the plain path keeps eval == train numerics
        self.encoder = nn.TransformerEncoder(layer, num_layers=n_layers, enable_nested_tensor=False)
        self.head = nn.Linear(d_model, 1)
        self.register_buffer("positions", _sinusoidal_table(max_len, d_model))

    def encode_batch(self, texts: list[str]) -> tuple[torch.Tensor, torch.Tensor]:
        """Byte ids padded to the longest sequence; mask is 1 on real bytes.

        The serializer already budgets characters; byte truncation here is a
        final safety net for non-ascii text whose UTF-8 form runs longer.
        """
        encoded = [text.encode("utf-8")[: self.max_len] for text in texts]
        width = max(1, max(len(b) for b in encoded)) if encoded else 1
        ids = torch.full((len(encoded), width), self.PAD, dtype=torch.long)
        mask = torch.zeros((len(encoded), width), dtype=torch.float32)
        for i, raw in enumerate(encoded):
            if raw:
                ids[i, : len(raw)] = torch.tensor(list(raw), dtype=torch.long)
                mask[i, : len(raw)] = 1.0
        return ids, mask

    def forward(self, ids: torch.Tensor, mask: torch.Tensor) -> torch.Tensor:
        h = self.embedding(ids) + self.positions[: ids.shape[1]]
        h = self.encoder(h, src_key_padding_mask=(mask == 0))
        denom = mask.sum(dim=1, keepdim=True).clamp(min=1.0)
        pooled = (h * mask.unsqueeze(-1)).sum(dim=1) / denom
        return self.head(pooled).squeeze(-1)


def _sinusoidal_table(max_len: int, d_model: int) -> torch.Tensor:
    position = torch.arange(max_len, dtype=torch.float32).unsqueeze(1)
    div = torch.exp(
        torch.arange(0, d_model, 2, dtype=torch.float32) * (-math.log(10000.0) / d_model)
    )
    table = torch.zeros(max_len, d_model)
    table[:, 0::2] = torch.sin(position * div)
    table[:, 1::2] = torch.cos(position * div[: table[:, 1::2].shape[1]])
    return table


class PretrainedEncoder(nn.Module):
    """Local checkpoint + tokenizer behind the same two-method interface."""

    default_learning_rate = 2e-5

    def __init__(self, checkpoint_dir: str, max_len: int = 512) -> None:
        super().__init__()
        try:
            from transformers import AutoModel, AutoTokenizer
        except ImportError as exc:
            raise RuntimeError(
                "pretrained encoders need the transformers package; "
                "install shadowpred[hf] or use the default tiny encoder"
            ) from exc
        self.max_len = max_len
        self.tokenizer = AutoTokenizer.from_pretrained(checkpoint_dir)
        self.model = AutoModel.from_pretrained(checkpoint_dir)
        self.head = nn.Linear(self.model.config.hidden_size, 1)

    def encode_batch(self, texts: list[str]) -> tuple[torch.Tensor, torch.Tensor]:
        batch = self.tokenizer(
            texts,
            padding=True,
            truncation=True,
            max_length=self.max_len,
            return_tensors="pt",
        )
        return batch["input_ids"], batch["attention_mask"].to(torch.float32)

    def forward(self, ids: torch.Tensor, mask: torch.Tensor) -> torch.Tensor:
        out = self.model(input_ids=ids, attention_mask=mask)
        hidden = out.last_hidden_state
        denom = mask.sum(dim=1, keepdim=True).clamp(min=1.0)
        pooled = (hidden * mask.unsqueeze(-1)).sum(dim=1) / denom
        return self.head(pooled).squeeze(-1)


def make_encoder(spec: str, max_len: int, seed: int | None = None) -> nn.Module:
    """'tiny' for the built-in byte model, anything else is a checkpoint path.

    Weight initialization is the only RNG draw at build time, so seeding
    here (not just at training time) is what makes whole runs repeatable.
    """
    if seed is not None:
        torch.manual_seed(seed)
    if spec == "tiny":
        return TinyByteEncoder(max_len=max_len)
    return PretrainedEncoder(spec, max_len=max_len)
