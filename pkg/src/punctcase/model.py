"""Transformer encoder with MLM, punctuation and punctuation-conditioned casing heads.

The casing head sees the punctuation *distribution* concatenated to each
hidden state, so casing is predicted conditionally on punctuation and the
casing loss back-propagates into the punctuation head.
"""
from __future__ import annotations

import copy
import json
import math
import struct
from dataclasses import asdict, dataclass, replace
from typing import NamedTuple

import numpy as np
import torch
import torch.nn.functional as F
from torch import nn

from .errors import ChunkingRequired, IncompatibleCheckpoint, InvalidTruncation, NoSupervision
from .tokenizer import IGNORE

NUM_PUNCT = 4
NUM_CASE = 4


@dataclass(frozen=True)
class EncoderConfig:
    num_layers: int = 4
    hidden_dim: int = 64
    num_heads: int = 4
    ff_dim: int = 256
    max_seq_len: int = 320
    vocab_size: int = 1000
    dropout_rate: float = 0.1

    def __post_init__(self):
        for name in ("num_layers", "hidden_dim", "num_heads", "ff_dim", "max_seq_len", "vocab_size"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.hidden_dim % self.num_heads:
            raise ValueError("hidden_dim must be divisible by num_heads")
        if self.max_seq_len < 300:
            raise ValueError("max_seq_len must cover a full 300-word chunk")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ValueError("dropout_rate must lie in [0, 1)")


class SelfAttention(nn.Module):
    def __init__(self, d: int, heads: int, dropout: float):
        super().__init__()
        self.heads = heads
        self.query = nn.Linear(d, d)
        self.key = nn.Linear(d, d)
        self.value = nn.Linear(d, d)
        self.out = nn.Linear(d, d)
        self.dropout = nn.Dropout(dropout)

    def forward(self, x, pad_mask):
        b, n, d = x.shape
        dh = d // self.heads

        def split(t):
            return t.view(b, n, self.heads, dh).transpose(1, 2)

        q, k, v = split(self.query(x)), split(self.key(x)), split(self.value(x))
        scores = q @ k.transpose(-1, -2) / math.sqrt(dh)
        if pad_mask is not None:
            scores = scores.masked_fill(pad_mask[:, None, None, :], float("-inf"))
        attn = self.dropout(scores.softmax(dim=-1))
        ctx = (attn @ v).transpose(1, 2).reshape(b, n, d)
        return self.out(ctx)


class EncoderLayer(nn.Module):
    """Pre-norm residual block: attention then feed-forward."""

    def __init__(self, cfg: EncoderConfig):
        super().__init__()
        d = cfg.hidden_dim
        self.norm1 = nn.LayerNorm(d)
        self.attn = SelfAttention(d, cfg.num_heads, cfg.dropout_rate)
        self.norm2 = nn.LayerNorm(d)
        self.ff = nn.Sequential(nn.Linear(d, cfg.ff_dim), nn.GELU(), nn.Linear(cfg.ff_dim, d))
        self.dropout = nn.Dropout(cfg.dropout_rate)

    def forward(self, x, pad_mask):
        x = x + self.dropout(self.attn(self.norm1(x), pad_mask))
        return x + self.dropout(self.ff(self.norm2(x)))


class HeadOutputs(NamedTuple):
    hidden: torch.Tensor
    punct_log_probs: torch.Tensor
    case_log_probs: torch.Tensor

    @property
    def punct_probs(self):
        return self.punct_log_probs.exp()

    @property
    def case_probs(self):
        return self.case_log_probs.exp()


class PunctCaseModel(nn.Module):
    def __init__(self, cfg: EncoderConfig):
        super().__init__()
        self.config = cfg
        d = cfg.hidden_dim
        self.token_embedding = nn.Embedding(cfg.vocab_size, d)
        self.position_embedding = nn.Embedding(cfg.max_seq_len, d)
        self.embed_dropout = nn.Dropout(cfg.dropout_rate)
        self.layers = nn.ModuleList(EncoderLayer(cfg) for _ in range(cfg.num_layers))
        self.final_norm = nn.LayerNorm(d)
        self.punct_out = nn.Linear(d, NUM_PUNCT)
        self.case_out = nn.Linear(NUM_PUNCT + d, NUM_CASE)
        self.mlm_out = nn.Linear(d, cfg.vocab_size)
        self._init_weights()

    def _init_weights(self):
        for name, p in self.named_parameters():
            if name.endswith("bias"):
                nn.init.zeros_(p)
            elif "norm" in name:
                nn.init.ones_(p)
            else:
                nn.init.normal_(p, std=0.02)
        # both heads start (near) uniform; a tiny random Wk breaks the symmetry that
        # would otherwise keep alpha=0 training from ever moving it
        nn.init.normal_(self.punct_out.weight, std=1e-3)
        nn.init.zeros_(self.case_out.weight)

    def encode(self, piece_ids: torch.Tensor, attention_mask: torch.Tensor | None = None) -> torch.Tensor:
        """Hidden states H, shape (batch, n, d). ``attention_mask`` is True on real pieces."""
        if piece_ids.dim() == 1:
            piece_ids = piece_ids[None]
            if attention_mask is not None:
                attention_mask = attention_mask[None]
        n = piece_ids.shape[1]
        if n > self.config.max_seq_len:
            raise ChunkingRequired(f"{n} pieces exceed max_seq_len={self.config.max_seq_len}")
        positions = torch.arange(n, device=piece_ids.device)
        x = self.token_embedding(piece_ids) + self.position_embedding(positions)[None]
        x = self.embed_dropout(x)
        pad_mask = None if attention_mask is None else ~attention_mask.bool()
        for layer in self.layers:
            x = layer(x, pad_mask)
        return self.final_norm(x)

    def punct_log_probs(self, hidden):
        return F.log_softmax(self.punct_out(hidden), dim=-1)

    def case_log_probs(self, hidden, punct_probs):
        return F.log_softmax(self.case_out(torch.cat([punct_probs, hidden], dim=-1)), dim=-1)

    def punct_head(self, hidden):
        """Per-piece punctuation distributions."""
        return self.punct_log_probs(hidden).exp()

    def case_head(self, hidden, punct_probs):
        """Per-piece casing distributions from soft punctuation probabilities and hidden states."""
        if punct_probs.shape[:-1] != hidden.shape[:-1]:
            raise ValueError("punctuation distributions and hidden states disagree in length")
        return self.case_log_probs(hidden, punct_probs).exp()

    def mlm_head(self, hidden):
        return F.softmax(self.mlm_out(hidden), dim=-1)

    def mlm_logits(self, hidden):
        return self.mlm_out(hidden)

    def forward(self, piece_ids, attention_mask=None) -> HeadOutputs:
        hidden = self.encode(piece_ids, attention_mask)
        p_log = self.punct_log_probs(hidden)
        c_log = self.case_log_probs(hidden, p_log.exp())
        return HeadOutputs(hidden, p_log, c_log)


def truncate(model: PunctCaseModel, k: int) -> PunctCaseModel:
    """Copy of ``model`` keeping embeddings, the first ``k`` layers and all heads."""
    if not 1 <= k <= model.config.num_layers:
        raise InvalidTruncation(f"k={k} outside [1, {model.config.num_layers}]")
    out = PunctCaseModel(replace(model.config, num_layers=k)).to(next(model.parameters()).dtype)
    kept = {name: t for name, t in model.state_dict().items()
            if not name.startswith("layers.") or int(name.split(".")[1]) < k}
    out.load_state_dict(kept)
    return out


@dataclass
class JointLoss:
    total: torch.Tensor
    punct: torch.Tensor
    case: torch.Tensor


def _mean_nll(log_probs, labels):
    mask = labels != IGNORE
    picked = log_probs[mask].gather(-1, labels[mask][:, None])
    return -picked.mean()


def joint_loss(punct, case, punct_labels, case_labels, alpha: float = 0.6, log_space: bool = False) -> JointLoss:
    """alpha * L_punct + L_case, each the mean cross-entropy over supervised pieces.

    ``punct``/``case`` are distributions (or log-distributions when
    ``log_space``); positions labeled IGNORE are excluded from both terms.
    """
    if alpha < 0:
        raise ValueError("alpha must be nonnegative")
    punct_labels = torch.as_tensor(punct_labels)
    case_labels = torch.as_tensor(case_labels)
    if not bool((punct_labels != IGNORE).any()) or not bool((case_labels != IGNORE).any()):
        raise NoSupervision("no supervised positions in batch")
    if not log_space:
        tiny = torch.finfo(punct.dtype).tiny
        punct, case = punct.clamp_min(tiny).log(), case.clamp_min(tiny).log()
    lp = _mean_nll(punct, punct_labels)
    lc = _mean_nll(case, case_labels)
    return JointLoss(alpha * lp + lc, lp, lc)


# --- checkpoint container ---
#
# layout (all integers little-endian):
#   magic     8 bytes  b"PCCKPT01"
#   hlen      uint64   length of the JSON header in bytes
#   header    hlen bytes UTF-8 JSON:
#               {"config": {...EncoderConfig}, "vocab_hash": str, "meta": {...},
#                "tensors": [{"name", "dtype": "<f4"|"<f8", "shape", "offset", "nbytes"}]}
#   payload   concatenated raw tensors, C order, little-endian, offsets relative to payload start

MAGIC = b"PCCKPT01"


def save_checkpoint(path, model: PunctCaseModel, vocab_hash: str = "", meta: dict | None = None) -> None:
    entries = []
    blobs = []
    offset = 0
    for name, t in model.state_dict().items():
        arr = t.detach().cpu().numpy()
        dtype = "<f8" if arr.dtype == np.float64 else "<f4"
        raw = np.ascontiguousarray(arr, dtype=dtype).tobytes()
        entries.append({"name": name, "dtype": dtype, "shape": list(arr.shape), "offset": offset, "nbytes": len(raw)})
        blobs.append(raw)
        offset += len(raw)
    header = json.dumps({
        "config": asdict(model.config),
        "vocab_hash": vocab_hash,
        "meta": meta or {},
        "tensors": entries,
    }, sort_keys=True).encode("utf-8")
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<Q", len(header)))
        f.write(header)
        for raw in blobs:
            f.write(raw)


def load_checkpoint(path, vocab_hash: str | None = None) -> tuple[PunctCaseModel, dict]:
    with open(path, "rb") as f:
        if f.read(len(MAGIC)) != MAGIC:
            raise IncompatibleCheckpoint(f"{path} is not a checkpoint file")
        (hlen,) = struct.unpack("<Q", f.read(8))
        header = json.loads(f.read(hlen).decode("utf-8"))
        payload = f.read()
    if vocab_hash is not None and header["vocab_hash"] and header["vocab_hash"] != vocab_hash:
        raise IncompatibleCheckpoint("checkpoint was trained with a different vocabulary")
    cfg = EncoderConfig(**header["config"])
    model = PunctCaseModel(cfg)
    expected = {k: tuple(v.shape) for k, v in model.state_dict().items()}
    state = {}
    for e in header["tensors"]:
        shape = tuple(e["shape"])
        if expected.get(e["name"]) != shape:
            raise IncompatibleCheckpoint(f"tensor {e['name']} has shape {shape}, config expects {expected.get(e['name'])}")
        arr = np.frombuffer(payload, dtype=e["dtype"], count=math.prod(shape), offset=e["offset"]).reshape(shape)
        state[e["name"]] = torch.from_numpy(arr.astype(arr.dtype.newbyteorder("=")).copy())
    missing = set(expected) - set(state)
    if missing:
        raise IncompatibleCheckpoint(f"checkpoint lacks tensors: {sorted(missing)}")
    if any(t.dtype == torch.float64 for t in state.values()):
        model = model.double()
    model.load_state_dict(state)
    return model, header


def clone(model: PunctCaseModel) -> PunctCaseModel:
    return copy.deepcopy(model)
