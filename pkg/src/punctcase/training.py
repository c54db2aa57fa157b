"""MLM pretraining (random or punctuation-selective masking) and joint fine-tuning."""
from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
import torch
from torch import nn

from .errors import IncompatibleCheckpoint
from .model import EncoderConfig, PunctCaseModel, joint_loss
from .corpus import LabeledSequence
from .tokenizer import IGNORE, MASK_ID, PAD_ID, SubwordEncoding, Vocabulary, encode_sequence

logger = logging.getLogger(__name__)

MIN_MLM_PIECES = 7
NUM_RESERVED = 3


@dataclass(frozen=True)
class MaskingPolicy:
    kind: str = "random"
    mask_fraction: float = 0.15
    punct_share: float = 0.5

    def __post_init__(self):
        if self.kind not in ("random", "punct_selective"):
            raise ValueError(f"unknown masking policy {self.kind!r}")
        if not 0 < self.mask_fraction < 1:
            raise ValueError("mask_fraction must lie in (0, 1)")
        if not 0 <= self.punct_share <= 1:
            raise ValueError("punct_share must lie in [0, 1]")


@dataclass(frozen=True)
class TrainConfig:
    batch_size: int = 16
    learning_rate: float = 3e-4
    weight_decay: float = 0.01
    epochs: int = 10
    max_steps: int | None = None
    warmup_steps: int = 0
    alpha: float = 0.6
    gradient_clip_norm: float = 1.0
    seed: int = 0
    patience: int | None = None
    bucket_batches: int = 8

    def __post_init__(self):
        if self.batch_size <= 0 or self.epochs < 0 or self.learning_rate <= 0:
            raise ValueError("batch_size and learning_rate must be positive, epochs nonnegative")
        if self.alpha < 0:
            raise ValueError("alpha must be nonnegative")
        if self.gradient_clip_norm <= 0:
            raise ValueError("gradient_clip_norm must be positive")
        if self.max_steps is not None and self.max_steps < 0:
            raise ValueError("max_steps must be nonnegative")


def masking_rng(seed: int, epoch: int, index: int) -> np.random.Generator:
    """Masking stream keyed by (seed, epoch, sequence index), independent of batch order."""
    return np.random.default_rng([seed, epoch, index])


@dataclass
class MLMExample:
    inputs: list[int]
    targets: list[int]
    positions: list[int]


def num_to_mask(n: int, fraction: float) -> int:
    # guard against 0.15 * 100 = 15.000000000000002
    return math.ceil(round(n * fraction, 9))


def select_mask_positions(piece_ids: Sequence[int], policy: MaskingPolicy, rng: np.random.Generator, mark_ids) -> list[int]:
    n = len(piece_ids)
    k = num_to_mask(n, policy.mask_fraction)
    candidates = [i for i, t in enumerate(piece_ids) if t != PAD_ID]
    if policy.kind == "random":
        return sorted(rng.choice(candidates, size=min(k, len(candidates)), replace=False).tolist())
    punct = [i for i in candidates if piece_ids[i] in mark_ids]
    other = [i for i in candidates if piece_ids[i] not in mark_ids]
    want_punct = math.floor(k * policy.punct_share)
    take_punct = min(want_punct, len(punct))
    chosen = rng.choice(punct, size=take_punct, replace=False).tolist() if take_punct else []
    take_other = min(k - take_punct, len(other))
    chosen += rng.choice(other, size=take_other, replace=False).tolist() if take_other else []
    shortfall = k - len(chosen)
    if shortfall > 0:
        rest = sorted(set(candidates) - set(chosen))
        chosen += rng.choice(rest, size=min(shortfall, len(rest)), replace=False).tolist()
    return sorted(chosen)


def make_mlm_batch(piece_ids: Sequence[int], policy: MaskingPolicy, rng: np.random.Generator, vocab: Vocabulary) -> MLMExample | None:
    """Choose masked positions and corrupt them 80/10/10 (MASK / random piece / unchanged).

    Returns None for sequences shorter than seven pieces.
    """
    if len(piece_ids) < MIN_MLM_PIECES:
        return None
    positions = select_mask_positions(piece_ids, policy, rng, vocab.mark_ids)
    inputs = list(piece_ids)
    targets = [IGNORE] * len(piece_ids)
    for i in positions:
        targets[i] = piece_ids[i]
        u = rng.random()
        if u < 0.8:
            inputs[i] = MASK_ID
        elif u < 0.9:
            inputs[i] = int(rng.integers(NUM_RESERVED, len(vocab)))
    return MLMExample(inputs, targets, positions)


def pad_batch(rows: Sequence[Sequence[int]], fill: int) -> torch.Tensor:
    width = max(len(r) for r in rows)
    return torch.tensor([list(r) + [fill] * (width - len(r)) for r in rows], dtype=torch.long)


def bucketed_batches(lengths: Sequence[int], batch_size: int, rng: np.random.Generator, bucket_batches: int = 8) -> list[list[int]]:
    """Shuffle, sort within windows of ``bucket_batches`` batches by length, then shuffle batches."""
    order = rng.permutation(len(lengths)).tolist()
    window = batch_size * max(1, bucket_batches)
    batches = []
    for s in range(0, len(order), window):
        group = sorted(order[s:s + window], key=lambda i: (lengths[i], i))
        batches += [group[j:j + batch_size] for j in range(0, len(group), batch_size)]
    return [batches[i] for i in rng.permutation(len(batches))]


def _optimizer(model, cfg: TrainConfig):
    opt = torch.optim.AdamW(model.parameters(), lr=cfg.learning_rate, weight_decay=cfg.weight_decay)
    warm = cfg.warmup_steps
    sched = torch.optim.lr_scheduler.LambdaLR(opt, lambda s: min(1.0, (s + 1) / warm) if warm else 1.0)
    return opt, sched


def _step(model, opt, sched, loss, cfg: TrainConfig):
    opt.zero_grad()
    loss.backward()
    nn.utils.clip_grad_norm_(model.parameters(), cfg.gradient_clip_norm)
    opt.step()
    sched.step()


@dataclass
class TrainResult:
    model: PunctCaseModel
    log: list[dict] = field(default_factory=list)

    def write_log(self, path) -> None:
        with open(path, "w", encoding="utf-8") as f:
            for rec in self.log:
                f.write(json.dumps(rec) + "\n")


def pretrain_mlm(
    sequences: Sequence[Sequence[int]],
    vocab: Vocabulary,
    cfg: TrainConfig,
    policy: MaskingPolicy,
    model: PunctCaseModel | None = None,
    encoder: EncoderConfig | None = None,
) -> TrainResult:
    """Masked-LM training over piece sequences that keep marks as tokens.

    Either continues from ``model`` or builds a fresh one from ``encoder``.
    """
    torch.manual_seed(cfg.seed)
    if model is None:
        model = PunctCaseModel(encoder or EncoderConfig(vocab_size=len(vocab)))
    if model.config.vocab_size != len(vocab):
        raise IncompatibleCheckpoint(f"model vocab {model.config.vocab_size} != tokenizer vocab {len(vocab)}")
    seqs = [list(s[: model.config.max_seq_len]) for s in sequences]
    usable = [i for i, s in enumerate(seqs) if len(s) >= MIN_MLM_PIECES]
    if len(usable) < len(seqs):
        logger.info("skipping %d sequences shorter than %d pieces", len(seqs) - len(usable), MIN_MLM_PIECES)
    opt, sched = _optimizer(model, cfg)
    batch_rng = np.random.default_rng(cfg.seed)
    result = TrainResult(model)
    step = 0
    loss_fn = nn.CrossEntropyLoss(ignore_index=IGNORE)
    for epoch in range(cfg.epochs):
        model.train()
        for batch in bucketed_batches([len(seqs[i]) for i in usable], cfg.batch_size, batch_rng, cfg.bucket_batches):
            if cfg.max_steps is not None and step >= cfg.max_steps:
                break
            examples = [make_mlm_batch(seqs[usable[b]], policy, masking_rng(cfg.seed, epoch, usable[b]), vocab) for b in batch]
            inputs = pad_batch([e.inputs for e in examples], PAD_ID)
            targets = pad_batch([e.targets for e in examples], IGNORE)
            hidden = model.encode(inputs, inputs != PAD_ID)
            loss = loss_fn(model.mlm_logits(hidden).flatten(0, 1), targets.flatten())
            _step(model, opt, sched, loss, cfg)
            step += 1
            result.log.append({"step": step, "epoch": epoch, "loss": loss.item()})
    model.eval()
    return result


def collate(encodings: Sequence[SubwordEncoding]):
    ids = pad_batch([e.piece_ids for e in encodings], PAD_ID)
    punct = pad_batch([e.punct_labels for e in encodings], IGNORE)
    case = pad_batch([e.case_labels for e in encodings], IGNORE)
    return ids, ids != PAD_ID, punct, case


def batch_loss(model: PunctCaseModel, encodings: Sequence[SubwordEncoding], alpha: float):
    ids, mask, punct, case = collate(encodings)
    out = model(ids, mask)
    return joint_loss(out.punct_log_probs, out.case_log_probs, punct, case, alpha, log_space=True)


def train_joint(
    model: PunctCaseModel,
    data: Sequence[SubwordEncoding],
    cfg: TrainConfig,
    vocab: Vocabulary | None = None,
    dev_metric: Callable[[PunctCaseModel], float] | None = None,
) -> TrainResult:
    """Fine-tune all parameters on alpha * L_punct + L_case.

    ``model`` may be freshly initialized or come from MLM pretraining. With
    ``dev_metric`` and ``cfg.patience`` set, training stops after that many
    epochs without improvement and the best parameters are restored.
    """
    if vocab is not None and model.config.vocab_size != len(vocab):
        raise IncompatibleCheckpoint(f"model vocab {model.config.vocab_size} != tokenizer vocab {len(vocab)}")
    too_long = [len(e) for e in data if len(e) > model.config.max_seq_len]
    if too_long:
        raise ValueError(f"{len(too_long)} training sequences exceed max_seq_len; segment them first")
    data = [e for e in data if e.num_words > 0]
    torch.manual_seed(cfg.seed)
    opt, sched = _optimizer(model, cfg)
    rng = np.random.default_rng(cfg.seed)
    result = TrainResult(model)
    step = 0
    best, best_state, bad_epochs = -math.inf, None, 0
    for epoch in range(cfg.epochs):
        model.train()
        for batch in bucketed_batches([len(e) for e in data], cfg.batch_size, rng, cfg.bucket_batches):
            if cfg.max_steps is not None and step >= cfg.max_steps:
                break
            loss = batch_loss(model, [data[i] for i in batch], cfg.alpha)
            _step(model, opt, sched, loss.total, cfg)
            step += 1
            result.log.append({
                "step": step, "epoch": epoch,
                "loss": loss.total.item(), "loss_p": loss.punct.item(), "loss_c": loss.case.item(),
            })
        if dev_metric is not None:
            model.eval()
            score = dev_metric(model)
            result.log.append({"step": step, "epoch": epoch, "dev_metric": score})
            if score > best:
                best, bad_epochs = score, 0
                best_state = {k: v.detach().clone() for k, v in model.state_dict().items()}
            else:
                bad_epochs += 1
                if cfg.patience is not None and bad_epochs >= cfg.patience:
                    break
        if cfg.max_steps is not None and step >= cfg.max_steps:
            break
    if best_state is not None:
        model.load_state_dict(best_state)
    model.eval()
    return result


def encode_for_training(seqs, vocab: Vocabulary, max_seq_len: int, window: int = 300) -> list[SubwordEncoding]:
    """Encode labeled sequences, cutting them into word windows that fit the encoder."""
    cache: dict = {}
    out = []
    pending = [(seq, 0, len(seq)) for seq in seqs]
    pending = [(seq, s, min(e, s + window)) for seq, s0, e in pending for s in range(s0, e, window)]
    while pending:
        seq, s, e = pending.pop(0)
        part = LabeledSequence(seq.tokens[s:e])
        enc = encode_sequence(part, vocab, cache=cache)
        if len(enc) <= max_seq_len:
            out.append(enc)
        elif e - s == 1:
            raise ValueError(f"word {seq.tokens[s].lower_form!r} alone exceeds max_seq_len")
        else:
            mid = (s + e) // 2
            pending[:0] = [(seq, s, mid), (seq, mid, e)]
    return out

