"""Pipeline configuration: a YAML (or JSON) mapping validated against known keys.

Every key is optional; omitted keys take the defaults below.

    seed: 0
    mode: subword            # word | subword
    tag_pattern: '\\[[A-Z_]+\\]'
    paths: {corpus, vocab, lexicon, checkpoint, output}
    split: {ratios: [0.9, 0.05, 0.05]}
    tokenizer: {vocab_size: 2000, min_frequency: 2, word_max_size: 30000}
    encoder: {num_layers: 4, hidden_dim: 64, num_heads: 4, ff_dim: 256,
              max_seq_len: 320, dropout_rate: 0.1}
    train: {batch_size: 16, learning_rate: 3.0e-4, weight_decay: 0.01, epochs: 10,
            max_steps: null, warmup_steps: 0, alpha: 0.6, gradient_clip_norm: 1.0,
            patience: null, bucket_batches: 8}
    masking: {kind: random, mask_fraction: 0.15, punct_share: 0.5}
    chunk: {core: 200, overlap: 50}
    wer: {threshold: 0.25, test_n: 50, dev_n: 50}
    nbest: 1
    case_window: 5
    truncate_layers: null

The ``PUNCTCASE_CONFIG`` environment variable names a default config file.
"""
from __future__ import annotations

import dataclasses
import os
from dataclasses import dataclass, field
from pathlib import Path

import yaml

from .corpus import DEFAULT_TAG_PATTERN
from .errors import ConfigError
from .training import MaskingPolicy

ENV_VAR = "PUNCTCASE_CONFIG"


@dataclass
class Paths:
    corpus: str | None = None
    vocab: str | None = None
    lexicon: str | None = None
    checkpoint: str | None = None
    output: str | None = None


@dataclass
class SplitConfig:
    ratios: tuple[float, float, float] = (0.90, 0.05, 0.05)


@dataclass
class TokenizerConfig:
    vocab_size: int = 2000
    min_frequency: int = 2
    word_max_size: int = 30000


@dataclass
class EncoderSection:
    num_layers: int = 4
    hidden_dim: int = 64
    num_heads: int = 4
    ff_dim: int = 256
    max_seq_len: int = 320
    dropout_rate: float = 0.1


@dataclass
class TrainSection:
    batch_size: int = 16
    learning_rate: float = 3e-4
    weight_decay: float = 0.01
    epochs: int = 10
    max_steps: int | None = None
    warmup_steps: int = 0
    alpha: float = 0.6
    gradient_clip_norm: float = 1.0
    patience: int | None = None
    bucket_batches: int = 8


@dataclass
class MaskingSection:
    kind: str = "random"
    mask_fraction: float = 0.15
    punct_share: float = 0.5


@dataclass
class ChunkConfig:
    core: int = 200
    overlap: int = 50


@dataclass
class WerConfig:
    threshold: float = 0.25
    test_n: int = 50
    dev_n: int = 50


@dataclass
class PipelineConfig:
    seed: int = 0
    mode: str = "subword"
    tag_pattern: str = DEFAULT_TAG_PATTERN
    paths: Paths = field(default_factory=Paths)
    split: SplitConfig = field(default_factory=SplitConfig)
    tokenizer: TokenizerConfig = field(default_factory=TokenizerConfig)
    encoder: EncoderSection = field(default_factory=EncoderSection)
    train: TrainSection = field(default_factory=TrainSection)
    masking: MaskingSection = field(default_factory=MaskingSection)
    chunk: ChunkConfig = field(default_factory=ChunkConfig)
    wer: WerConfig = field(default_factory=WerConfig)
    nbest: int = 1
    case_window: int = 5
    truncate_layers: int | None = None

    def validate(self) -> "PipelineConfig":
        if self.mode not in ("word", "subword"):
            raise ConfigError(f"mode must be word or subword, got {self.mode!r}")
        if abs(sum(self.split.ratios) - 1) > 1e-9 or len(self.split.ratios) != 3:
            raise ConfigError("split.ratios must be three numbers summing to 1")
        if self.chunk.core < 1 or self.chunk.overlap < 0:
            raise ConfigError("chunk.core must be >= 1 and chunk.overlap >= 0")
        if self.chunk.core + 2 * self.chunk.overlap > self.encoder.max_seq_len:
            raise ConfigError("a full chunk (core + 2*overlap words) must fit max_seq_len")
        if not 0 <= self.nbest <= 5:
            raise ConfigError("nbest must lie in 0..5")
        if self.train.alpha < 0:
            raise ConfigError("train.alpha must be nonnegative")
        if not 0 <= self.wer.threshold:
            raise ConfigError("wer.threshold must be nonnegative")
        try:
            self.masking_policy()
        except ValueError as e:
            raise ConfigError(str(e)) from e
        return self

    def masking_policy(self) -> MaskingPolicy:
        return MaskingPolicy(**dataclasses.asdict(self.masking))

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["split"]["ratios"] = list(d["split"]["ratios"])
        return d


def _build(cls, data, where: str):
    if not isinstance(data, dict):
        raise ConfigError(f"{where or 'config'} must be a mapping")
    fields = {f.name: f for f in dataclasses.fields(cls)}
    unknown = sorted(set(data) - set(fields))
    if unknown:
        raise ConfigError(f"unknown key(s) in {where or 'config'}: {', '.join(unknown)}")
    kwargs = {}
    for name, value in data.items():
        default = fields[name].default_factory() if fields[name].default_factory is not dataclasses.MISSING else None
        if dataclasses.is_dataclass(default):
            kwargs[name] = _build(type(default), value or {}, f"{where}.{name}".lstrip("."))
        elif name == "ratios":
            kwargs[name] = tuple(float(x) for x in value)
        else:
            kwargs[name] = value
    return cls(**kwargs)


def load_config(path: str | os.PathLike | None = None) -> PipelineConfig:
    """Read and validate a config file; falls back to $PUNCTCASE_CONFIG, then to defaults."""
    path = path or os.environ.get(ENV_VAR)
    if not path:
        return PipelineConfig().validate()
    text = Path(path).read_text(encoding="utf-8")
    data = yaml.safe_load(text) or {}
    return _build(PipelineConfig, data, "").validate()
