"""Sliding-window chunking, per-chunk prediction and merge back to one label per word."""
from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Sequence

import numpy as np
import torch

from .corpus import CaseLabel, LabeledSequence, LabeledToken, MixedCaseLexicon, PunctLabel, normalize_words, realize
from .errors import ChunkingRequired, EmptyInput, TilingError
from .model import PunctCaseModel
from .tokenizer import Vocabulary, encode_words

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class Chunk:
    start: int
    end: int
    core_start: int
    core_end: int

    def __post_init__(self):
        if not (self.start <= self.core_start < self.core_end <= self.end):
            raise ValueError(f"malformed chunk {self}")

    @property
    def left_context(self) -> int:
        return self.core_start - self.start

    @property
    def right_context(self) -> int:
        return self.end - self.core_end


def chunk(n_words: int | Sequence, core: int = 200, overlap: int = 50) -> list[Chunk]:
    """Windows whose cores tile [0, N), each padded with up to ``overlap`` words of context per side."""
    n = n_words if isinstance(n_words, int) else len(n_words)
    if core < 1 or overlap < 0:
        raise ValueError("core must be >= 1 and overlap >= 0")
    if n <= 0:
        raise EmptyInput("nothing to chunk")
    out = []
    for cs in range(0, n, core):
        ce = min(cs + core, n)
        out.append(Chunk(max(0, cs - overlap), min(n, ce + overlap), cs, ce))
    return out


def check_tiling(chunks: Sequence[Chunk], n: int) -> None:
    pos = 0
    for c in chunks:
        if c.core_start != pos:
            raise TilingError(f"core of {c} does not start at {pos}")
        pos = c.core_end
    if pos != n:
        raise TilingError(f"cores cover [0, {pos}) instead of [0, {n})")


def merge(chunks: Sequence[Chunk], chunk_labels: Sequence[Sequence], n: int | None = None) -> list:
    """Keep each word's label from the chunk whose core owns it; context predictions are discarded."""
    if len(chunks) != len(chunk_labels):
        raise ValueError("one label list per chunk required")
    n = chunks[-1].core_end if n is None and chunks else n
    check_tiling(chunks, n)
    out = []
    for c, labels in zip(chunks, chunk_labels):
        if len(labels) != c.end - c.start:
            raise ValueError(f"chunk {c} has {len(labels)} labels, expected {c.end - c.start}")
        out.extend(labels[c.left_context:c.left_context + (c.core_end - c.core_start)])
    return out


def _first_argmax(probs: torch.Tensor) -> list[int]:
    # numpy argmax returns the first (lowest) index among ties
    return np.argmax(probs.detach().cpu().numpy(), axis=-1).tolist()


class Predictor:
    """Runs a trained model over word lists of any length."""

    def __init__(self, model: PunctCaseModel, vocab: Vocabulary, lexicon: MixedCaseLexicon | None = None,
                 core: int = 200, overlap: int = 50):
        if model.config.vocab_size != len(vocab):
            raise ValueError("model and tokenizer are incompatible")
        self.model = model.eval()
        self.vocab = vocab
        self.lexicon = lexicon
        self.core = core
        self.overlap = overlap
        self._cache: dict = {}

    @torch.no_grad()
    def label_span(self, words: Sequence[str]) -> tuple[list[int], list[int]]:
        """Word-level (punct, case) argmax labels for a span that fits the encoder."""
        ids, parent, final = encode_words(words, self.vocab, self._cache)
        if len(ids) > self.model.config.max_seq_len:
            raise ChunkingRequired(f"{len(words)} words expand to {len(ids)} pieces")
        out = self.model(torch.tensor([ids]))
        p = _first_argmax(out.punct_probs[0])
        c = _first_argmax(out.case_probs[0])
        punct = [p[i] for i, f in enumerate(final) if f]
        case = [c[i] for i, f in enumerate(final) if f]
        return punct, case

    def _label_core(self, words, cs, ce, overlap):
        start, end = max(0, cs - overlap), min(len(words), ce + overlap)
        try:
            punct, case = self.label_span(words[start:end])
        except ChunkingRequired:
            if ce - cs == 1 and overlap == 0:
                raise
            if ce - cs == 1:
                return self._label_core(words, cs, ce, overlap // 2)
            mid = cs + (ce - cs) // 2
            logger.warning("chunk [%d, %d) overflows the encoder; re-splitting at %d", cs, ce, mid)
            lp, lc = self._label_core(words, cs, mid, overlap)
            rp, rc = self._label_core(words, mid, ce, overlap)
            return lp + rp, lc + rc
        k = cs - start
        return punct[k:k + ce - cs], case[k:k + ce - cs]

    def label_words(self, words: Sequence[str], chunking: bool = True) -> tuple[list[int], list[int]]:
        if not words:
            raise EmptyInput("no words to label")
        if not chunking:
            return self.label_span(words)
        chunks = chunk(len(words), self.core, self.overlap)
        per_p, per_c = [], []
        for c in chunks:
            p, cl = self._label_core(words, c.core_start, c.core_end, self.overlap)
            # pad back to the chunk span so merge sees full windows
            per_p.append([None] * c.left_context + p + [None] * c.right_context)
            per_c.append([None] * c.left_context + cl + [None] * c.right_context)
        return merge(chunks, per_p, len(words)), merge(chunks, per_c, len(words))

    def predict(self, text_or_words, chunking: bool = True) -> tuple[str, LabeledSequence]:
        words = normalize_words(text_or_words) if isinstance(text_or_words, str) else [w.lower() for w in text_or_words]
        if not words:
            raise EmptyInput("input has no words")
        punct, case = self.label_words(words, chunking)
        seq = LabeledSequence([LabeledToken(w, PunctLabel(p), CaseLabel(c)) for w, p, c in zip(words, punct, case)])
        return realize(seq, self.lexicon), seq


def predict(text_or_words, model: PunctCaseModel, vocab: Vocabulary, lexicon: MixedCaseLexicon | None = None,
            core: int = 200, overlap: int = 50, chunking: bool = True) -> tuple[str, LabeledSequence]:
    """Restore punctuation and casing of lowercase, unpunctuated text."""
    return Predictor(model, vocab, lexicon, core, overlap).predict(text_or_words, chunking)
