"""Align ASR hypotheses to references and carry punctuation/case labels across.

Used both to build ASR-augmented training data from n-best lists and to
produce word-aligned gold labels for scoring hypotheses.
"""
from __future__ import annotations

import logging
from collections import Counter
from dataclasses import dataclass
from enum import Enum
from typing import Mapping, Sequence

from .corpus import CaseLabel, LabeledSequence, LabeledToken, PunctLabel, merge_punct
from .errors import EmptyReference, InsufficientData

logger = logging.getLogger(__name__)


class OpKind(Enum):
    MATCH = "M"
    SUBSTITUTE = "S"
    INSERT = "I"
    DELETE = "D"


@dataclass(frozen=True)
class EditOp:
    kind: OpKind
    ref_index: int | None = None
    hyp_index: int | None = None

    def __post_init__(self):
        has_ref, has_hyp = self.ref_index is not None, self.hyp_index is not None
        ok = {
            OpKind.MATCH: has_ref and has_hyp,
            OpKind.SUBSTITUTE: has_ref and has_hyp,
            OpKind.INSERT: has_hyp and not has_ref,
            OpKind.DELETE: has_ref and not has_hyp,
        }[self.kind]
        if not ok:
            raise ValueError(f"inconsistent indices for {self.kind}: ref={self.ref_index} hyp={self.hyp_index}")


@dataclass(frozen=True)
class WordAlignment:
    ops: tuple[EditOp, ...]
    distance: int
    ref_len: int

    @property
    def wer(self) -> float:
        return self.distance / self.ref_len

    def counts(self) -> Counter:
        return Counter(op.kind for op in self.ops)


def align(ref_words: Sequence[str], hyp_words: Sequence[str]) -> WordAlignment:
    """Unit-cost word Levenshtein alignment, compared case-insensitively.

    Backtrace prefers the diagonal (match/substitute), then deletion, then insertion.
    """
    if not ref_words:
        raise EmptyReference("WER is undefined for an empty reference")
    ref = [w.lower() for w in ref_words]
    hyp = [w.lower() for w in hyp_words]
    n, m = len(ref), len(hyp)
    d = [[0] * (m + 1) for _ in range(n + 1)]
    for i in range(n + 1):
        d[i][0] = i
    for j in range(m + 1):
        d[0][j] = j
    for i in range(1, n + 1):
        row, prev = d[i], d[i - 1]
        for j in range(1, m + 1):
            sub = prev[j - 1] + (ref[i - 1] != hyp[j - 1])
            row[j] = min(sub, prev[j] + 1, row[j - 1] + 1)

    ops = []
    i, j = n, m
    while i > 0 or j > 0:
        if i > 0 and j > 0 and d[i][j] == d[i - 1][j - 1] + (ref[i - 1] != hyp[j - 1]):
            kind = OpKind.MATCH if ref[i - 1] == hyp[j - 1] else OpKind.SUBSTITUTE
            ops.append(EditOp(kind, i - 1, j - 1))
            i, j = i - 1, j - 1
        elif i > 0 and d[i][j] == d[i - 1][j] + 1:
            ops.append(EditOp(OpKind.DELETE, i - 1, None))
            i -= 1
        else:
            ops.append(EditOp(OpKind.INSERT, None, j - 1))
            j -= 1
    ops.reverse()
    return WordAlignment(tuple(ops), d[n][m], n)


def wer(ref_words: Sequence[str], hyp_words: Sequence[str]) -> float:
    return align(ref_words, hyp_words).wer


def restore_punct(ref: LabeledSequence, alignment: WordAlignment, hyp_words: Sequence[str],
                  stats: Counter | None = None) -> list[PunctLabel]:
    """Punctuation for each hypothesis word, copied through the alignment.

    A deleted reference word hands its mark to the last hypothesis word
    emitted before it; marks with nowhere to go are counted in
    ``stats["dropped_marks"]``.
    """
    labels = [PunctLabel.NO_PUNCT] * len(hyp_words)
    last_hyp = None
    for op in alignment.ops:
        if op.kind in (OpKind.MATCH, OpKind.SUBSTITUTE):
            labels[op.hyp_index] = ref.tokens[op.ref_index].punct
            last_hyp = op.hyp_index
        elif op.kind is OpKind.INSERT:
            labels[op.hyp_index] = PunctLabel.NO_PUNCT
            last_hyp = op.hyp_index
        else:
            mark = ref.tokens[op.ref_index].punct
            if mark is PunctLabel.NO_PUNCT:
                continue
            if last_hyp is None:
                if stats is not None:
                    stats["dropped_marks"] += 1
                continue
            labels[last_hyp] = merge_punct(labels[last_hyp], mark)
    return labels


def _anchor_ref_positions(alignment: WordAlignment, n_hyp: int) -> list[int]:
    """Reference position each hypothesis word is compared around."""
    ops = alignment.ops
    anchors = [0] * n_hyp
    for k, op in enumerate(ops):
        if op.hyp_index is None:
            continue
        if op.ref_index is not None:
            anchors[op.hyp_index] = op.ref_index
            continue
        # insertion: nearest op in the trace that carries a reference index, left first on ties
        for dist in range(1, len(ops)):
            left = ops[k - dist] if k - dist >= 0 else None
            right = ops[k + dist] if k + dist < len(ops) else None
            if left is not None and left.ref_index is not None:
                anchors[op.hyp_index] = left.ref_index
                break
            if right is not None and right.ref_index is not None:
                anchors[op.hyp_index] = right.ref_index
                break
    return anchors


def restore_case(ref: LabeledSequence, alignment: WordAlignment, hyp_words: Sequence[str],
                 window: int = 5) -> list[CaseLabel]:
    """Case for each hypothesis word from an exact match within +-window//2 reference words.

    Nearest offset wins, then the leftmost; no match means Lower_Case.
    """
    half = window // 2
    offsets = sorted(range(-half, half + 1), key=lambda o: (abs(o), o))
    anchors = _anchor_ref_positions(alignment, len(hyp_words))
    out = []
    for j, w in enumerate(hyp_words):
        w = w.lower()
        label = CaseLabel.LOWER_CASE
        for o in offsets:
            r = anchors[j] + o
            if 0 <= r < len(ref) and ref.tokens[r].lower_form == w:
                label = ref.tokens[r].case
                break
        out.append(label)
    return out


def restore_labels(ref: LabeledSequence, hyp_words: Sequence[str], window: int = 5,
                   stats: Counter | None = None) -> tuple[LabeledSequence, WordAlignment]:
    """Labeled hypothesis (punctuation and case carried over from ``ref``) plus its alignment."""
    hyp_words = [w.lower() for w in hyp_words]
    alignment = align(ref.words, hyp_words)
    punct = restore_punct(ref, alignment, hyp_words, stats)
    case = restore_case(ref, alignment, hyp_words, window)
    tokens = [LabeledToken(w, p, c) for w, p, c in zip(hyp_words, punct, case)]
    return LabeledSequence(tokens, id=ref.id), alignment


@dataclass(frozen=True)
class WerSplit:
    train: tuple[str, ...]
    dev: tuple[str, ...]
    test: tuple[str, ...]
    discarded: tuple[str, ...]

    def to_json(self) -> dict:
        return {k: list(getattr(self, k)) for k in ("train", "dev", "test", "discarded")}


def wer_filter_split(wers: Mapping[str, float], threshold: float = 0.25, test_n: int = 50, dev_n: int = 50) -> WerSplit:
    """Drop transcripts above ``threshold``; lowest-WER go to test, next to dev, the rest to train."""
    kept = sorted(((w, tid) for tid, w in wers.items() if w <= threshold))
    discarded = sorted(tid for tid, w in wers.items() if w > threshold)
    if len(kept) < test_n + dev_n:
        raise InsufficientData(f"only {len(kept)} transcripts within WER {threshold}, need {test_n + dev_n}")
    ids = [tid for _, tid in kept]
    return WerSplit(tuple(ids[test_n + dev_n:]), tuple(ids[test_n:test_n + dev_n]), tuple(ids[:test_n]), tuple(discarded))


@dataclass(frozen=True)
class NBestList:
    utt_id: str
    hypotheses: tuple[tuple[str, ...], ...]

    def __post_init__(self):
        if len(self.hypotheses) > 5:
            raise ValueError("n-best lists hold at most 5 hypotheses")


@dataclass
class AugmentedSequence:
    seq: LabeledSequence
    source: str
    rank: int | None = None

    @property
    def provenance(self) -> str:
        return "gt" if self.source == "gt" else f"asr_rank_{self.rank}"

    def to_json(self) -> dict:
        return {**self.seq.to_json(), "source": self.source, "rank": self.rank}


def augment_nbest(ground_truth: Sequence[LabeledSequence], nbest: Mapping[str, NBestList], n: int,
                  window: int = 5, stats: Counter | None = None) -> list[AugmentedSequence]:
    """Ground truth plus label-restored top-``n`` hypotheses, each as its own sequence."""
    if n < 0:
        raise ValueError("n must be nonnegative")
    out = [AugmentedSequence(seq, "gt") for seq in ground_truth]
    if n == 0:
        return out
    for seq in ground_truth:
        entry = nbest.get(seq.id)
        if entry is None:
            continue
        for rank, hyp in enumerate(entry.hypotheses[:n], start=1):
            if not hyp:
                continue
            restored, _ = restore_labels(seq, hyp, window, stats)
            out.append(AugmentedSequence(restored, "asr", rank))
    return out
