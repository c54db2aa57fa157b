"""Subword (wordpiece-style) and word-level vocabularies, plus label projection.

Subword vocabularies are learned by greedy pair merging; encoding is greedy
longest-match-first, with ``##`` marking non-initial pieces.
"""
from __future__ import annotations

import hashlib
from collections import Counter, defaultdict
from dataclasses import dataclass
from typing import Iterable, Sequence

from .corpus import PUNCT_MARKS, LabeledSequence
from .errors import EmptyCorpus

PAD, UNK, MASK = "[PAD]", "[UNK]", "[MASK]"
RESERVED = (PAD, UNK, MASK)
PAD_ID, UNK_ID, MASK_ID = 0, 1, 2
CONT = "##"
IGNORE = -100


class Vocabulary:
    """Ordered piece inventory. Ids 0..2 are PAD, UNK, MASK; the three marks follow."""

    def __init__(self, pieces: Sequence[str], mode: str = "subword"):
        if tuple(pieces[:3]) != RESERVED:
            raise ValueError("vocabulary must start with PAD, UNK, MASK")
        if len(set(pieces)) != len(pieces):
            raise ValueError("vocabulary pieces must be unique")
        if mode not in ("word", "subword"):
            raise ValueError(f"unknown mode {mode!r}")
        self.pieces = list(pieces)
        self.mode = mode
        self.index = {p: i for i, p in enumerate(self.pieces)}
        self.max_piece_len = max(len(p) for p in self.pieces)

    def __len__(self) -> int:
        return len(self.pieces)

    def __contains__(self, piece: str) -> bool:
        return piece in self.index

    def __eq__(self, other) -> bool:
        return isinstance(other, Vocabulary) and self.pieces == other.pieces

    def id(self, piece: str) -> int:
        return self.index.get(piece, UNK_ID)

    @property
    def mark_ids(self) -> frozenset[int]:
        return frozenset(self.index[m] for m in PUNCT_MARKS if m in self.index)

    def digest(self) -> str:
        h = hashlib.sha256()
        h.update(self.mode.encode())
        for p in self.pieces:
            h.update(p.encode("utf-8") + b"\n")
        return h.hexdigest()

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8", newline="\n") as f:
            for p in self.pieces:
                f.write(p + "\n")

    @classmethod
    def load(cls, path, mode: str | None = None) -> "Vocabulary":
        with open(path, encoding="utf-8") as f:
            pieces = [line.rstrip("\n") for line in f]
        if mode is None:
            mode = "subword" if any(p.startswith(CONT) for p in pieces) else "word"
        return cls(pieces, mode)


def _base_pieces(chars: Iterable[str]) -> list[str]:
    alphabet = sorted(set(chars))
    return list(RESERVED) + list(PUNCT_MARKS) + alphabet + [CONT + c for c in alphabet]


def train_subword(words: Iterable[str], target_vocab_size: int, min_frequency: int = 2) -> Vocabulary:
    """Learn a subword vocabulary by repeatedly merging the most frequent piece pair.

    Ties go to the lexicographically smallest pair. Training stops when the
    vocabulary reaches ``target_vocab_size`` or no pair occurs at least
    ``min_frequency`` times.
    """
    freq = Counter(w for w in words if w)
    if not freq:
        raise EmptyCorpus("cannot train a tokenizer on an empty corpus")
    base = _base_pieces(ch for w in freq for ch in w)
    if target_vocab_size < len(base):
        raise ValueError(f"target_vocab_size {target_vocab_size} is below the base inventory ({len(base)})")

    types = sorted(freq)
    splits = [[w[0]] + [CONT + c for c in w[1:]] for w in types]
    counts = [freq[w] for w in types]
    pair_freq: Counter = Counter()
    where: dict[tuple[str, str], set[int]] = defaultdict(set)
    for i, sp in enumerate(splits):
        for a, b in zip(sp, sp[1:]):
            pair_freq[a, b] += counts[i]
            where[a, b].add(i)

    pieces = list(base)
    known = set(pieces)
    while len(pieces) < target_vocab_size:
        best = None
        for pair, f in pair_freq.items():
            if f <= 0:
                continue
            if best is None or f > best[1] or (f == best[1] and pair < best[0]):
                best = (pair, f)
        if best is None or best[1] < min_frequency:
            break
        (a, b), _ = best
        merged = a + b[len(CONT):]
        if merged not in known:
            pieces.append(merged)
            known.add(merged)
        for i in sorted(where.pop((a, b), ())):
            sp = splits[i]
            for x, y in zip(sp, sp[1:]):
                pair_freq[x, y] -= counts[i]
            out = []
            j = 0
            while j < len(sp):
                if j + 1 < len(sp) and sp[j] == a and sp[j + 1] == b:
                    out.append(merged)
                    j += 2
                else:
                    out.append(sp[j])
                    j += 1
            splits[i] = out
            for x, y in zip(out, out[1:]):
                pair_freq[x, y] += counts[i]
                where[x, y].add(i)
        del pair_freq[a, b]
    return Vocabulary(pieces, "subword")


def word_vocab(words: Iterable[str], max_size: int) -> Vocabulary:
    """Top ``max_size`` words by frequency (ties lexicographic) plus reserved ids and marks."""
    freq = Counter(w for w in words if w and w not in PUNCT_MARKS)
    ranked = sorted(freq.items(), key=lambda kv: (-kv[1], kv[0]))[:max_size]
    return Vocabulary(list(RESERVED) + list(PUNCT_MARKS) + [w for w, _ in ranked], "word")


def encode_word(word: str, vocab: Vocabulary) -> list[str]:
    """Greedy longest-match-first segmentation; UNK for the whole word if it gets stuck."""
    if vocab.mode == "word":
        return [word] if word in vocab else [UNK]
    pieces = []
    start = 0
    while start < len(word):
        end = min(len(word), start + vocab.max_piece_len)
        found = None
        while end > start:
            cand = word[start:end] if start == 0 else CONT + word[start:end]
            if cand in vocab:
                found = cand
                break
            end -= 1
        if found is None:
            return [UNK]
        pieces.append(found)
        start = end
    return pieces


def detokenize(pieces: Sequence[str]) -> str:
    return "".join(p[len(CONT):] if p.startswith(CONT) else p for p in pieces)


@dataclass
class SubwordEncoding:
    piece_ids: list[int]
    parent_word: list[int]
    is_word_final: list[bool]
    punct_labels: list[int]
    case_labels: list[int]

    def __len__(self) -> int:
        return len(self.piece_ids)

    @property
    def num_words(self) -> int:
        return sum(self.is_word_final)


def encode_words(words: Sequence[str], vocab: Vocabulary, cache: dict | None = None) -> tuple[list[int], list[int], list[bool]]:
    ids: list[int] = []
    parent: list[int] = []
    final: list[bool] = []
    for wi, w in enumerate(words):
        if cache is not None and w in cache:
            pieces = cache[w]
        else:
            pieces = [vocab.id(p) for p in encode_word(w, vocab)]
            if cache is not None:
                cache[w] = pieces
        ids.extend(pieces)
        parent.extend([wi] * len(pieces))
        final.extend([False] * (len(pieces) - 1) + [True])
    return ids, parent, final


def encode_sequence(seq: LabeledSequence, vocab: Vocabulary, mode: str | None = None, cache: dict | None = None) -> SubwordEncoding:
    """Encode a labeled sequence; only each word's final piece carries its labels."""
    if mode is not None and mode != vocab.mode:
        raise ValueError(f"vocabulary is {vocab.mode}-level, asked for {mode}")
    ids, parent, final = encode_words(seq.words, vocab, cache)
    punct = [IGNORE] * len(ids)
    case = [IGNORE] * len(ids)
    for i, (w, is_final) in enumerate(zip(parent, final)):
        if is_final:
            punct[i] = int(seq.tokens[w].punct)
            case[i] = int(seq.tokens[w].case)
    return SubwordEncoding(ids, parent, final, punct, case)


def encode_with_marks(seq: LabeledSequence, vocab: Vocabulary, cache: dict | None = None) -> list[int]:
    """Piece ids for MLM data: each word followed by its mark as an ordinary token."""
    ids: list[int] = []
    for tok in seq:
        wid, _, _ = encode_words([tok.lower_form], vocab, cache)
        ids.extend(wid)
        if tok.punct.mark:
            ids.append(vocab.id(tok.punct.mark))
    return ids
