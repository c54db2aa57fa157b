"""Label derivation, surface realization and corpus splitting.

Raw punctuated text is turned into a sequence of lowercase words, each with
one punctuation label (the mark that follows it) and one casing label.
``realize`` is the inverse direction.
"""
from __future__ import annotations

import json
import logging
import random
import re
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from enum import IntEnum
from pathlib import Path
from typing import Iterable, Iterator, Sequence

from .errors import EmptyInput, InsufficientData

logger = logging.getLogger(__name__)

DEFAULT_TAG_PATTERN = r"\[[A-Z_]+\]"


class PunctLabel(IntEnum):
    # index 0 wins argmax ties, so the majority class sits there
    NO_PUNCT = 0
    COMMA = 1
    PERIOD = 2
    QUESTION_MARK = 3

    @property
    def mark(self) -> str:
        return _MARK_OF[self]

    @property
    def display(self) -> str:
        return {0: "No_Punct", 1: "Comma", 2: "Period", 3: "Question_Mark"}[self.value]

    @classmethod
    def parse(cls, name: str) -> "PunctLabel":
        return _PUNCT_BY_NAME[name]


class CaseLabel(IntEnum):
    LOWER_CASE = 0
    UPPER_CASE = 1
    ALL_CAPS = 2
    MIXED_CASE = 3

    @property
    def display(self) -> str:
        return {0: "Lower_Case", 1: "Upper_Case", 2: "All_Caps", 3: "Mixed_Case"}[self.value]

    @classmethod
    def parse(cls, name: str) -> "CaseLabel":
        return _CASE_BY_NAME[name]


_MARK_OF = {
    PunctLabel.NO_PUNCT: "",
    PunctLabel.COMMA: ",",
    PunctLabel.PERIOD: ".",
    PunctLabel.QUESTION_MARK: "?",
}
LABEL_OF_MARK = {",": PunctLabel.COMMA, ".": PunctLabel.PERIOD, "?": PunctLabel.QUESTION_MARK}
PUNCT_MARKS = tuple(LABEL_OF_MARK)

_PUNCT_BY_NAME = {p.display: p for p in PunctLabel}
_CASE_BY_NAME = {c.display: c for c in CaseLabel}

# collision precedence, higher wins
_PRECEDENCE = {
    PunctLabel.NO_PUNCT: 0,
    PunctLabel.COMMA: 1,
    PunctLabel.PERIOD: 2,
    PunctLabel.QUESTION_MARK: 3,
}


def merge_punct(a: PunctLabel, b: PunctLabel) -> PunctLabel:
    """Combine two marks landing on the same word: ? beats . beats ,"""
    return a if _PRECEDENCE[a] >= _PRECEDENCE[b] else b


@dataclass(frozen=True)
class LabeledToken:
    lower_form: str
    punct: PunctLabel = PunctLabel.NO_PUNCT
    case: CaseLabel = CaseLabel.LOWER_CASE
    original_form: str | None = None

    def __post_init__(self):
        if self.original_form is not None and self.original_form.lower() != self.lower_form:
            raise ValueError(f"{self.original_form!r} does not lowercase to {self.lower_form!r}")
        if any(m in self.lower_form for m in PUNCT_MARKS):
            raise ValueError(f"label-bearing mark inside word {self.lower_form!r}")


@dataclass
class LabeledSequence:
    tokens: list[LabeledToken]
    id: str | None = field(default=None, compare=False)
    # leading marks that had no word to attach to
    dropped_marks: int = field(default=0, compare=False)

    def __post_init__(self):
        if not self.tokens:
            raise EmptyInput("a labeled sequence needs at least one token")

    def __len__(self) -> int:
        return len(self.tokens)

    def __iter__(self) -> Iterator[LabeledToken]:
        return iter(self.tokens)

    @property
    def words(self) -> list[str]:
        return [t.lower_form for t in self.tokens]

    @property
    def punct(self) -> list[PunctLabel]:
        return [t.punct for t in self.tokens]

    @property
    def case(self) -> list[CaseLabel]:
        return [t.case for t in self.tokens]

    @classmethod
    def from_labels(cls, words, punct, case, original=None, id=None) -> "LabeledSequence":
        if not (len(words) == len(punct) == len(case)):
            raise ValueError("words, punct and case must have equal length")
        original = original if original is not None else [None] * len(words)
        tokens = [
            LabeledToken(w, PunctLabel(p), CaseLabel(c), o)
            for w, p, c, o in zip(words, punct, case, original)
        ]
        return cls(tokens, id=id)

    def to_json(self) -> dict:
        d = {
            "words": self.words,
            "punct": [p.display for p in self.punct],
            "case": [c.display for c in self.case],
            "original": [t.original_form for t in self.tokens],
        }
        if self.id is not None:
            d = {"id": self.id, **d}
        return d

    @classmethod
    def from_json(cls, d: dict) -> "LabeledSequence":
        return cls.from_labels(
            d["words"],
            [PunctLabel.parse(p) for p in d["punct"]],
            [CaseLabel.parse(c) for c in d["case"]],
            d.get("original"),
            id=d.get("id"),
        )


# words keep internal hyphens/apostrophes; everything else splits
_WORD = r"[^\W_]+(?:['\-][^\W_]+)*"


def _scanner(tag_pattern: str | None) -> re.Pattern:
    parts = []
    if tag_pattern:
        parts.append(f"(?P<tag>{tag_pattern})")
    parts.append(f"(?P<word>{_WORD})")
    parts.append(r"(?P<mark>[.,?])")
    return re.compile("|".join(parts))


def case_of(word: str) -> CaseLabel:
    letters = [ch for ch in word if ch.isalpha()]
    if not letters or all(ch.islower() for ch in letters):
        return CaseLabel.LOWER_CASE
    if all(ch.isupper() for ch in letters):
        return CaseLabel.ALL_CAPS if len(letters) >= 2 else CaseLabel.UPPER_CASE
    if letters[0].isupper() and all(ch.islower() for ch in letters[1:]):
        return CaseLabel.UPPER_CASE
    return CaseLabel.MIXED_CASE


def derive_labels(text: str, tag_pattern: str | None = DEFAULT_TAG_PATTERN, id: str | None = None) -> LabeledSequence:
    """Split punctuated, cased text into labeled lowercase words.

    A mark attaches to the word before it; runs of marks collapse by
    precedence. Symbols other than ``. , ?`` act as separators. Tags matching
    ``tag_pattern`` are kept whole as single Lower_Case tokens.
    """
    text = " ".join(text.split())
    if not text:
        raise EmptyInput("text is empty after whitespace normalization")

    words: list[str] = []
    punct: list[PunctLabel] = []
    dropped = 0
    for m in _scanner(tag_pattern).finditer(text):
        kind = m.lastgroup
        if kind == "mark":
            if not words:
                dropped += 1
                continue
            punct[-1] = merge_punct(punct[-1], LABEL_OF_MARK[m.group()])
        else:
            words.append(m.group())
            punct.append(PunctLabel.NO_PUNCT)
    if not words:
        raise EmptyInput(f"no words in {text!r}")
    if dropped:
        logger.warning("dropped %d leading mark(s) with no preceding word", dropped)

    tag_re = re.compile(tag_pattern) if tag_pattern else None
    tokens = []
    for w, p in zip(words, punct):
        if tag_re is not None and tag_re.fullmatch(w):
            case = CaseLabel.LOWER_CASE
        else:
            case = case_of(w)
        tokens.append(LabeledToken(w.lower(), p, case, w))
    return LabeledSequence(tokens, id=id, dropped_marks=dropped)


@dataclass
class MixedCaseLexicon:
    surface: dict[str, str] = field(default_factory=dict)
    counts: dict[str, int] = field(default_factory=dict)

    def __contains__(self, key: str) -> bool:
        return key in self.surface

    def __len__(self) -> int:
        return len(self.surface)

    def get(self, key: str, default=None):
        return self.surface.get(key, default)

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as f:
            for key in sorted(self.surface):
                f.write(f"{key}\t{self.surface[key]}\t{self.counts.get(key, 0)}\n")

    @classmethod
    def load(cls, path) -> "MixedCaseLexicon":
        lex = cls()
        with open(path, encoding="utf-8") as f:
            for line in f:
                line = line.rstrip("\n")
                if not line:
                    continue
                key, surface, count = line.split("\t")
                if surface.lower() != key:
                    raise ValueError(f"lexicon entry {surface!r} does not match key {key!r}")
                lex.surface[key] = surface
                lex.counts[key] = int(count)
        return lex


def build_mixedcase_lexicon(texts: Iterable[str], tag_pattern: str | None = DEFAULT_TAG_PATTERN) -> MixedCaseLexicon:
    """Most frequent Mixed_Case spelling of every word seen that way."""
    seen: dict[str, Counter] = defaultdict(Counter)
    for text in texts:
        if not text.strip():
            continue
        for tok in derive_labels(text, tag_pattern):
            if tok.case is CaseLabel.MIXED_CASE:
                seen[tok.lower_form][tok.original_form] += 1
    lex = MixedCaseLexicon()
    for key, forms in seen.items():
        surface, count = min(forms.items(), key=lambda kv: (-kv[1], kv[0]))
        lex.surface[key] = surface
        lex.counts[key] = count
    return lex


def _apply_case(tok: LabeledToken, lexicon: MixedCaseLexicon | None) -> str:
    w = tok.lower_form
    if tok.case is CaseLabel.LOWER_CASE:
        # bracketed forms only come from PHI tags, which stay verbatim
        if w.startswith("[") and w.endswith("]"):
            return tok.original_form or w.upper()
        return w
    if tok.case is CaseLabel.ALL_CAPS:
        return w.upper()
    if tok.case is CaseLabel.UPPER_CASE:
        for i, ch in enumerate(w):
            if ch.isalpha():
                return w[:i] + ch.upper() + w[i + 1:]
        return w
    if lexicon is not None and w in lexicon:
        return lexicon.get(w)
    if tok.original_form is not None:
        return tok.original_form
    return w


def realize(seq: LabeledSequence | Sequence[LabeledToken], lexicon: MixedCaseLexicon | None = None) -> str:
    """Render labeled tokens back to cased, punctuated text."""
    return " ".join(_apply_case(t, lexicon) + t.punct.mark for t in seq)


@dataclass(frozen=True)
class CorpusSplit:
    train: tuple[str, ...]
    dev: tuple[str, ...]
    test: tuple[str, ...]
    seed: int

    def to_json(self) -> dict:
        return {"seed": self.seed, "train": list(self.train), "dev": list(self.dev), "test": list(self.test)}


def split_corpus(doc_ids: Iterable[str], ratios=(0.90, 0.05, 0.05), seed: int = 0) -> CorpusSplit:
    ids = sorted(set(doc_ids))
    if abs(sum(ratios) - 1.0) > 1e-9:
        raise ValueError(f"ratios must sum to 1, got {ratios}")
    if len(ids) < 3:
        raise InsufficientData(f"need at least 3 documents, got {len(ids)}")
    n = len(ids)
    _, r_dev, r_test = ratios
    n_dev = max(1, round(n * r_dev)) if r_dev > 0 else 0
    n_test = max(1, round(n * r_test)) if r_test > 0 else 0
    if n - n_dev - n_test < 1:
        raise InsufficientData(f"{n} documents cannot fill ratios {ratios}")
    random.Random(seed).shuffle(ids)
    test = ids[:n_test]
    dev = ids[n_test:n_test + n_dev]
    train = ids[n_test + n_dev:]
    return CorpusSplit(tuple(train), tuple(dev), tuple(test), seed)


# --- file formats ---

def read_documents(path) -> list[tuple[str, str]]:
    """(id, text) pairs from a directory of .txt files or a JSON-lines file."""
    path = Path(path)
    if path.is_dir():
        return [(p.stem, p.read_text(encoding="utf-8")) for p in sorted(path.glob("*.txt"))]
    if path.suffix == ".jsonl":
        docs = []
        with open(path, encoding="utf-8") as f:
            for i, line in enumerate(f):
                if line.strip():
                    d = json.loads(line)
                    docs.append((str(d.get("id", i)), d["text"]))
        return docs
    return [(path.stem, path.read_text(encoding="utf-8"))]


def write_labeled(path, seqs: Iterable[LabeledSequence], extra: Iterable[dict] | None = None) -> None:
    extra = iter(extra) if extra is not None else None
    with open(path, "w", encoding="utf-8") as f:
        for seq in seqs:
            d = seq.to_json()
            if extra is not None:
                d.update(next(extra))
            f.write(json.dumps(d, ensure_ascii=False) + "\n")


def read_labeled(path) -> list[LabeledSequence]:
    with open(path, encoding="utf-8") as f:
        return [LabeledSequence.from_json(json.loads(line)) for line in f if line.strip()]


def normalize_words(text: str) -> list[str]:
    """Lowercased words of unpunctuated input, symbols and marks removed."""
    return [m.group().lower() for m in re.finditer(_WORD, text)]


def lexicon_from_sequences(seqs: Iterable[LabeledSequence]) -> MixedCaseLexicon:
    """Mixed-case lexicon from already-labeled data (uses each token's original form)."""
    texts = (" ".join(t.original_form for t in seq if t.original_form) for seq in seqs)
    return build_mixedcase_lexicon(t for t in texts if t.strip())
