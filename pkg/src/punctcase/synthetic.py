"""Small synthetic clinical-style corpus with known punctuation and casing.

Labels follow simple, learnable rules: sentence-initial capitals, a fixed set
of names, acronyms and mixed-case brand forms, commas after discourse
openers and inside lists, question marks on yes/no questions.
"""
from __future__ import annotations

import random

SUBJECTS = ["the patient", "she", "he", "the nurse", "Dr Smith", "John", "Mary", "the family", "I"]
VERBS = ["was given", "reports", "denies", "started", "needs", "was placed on", "received", "tolerated", "refused"]
OBJECTS = [
    "BiPAP", "an MRI", "a CT scan", "an EKG", "oxygen", "Lasix", "Tylenol", "aspirin", "insulin",
    "fluids", "the medication", "physical therapy", "an iPad", "McDonald's diet", "IV fluids",
]
CONDITIONS = ["COPD", "hypertension", "hypotension", "chest pain", "shortness of breath", "diabetes",
              "a fever", "nausea", "pneumonia", "HIV"]
TIMES = ["today", "yesterday", "on Monday", "on Friday", "this morning", "last night", "in Boston", "at McGill"]
OPENERS = ["however", "yes", "no", "also", "overall", "otherwise", "unfortunately"]
QUESTION_HEADS = ["is", "does", "did", "was", "can"]
ASR_FILLER = ["uh", "um", "the", "and", "a", "so", "of"]


def _cap_first(s: str) -> str:
    return s[0].upper() + s[1:]


def _list_of(rng: random.Random, pool) -> str:
    items = rng.sample(pool, 3)
    return f"{items[0]}, {items[1]} and {items[2]}"


def sentence(rng: random.Random) -> str:
    kind = rng.random()
    if kind < 0.2:
        head = rng.choice(QUESTION_HEADS)
        subj = rng.choice(SUBJECTS)
        if head in ("is", "was"):
            body = f"{subj} on {rng.choice(OBJECTS)}"
        elif head == "can":
            body = f"{subj} take {rng.choice(OBJECTS)}"
        else:
            body = f"{subj} have {rng.choice(CONDITIONS)}"
        return _cap_first(f"{head} {body}?")
    parts = []
    if rng.random() < 0.3:
        parts.append(rng.choice(OPENERS) + ",")
    parts.append(rng.choice(SUBJECTS))
    if rng.random() < 0.5:
        parts.append(rng.choice(VERBS))
        parts.append(_list_of(rng, OBJECTS) if rng.random() < 0.25 else rng.choice(OBJECTS))
    else:
        parts.append("has")
        parts.append(_list_of(rng, CONDITIONS) if rng.random() < 0.25 else rng.choice(CONDITIONS))
    if rng.random() < 0.4:
        parts.append(rng.choice(TIMES))
    return _cap_first(" ".join(parts) + ".")


def document(rng: random.Random, min_sentences: int = 1, max_sentences: int = 3) -> str:
    return " ".join(sentence(rng) for _ in range(rng.randint(min_sentences, max_sentences)))


def corpus(n: int, seed: int = 0, min_sentences: int = 1, max_sentences: int = 3) -> list[str]:
    rng = random.Random(seed)
    return [document(rng, min_sentences, max_sentences) for _ in range(n)]


def vocabulary_words() -> list[str]:
    words = set()
    for pool in (SUBJECTS, VERBS, OBJECTS, CONDITIONS, TIMES, OPENERS, QUESTION_HEADS, ASR_FILLER):
        for phrase in pool:
            words.update(w.lower().strip(",.?") for w in phrase.split())
    return sorted(words)


def corrupt(words, rng: random.Random, rate: float = 0.1, lexicon=None) -> list[str]:
    """ASR-like errors: each word is substituted, deleted or followed by an insertion with prob ``rate``."""
    lexicon = lexicon or vocabulary_words()
    out = []
    for w in words:
        u = rng.random()
        if u < rate / 3:
            out.append(rng.choice(lexicon))
        elif u < 2 * rate / 3:
            continue
        elif u < rate:
            out.append(w)
            out.append(rng.choice(ASR_FILLER))
        else:
            out.append(w)
    return out or [rng.choice(lexicon)]


def nbest(words, rng: random.Random, n: int = 5, rate: float = 0.1) -> list[list[str]]:
    """n hypotheses of rising error rate, best first."""
    return [corrupt(words, rng, rate * (1 + 0.5 * k)) for k in range(n)]
