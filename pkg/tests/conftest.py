import random

import pytest
import torch

from punctcase import synthetic
from punctcase.corpus import build_mixedcase_lexicon, derive_labels
from punctcase.model import EncoderConfig, PunctCaseModel
from punctcase.tokenizer import train_subword


def make_labeled_corpus(n, seed=0, min_sentences=1, max_sentences=3):
    """Synthetic clinical-style sentences and their derived labels."""
    texts = synthetic.corpus(n, seed=seed, min_sentences=min_sentences, max_sentences=max_sentences)
    return texts, [derive_labels(t, id=f"doc{i:04d}") for i, t in enumerate(texts)]


@pytest.fixture(scope="session")
def small_corpus():
    return make_labeled_corpus(60, seed=11)


@pytest.fixture(scope="session")
def small_vocab(small_corpus):
    _, seqs = small_corpus
    return train_subword([w for s in seqs for w in s.words], 200, 2)


@pytest.fixture(scope="session")
def lexicon(small_corpus):
    return build_mixedcase_lexicon(small_corpus[0])


def random_model(vocab_size, layers=2, d=16, heads=2, ff=32, std=0.3, seed=0, dtype=torch.float64):
    """A model with all weights (heads included) drawn at a generic, non-degenerate point."""
    torch.manual_seed(seed)
    m = PunctCaseModel(EncoderConfig(num_layers=layers, hidden_dim=d, num_heads=heads, ff_dim=ff,
                                     vocab_size=vocab_size, dropout_rate=0.0)).to(dtype)
    with torch.no_grad():
        for name, p in m.named_parameters():
            if "norm" in name and name.endswith("weight"):
                p.uniform_(0.5, 1.5)
            else:
                p.normal_(0, std)
    return m.eval()


@pytest.fixture
def rng():
    return random.Random(1234)


def pytest_terminal_summary(terminalreporter):
    acceptance = __import__("sys").modules.get("test_acceptance")
    if acceptance is None or not acceptance.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(acceptance.RESULTS):
        terminalreporter.write_line(acceptance.RESULTS[n])
