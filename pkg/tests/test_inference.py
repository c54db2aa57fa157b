import logging
import random

import pytest
import torch

from punctcase.corpus import derive_labels
from punctcase.errors import EmptyInput, TilingError
from punctcase.inference import Chunk, Predictor, check_tiling, chunk, merge, predict
from punctcase.model import EncoderConfig, PunctCaseModel
from punctcase.tokenizer import train_subword
from punctcase.training import TrainConfig, encode_for_training, train_joint

from conftest import random_model


def spans(chunks):
    return [((c.start, c.end), (c.core_start, c.core_end)) for c in chunks]


def test_chunk_450_words():
    assert spans(chunk(450)) == [
        ((0, 250), (0, 200)),
        ((150, 450), (200, 400)),
        ((350, 450), (400, 450)),
    ]


def test_short_input_is_one_chunk():
    assert spans(chunk(150)) == [((0, 150), (0, 150))]
    assert spans(chunk(200)) == [((0, 200), (0, 200))]


def test_zero_overlap_gives_bare_cores():
    assert spans(chunk(450, overlap=0)) == [((0, 200), (0, 200)), ((200, 400), (200, 400)), ((400, 450), (400, 450))]


def test_chunk_rejects_bad_arguments():
    with pytest.raises(EmptyInput):
        chunk(0)
    with pytest.raises(ValueError):
        chunk(10, core=0)
    with pytest.raises(ValueError):
        Chunk(5, 4, 5, 6)


def test_merge_takes_label_from_owning_core():
    chunks = chunk(450)
    labels = [[(k, i) for i in range(c.start, c.end)] for k, c in enumerate(chunks)]
    merged = merge(chunks, labels, 450)
    assert merged[210] == (1, 210)
    assert merged[199] == (0, 199)
    assert merged == [(i // 200, i) for i in range(450)]


def test_merge_single_chunk_is_identity():
    chunks = chunk(37)
    assert merge(chunks, [list(range(37))], 37) == list(range(37))


def test_tiling_errors():
    with pytest.raises(TilingError):
        check_tiling([Chunk(0, 10, 0, 10), Chunk(5, 20, 11, 20)], 20)
    with pytest.raises(TilingError):
        check_tiling(chunk(30), 31)
    with pytest.raises(ValueError):
        merge(chunk(30), [[0] * 29], 30)


@pytest.fixture(scope="module")
def predictor():
    vocab = train_subword([f"w{i}" for i in range(30)] * 2, 60, 2)
    return Predictor(random_model(len(vocab), std=0.3, dtype=torch.float32), vocab)


def test_empty_input_raises(predictor):
    with pytest.raises(EmptyInput):
        predictor.predict("")
    with pytest.raises(EmptyInput):
        predictor.predict("  ,. ?")
    with pytest.raises(EmptyInput):
        predictor.label_words([])


def test_chunked_equals_direct_for_short_input(predictor):
    rng = random.Random(0)
    for n in (1, 5, 120, 200):
        words = [f"w{rng.randrange(30)}" for _ in range(n)]
        assert predictor.label_words(words, chunking=True) == predictor.label_words(words, chunking=False)


def test_prediction_is_deterministic(predictor):
    words = [f"w{i % 30}" for i in range(450)]
    a = predictor.predict(words)
    b = predictor.predict(words)
    assert a[0] == b[0]
    assert a[1] == b[1]
    assert len(a[1]) == 450


def test_overflowing_core_is_resplit(predictor, caplog):
    # each word costs seven pieces, so a 200-word core overflows 320 pieces
    words = ["w1w2w3w4"] * 400
    with caplog.at_level(logging.WARNING, logger="punctcase.inference"):
        punct, case = predictor.label_words(words)
    assert len(punct) == len(case) == 400
    assert any("re-splitting" in r.message for r in caplog.records)


def test_mismatched_vocab_rejected(predictor):
    with pytest.raises(ValueError):
        Predictor(random_model(len(predictor.vocab) + 1), predictor.vocab)


def test_overfit_she_took():
    seqs = [derive_labels("She took.")] * 8
    vocab = train_subword(["she", "took"] * 4, 40, 2)
    torch.manual_seed(0)
    model = PunctCaseModel(EncoderConfig(num_layers=1, hidden_dim=16, num_heads=2, ff_dim=32,
                                         vocab_size=len(vocab), dropout_rate=0.0))
    train_joint(model, encode_for_training(seqs, vocab, 320), TrainConfig(epochs=60, batch_size=8, learning_rate=1e-2))
    text, seq = predict("she took", model, vocab)
    assert text == "She took."
    assert [t.lower_form for t in seq] == ["she", "took"]
