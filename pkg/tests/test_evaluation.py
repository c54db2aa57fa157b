import json
import random

import pytest

from punctcase.corpus import CaseLabel, LabeledSequence, PunctLabel, derive_labels
from punctcase.errors import AlignmentRequired, EmptyEvaluation
from punctcase.evaluation import ClassStats, read_report_tsv, report, score


P, C = PunctLabel, CaseLabel


def seq(words, punct, case=None):
    case = case or [C.LOWER_CASE] * len(words)
    return LabeledSequence.from_labels(words, punct, case)


def test_hand_counted_example():
    gold = [seq(["a", "b"], [P.PERIOD, P.NO_PUNCT])]
    pred = [seq(["a", "b"], [P.NO_PUNCT, P.NO_PUNCT])]
    punct, case = score(pred, gold)
    assert punct["Full stop"].f1 == 0
    nop = punct["No Punc"]
    assert (nop.precision, nop.recall) == (0.5, 1.0)
    assert nop.f1 == pytest.approx(2 / 3)
    assert punct.confusion[1][0] == 1
    assert case["LC"].f1 == 1.0


def test_column_order():
    punct, case = score([seq(["a"], [P.NO_PUNCT])], [seq(["a"], [P.NO_PUNCT])])
    assert [c.name for c in punct.classes] == ["No Punc", "Full stop", "Comma", "QM"]
    assert [c.name for c in case.classes] == ["LC", "UC", "CA", "MC"]


def test_perfect_prediction(small_corpus):
    small_corpus = small_corpus[1]
    punct, case = score(small_corpus, small_corpus)
    for rep in (punct, case):
        for c in rep.classes:
            if c.support:
                assert c.f1 == 1.0
        assert rep.macro_f1 == 1.0


def test_absent_class_is_flagged():
    punct, _ = score([seq(["a"], [P.NO_PUNCT])], [seq(["a"], [P.NO_PUNCT])])
    qm = punct["QM"]
    assert (qm.support, qm.f1, qm.defined) == (0, 0.0, False)
    assert punct.macro_f1 == 1.0


def test_f1_zero_when_nothing_right():
    assert ClassStats("x", 0, 3, 2).f1 == 0.0


def test_errors():
    with pytest.raises(EmptyEvaluation):
        score([], [])
    with pytest.raises(AlignmentRequired):
        score([seq(["a"], [P.NO_PUNCT])], [seq(["a", "b"], [P.NO_PUNCT] * 2)])
    with pytest.raises(AlignmentRequired):
        score([], [seq(["a"], [P.NO_PUNCT])])
    with pytest.raises(EmptyEvaluation):
        report([], "x")


def noisy(corpus, seed):
    rng = random.Random(seed)
    out = []
    for s in corpus:
        punct = [p if rng.random() < 0.8 else rng.choice(list(P)) for p in s.punct]
        case = [c if rng.random() < 0.8 else rng.choice(list(C)) for c in s.case]
        out.append(LabeledSequence.from_labels(s.words, punct, case))
    return out


def test_micro_count_identities_and_bounds(small_corpus):
    small_corpus = small_corpus[1]
    pred = noisy(small_corpus, 1)
    n = sum(len(s) for s in small_corpus)
    for rep in score(pred, small_corpus):
        assert sum(c.tp + c.fn for c in rep.classes) == n
        assert sum(c.tp + c.fp for c in rep.classes) == n
        assert sum(map(sum, rep.confusion)) == n
        assert all(0 <= c.f1 <= 1 for c in rep.classes)


def test_permutation_invariant(small_corpus):
    small_corpus = small_corpus[1]
    pred = noisy(small_corpus, 2)
    order = list(range(len(pred)))
    random.Random(0).shuffle(order)
    a = [r.to_json() for r in score(pred, small_corpus)]
    b = [r.to_json() for r in score([pred[i] for i in order], [small_corpus[i] for i in order])]
    assert a == b


def test_report_files_agree(tmp_path, small_corpus):
    small_corpus = small_corpus[1]
    reps = score(noisy(small_corpus, 3), small_corpus)
    paths = report(reps, tmp_path / "scores")
    assert paths["png"].stat().st_size > 0
    rows = read_report_tsv(paths["tsv"])
    assert list(rows[0]) == ["task", "class", "support", "precision", "recall", "f1"]
    data = json.loads(paths["json"].read_text())
    assert len(rows) == 8
    for row in rows:
        entry = next(c for c in data[row["task"]]["classes"] if c["class"] == row["class"])
        assert int(row["support"]) == entry["support"]
        for key in ("precision", "recall", "f1"):
            assert row[key] == f"{entry[key]:.2f}"
    assert data["punctuation"]["macro_f1"] == reps[0].macro_f1


def test_report_without_figure(tmp_path):
    reps = score([derive_labels("She left.")], [derive_labels("She left.")])
    assert "png" not in report(reps, tmp_path / "r", figure=False)
    assert not (tmp_path / "r.png").exists()
