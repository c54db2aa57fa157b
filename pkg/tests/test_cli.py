import json
import random
import subprocess
import sys

import pytest
import yaml

from punctcase import synthetic
from punctcase.cli import main
from punctcase.config import PipelineConfig, load_config
from punctcase.corpus import read_labeled
from punctcase.errors import ConfigError

SMALL = {
    "seed": 3,
    "encoder": {"num_layers": 1, "hidden_dim": 16, "num_heads": 2, "ff_dim": 32},
    "train": {"epochs": 2, "batch_size": 8},
    "tokenizer": {"vocab_size": 120},
    "split": {"ratios": [0.8, 0.1, 0.1]},
    "wer": {"test_n": 3, "dev_n": 3},
}


@pytest.fixture(scope="module")
def workdir(tmp_path_factory):
    d = tmp_path_factory.mktemp("pipeline")
    raw = d / "raw"
    raw.mkdir()
    for i, text in enumerate(synthetic.corpus(40, seed=2)):
        (raw / f"doc{i:03d}.txt").write_text(text, encoding="utf-8")
    (d / "cfg.yaml").write_text(yaml.safe_dump(SMALL))
    return d


def run(workdir, *args):
    return main([*args, "--config", str(workdir / "cfg.yaml")])


@pytest.fixture(scope="module")
def pipeline(workdir):
    w = workdir
    assert run(w, "prepare", "--in", str(w / "raw"), "--out", str(w / "corpus.jsonl"), "--split") == 0
    assert run(w, "lexicon", "--in", str(w / "corpus.jsonl"), "--out", str(w / "lex.tsv")) == 0
    assert run(w, "tokenizer-train", "--in", str(w / "corpus.train.jsonl"), "--out", str(w / "vocab.txt")) == 0
    assert run(w, "pretrain", "--in", str(w / "corpus.train.jsonl"), "--vocab", str(w / "vocab.txt"),
               "--out", str(w / "mlm.ckpt"), "--policy", "punct_selective") == 0
    assert run(w, "train", "--in", str(w / "corpus.train.jsonl"), "--vocab", str(w / "vocab.txt"),
               "--init", str(w / "mlm.ckpt"), "--dev", str(w / "corpus.dev.jsonl"), "--out", str(w / "model.ckpt")) == 0
    return w


def test_prepare_writes_splits_and_manifest(pipeline):
    w = pipeline
    parts = [read_labeled(w / f"corpus.{p}.jsonl") for p in ("train", "dev", "test")]
    assert [len(p) for p in parts] == [32, 4, 4]
    manifest = json.loads((w / "corpus.jsonl.manifest.json").read_text())
    assert manifest["command"] == "prepare"
    assert manifest["seed"] == 3
    assert str(w / "raw") in manifest["inputs"]
    assert str(w / "corpus.test.jsonl") in manifest["outputs"]


def test_training_outputs(pipeline):
    w = pipeline
    log = [json.loads(l) for l in (w / "model.log.jsonl").read_text().splitlines()]
    assert log and {"step", "loss", "loss_p", "loss_c"} <= set(log[0])
    assert (w / "model.loss.png").stat().st_size > 0
    assert (w / "mlm.loss.png").exists()


def test_predict_and_evaluate(pipeline):
    w = pipeline
    (w / "in.txt").write_text("is bipap on yes she has copd\n")
    assert run(w, "predict", "--in", str(w / "in.txt"), "--ckpt", str(w / "model.ckpt"), "--vocab", str(w / "vocab.txt"),
               "--lexicon", str(w / "lex.tsv"), "--out", str(w / "out.txt"), "--labels-tsv", str(w / "out.tsv")) == 0
    rows = (w / "out.tsv").read_text().splitlines()
    assert [r.split("\t")[0] for r in rows] == "is bipap on yes she has copd".split()
    assert (w / "out.txt").read_text().strip()
    assert run(w, "evaluate", "--gold", str(w / "corpus.test.jsonl"), "--ckpt", str(w / "model.ckpt"),
               "--vocab", str(w / "vocab.txt"), "--out", str(w / "report")) == 0
    for suffix in (".tsv", ".json", ".png"):
        assert (w / f"report{suffix}").exists()
    assert run(w, "evaluate", "--gold", str(w / "corpus.test.jsonl"), "--pred", str(w / "corpus.test.jsonl"),
               "--out", str(w / "self")) == 0
    data = json.loads((w / "self.json").read_text())
    assert data["punctuation"]["macro_f1"] == 1.0


def test_asr_commands(pipeline):
    w = pipeline
    rng = random.Random(0)
    seqs = read_labeled(w / "corpus.jsonl")
    with open(w / "hyps.jsonl", "w") as f:
        for s in seqs:
            for rank, hyp in enumerate(synthetic.nbest(s.words, rng, 3, 0.05), start=1):
                f.write(json.dumps({"utt_id": s.id, "rank": rank, "words": hyp}) + "\n")
    assert run(w, "align-restore", "--ref", str(w / "corpus.jsonl"), "--hyp", str(w / "hyps.jsonl"),
               "--rank", "1", "--out", str(w / "restored.jsonl")) == 0
    assert len((w / "restored.jsonl").read_text().splitlines()) == len(seqs)
    assert run(w, "wer-split", "--ref", str(w / "corpus.jsonl"), "--hyp", str(w / "hyps.jsonl"),
               "--wer-threshold", "1.0", "--out", str(w / "split.json")) == 0
    split = json.loads((w / "split.json").read_text())
    assert (len(split["test"]), len(split["dev"]), len(split["train"])) == (3, 3, len(seqs) - 6)
    assert run(w, "augment", "--ref", str(w / "corpus.train.jsonl"), "--hyp", str(w / "hyps.jsonl"),
               "--nbest", "3", "--out", str(w / "aug.jsonl")) == 0
    recs = [json.loads(l) for l in (w / "aug.jsonl").read_text().splitlines()]
    assert sum(r["source"] == "gt" for r in recs) == 32
    assert sum(r["source"] == "asr" for r in recs) == 96


def test_failure_cleans_outputs(pipeline):
    w = pipeline
    # a vocabulary the checkpoint was not trained with
    (w / "other_vocab.txt").write_text("[PAD]\n[UNK]\n[MASK]\n,\n.\n?\nfoo\n")
    rc = run(w, "predict", "--in", str(w / "in.txt"), "--ckpt", str(w / "model.ckpt"),
             "--vocab", str(w / "other_vocab.txt"), "--out", str(w / "bad.txt"))
    assert rc == 1
    assert not (w / "bad.txt").exists()
    assert not (w / "bad.txt.manifest.json").exists()


def test_wer_split_insufficient_data_fails(pipeline):
    w = pipeline
    with open(w / "poor.jsonl", "w") as f:
        for i in range(10):
            f.write(json.dumps({"utt_id": f"doc{i:03d}", "words": ["uh"], "wer": 0.5}) + "\n")
    rc = run(w, "wer-split", "--ref", str(w / "corpus.jsonl"), "--hyp", str(w / "poor.jsonl"),
             "--out", str(w / "nosplit.json"))
    assert rc == 1
    assert not (w / "nosplit.json").exists()


def test_missing_input_is_usage_error(tmp_path):
    assert main(["lexicon", "--in", str(tmp_path / "nope.jsonl"), "--out", str(tmp_path / "x.tsv")]) == 2


def test_unknown_config_key_rejected(tmp_path):
    bad = tmp_path / "bad.yaml"
    bad.write_text("train:\n  learning_rat: 0.1\n")
    with pytest.raises(ConfigError, match="learning_rat"):
        load_config(bad)
    assert main(["lexicon", "--in", str(bad), "--out", str(tmp_path / "x.tsv"), "--config", str(bad)]) == 2


def test_config_env_var(tmp_path, monkeypatch):
    p = tmp_path / "c.json"
    p.write_text(json.dumps({"seed": 9, "chunk": {"core": 100, "overlap": 20}}))
    monkeypatch.setenv("PUNCTCASE_CONFIG", str(p))
    cfg = load_config()
    assert (cfg.seed, cfg.chunk.core, cfg.chunk.overlap) == (9, 100, 20)
    assert cfg.train.alpha == 0.6
    monkeypatch.delenv("PUNCTCASE_CONFIG")
    assert load_config().to_dict() == PipelineConfig().to_dict()


def test_config_validation(tmp_path):
    for text in ("chunk: {core: 300, overlap: 50}", "nbest: 6", "mode: char", "masking: {kind: odd}",
                 "split: {ratios: [0.5, 0.1, 0.1]}"):
        p = tmp_path / "c.yaml"
        p.write_text(text)
        with pytest.raises(ConfigError):
            load_config(p)


def test_module_entry_point():
    out = subprocess.run([sys.executable, "-m", "punctcase", "--help"], capture_output=True, text=True)
    assert out.returncode == 0
    for cmd in ("prepare", "pretrain", "train", "predict", "evaluate", "align-restore", "wer-split", "augment"):
        assert cmd in out.stdout
