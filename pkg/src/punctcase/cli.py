"""``punctcase`` command line: one subcommand per pipeline stage.

Every successful run writes ``<output>.manifest.json`` recording the config
snapshot, seed, input hashes and toolkit version. Outputs of a failed run
are removed.
"""
from __future__ import annotations

import argparse
import dataclasses
import hashlib
import json
import logging
import sys
from collections import Counter
from pathlib import Path

from . import __version__
from .config import PipelineConfig, load_config
from .errors import PunctCaseError

logger = logging.getLogger("punctcase")


class UsageError(Exception):
    pass


def _sha256(path: Path) -> str:
    h = hashlib.sha256()
    files = sorted(p for p in path.rglob("*") if p.is_file()) if path.is_dir() else [path]
    for p in files:
        if path.is_dir():
            h.update(str(p.relative_to(path)).encode() + b"\0")
        h.update(p.read_bytes())
    return h.hexdigest()


class Run:
    """Tracks inputs/outputs of one invocation for the manifest and for cleanup."""

    def __init__(self, command: str, cfg: PipelineConfig, argv):
        self.command = command
        self.cfg = cfg
        self.argv = list(argv)
        self.inputs: dict[str, str] = {}
        self.outputs: list[Path] = []

    def input(self, path) -> Path:
        if path is None:
            raise UsageError("missing required input path")
        p = Path(path)
        if not p.exists():
            raise UsageError(f"input not found: {p}")
        self.inputs[str(p)] = _sha256(p)
        return p

    def output(self, path) -> Path:
        if path is None:
            raise UsageError("missing required output path")
        p = Path(path)
        p.parent.mkdir(parents=True, exist_ok=True)
        self.outputs.append(p)
        return p

    def write_manifest(self) -> Path:
        primary = self.outputs[0]
        path = primary.with_name(primary.name + ".manifest.json")
        manifest = {
            "command": self.command,
            "argv": self.argv,
            "toolkit_version": __version__,
            "seed": self.cfg.seed,
            "config": self.cfg.to_dict(),
            "inputs": self.inputs,
            "outputs": [str(p) for p in self.outputs],
        }
        path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")
        return path

    def cleanup(self) -> None:
        for p in self.outputs:
            if p.is_file():
                p.unlink()


# --- subcommands ---

def cmd_prepare(args, cfg, run):
    from .corpus import derive_labels, read_documents, split_corpus, write_labeled

    docs = read_documents(run.input(args.inp))
    seqs = [derive_labels(text, cfg.tag_pattern, id=doc_id) for doc_id, text in docs if text.strip()]
    out = run.output(args.out)
    write_labeled(out, seqs)
    dropped = sum(s.dropped_marks for s in seqs)
    if dropped:
        logger.warning("%d leading marks dropped", dropped)
    if args.split:
        split = split_corpus([s.id for s in seqs], cfg.split.ratios, cfg.seed)
        by_id = {s.id: s for s in seqs}
        for part in ("train", "dev", "test"):
            write_labeled(run.output(out.with_suffix(f".{part}.jsonl")), [by_id[i] for i in getattr(split, part)])
        run.output(out.with_suffix(".split.json")).write_text(json.dumps(split.to_json(), indent=2))


def cmd_lexicon(args, cfg, run):
    from .corpus import lexicon_from_sequences, read_labeled

    lex = lexicon_from_sequences(read_labeled(run.input(args.inp)))
    lex.save(run.output(args.out))


def cmd_tokenizer_train(args, cfg, run):
    from .corpus import read_labeled
    from .tokenizer import train_subword, word_vocab

    words = [w for seq in read_labeled(run.input(args.inp)) for w in seq.words]
    if cfg.mode == "subword":
        vocab = train_subword(words, args.vocab_size or cfg.tokenizer.vocab_size, cfg.tokenizer.min_frequency)
    else:
        vocab = word_vocab(words, args.vocab_size or cfg.tokenizer.word_max_size)
    vocab.save(run.output(args.out))


def _encoder_config(cfg, vocab):
    from .model import EncoderConfig

    return EncoderConfig(vocab_size=len(vocab), **dataclasses.asdict(cfg.encoder))


def _train_config(cfg):
    from .training import TrainConfig

    return TrainConfig(seed=cfg.seed, **dataclasses.asdict(cfg.train))


def _load_vocab(run, path, cfg):
    from .tokenizer import Vocabulary

    vocab = Vocabulary.load(run.input(path))
    if vocab.mode != cfg.mode:
        logger.warning("vocabulary looks %s-level but mode is %s; using %s", vocab.mode, cfg.mode, cfg.mode)
        vocab = Vocabulary(vocab.pieces, cfg.mode)
    return vocab


def _save_model(run, path, model, vocab, meta, log):
    from .model import save_checkpoint
    from .plotting import plot_loss_curve

    out = run.output(path)
    save_checkpoint(out, model, vocab.digest(), meta)
    log_path = run.output(out.with_suffix(".log.jsonl"))
    with open(log_path, "w", encoding="utf-8") as f:
        for rec in log:
            f.write(json.dumps(rec) + "\n")
    if log:
        run.output(out.with_suffix(".loss.png"))
        plot_loss_curve(log, out.with_suffix(".loss.png"))


def cmd_pretrain(args, cfg, run):
    from .corpus import read_labeled
    from .model import load_checkpoint
    from .tokenizer import encode_with_marks
    from .training import pretrain_mlm

    vocab = _load_vocab(run, args.vocab, cfg)
    seqs = read_labeled(run.input(args.inp))
    cache: dict = {}
    pieces = [encode_with_marks(s, vocab, cache) for s in seqs]
    model = load_checkpoint(run.input(args.init), vocab.digest())[0] if args.init else None
    result = pretrain_mlm(pieces, vocab, _train_config(cfg), cfg.masking_policy(), model=model,
                          encoder=_encoder_config(cfg, vocab))
    _save_model(run, args.out, result.model, vocab, {"stage": "pretrain", "policy": cfg.masking.kind}, result.log)


def cmd_train(args, cfg, run):
    from .corpus import read_labeled
    from .evaluation import score
    from .inference import Predictor
    from .model import PunctCaseModel, load_checkpoint, truncate
    from .training import encode_for_training, train_joint

    vocab = _load_vocab(run, args.vocab, cfg)
    if args.init:
        model = load_checkpoint(run.input(args.init), vocab.digest())[0]
    else:
        import torch

        torch.manual_seed(cfg.seed)
        model = PunctCaseModel(_encoder_config(cfg, vocab))
    if cfg.truncate_layers is not None:
        model = truncate(model, cfg.truncate_layers)
    seqs = read_labeled(run.input(args.inp))
    window = cfg.chunk.core + 2 * cfg.chunk.overlap
    data = encode_for_training(seqs, vocab, model.config.max_seq_len, window)
    dev_metric = None
    if args.dev:
        dev = read_labeled(run.input(args.dev))

        def dev_metric(m):
            pred = Predictor(m, vocab, core=cfg.chunk.core, overlap=cfg.chunk.overlap)
            p, c = score([pred.predict(s.words)[1] for s in dev], dev)
            return (p.macro_f1 + c.macro_f1) / 2

    result = train_joint(model, data, _train_config(cfg), vocab, dev_metric)
    meta = {"stage": "train", "init": str(args.init) if args.init else None, "alpha": cfg.train.alpha}
    _save_model(run, args.out, result.model, vocab, meta, result.log)


def _load_predictor(run, args, cfg):
    from .corpus import MixedCaseLexicon
    from .inference import Predictor
    from .model import load_checkpoint

    vocab = _load_vocab(run, args.vocab, cfg)
    model = load_checkpoint(run.input(args.ckpt), vocab.digest())[0]
    lexicon = MixedCaseLexicon.load(run.input(args.lexicon)) if args.lexicon else None
    return Predictor(model, vocab, lexicon, cfg.chunk.core, cfg.chunk.overlap)


def cmd_predict(args, cfg, run):
    predictor = _load_predictor(run, args, cfg)
    src = run.input(args.inp)
    files = sorted(src.glob("*.txt")) if src.is_dir() else [src]
    out = Path(args.out)
    for f in files:
        target = out / f.name if src.is_dir() else out
        text, seq = predictor.predict(f.read_text(encoding="utf-8"))
        run.output(target).write_text(text + "\n", encoding="utf-8")
        if args.labels_tsv:
            tsv = Path(args.labels_tsv)
            tsv = tsv / (f.stem + ".tsv") if src.is_dir() else tsv
            with open(run.output(tsv), "w", encoding="utf-8") as fh:
                for tok in seq:
                    fh.write(f"{tok.lower_form}\t{tok.punct.display}\t{tok.case.display}\n")


def cmd_evaluate(args, cfg, run):
    from .corpus import read_labeled
    from .evaluation import report, score

    gold = read_labeled(run.input(args.gold))
    if args.pred:
        pred = read_labeled(run.input(args.pred))
    elif args.ckpt:
        predictor = _load_predictor(run, args, cfg)
        pred = [predictor.predict(s.words)[1] for s in gold]
    else:
        raise UsageError("evaluate needs --pred or --ckpt")
    punct, case = score(pred, gold)
    prefix = Path(args.out)
    for suffix in (".tsv", ".json", ".png"):
        run.output(prefix.with_suffix(suffix))
    report([punct, case], prefix)
    print(f"punctuation macro-F1 {punct.macro_f1:.4f}  truecasing macro-F1 {case.macro_f1:.4f}")


def _read_hyps(path):
    from .robustness import NBestList

    grouped: dict[str, list] = {}
    wers: dict[str, float] = {}
    with open(path, encoding="utf-8") as f:
        for line in f:
            if not line.strip():
                continue
            d = json.loads(line)
            grouped.setdefault(str(d["utt_id"]), []).append((int(d.get("rank", 1)), tuple(d["words"])))
            if d.get("wer") is not None and int(d.get("rank", 1)) == 1:
                wers[str(d["utt_id"])] = float(d["wer"])
    nbest = {uid: NBestList(uid, tuple(h for _, h in sorted(hs))) for uid, hs in grouped.items()}
    return nbest, wers


def cmd_align_restore(args, cfg, run):
    from .corpus import read_labeled
    from .robustness import restore_labels

    refs = {s.id: s for s in read_labeled(run.input(args.ref))}
    nbest, _ = _read_hyps(run.input(args.hyp))
    stats: Counter = Counter()
    out = run.output(args.out)
    with open(out, "w", encoding="utf-8") as f:
        for uid in sorted(nbest):
            if uid not in refs:
                logger.warning("no reference for utterance %s", uid)
                continue
            for rank, hyp in enumerate(nbest[uid].hypotheses, start=1):
                if args.rank and rank != args.rank or not hyp:
                    continue
                seq, alignment = restore_labels(refs[uid], hyp, cfg.case_window, stats)
                rec = {**seq.to_json(), "source": "asr", "rank": rank, "wer": alignment.wer}
                f.write(json.dumps(rec) + "\n")
    if stats["dropped_marks"]:
        logger.warning("%d marks dropped at utterance starts", stats["dropped_marks"])


def cmd_wer_split(args, cfg, run):
    from .corpus import read_labeled
    from .robustness import wer, wer_filter_split

    refs = {s.id: s for s in read_labeled(run.input(args.ref))}
    nbest, wers = _read_hyps(run.input(args.hyp))
    for uid, entry in nbest.items():
        if uid not in wers and uid in refs and entry.hypotheses:
            wers[uid] = wer(refs[uid].words, entry.hypotheses[0])
    split = wer_filter_split(wers, cfg.wer.threshold, cfg.wer.test_n, cfg.wer.dev_n)
    out = run.output(args.out)
    out.write_text(json.dumps({**split.to_json(), "wer": wers}, indent=2, sort_keys=True) + "\n")


def cmd_augment(args, cfg, run):
    from .corpus import read_labeled
    from .robustness import augment_nbest

    gt = read_labeled(run.input(args.ref))
    nbest, _ = _read_hyps(run.input(args.hyp))
    stats: Counter = Counter()
    augmented = augment_nbest(gt, nbest, cfg.nbest, cfg.case_window, stats)
    out = run.output(args.out)
    with open(out, "w", encoding="utf-8") as f:
        for a in augmented:
            f.write(json.dumps(a.to_json()) + "\n")
    logger.info("%d ground-truth + %d ASR sequences", len(gt), len(augmented) - len(gt))


COMMANDS = {
    "prepare": cmd_prepare,
    "lexicon": cmd_lexicon,
    "tokenizer-train": cmd_tokenizer_train,
    "pretrain": cmd_pretrain,
    "train": cmd_train,
    "predict": cmd_predict,
    "evaluate": cmd_evaluate,
    "align-restore": cmd_align_restore,
    "wer-split": cmd_wer_split,
    "augment": cmd_augment,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="YAML/JSON config file (default: $PUNCTCASE_CONFIG)")
    common.add_argument("--seed", type=int)
    common.add_argument("--alpha", type=float)
    common.add_argument("--chunk-core", type=int)
    common.add_argument("--chunk-overlap", type=int)
    common.add_argument("--wer-threshold", type=float)
    common.add_argument("--nbest", type=int)
    common.add_argument("--mode", choices=["word", "subword"])
    common.add_argument("--policy", choices=["random", "punct_selective"])
    common.add_argument("--truncate-layers", type=int)
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="punctcase", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("prepare", parents=[common], help="label raw punctuated text")
    p.add_argument("--in", dest="inp", required=True, help="directory of .txt files or {id,text} JSON-lines")
    p.add_argument("--out", required=True)
    p.add_argument("--split", action="store_true", help="also write train/dev/test partitions")

    p = sub.add_parser("lexicon", parents=[common], help="mixed-case lexicon from a labeled corpus")
    p.add_argument("--in", dest="inp", required=True)
    p.add_argument("--out", required=True)

    p = sub.add_parser("tokenizer-train", parents=[common], help="learn a word or subword vocabulary")
    p.add_argument("--in", dest="inp", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--vocab-size", type=int)

    for name, text in (("pretrain", "masked-LM pretraining"), ("train", "joint punctuation/casing training")):
        p = sub.add_parser(name, parents=[common], help=text)
        p.add_argument("--in", dest="inp", required=True)
        p.add_argument("--vocab", required=True)
        p.add_argument("--init", help="checkpoint to start from")
        p.add_argument("--out", required=True)
        if name == "train":
            p.add_argument("--dev", help="labeled dev set for patience-based stopping")

    p = sub.add_parser("predict", parents=[common], help="restore punctuation and casing")
    p.add_argument("--in", dest="inp", required=True, help="text file or directory of .txt files")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--vocab", required=True)
    p.add_argument("--lexicon")
    p.add_argument("--out", required=True)
    p.add_argument("--labels-tsv", help="also write word<TAB>punct<TAB>case")

    p = sub.add_parser("evaluate", parents=[common], help="per-class F1 report with figure")
    p.add_argument("--gold", required=True)
    p.add_argument("--pred")
    p.add_argument("--ckpt")
    p.add_argument("--vocab")
    p.add_argument("--lexicon")
    p.add_argument("--out", required=True, help="report prefix; writes .tsv, .json and .png")

    p = sub.add_parser("align-restore", parents=[common], help="carry reference labels onto ASR hypotheses")
    p.add_argument("--ref", required=True)
    p.add_argument("--hyp", required=True)
    p.add_argument("--rank", type=int, help="only this n-best rank")
    p.add_argument("--out", required=True)

    p = sub.add_parser("wer-split", parents=[common], help="WER filter and best-first test/dev/train split")
    p.add_argument("--ref", required=True)
    p.add_argument("--hyp", required=True)
    p.add_argument("--out", required=True)

    p = sub.add_parser("augment", parents=[common], help="ground truth plus restored n-best hypotheses")
    p.add_argument("--ref", required=True)
    p.add_argument("--hyp", required=True)
    p.add_argument("--out", required=True)
    return parser


def apply_overrides(cfg: PipelineConfig, args) -> PipelineConfig:
    if args.seed is not None:
        cfg.seed = args.seed
    if args.alpha is not None:
        cfg.train.alpha = args.alpha
    if args.chunk_core is not None:
        cfg.chunk.core = args.chunk_core
    if args.chunk_overlap is not None:
        cfg.chunk.overlap = args.chunk_overlap
    if args.wer_threshold is not None:
        cfg.wer.threshold = args.wer_threshold
    if args.nbest is not None:
        cfg.nbest = args.nbest
    if args.mode is not None:
        cfg.mode = args.mode
    if args.policy is not None:
        cfg.masking.kind = args.policy
    if args.truncate_layers is not None:
        cfg.truncate_layers = args.truncate_layers
    return cfg.validate()


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else argv
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = apply_overrides(load_config(args.config), args)
    except (PunctCaseError, OSError) as e:
        print(f"punctcase: config error: {e}", file=sys.stderr)
        return 2
    run = Run(args.command, cfg, argv)
    try:
        COMMANDS[args.command](args, cfg, run)
        if not run.outputs or not all(p.exists() for p in run.outputs):
            raise PunctCaseError("expected outputs were not written")
        run.write_manifest()
    except UsageError as e:
        run.cleanup()
        print(f"punctcase {args.command}: {e}", file=sys.stderr)
        return 2
    except (PunctCaseError, OSError, ValueError) as e:
        run.cleanup()
        print(f"punctcase {args.command}: error: {e}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
