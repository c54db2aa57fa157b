"""Word-level per-class precision / recall / F1 for punctuation and casing."""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

from .corpus import CaseLabel, LabeledSequence, PunctLabel
from .errors import AlignmentRequired, EmptyEvaluation

# column order used in report tables
PUNCT_COLUMNS = [
    (PunctLabel.NO_PUNCT, "No Punc"),
    (PunctLabel.PERIOD, "Full stop"),
    (PunctLabel.COMMA, "Comma"),
    (PunctLabel.QUESTION_MARK, "QM"),
]
CASE_COLUMNS = [
    (CaseLabel.LOWER_CASE, "LC"),
    (CaseLabel.UPPER_CASE, "UC"),
    (CaseLabel.ALL_CAPS, "CA"),
    (CaseLabel.MIXED_CASE, "MC"),
]


@dataclass
class ClassStats:
    name: str
    tp: int = 0
    fp: int = 0
    fn: int = 0

    @property
    def support(self) -> int:
        return self.tp + self.fn

    @property
    def precision(self) -> float:
        return self.tp / (self.tp + self.fp) if self.tp + self.fp else 0.0

    @property
    def recall(self) -> float:
        return self.tp / (self.tp + self.fn) if self.tp + self.fn else 0.0

    @property
    def f1(self) -> float:
        p, r = self.precision, self.recall
        return 2 * p * r / (p + r) if p + r else 0.0

    @property
    def defined(self) -> bool:
        """False when the class never occurs in gold or predictions."""
        return self.tp + self.fp + self.fn > 0


@dataclass
class ClassReport:
    task: str
    classes: list[ClassStats] = field(default_factory=list)
    # confusion[i][j]: words of gold class i predicted as class j, in column order
    confusion: list[list[int]] = field(default_factory=list)

    def __getitem__(self, name: str) -> ClassStats:
        for c in self.classes:
            if c.name == name:
                return c
        raise KeyError(name)

    @property
    def macro_f1(self) -> float:
        """Mean F1 over classes seen in gold or predictions."""
        seen = [c.f1 for c in self.classes if c.defined]
        return sum(seen) / len(seen) if seen else 0.0

    @property
    def total(self) -> int:
        return sum(c.support for c in self.classes)

    def to_json(self) -> dict:
        return {
            "task": self.task,
            "macro_f1": self.macro_f1,
            "classes": [
                {"class": c.name, "support": c.support, "tp": c.tp, "fp": c.fp, "fn": c.fn,
                 "precision": c.precision, "recall": c.recall, "f1": c.f1, "defined": c.defined}
                for c in self.classes
            ],
            "confusion": self.confusion,
        }


def _count(task, columns, gold, pred) -> ClassReport:
    stats = {label: ClassStats(name) for label, name in columns}
    order = {label: i for i, (label, _) in enumerate(columns)}
    confusion = [[0] * len(columns) for _ in columns]
    for g, p in zip(gold, pred):
        confusion[order[g]][order[p]] += 1
        if g == p:
            stats[g].tp += 1
        else:
            stats[g].fn += 1
            stats[p].fp += 1
    return ClassReport(task, [stats[label] for label, _ in columns], confusion)


def score(pred: Sequence[LabeledSequence], gold: Sequence[LabeledSequence]) -> tuple[ClassReport, ClassReport]:
    """One-vs-rest counts per class, punctuation and casing scored independently."""
    if not gold:
        raise EmptyEvaluation("nothing to score")
    if len(pred) != len(gold):
        raise AlignmentRequired(f"{len(pred)} predicted vs {len(gold)} gold sequences")
    gp, pp, gc, pc = [], [], [], []
    for i, (p, g) in enumerate(zip(pred, gold)):
        if len(p) != len(g):
            raise AlignmentRequired(f"sequence {i}: {len(p)} predicted words vs {len(g)} gold")
        gp += g.punct
        pp += p.punct
        gc += g.case
        pc += p.case
    return _count("punctuation", PUNCT_COLUMNS, gp, pp), _count("truecasing", CASE_COLUMNS, gc, pc)


def report(reports: Sequence[ClassReport], out_prefix, figure: bool = True) -> dict[str, Path]:
    """Write ``<prefix>.tsv`` (2 decimals), ``<prefix>.json`` (full precision) and optionally a bar chart."""
    if not reports or all(r.total == 0 for r in reports):
        raise EmptyEvaluation("no scored words")
    out_prefix = Path(out_prefix)
    paths = {"tsv": out_prefix.with_suffix(".tsv"), "json": out_prefix.with_suffix(".json")}
    with open(paths["tsv"], "w", encoding="utf-8", newline="") as f:
        w = csv.writer(f, delimiter="\t", lineterminator="\n")
        w.writerow(["task", "class", "support", "precision", "recall", "f1"])
        for r in reports:
            for c in r.classes:
                w.writerow([r.task, c.name, c.support, f"{c.precision:.2f}", f"{c.recall:.2f}", f"{c.f1:.2f}"])
    with open(paths["json"], "w", encoding="utf-8") as f:
        json.dump({r.task: r.to_json() for r in reports}, f, indent=2)
    if figure:
        from .plotting import plot_f1_bars

        paths["png"] = plot_f1_bars(reports, out_prefix.with_suffix(".png"))
    return paths


def read_report_tsv(path) -> list[dict]:
    with open(path, encoding="utf-8") as f:
        return list(csv.DictReader(f, delimiter="\t"))
