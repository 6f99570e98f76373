"""Entity-level scoring, inter-annotator agreement, approximate randomization, learning curves."""

from __future__ import annotations

import csv
import io
import json
import math
import random
from dataclasses import asdict, dataclass, field
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np
from scipy import stats

from .corpus import Annotation, Document, TagSet, sentence_units

AnnotationsByDoc = Mapping[str, Iterable[Annotation]]


@dataclass
class Score:
    tp: int = 0
    fp: int = 0
    fn: int = 0

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

    def to_dict(self) -> dict:
        return {"tp": self.tp, "fp": self.fp, "fn": self.fn, "precision": self.precision,
                "recall": self.recall, "f1": self.f1}


@dataclass
class EvalReport:
    per_tag: dict[str, Score]
    micro: Score
    n_docs: int
    n_gold: int

    def to_dict(self) -> dict:
        return {
            "per_tag": {t: s.to_dict() for t, s in self.per_tag.items()},
            "micro": self.micro.to_dict(),
            "n_docs": self.n_docs,
            "n_gold": self.n_gold,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def to_table(self) -> str:
        rows = [("tag", "tp", "fp", "fn", "prec", "rec", "f1")]
        for tag, s in list(self.per_tag.items()) + [("micro", self.micro)]:
            rows.append((tag, str(s.tp), str(s.fp), str(s.fn), f"{s.precision:.3f}", f"{s.recall:.3f}",
                         f"{s.f1:.3f}"))
        widths = [max(len(r[i]) for r in rows) for i in range(len(rows[0]))]
        lines = []
        for k, r in enumerate(rows):
            lines.append("  ".join(c.ljust(w) if i == 0 else c.rjust(w) for i, (c, w) in enumerate(zip(r, widths))))
            if k == 0 or k == len(rows) - 2:
                lines.append("  ".join("-" * w for w in widths))
        return "\n".join(lines) + "\n"


def _tuples(anns_by_doc: AnnotationsByDoc, name: str) -> set[tuple[str, int, int, str]]:
    out = set()
    for doc_id, anns in anns_by_doc.items():
        for a in anns:
            key = (doc_id, a.start, a.end, a.tag)
            if key in out:
                raise ValueError(f"duplicate annotation {key} in {name}")
            out.add(key)
    return out


def entity_prf(gold: AnnotationsByDoc, pred: AnnotationsByDoc, tagset: TagSet) -> EvalReport:
    """Exact-match entity scoring: a prediction counts only if doc, offsets and tag all agree."""
    if set(gold) != set(pred):
        missing = sorted(set(gold) ^ set(pred))[:5]
        raise ValueError(f"gold and predictions cover different documents, e.g. {missing}")
    g = _tuples(gold, "gold")
    p = _tuples(pred, "predictions")
    for doc_id, s, e, tag in g | p:
        if tag not in tagset:
            raise ValueError(f"tag {tag!r} in document {doc_id} is not in tag set {tagset.name}")
    per_tag = {t: Score() for t in tagset.tags}
    for key in g & p:
        per_tag[key[3]].tp += 1
    for key in p - g:
        per_tag[key[3]].fp += 1
    for key in g - p:
        per_tag[key[3]].fn += 1
    micro = Score(sum(s.tp for s in per_tag.values()), sum(s.fp for s in per_tag.values()),
                  sum(s.fn for s in per_tag.values()))
    return EvalReport(per_tag, micro, len(gold), len(g))


def agreement(anns_a: AnnotationsByDoc, anns_b: AnnotationsByDoc, tagset: TagSet) -> EvalReport:
    """Inter-annotator agreement as entity F1, with annotator A taken as reference."""
    return entity_prf(anns_a, anns_b, tagset)


def docs_to_map(docs: Iterable[Document]) -> dict[str, list[Annotation]]:
    return {d.doc_id: list(d.annotations) for d in docs}


# ---------------------------------------------------------------------------
# Approximate randomization
# ---------------------------------------------------------------------------


@dataclass
class SigTestResult:
    observed_delta: float
    p_value: float
    n_shuffles: int
    seed: int
    f1_a: float = 0.0
    f1_b: float = 0.0

    def to_dict(self) -> dict:
        return asdict(self)


def _doc_counts(gold: AnnotationsByDoc, pred: AnnotationsByDoc, doc_ids: Sequence[str]) -> np.ndarray:
    out = np.zeros((len(doc_ids), 3), dtype=np.int64)
    for i, d in enumerate(doc_ids):
        g = {a.key for a in gold[d]}
        p = {a.key for a in pred[d]}
        out[i] = (len(g & p), len(p - g), len(g - p))
    return out


def _f1(counts: np.ndarray) -> np.ndarray:
    tp, fp, fn = counts[..., 0], counts[..., 1], counts[..., 2]
    denom = 2 * tp + fp + fn
    return np.where(denom > 0, 2 * tp / np.maximum(denom, 1), 0.0)


def approx_rand_test(gold: AnnotationsByDoc, pred_a: AnnotationsByDoc, pred_b: AnnotationsByDoc,
                     n: int = 9999, seed: int = 0, chunk: int = 1000) -> SigTestResult:
    """Two-sided approximate randomization on micro F1, swapping whole documents.

    p = (1 + #shuffles with |delta| >= observed) / (n + 1).
    """
    doc_ids = sorted(gold)
    if len(doc_ids) < 2:
        raise ValueError("approximate randomization needs at least 2 documents")
    if set(pred_a) != set(doc_ids) or set(pred_b) != set(doc_ids):
        raise ValueError("gold and both prediction sets must cover the same documents")
    ca = _doc_counts(gold, pred_a, doc_ids)
    cb = _doc_counts(gold, pred_b, doc_ids)
    f1_a, f1_b = float(_f1(ca.sum(0))), float(_f1(cb.sum(0)))
    observed = abs(f1_a - f1_b)
    diff = cb - ca
    total_a = ca.sum(0)
    total_b = cb.sum(0)
    rng = np.random.default_rng(seed)
    hits = 0
    done = 0
    while done < n:
        m = min(chunk, n - done)
        swap = rng.random((m, len(doc_ids))) < 0.5
        moved = swap.astype(np.int64) @ diff  # (m, 3)
        delta = np.abs(_f1(total_a + moved) - _f1(total_b - moved))
        hits += int(np.count_nonzero(delta >= observed - 1e-12))
        done += m
    return SigTestResult(observed, (hits + 1) / (n + 1), n, seed, f1_a, f1_b)


# ---------------------------------------------------------------------------
# Learning curves
# ---------------------------------------------------------------------------


@dataclass
class CurvePoint:
    fraction: float
    mean: float
    ci: float
    scores: list[float] = field(default_factory=list)

    def to_dict(self) -> dict:
        return asdict(self)


Tagger = Callable[[Document], list[Annotation]]
Trainer = Callable[[list[Document], int], Tagger]


def confidence_halfwidth(scores: Sequence[float], level: float = 0.95) -> float:
    n = len(scores)
    if n < 2:
        return 0.0
    if max(scores) == min(scores):
        return 0.0
    sd = float(np.std(scores, ddof=1))
    return float(stats.t.ppf(0.5 + level / 2, n - 1) * sd / math.sqrt(n))


def learning_curve(
    pool_docs: Sequence[Document],
    test_docs: Sequence[Document],
    trainer: Trainer,
    fractions: Sequence[float],
    tagset: TagSet,
    samples: int = 3,
    runs: int = 3,
    seed: int = 0,
) -> list[CurvePoint]:
    """Score ``trainer`` on sentence subsets of ``pool_docs`` (train + dev) against ``test_docs``.

    For every fraction, ``samples`` random subsets are drawn and each is
    trained and tested ``runs`` times, giving ``samples * runs`` scores.
    """
    pool = sentence_units(pool_docs)
    gold = docs_to_map(test_docs)
    rng = random.Random(seed)
    points = []
    for fraction in fractions:
        if not 0 < fraction <= 1:
            raise ValueError(f"fraction {fraction} outside (0, 1]")
        k = round(fraction * len(pool))
        if k == 0:
            raise ValueError(f"fraction {fraction} selects zero sentences from a pool of {len(pool)}")
        scores = []
        for s in range(samples):
            chosen = sorted(rng.sample(range(len(pool)), k)) if k < len(pool) else list(range(len(pool)))
            subset = [pool[i] for i in chosen]
            for r in range(runs):
                tagger = trainer(subset, seed * 1_000_003 + s * 1009 + r)
                pred = {d.doc_id: tagger(d) for d in test_docs}
                scores.append(entity_prf(gold, pred, tagset).micro.f1)
        points.append(CurvePoint(fraction, float(np.mean(scores)), confidence_halfwidth(scores), scores))
    return points


def curve_csv(points: Sequence[CurvePoint]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    n = max((len(p.scores) for p in points), default=0)
    writer.writerow(["fraction", "mean", "ci"] + [f"score_{i}" for i in range(n)])
    for p in points:
        writer.writerow([repr(p.fraction), repr(p.mean), repr(p.ci)] + [repr(s) for s in p.scores])
    return buf.getvalue()
