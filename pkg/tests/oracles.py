"""Independent reference implementations shared by the unit tests and the acceptance gate."""

import itertools
import re
import math
import random

import numpy as np

from deidkit.corpus import Annotation, NUT_TAGS
from deidkit.crf import Batch, forward_backward_scores, nll_and_gradient, path_score, viterbi_scores


def random_crf(rng, max_t=6, max_l=5, scale=2.0):
    T = int(rng.integers(1, max_t + 1))
    L = int(rng.integers(1, max_l + 1))
    draw = lambda *shape: rng.uniform(-scale, scale, shape)
    return draw(T, L), draw(L, L), draw(L), draw(L)


def brute_force(E, A, start, end):
    """(log partition, max path score, argmax path) by enumerating all L^T label paths."""
    T, L = E.shape
    paths = list(itertools.product(range(L), repeat=T))
    scores = np.array([path_score(E, A, start, end, y) for y in paths])
    m = scores.max()
    log_z = m + math.log(np.exp(scores - m).sum())
    return log_z, m, list(paths[int(np.argmax(scores))])


def crf_oracle_error(E, A, start, end):
    log_z, best, _ = brute_force(E, A, start, end)
    lz, _, _ = forward_backward_scores(E, A, start, end)
    path, score = viterbi_scores(E, A, start, end)
    return max(abs(lz - log_z), abs(score - best), abs(path_score(E, A, start, end, path) - best))


def random_batch(rng, n_features=5, n_labels=3, max_seqs=3, max_len=5):
    n = int(rng.integers(1, max_seqs + 1))
    enc, ys = [], []
    for _ in range(n):
        T = int(rng.integers(1, max_len + 1))
        enc.append([sorted(rng.choice(n_features, size=int(rng.integers(1, 3)), replace=False).tolist())
                    for _ in range(T)])
        ys.append(rng.integers(0, n_labels, T).tolist())
    return Batch(enc, ys, n_features, n_labels)


def finite_difference_error(rng, h=1e-4, c2=0.1):
    """Relative error ||numeric - analytic|| / ||analytic|| of the smooth gradient on one random instance."""
    batch = random_batch(rng)
    F, L = batch.n_features, batch.n_labels
    w = rng.normal(size=F * L + L * L + 2 * L)
    _, g = nll_and_gradient(w, batch, 0.0, c2)
    num = np.empty_like(w)
    for i in range(len(w)):
        d = np.zeros_like(w)
        d[i] = h
        num[i] = (nll_and_gradient(w + d, batch, 0.0, c2)[0] - nll_and_gradient(w - d, batch, 0.0, c2)[0]) / (2 * h)
    return float(np.linalg.norm(num - g) / max(np.linalg.norm(g), 1e-12))


def random_annotation_maps(rng: random.Random, n_docs=None, tags=NUT_TAGS.tags[:5]):
    """Random (gold, pred) pairs over shared documents, with deliberate partial overlaps."""
    n_docs = n_docs or rng.randint(1, 6)
    gold, pred = {}, {}
    for d in range(n_docs):
        spans = {(rng.randint(0, 40), rng.randint(1, 6), rng.choice(tags)) for _ in range(rng.randint(0, 8))}
        g = {Annotation(s, s + n, t) for s, n, t in spans}
        p = {a for a in g if rng.random() < 0.6}
        for a in g:
            r = rng.random()
            if r < 0.15:
                p.add(Annotation(a.start, a.end + 1, a.tag))
            elif r < 0.3:
                p.add(Annotation(a.start, a.end, rng.choice(tags)))
        for _ in range(rng.randint(0, 3)):
            s = rng.randint(0, 40)
            p.add(Annotation(s, s + rng.randint(1, 4), rng.choice(tags)))
        gold[f"doc{d}"] = sorted(g)
        pred[f"doc{d}"] = sorted(p)
    return gold, pred


def brute_force_prf(gold, pred):
    """Micro and per-tag (tp, fp, fn) by plain tuple-set intersection."""
    g = {(d, a.start, a.end, a.tag) for d, anns in gold.items() for a in anns}
    p = {(d, a.start, a.end, a.tag) for d, anns in pred.items() for a in anns}
    per_tag = {}
    for tag in {k[3] for k in g | p}:
        gt = {k for k in g if k[3] == tag}
        pt = {k for k in p if k[3] == tag}
        per_tag[tag] = (len(gt & pt), len(pt - gt), len(gt - pt))
    return (len(g & p), len(p - g), len(g - p)), per_tag


def surrogate_violations(original, output, plan):
    """Invariant breaches after surrogate substitution, as readable strings (empty means clean).

    Checks: offsets slice to surfaces, charclass shapes, ages <= 89, and that
    pairwise day differences between full dates inside a document are unchanged.
    """
    from deidkit.surrogate import CHARCLASS_TAGS, char_classes, full_date

    problems = []
    review = plan.review_keys()
    for before, after in zip(original, output):
        assert before.doc_id == after.doc_id
        for a in after.annotations:
            if after.text[a.start:a.end] != a.surface or not 0 <= a.start < a.end <= len(after.text):
                problems.append(f"{after.doc_id}: bad offsets {a.key}")
        rows = plan.offsets[before.doc_id]
        new_by_old = {(r[0], r[1]): after.text[r[2]:r[3]] for r in rows}
        dates = []
        for a in before.annotations:
            new = new_by_old[(a.start, a.end)]
            if (before.doc_id, a.start, a.end) in review:
                continue
            if a.tag in CHARCLASS_TAGS and char_classes(new) != char_classes(a.surface):
                problems.append(f"{before.doc_id}: shape {a.surface!r} -> {new!r}")
            if a.tag == "Age" and any(int(n) > 89 for n in re.findall(r"\d+", new)):
                problems.append(f"{before.doc_id}: age {new!r}")
            if a.tag == "Date":
                old_d, new_d = full_date(a.surface), full_date(new)
                if old_d is not None:
                    if new_d is None:
                        problems.append(f"{before.doc_id}: date {a.surface!r} -> {new!r} lost its shape")
                    else:
                        dates.append((old_d, new_d))
        for i in range(len(dates)):
            for j in range(i + 1, len(dates)):
                if (dates[j][0] - dates[i][0]) != (dates[j][1] - dates[i][1]):
                    problems.append(f"{before.doc_id}: date delta changed {dates[i]} {dates[j]}")
    return problems
