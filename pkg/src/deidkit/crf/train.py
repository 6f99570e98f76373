"""CRF training on documents, hyperparameter random search, and document tagging."""

from __future__ import annotations

import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from ..corpus import NUT_TAGS, Annotation, Document, TagSet, from_bio, is_valid_bio, repair_bio, to_bio, tokenize
from .features import FeatureConfig, FeatureIndex, build_feature_index, extract_features
from .model import Batch, CrfModel, nll_and_gradient, viterbi_scores
from .owlqn import minimize_owlqn

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainOptions:
    max_iterations: int = 200
    tolerance: float = 1e-6
    memory: int = 10
    seed: int = 0

    def __post_init__(self):
        if self.max_iterations < 1 or self.tolerance <= 0 or self.memory < 1:
            raise ValueError("max_iterations, tolerance and memory must be positive")


def document_features(doc: Document, cfg: FeatureConfig) -> list[list[list[str]]]:
    """Per-sentence feature sequences for ``doc`` (attribute columns sliced per sentence)."""
    tdoc = tokenize(doc.text)
    out = []
    pos = 0
    for sent in tdoc.sentences:
        attrs = None
        if doc.attrs:
            attrs = {k: v[pos:pos + len(sent)] for k, v in doc.attrs.items() if k in ("pos", "ner")}
        out.append(extract_features([t.surface for t in sent], cfg, attrs))
        pos += len(sent)
    return out


def document_examples(docs: Sequence[Document], tagset: TagSet, cfg: FeatureConfig, mode: str = "snap"):
    """(feature sequence, BIO labels) pairs, one per sentence."""
    examples = []
    for doc in docs:
        seqs, _ = to_bio(tokenize(doc.text), doc.annotations, tagset, mode)
        for feats, labels in zip(document_features(doc, cfg), seqs):
            examples.append((feats, labels))
    return examples


@dataclass
class Prepared:
    """Training data indexed once, reusable across regularisation settings."""

    tagset: TagSet
    feature_config: FeatureConfig
    index: FeatureIndex
    labels: list[str]
    batch: Batch


def prepare(examples: Sequence[tuple[Sequence[Sequence[str]], Sequence[str]]], tagset: TagSet = NUT_TAGS,
            feature_config: FeatureConfig = FeatureConfig()) -> Prepared:
    if not examples:
        raise ValueError("training set is empty")
    labels = tagset.bio_labels()
    label_id = {lab: i for i, lab in enumerate(labels)}
    ys = []
    for i, (_, seq) in enumerate(examples):
        if not is_valid_bio(seq):
            raise ValueError(f"training sequence {i} is not BIO-valid")
        try:
            ys.append([label_id[lab] for lab in seq])
        except KeyError as exc:
            raise ValueError(f"training sequence {i}: label {exc.args[0]!r} not in the {tagset.name} alphabet")
    index = build_feature_index((f for f, _ in examples), feature_config.min_feature_count)
    batch = Batch([index.encode(f) for f, _ in examples], ys, len(index), len(labels))
    return Prepared(tagset, feature_config, index, labels, batch)


def fit(prep: Prepared, c1: float, c2: float, opts: TrainOptions = TrainOptions()) -> CrfModel:
    model = CrfModel.zeros(prep.tagset, prep.index.features, prep.feature_config, prep.labels)
    result = minimize_owlqn(
        lambda w: nll_and_gradient(w, prep.batch, c1, c2),
        np.zeros(model.n_params),
        c1=c1,
        memory=opts.memory,
        max_iterations=opts.max_iterations,
        tolerance=opts.tolerance,
    )
    if not math.isfinite(result.objective):
        raise FloatingPointError(f"training diverged: objective {result.objective}")
    model.unpack(result.x)
    model.meta = {
        "c1": c1,
        "c2": c2,
        "seed": opts.seed,
        "iterations": result.iterations,
        "converged": result.converged,
        "objective": result.objective,
        "objective_history": result.history,
        "version": 1,
    }
    log.info("trained CRF: c1=%g c2=%g iterations=%d objective=%.6g (%s)", c1, c2, result.iterations,
             result.objective, result.message)
    return model


def train(examples, c1: float, c2: float, opts: TrainOptions = TrainOptions(), tagset: TagSet = NUT_TAGS,
          feature_config: FeatureConfig = FeatureConfig()) -> CrfModel:
    """Fit a CRF on (feature sequence, BIO labels) pairs with elastic-net regularisation."""
    return fit(prepare(examples, tagset, feature_config), c1, c2, opts)


def train_documents(docs: Sequence[Document], c1: float = 0.1, c2: float = 0.01, opts: TrainOptions = TrainOptions(),
                    tagset: TagSet = NUT_TAGS, feature_config: FeatureConfig = FeatureConfig()) -> CrfModel:
    return train(document_examples(docs, tagset, feature_config), c1, c2, opts, tagset, feature_config)


def tag_crf(model: CrfModel, doc: Document, tagset: TagSet | None = None) -> list[Annotation]:
    """tokenize -> features -> Viterbi -> BIO repair -> annotations."""
    if tagset is not None and tagset != model.tagset:
        raise ValueError(f"model was trained on tag set {model.tagset.name}, not {tagset.name}")
    tdoc = tokenize(doc.text)
    seqs = []
    for feats in document_features(doc, model.feature_config):
        path, _ = viterbi_scores(model.emissions(feats), model.transition, model.start, model.end)
        seqs.append(repair_bio([model.labels[i] for i in path]))
    return from_bio(tdoc, seqs)


# ---------------------------------------------------------------------------
# Random search
# ---------------------------------------------------------------------------


@dataclass
class SearchResult:
    c1: float
    c2: float
    f1: float
    trials: list[dict] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {"best": {"c1": self.c1, "c2": self.c2, "f1": self.f1}, "trials": self.trials}


def sample_trials(n_trials: int, low: float = 1e-4, high: float = 1e1, seed: int = 0) -> list[tuple[float, float]]:
    """(c1, c2) pairs drawn independently and log-uniformly from [low, high]."""
    if n_trials < 1:
        raise ValueError("n_trials must be >= 1")
    rng = np.random.default_rng(seed)
    exps = rng.uniform(math.log10(low), math.log10(high), size=(n_trials, 2))
    return [(float(10 ** a), float(10 ** b)) for a, b in exps]


_WORKER: dict = {}


def _init_worker(prep, dev, opts):
    _WORKER.update(prep=prep, dev=dev, opts=opts)


def _run_trial(params: tuple[float, float]) -> tuple[float, int]:
    from ..evaluator import entity_prf

    prep, dev, opts = _WORKER["prep"], _WORKER["dev"], _WORKER["opts"]
    model = fit(prep, params[0], params[1], opts)
    gold = {d.doc_id: d.annotations for d in dev}
    pred = {d.doc_id: tag_crf(model, d) for d in dev}
    return entity_prf(gold, pred, prep.tagset).micro.f1, model.meta["iterations"]


def random_search(
    train_docs: Sequence[Document],
    dev_docs: Sequence[Document],
    n_trials: int = 250,
    low: float = 1e-4,
    high: float = 1e1,
    seed: int = 0,
    opts: TrainOptions = TrainOptions(),
    tagset: TagSet = NUT_TAGS,
    feature_config: FeatureConfig = FeatureConfig(),
    jobs: int = 1,
) -> SearchResult:
    """Pick (c1, c2) by dev-set micro entity F1; ties keep the earlier trial."""
    params = sample_trials(n_trials, low, high, seed)
    prep = prepare(document_examples(train_docs, tagset, feature_config), tagset, feature_config)
    dev = list(dev_docs)
    if jobs > 1:
        with ProcessPoolExecutor(jobs, initializer=_init_worker, initargs=(prep, dev, opts)) as pool:
            results = list(pool.map(_run_trial, params))
    else:
        _init_worker(prep, dev, opts)
        results = [_run_trial(p) for p in params]
    trials = []
    best = None
    for i, ((c1, c2), (f1, iters)) in enumerate(zip(params, results)):
        trials.append({"trial": i, "c1": c1, "c2": c2, "f1": f1, "iterations": iters})
        if best is None or f1 > best[2]:
            best = (c1, c2, f1)
    return SearchResult(best[0], best[1], best[2], trials)
