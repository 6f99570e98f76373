"""Learning curves for the CRF and the rule tagger on a synthetic corpus.

    python scripts/learning_curve.py --n-docs 150 --oov-fraction 0.5 --out curve.csv

Each point trains on a fraction of the train+dev sentences (3 samples x 3
runs) and scores micro entity F1 on the test split. The rule tagger does not
learn, so its line is flat: it is the baseline the CRF has to cross.
"""

from __future__ import annotations

import argparse
import csv
import time
from dataclasses import asdict, dataclass

from deidkit.corpus import NUT_TAGS, select, split_corpus
from deidkit.crf import TrainOptions, tag_crf, train_documents
from deidkit.evaluator import learning_curve
from deidkit.ruletagger import RuleConfig, tag_rules
from deidkit.synthkit import default_templates, generate_corpus


@dataclass
class CurveConfig:
    n_docs: int = 150
    oov_fraction: float = 0.5
    seed: int = 0
    c1: float = 0.1
    c2: float = 0.01
    max_iterations: int = 100
    fractions: str = "0.05,0.1,0.25,0.5,1.0"
    samples: int = 3
    runs: int = 3
    out: str = "learning_curve.csv"


def main(cfg: CurveConfig) -> None:
    docs = generate_corpus(default_templates(), cfg.n_docs, cfg.seed, cfg.oov_fraction)
    part = split_corpus(docs, (0.6, 0.2, 0.2), cfg.seed)
    pool = select(docs, part.train) + select(docs, part.dev)
    test = select(docs, part.test)
    fractions = [float(f) for f in cfg.fractions.split(",")]

    def crf_trainer(units, seed):
        model = train_documents(units, cfg.c1, cfg.c2, TrainOptions(cfg.max_iterations, seed=seed))
        return lambda doc: tag_crf(model, doc)

    rules = RuleConfig.default()
    engines = {"crf": crf_trainer, "rules": lambda units, seed: (lambda doc: tag_rules(doc, rules))}

    rows = []
    for name, trainer in engines.items():
        t0 = time.perf_counter()
        for p in learning_curve(pool, test, trainer, fractions, NUT_TAGS, cfg.samples, cfg.runs, cfg.seed):
            rows.append([name, p.fraction, p.mean, p.ci, len(p.scores)])
            print(f"{name:<6} {p.fraction:>5.2f}  F1 {p.mean:.4f} +/- {p.ci:.4f}  (n={len(p.scores)})")
        print(f"{name}: {time.perf_counter() - t0:.1f}s")

    with open(cfg.out, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["engine", "fraction", "mean_f1", "ci95", "n_scores"])
        w.writerows(rows)
    print(f"wrote {cfg.out}")


if __name__ == "__main__":
    defaults = CurveConfig()
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    for key, value in asdict(defaults).items():
        parser.add_argument("--" + key.replace("_", "-"), type=type(value), default=value)
    main(CurveConfig(**vars(parser.parse_args())))
