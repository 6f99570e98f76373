"""Command-line entry point: ``deidkit <command> [options]``.

Every command writes its artifacts under ``--out`` together with a
``manifest.json`` recording the command, resolved options, seed and a
checksum per artifact. Exit status: 0 success, 1 usage error, 2 data error.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from functools import partial
from pathlib import Path
from typing import Callable, Sequence

from . import __version__
from .corpus import (
    NAMED_LOCATION_TAGS,
    NUT_TAGS,
    TAGSETS,
    Document,
    StandoffError,
    TagSet,
    dumps_jsonl,
    load_standoff_dir,
    read_jsonl,
    save_standoff_dir,
    select,
    split_corpus,
    tokenize,
)
from .crf import CrfModel, FeatureConfig, TrainOptions, random_search, tag_crf, train_documents
from .evaluator import approx_rand_test, curve_csv, docs_to_map, entity_prf, learning_curve
from .ruletagger import NAMED_LOCATION_MAPPING, RuleConfig, map_tagset, tag_rules
from .surrogate import SurrogatePlan, SurrogateResources, apply_plan, make_plan
from .synthkit import TemplateSet, default_templates, generate_document, separable_templates

log = logging.getLogger("deidkit")

EXIT_OK, EXIT_USAGE, EXIT_DATA = 0, 1, 2

# options that name existing input files or directories
PATH_KEYS = {"input", "train", "dev", "test", "gold", "pred", "pred_a", "pred_b", "model", "plan", "rules_config",
             "resources", "templates", "partition"}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


# ---------------------------------------------------------------------------
# I/O helpers
# ---------------------------------------------------------------------------


def load_corpus(path: str | Path, tagset: TagSet) -> list[Document]:
    """JSONL file or standoff directory, validated against ``tagset``."""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"{path}: no such file or directory")
    if tagset == NAMED_LOCATION_TAGS:
        # accept NUT-16 files and fold the four location tags on the way in
        both = TagSet("NUT-16+named-location", NUT_TAGS.tags + ("Named Location",))
        docs = load_standoff_dir(path, both) if path.is_dir() else read_jsonl(path, both)
        docs = [d.with_annotations(map_tagset(d.annotations, NAMED_LOCATION_MAPPING)) for d in docs]
    else:
        docs = load_standoff_dir(path, tagset) if path.is_dir() else read_jsonl(path, tagset)
    ids = [d.doc_id for d in docs]
    if len(set(ids)) != len(ids):
        raise ValueError(f"{path}: duplicate doc_id")
    return docs


class Output:
    """Collects artifacts for one command and writes the manifest."""

    def __init__(self, directory: str | Path):
        self.dir = Path(directory)
        self.dir.mkdir(parents=True, exist_ok=True)
        self.files: list[Path] = []

    def write(self, name: str, content: str) -> Path:
        path = self.dir / name
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(content, encoding="utf-8", newline="")
        self.files.append(path)
        return path

    def corpus(self, name: str, docs: Sequence[Document], standoff: bool = False) -> None:
        self.write(f"{name}.jsonl", dumps_jsonl(docs))
        if standoff:
            target = self.dir / f"{name}_standoff"
            save_standoff_dir(docs, target)
            self.files.extend(sorted(target.iterdir()))

    def manifest(self, command: str, options: dict) -> None:
        sums = {}
        for f in sorted(set(self.files)):
            sums[f.relative_to(self.dir).as_posix()] = hashlib.sha256(f.read_bytes()).hexdigest()
        manifest = {"tool": "deidkit", "version": __version__, "command": command, "seed": options.get("seed"),
                    "options": options, "artifacts": sums}
        (self.dir / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n",
                                                 encoding="utf-8")


def pmap(fn: Callable, items: Sequence, jobs: int) -> list:
    """Ordered map, in worker processes when ``jobs > 1``; output matches ``jobs == 1``."""
    if jobs <= 1 or len(items) < 2:
        return [fn(x) for x in items]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, items, chunksize=max(1, len(items) // (4 * jobs))))


def _tagset(args) -> TagSet:
    return TAGSETS[args.tagset]


def _rules_tag(doc: Document, cfg: RuleConfig, tagset_name: str) -> list:
    anns = tag_rules(doc, cfg)
    if tagset_name != NUT_TAGS.name:
        anns = map_tagset(anns, NAMED_LOCATION_MAPPING)
    return anns


def _crf_tag(doc: Document, model: CrfModel) -> list:
    return tag_crf(model, doc)


def _rule_config(args) -> RuleConfig:
    return RuleConfig.load(args.rules_config) if args.rules_config else RuleConfig.default()


def _feature_config(args) -> FeatureConfig:
    return FeatureConfig(min_feature_count=args.min_feature_count)


def _train_options(args) -> TrainOptions:
    return TrainOptions(max_iterations=args.max_iterations, tolerance=args.tolerance, seed=args.seed)


def _floats(text: str) -> list[float]:
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------


def cmd_tokenize(args, out: Output) -> dict:
    lines = []
    for doc in load_corpus(args.input, _tagset(args)):
        tdoc = tokenize(doc.text)
        sents = [[[t.start, t.end, t.surface] for t in s] for s in tdoc.sentences]
        lines.append(json.dumps({"doc_id": doc.doc_id, "sentences": sents}, ensure_ascii=False))
    out.write("tokens.jsonl", "".join(line + "\n" for line in lines))
    return {"documents": len(lines)}


def cmd_tag(args, out: Output) -> dict:
    tagset = _tagset(args)
    docs = load_corpus(args.input, tagset)
    if args.engine == "rules":
        fn = partial(_rules_tag, cfg=_rule_config(args), tagset_name=tagset.name)
    else:
        if not args.model:
            raise UsageError("tag --engine crf needs --model")
        model = CrfModel.from_json(Path(args.model).read_text(encoding="utf-8"))
        if model.tagset != tagset:
            raise ValueError(f"{args.model}: model tag set {model.tagset.name} differs from --tagset {tagset.name}")
        fn = partial(_crf_tag, model=model)
    preds = pmap(fn, docs, args.jobs)
    tagged = [d.with_annotations(p) for d, p in zip(docs, preds)]
    out.corpus("predictions", tagged, standoff=args.standoff)
    return {"documents": len(tagged), "annotations": sum(len(p) for p in preds)}


def cmd_train(args, out: Output) -> dict:
    tagset = _tagset(args)
    docs = load_corpus(args.train, tagset)
    model = train_documents(docs, args.c1, args.c2, _train_options(args), tagset, _feature_config(args))
    out.write("model.json", model.to_json())
    return {"iterations": model.meta["iterations"], "converged": model.meta["converged"],
            "features": len(model.features)}


def cmd_search(args, out: Output) -> dict:
    tagset = _tagset(args)
    train_docs = load_corpus(args.train, tagset)
    dev_docs = load_corpus(args.dev, tagset)
    result = random_search(train_docs, dev_docs, args.trials, args.low, args.high, args.seed, _train_options(args),
                           tagset, _feature_config(args), jobs=args.jobs)
    out.write("search.json", json.dumps(result.to_dict(), indent=2, sort_keys=True) + "\n")
    model = train_documents(train_docs, result.c1, result.c2, _train_options(args), tagset, _feature_config(args))
    out.write("model.json", model.to_json())
    return {"c1": result.c1, "c2": result.c2, "dev_f1": result.f1}


def cmd_evaluate(args, out: Output) -> dict:
    tagset = _tagset(args)
    gold = docs_to_map(load_corpus(args.gold, tagset))
    pred = docs_to_map(load_corpus(args.pred, tagset))
    report = entity_prf(gold, pred, tagset)
    out.write("report.json", report.to_json() + "\n")
    out.write("report.txt", report.to_table())
    print(report.to_table(), end="")
    return {"micro_f1": report.micro.f1}


def cmd_sigtest(args, out: Output) -> dict:
    tagset = _tagset(args)
    gold = docs_to_map(load_corpus(args.gold, tagset))
    a = docs_to_map(load_corpus(args.pred_a, tagset))
    b = docs_to_map(load_corpus(args.pred_b, tagset))
    res = approx_rand_test(gold, a, b, args.n, args.seed)
    out.write("sigtest.json", json.dumps(res.to_dict(), indent=2, sort_keys=True) + "\n")
    print(f"F1 A={res.f1_a:.4f} B={res.f1_b:.4f} |delta|={res.observed_delta:.4f} p={res.p_value:.6g}")
    return {"p_value": res.p_value}


def _crf_trainer(units, seed, c1, c2, opts, tagset, fcfg):
    model = train_documents(units, c1, c2, TrainOptions(opts.max_iterations, opts.tolerance, opts.memory, seed),
                            tagset, fcfg)
    return partial(_crf_tag, model=model)


def _rules_trainer(units, seed, cfg, tagset_name):
    return partial(_rules_tag, cfg=cfg, tagset_name=tagset_name)


def cmd_curve(args, out: Output) -> dict:
    tagset = _tagset(args)
    pool = load_corpus(args.train, tagset) + (load_corpus(args.dev, tagset) if args.dev else [])
    test = load_corpus(args.test, tagset)
    if args.engine == "rules":
        trainer = partial(_rules_trainer, cfg=_rule_config(args), tagset_name=tagset.name)
    else:
        trainer = partial(_crf_trainer, c1=args.c1, c2=args.c2, opts=_train_options(args), tagset=tagset,
                          fcfg=_feature_config(args))
    points = learning_curve(pool, test, trainer, args.fractions, tagset, args.samples, args.runs, args.seed)
    out.write("curve.csv", curve_csv(points))
    out.write("curve.json", json.dumps([p.to_dict() for p in points], indent=2, sort_keys=True) + "\n")
    return {"points": len(points)}


def cmd_surrogate(args, out: Output) -> dict:
    tagset = _tagset(args)
    docs = load_corpus(args.input, tagset)
    if args.action == "plan":
        resources = SurrogateResources.load(args.resources)
        plan = make_plan(docs, resources, args.seed)
        out.write("plan.json", plan.to_json() + "\n")
        out.write("review.jsonl", plan.review_jsonl())
        for w in plan.warnings:
            log.warning(w)
        return {"mapped": len(plan.mapping), "review": len(plan.review)}
    if not args.plan:
        raise UsageError("surrogate apply needs --plan")
    plan = SurrogatePlan.from_json(Path(args.plan).read_text(encoding="utf-8"))
    result = pmap(partial(apply_plan, plan=plan), docs, args.jobs)
    out.corpus("surrogates", result, standoff=True)
    return {"documents": len(result)}


def _synth_one(i: int, ts: TemplateSet, seed: int, oov: float, blocks: tuple[int, int], width: int) -> Document:
    import random

    return generate_document(ts, f"synth-{i:0{width}d}", random.Random(f"{seed}-{i}"), oov, blocks)


def cmd_synth(args, out: Output) -> dict:
    if args.n_docs < 1:
        raise UsageError("--n-docs must be >= 1")
    if not 0 <= args.oov_fraction <= 1:
        raise UsageError("--oov-fraction must be in [0, 1]")
    if args.templates:
        ts = TemplateSet.load(args.templates, _tagset(args))
    else:
        ts = separable_templates() if args.separable else default_templates()
    width = max(5, len(str(args.n_docs - 1)))
    fn = partial(_synth_one, ts=ts, seed=args.seed, oov=args.oov_fraction, blocks=(args.min_blocks, args.max_blocks),
                 width=width)
    docs = pmap(fn, list(range(args.n_docs)), args.jobs)
    out.corpus("corpus", docs, standoff=True)
    return {"documents": len(docs), "annotations": sum(len(d.annotations) for d in docs)}


def cmd_split(args, out: Output) -> dict:
    docs = load_corpus(args.input, _tagset(args))
    if len(args.ratios) != 3:
        raise UsageError("--ratios needs three comma-separated values")
    part = split_corpus(docs, tuple(args.ratios), args.seed)
    out.write("partition.json", json.dumps(part.to_dict(), indent=2, sort_keys=True) + "\n")
    for name in ("train", "dev", "test"):
        out.corpus(name, select(docs, getattr(part, name)))
    return {"train": len(part.train), "dev": len(part.dev), "test": len(part.test)}


COMMANDS = {
    "tokenize": cmd_tokenize,
    "tag": cmd_tag,
    "train": cmd_train,
    "search": cmd_search,
    "evaluate": cmd_evaluate,
    "sigtest": cmd_sigtest,
    "curve": cmd_curve,
    "surrogate": cmd_surrogate,
    "synth": cmd_synth,
    "split": cmd_split,
}

# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=0, help="seed for all randomness (default 0)")
    common.add_argument("--jobs", type=int, default=1, help="worker processes (output identical to --jobs 1)")
    common.add_argument("--config", help="JSON file with option defaults; flags override it")
    common.add_argument("--out", default="out", help="output directory (default ./out)")
    common.add_argument("--tagset", choices=sorted(TAGSETS), default=NUT_TAGS.name)
    common.add_argument("-v", "--verbose", action="store_true")

    crf = argparse.ArgumentParser(add_help=False)
    crf.add_argument("--c1", type=float, default=0.1, help="L1 coefficient")
    crf.add_argument("--c2", type=float, default=0.01, help="L2 coefficient")
    crf.add_argument("--max-iterations", type=int, default=200)
    crf.add_argument("--tolerance", type=float, default=1e-6)
    crf.add_argument("--min-feature-count", type=int, default=1)

    p = _Parser(prog="deidkit", description="De-identification of Dutch clinical text.")
    p.add_argument("--version", action="version", version=f"deidkit {__version__}")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("tokenize", parents=[common], help="tokenize and sentence-split a corpus")
    s.add_argument("--input", required=True)

    s = sub.add_parser("tag", parents=[common], help="tag PHI with the rules or a trained CRF")
    s.add_argument("--input", required=True)
    s.add_argument("--engine", choices=("rules", "crf"), default="rules")
    s.add_argument("--model")
    s.add_argument("--rules-config")
    s.add_argument("--standoff", action="store_true", help="also write standoff files")

    s = sub.add_parser("train", parents=[common, crf], help="train a CRF")
    s.add_argument("--train", required=True)

    s = sub.add_parser("search", parents=[common, crf], help="random search over c1, c2 on a dev set")
    s.add_argument("--train", required=True)
    s.add_argument("--dev", required=True)
    s.add_argument("--trials", type=int, default=250)
    s.add_argument("--low", type=float, default=1e-4)
    s.add_argument("--high", type=float, default=1e1)

    s = sub.add_parser("evaluate", parents=[common], help="entity-level precision, recall and F1")
    s.add_argument("--gold", required=True)
    s.add_argument("--pred", required=True)

    s = sub.add_parser("sigtest", parents=[common], help="approximate randomization test of two systems")
    s.add_argument("--gold", required=True)
    s.add_argument("--pred-a", required=True)
    s.add_argument("--pred-b", required=True)
    s.add_argument("--n", type=int, default=9999)

    s = sub.add_parser("curve", parents=[common, crf], help="learning curve over training fractions")
    s.add_argument("--train", required=True)
    s.add_argument("--dev")
    s.add_argument("--test", required=True)
    s.add_argument("--engine", choices=("rules", "crf"), default="crf")
    s.add_argument("--rules-config")
    s.add_argument("--fractions", type=_floats, default=[0.1, 0.25, 0.5, 0.75, 1.0])
    s.add_argument("--samples", type=int, default=3)
    s.add_argument("--runs", type=int, default=3)

    s = sub.add_parser("surrogate", parents=[common], help="plan or apply surrogate replacement")
    s.add_argument("action", choices=("plan", "apply"))
    s.add_argument("--input", required=True)
    s.add_argument("--plan")
    s.add_argument("--resources", help="resource directory (default: $DEIDKIT_RESOURCES or built-in lists)")

    s = sub.add_parser("synth", parents=[common], help="generate a synthetic annotated corpus")
    s.add_argument("--n-docs", type=int, default=100)
    s.add_argument("--oov-fraction", type=float, default=0.0)
    s.add_argument("--templates")
    s.add_argument("--separable", action="store_true")
    s.add_argument("--min-blocks", type=int, default=1)
    s.add_argument("--max-blocks", type=int, default=3)

    s = sub.add_parser("split", parents=[common], help="split a corpus into train/dev/test")
    s.add_argument("--input", required=True)
    s.add_argument("--ratios", type=_floats, default=[0.6, 0.2, 0.2])
    return p


def _config_path(argv: Sequence[str]) -> tuple[str | None, str | None]:
    """(subcommand, --config value) found in ``argv`` without a full parse."""
    command = next((a for a in argv if a in COMMANDS), None)
    for i, a in enumerate(argv):
        if a == "--config" and i + 1 < len(argv):
            return command, argv[i + 1]
        if a.startswith("--config="):
            return command, a.split("=", 1)[1]
    return command, None


def _apply_config(parser: argparse.ArgumentParser, command: str, config: str) -> None:
    """Install defaults from the ``--config`` JSON file on the chosen subcommand."""
    path = Path(config)
    if not path.is_file():
        raise FileNotFoundError(f"{path}: config file not found")
    try:
        cfg = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ValueError(f"{path}:{exc.lineno}: invalid JSON: {exc.msg}")
    if not isinstance(cfg, dict):
        raise ValueError(f"{path}: config must be a JSON object")
    sub = next(a for a in parser._subparsers._group_actions if isinstance(a, argparse._SubParsersAction))
    subparser = sub.choices[command]
    known = {a.dest for a in subparser._actions} - {"help", "config"}
    cfg = {k.replace("-", "_"): v for k, v in cfg.items()}
    unknown = sorted(set(cfg) - known)
    if unknown:
        raise UsageError(f"{path}: unknown config key(s) for {command}: {', '.join(unknown)}")
    base = path.parent
    for key in PATH_KEYS & set(cfg):
        if cfg[key] is not None:
            resolved = Path(cfg[key]) if Path(cfg[key]).is_absolute() else base / cfg[key]
            if not resolved.exists():
                raise FileNotFoundError(f"{path}: {key} path {resolved} does not exist")
            cfg[key] = str(resolved)
    for action in subparser._actions:
        if action.dest in cfg:
            action.required = False
    subparser.set_defaults(**cfg)


def _recorded_options(args) -> dict:
    return {k: v for k, v in sorted(vars(args).items()) if k not in ("out", "jobs", "verbose", "config")}


def main(argv: Sequence[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    command, config = _config_path(argv)
    if command and config:
        try:
            _apply_config(parser, command, config)
        except UsageError as exc:
            print(f"deidkit: usage error: {exc}", file=sys.stderr)
            return EXIT_USAGE
        except (ValueError, OSError) as exc:
            print(f"deidkit: error: {exc}", file=sys.stderr)
            return EXIT_DATA
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        if args.jobs < 1:
            raise UsageError("--jobs must be >= 1")
        out = Output(args.out)
        summary = COMMANDS[args.command](args, out)
        out.manifest(args.command, {**_recorded_options(args), "summary": summary})
    except UsageError as exc:
        print(f"deidkit: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ValueError, KeyError, OSError, StandoffError, FloatingPointError) as exc:
        print(f"deidkit: error: {exc}", file=sys.stderr)
        return EXIT_DATA
    return EXIT_OK


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
