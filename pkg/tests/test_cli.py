import json
import subprocess
import sys

import pytest

from deidkit.cli import main
from deidkit.corpus import Document, read_jsonl, write_jsonl
from deidkit.surrogate import SurrogatePlan


def run(*argv):
    try:
        return main([str(a) for a in argv])
    except SystemExit as exc:  # argparse usage errors
        return exc.code


@pytest.fixture(scope="module")
def corpus(tmp_path_factory):
    out = tmp_path_factory.mktemp("synth")
    assert run("synth", "--n-docs", 10, "--seed", 3, "--out", out) == 0
    return out / "corpus.jsonl"


def manifest(d):
    return json.loads((d / "manifest.json").read_text())


def test_synth_writes_corpus_standoff_and_manifest(corpus):
    d = corpus.parent
    m = manifest(d)
    assert m["command"] == "synth" and m["seed"] == 3
    assert "corpus.jsonl" in m["artifacts"] and any(k.startswith("corpus_standoff/") for k in m["artifacts"])
    assert len(read_jsonl(corpus)) == 10


def test_split_sizes(corpus, tmp_path):
    assert run("split", "--input", corpus, "--ratios", "0.6,0.2,0.2", "--seed", 42, "--out", tmp_path) == 0
    assert [len(read_jsonl(tmp_path / f"{n}.jsonl")) for n in ("train", "dev", "test")] == [6, 2, 2]
    part = json.loads((tmp_path / "partition.json").read_text())
    assert part["seed"] == 42


def test_evaluate_identical_files(corpus, tmp_path, capsys):
    assert run("evaluate", "--gold", corpus, "--pred", corpus, "--out", tmp_path) == 0
    report = json.loads((tmp_path / "report.json").read_text())
    assert report["micro"]["f1"] == 1.0
    assert "micro" in capsys.readouterr().out


def test_evaluate_accepts_standoff_predictions(corpus, tmp_path):
    assert run("evaluate", "--gold", corpus, "--pred", corpus.parent / "corpus_standoff", "--out", tmp_path) == 0
    assert json.loads((tmp_path / "report.json").read_text())["micro"]["f1"] == 1.0


def test_sigtest_deterministic(corpus, tmp_path):
    assert run("tag", "--input", corpus, "--out", tmp_path / "rules") == 0
    pred = tmp_path / "rules" / "predictions.jsonl"
    ps = []
    for k in range(2):
        assert run("sigtest", "--gold", corpus, "--pred-a", corpus, "--pred-b", pred, "--n", 999, "--seed", 1,
                   "--out", tmp_path / f"s{k}") == 0
        ps.append(json.loads((tmp_path / f"s{k}" / "sigtest.json").read_text())["p_value"])
    assert ps[0] == ps[1] and 0 < ps[0] <= 1


def test_tag_jobs_identical(corpus, tmp_path):
    assert run("tag", "--input", corpus, "--standoff", "--out", tmp_path / "a") == 0
    assert run("tag", "--input", corpus, "--standoff", "--jobs", 2, "--out", tmp_path / "b") == 0
    assert manifest(tmp_path / "a")["artifacts"] == manifest(tmp_path / "b")["artifacts"]


def test_tag_named_location_tagset(corpus, tmp_path):
    assert run("tag", "--input", corpus, "--tagset", "NUT-named-location", "--out", tmp_path) == 0
    tags = {a.tag for d in read_jsonl(tmp_path / "predictions.jsonl") for a in d.annotations}
    assert not tags & {"Hospital", "Care Institute", "Organization", "Internal Location"}


def test_train_and_tag_crf(corpus, tmp_path):
    assert run("train", "--train", corpus, "--max-iterations", 15, "--out", tmp_path / "m") == 0
    model = tmp_path / "m" / "model.json"
    assert run("tag", "--input", corpus, "--engine", "crf", "--model", model, "--out", tmp_path / "t") == 0
    assert len(read_jsonl(tmp_path / "t" / "predictions.jsonl")) == 10
    assert run("tag", "--input", corpus, "--engine", "crf", "--out", tmp_path / "u") == 1


def test_surrogate_plan_apply(corpus, tmp_path):
    assert run("surrogate", "plan", "--input", corpus, "--seed", 5, "--out", tmp_path / "p") == 0
    plan = tmp_path / "p" / "plan.json"
    SurrogatePlan.from_json(plan.read_text())
    assert (tmp_path / "p" / "review.jsonl").exists()
    assert run("surrogate", "apply", "--input", corpus, "--plan", plan, "--out", tmp_path / "a") == 0
    out = read_jsonl(tmp_path / "a" / "surrogates.jsonl")
    assert [d.doc_id for d in out] == [d.doc_id for d in read_jsonl(corpus)]
    assert run("surrogate", "apply", "--input", corpus, "--out", tmp_path / "b") == 1


def test_surrogate_resources_env(corpus, tmp_path, monkeypatch):
    monkeypatch.setenv("DEIDKIT_RESOURCES", str(tmp_path / "nowhere"))
    assert run("surrogate", "plan", "--input", corpus, "--out", tmp_path / "p") == 2


def test_curve_rules(corpus, tmp_path):
    assert run("curve", "--train", corpus, "--test", corpus, "--engine", "rules", "--fractions", "0.5,1.0",
               "--out", tmp_path) == 0
    points = json.loads((tmp_path / "curve.json").read_text())
    assert [len(p["scores"]) for p in points] == [9, 9]
    assert points[0]["mean"] == points[1]["mean"]


def test_tokenize(corpus, tmp_path):
    assert run("tokenize", "--input", corpus, "--out", tmp_path) == 0
    first = json.loads((tmp_path / "tokens.jsonl").read_text().splitlines()[0])
    assert first["sentences"] and len(first["sentences"][0][0]) == 3


def test_usage_errors(corpus, tmp_path):
    assert run() == 1
    assert run("bogus") == 1
    assert run("split", "--out", tmp_path) == 1  # missing --input
    assert run("split", "--input", corpus, "--ratios", "0.5,0.5", "--out", tmp_path) == 1
    assert run("synth", "--n-docs", 0, "--out", tmp_path) == 1
    assert run("synth", "--oov-fraction", 2, "--out", tmp_path) == 1
    assert run("tag", "--input", corpus, "--jobs", 0, "--out", tmp_path) == 1


def test_data_errors(tmp_path, capsys):
    assert run("tag", "--input", tmp_path / "missing.jsonl", "--out", tmp_path) == 2
    bad = tmp_path / "bad.jsonl"
    bad.write_text('{"doc_id": "x", "text": "abc", "annotations": [{"start": 0, "end": 2, "tag": "Nope"}]}\n')
    assert run("tag", "--input", bad, "--out", tmp_path) == 2
    assert "bad.jsonl:1" in capsys.readouterr().err
    assert run("split", "--input", bad.with_name("x.jsonl"), "--out", tmp_path) == 2


def test_config_file(corpus, tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"input": str(corpus), "seed": 42, "ratios": "0.6,0.2,0.2"}))
    assert run("split", "--config", cfg, "--out", tmp_path / "o") == 0
    assert manifest(tmp_path / "o")["seed"] == 42
    assert run("split", "--config", cfg, "--seed", 7, "--out", tmp_path / "o2") == 0
    assert manifest(tmp_path / "o2")["seed"] == 7
    cfg.write_text(json.dumps({"input": str(corpus), "colour": "blue"}))
    assert run("split", "--config", cfg, "--out", tmp_path / "o3") == 1
    cfg.write_text(json.dumps({"input": "does-not-exist.jsonl"}))
    assert run("split", "--config", cfg, "--out", tmp_path / "o4") == 2
    assert run("split", "--config", tmp_path / "nope.json", "--out", tmp_path / "o5") == 2


def test_module_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "deidkit", "synth", "--n-docs", "2", "--out", str(tmp_path)],
                          capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
    proc = subprocess.run([sys.executable, "-m", "deidkit", "split"], capture_output=True, text=True)
    assert proc.returncode == 1
