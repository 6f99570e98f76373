import json

import numpy as np
import pytest
from hypothesis import given, strategies as st

from deidkit.corpus import NUT_TAGS, Document, TagSet, is_valid_bio, make_annotation
from deidkit.crf import (
    Batch,
    CrfModel,
    FeatureConfig,
    TrainOptions,
    build_feature_index,
    extract_features,
    forward_backward,
    forward_backward_scores,
    minimize_owlqn,
    nll_and_gradient,
    path_score,
    pseudo_gradient,
    random_search,
    sample_trials,
    tag_crf,
    train,
    train_documents,
    viterbi,
    viterbi_scores,
    word_shape,
)
from deidkit.synthkit import generate_corpus, separable_templates

from oracles import brute_force, crf_oracle_error, finite_difference_error, random_crf

TINY = TagSet("tiny", ("Name",))


# --- features --------------------------------------------------------------


def test_word_shape():
    assert word_shape("7534-Df") == "####-Aa"
    assert "shape=####-Aa" in extract_features(["7534-Df"])[0]


def test_affixes_short_token():
    feats = extract_features(["Ja", "."])[0]
    assert {"pre1=j", "suf1=a", "pre2=ja", "suf2=ja"} <= set(feats)
    assert not any(f.startswith(("pre3", "suf3")) for f in feats)


def test_window_sentinels():
    feats = extract_features(["Jan", "belde"])[0]
    assert "w[-1]=BOS" in feats and "w[-2]=BOS2" in feats
    assert "w[0]=jan" in feats and "w[1]=belde" in feats
    last = extract_features(["Jan", "belde"])[1]
    assert "w[1]=EOS" in last and "w[2]=EOS2" in last


def test_ngram_and_flags():
    feats = extract_features(["Dhr", "Jansen", "belde"])[1]
    assert "w[-1]|w[0]=dhr|jansen" in feats and "cap" in feats and "ascii" in feats
    assert extract_features(["NUT"])[0].count("allcaps") == 1


def test_pos_ner_groups_only_with_attrs():
    plain = extract_features(["Jan"])[0]
    assert not any(f.startswith(("p[", "wp[", "ner=")) for f in plain)
    rich = extract_features(["Jan"], attrs={"pos": ["N"], "ner": ["PER"]})[0]
    assert "p[0]=N" in rich and "ner=PER" in rich and "wp[0]=jan|N" in rich
    with pytest.raises(ValueError):
        extract_features(["Jan", "x"], attrs={"pos": ["N"]})


def test_sentence_features():
    feats = extract_features(["Hij", "(", "slaapt", "."])[0]
    assert {"slen=<=5", "endmark=true", "unbal=true"} <= set(feats)


@given(st.lists(st.text(min_size=1, max_size=8), min_size=1, max_size=8))
def test_features_nonempty_unique_pure(tokens):
    feats = extract_features(tokens)
    assert len(feats) == len(tokens)
    for fs in feats:
        assert len(fs) == len(set(fs)) and all(fs)
    assert extract_features(tokens) == feats


def test_feature_config_validation():
    with pytest.raises(ValueError):
        FeatureConfig(window=(1, 2))
    with pytest.raises(ValueError):
        FeatureConfig(affix_max=0)
    cfg = FeatureConfig(groups=("shapes", "bow"))
    assert FeatureConfig.from_dict(json.loads(json.dumps(cfg.to_dict()))) == cfg


def test_feature_index():
    data = [[["a", "b"], ["a"]], [["c"]]]
    idx = build_feature_index(data, 1)
    assert idx.features == ["a", "b", "c"]
    assert build_feature_index(data, 2).features == ["a"]
    assert build_feature_index(list(reversed(data)), 1).features == idx.features
    with pytest.raises(ValueError):
        build_feature_index([], 1)
    assert idx.encode([["a", "zzz"]]) == [[0]]


# --- inference -------------------------------------------------------------


def test_zero_weights_partition_and_uniform_marginals():
    T, L = 4, 3
    z = np.zeros
    log_z, unary, pair = forward_backward_scores(z((T, L)), z((L, L)), z(L), z(L))
    assert log_z == pytest.approx(T * np.log(L), abs=1e-12)
    assert np.allclose(unary, 1 / L)
    path, _ = viterbi_scores(z((T, L)), z((L, L)), z(L), z(L))
    assert path == [0] * T


def test_length_one_partition():
    E = np.array([[0.3, -1.0, 2.0]])
    log_z, _, _ = forward_backward_scores(E, np.zeros((3, 3)), np.zeros(3), np.zeros(3))
    assert log_z == pytest.approx(np.logaddexp.reduce(E[0]), abs=1e-12)


def test_brute_force_oracle():
    rng = np.random.default_rng(1)
    for _ in range(60):
        assert crf_oracle_error(*random_crf(rng)) < 1e-8


def test_marginals_consistent():
    rng = np.random.default_rng(2)
    for _ in range(30):
        E, A, s, e = random_crf(rng)
        _, unary, pair = forward_backward_scores(E, A, s, e)
        assert np.allclose(unary.sum(1), 1, atol=1e-9)
        if len(E) > 1:
            assert np.allclose(pair.sum(2), unary[:-1], atol=1e-9)
            assert np.allclose(pair.sum(1), unary[1:], atol=1e-9)


def test_viterbi_ties_lowest_index():
    E = np.array([[1.0, 1.0, 0.0], [0.0, 2.0, 2.0]])
    path, _ = viterbi_scores(E, np.zeros((3, 3)), np.zeros(3), np.zeros(3))
    assert path == [0, 1]
    # agrees with the brute-force argmax, which also picks the first maximum in lexicographic order
    assert path == brute_force(E, np.zeros((3, 3)), np.zeros(3), np.zeros(3))[2]


def test_dominant_emission():
    model = CrfModel.zeros(NUT_TAGS, ["cue"])
    model.emission[0, model.labels.index("B-Name")] = 10.0
    assert viterbi(model, [["x"], ["cue"], []]) == ["O", "B-Name", "O"]
    _, unary, _ = forward_backward(model, [["cue"]])
    assert unary[0].argmax() == model.labels.index("B-Name")


# --- objective -------------------------------------------------------------


def test_zero_weight_nll():
    batch = Batch([[[0], [1]], [[1]]], [[0, 1], [2]], 2, 3)
    f, _ = nll_and_gradient(np.zeros(2 * 3 + 9 + 6), batch)
    assert f == pytest.approx(3 * np.log(3), abs=1e-12)


def test_gradient_matches_finite_differences():
    rng = np.random.default_rng(3)
    for _ in range(15):
        assert finite_difference_error(rng) < 1e-5


def test_objective_matches_brute_force_nll():
    rng = np.random.default_rng(4)
    for _ in range(10):
        F, L = 4, 3
        enc = [[sorted(rng.choice(F, 2, replace=False).tolist()) for _ in range(int(rng.integers(1, 5)))]
               for _ in range(2)]
        ys = [rng.integers(0, L, len(x)).tolist() for x in enc]
        batch = Batch(enc, ys, F, L)
        w = rng.normal(size=F * L + L * L + 2 * L)
        c1, c2 = 0.2, 0.3
        f, _ = nll_and_gradient(w, batch, c1, c2)
        em = w[:F * L].reshape(F, L)
        A = w[F * L:F * L + L * L].reshape(L, L)
        s, e = w[F * L + L * L:F * L + L * L + L], w[F * L + L * L + L:]
        ref = c1 * np.abs(w).sum() + c2 * (w ** 2).sum()
        for seq, y in zip(enc, ys):
            E = np.array([em[idx].sum(0) for idx in seq])
            ref += brute_force(E, A, s, e)[0] - path_score(E, A, s, e, y)
        assert f == pytest.approx(ref, abs=1e-9)


def test_stationary_at_optimum():
    # one feature per token, labels fully determined: c2 keeps the optimum finite
    batch = Batch([[[0], [1]], [[1], [0]]], [[0, 1], [1, 0]], 2, 2)
    res = minimize_owlqn(lambda w: nll_and_gradient(w, batch, 0.0, 0.5), np.zeros(2 * 2 + 4 + 4),
                         max_iterations=500, tolerance=1e-14)
    _, g = nll_and_gradient(res.x, batch, 0.0, 0.5)
    assert np.linalg.norm(g) < 1e-5


# --- optimiser -------------------------------------------------------------


def test_owlqn_lasso_soft_threshold():
    # separable quadratic: argmin 0.5*a*(x-b)^2 + c1|x| = soft-threshold(b, c1/a)
    a = np.array([1.0, 2.0, 0.5, 4.0, 1.0])
    b = np.array([3.0, -0.2, 0.1, -5.0, 0.0])
    c1 = 0.5
    fun = lambda x: (0.5 * float(a @ (x - b) ** 2) + c1 * float(np.abs(x).sum()), a * (x - b))
    res = minimize_owlqn(fun, np.zeros(5), c1=c1, tolerance=1e-14, max_iterations=500)
    expected = np.sign(b) * np.maximum(np.abs(b) - c1 / a, 0)
    assert np.allclose(res.x, expected, atol=1e-6)
    assert np.count_nonzero(res.x == 0.0) == np.count_nonzero(expected == 0.0)
    assert all(x >= y - 1e-12 for x, y in zip(res.history, res.history[1:]))


def test_pseudo_gradient():
    x = np.array([0.0, 0.0, 0.0, 1.0])
    g = np.array([2.0, -2.0, 0.5, 0.0])
    assert np.allclose(pseudo_gradient(x, g, 1.0), [1.0, -1.0, 0.0, 1.0])


# --- training --------------------------------------------------------------


def _toy_examples():
    return [
        ([["cue"], ["x"]], ["B-Name", "O"]),
        ([["y"], ["cue"], ["cont"]], ["O", "B-Name", "I-Name"]),
        ([["x"], ["y"]], ["O", "O"]),
    ]


def test_train_separable_and_deterministic():
    opts = TrainOptions(max_iterations=100)
    m1 = train(_toy_examples(), 0.01, 0.01, opts, TINY)
    m2 = train(_toy_examples(), 0.01, 0.01, opts, TINY)
    assert m1.to_json() == m2.to_json()
    for feats, labels in _toy_examples():
        assert viterbi(m1, feats) == labels
    hist = m1.meta["objective_history"]
    assert all(x >= y - 1e-9 for x, y in zip(hist, hist[1:]))


def test_train_l1_sparsity():
    m = train(_toy_examples(), 10.0, 0.0, TrainOptions(), TINY)
    w = m.pack()
    assert np.count_nonzero(w == 0.0) >= 0.5 * w.size


def test_train_rejects_bad_input():
    with pytest.raises(ValueError):
        train([], 0.1, 0.1)
    with pytest.raises(ValueError, match="BIO"):
        train([([["a"]], ["I-Name"])], 0.1, 0.1, tagset=TINY)
    with pytest.raises(ValueError):
        TrainOptions(max_iterations=0)


def test_model_json_roundtrip():
    m = train(_toy_examples(), 0.01, 0.01, TrainOptions(max_iterations=30), TINY)
    back = CrfModel.from_json(m.to_json())
    assert back.to_json() == m.to_json()
    for feats, _ in _toy_examples():
        assert viterbi(back, feats) == viterbi(m, feats)
    assert np.array_equal(back.pack(), m.pack())
    data = json.loads(m.to_json())
    assert {"version", "tagset", "feature_config", "label_alphabet", "features", "weights", "transitions",
            "meta"} <= set(data)


@pytest.fixture(scope="module")
def separable():
    return generate_corpus(separable_templates(), 40, seed=2)


@pytest.fixture(scope="module")
def separable_model(separable):
    return train_documents(separable[:30], 0.05, 0.01, TrainOptions(max_iterations=100))


def test_tag_crf_recovers_separable_gold(separable, separable_model):
    for doc in separable[30:]:
        assert sorted(tag_crf(separable_model, doc)) == sorted(doc.annotations)


def test_tag_crf_edge_cases(separable_model):
    assert tag_crf(separable_model, Document("e", "")) == []
    with pytest.raises(ValueError):
        tag_crf(separable_model, Document("e", "x"), TINY)


def test_sample_trials():
    trials = sample_trials(500, seed=3)
    assert trials == sample_trials(500, seed=3) and trials != sample_trials(500, seed=4)
    assert all(1e-4 <= v <= 1e1 for pair in trials for v in pair)
    logs = np.log10(np.array(trials))
    assert abs(logs.mean() - (-1.5)) < 0.2  # midpoint of the log range
    with pytest.raises(ValueError):
        sample_trials(0)


def test_random_search(separable):
    opts = TrainOptions(max_iterations=20)
    one = random_search(separable[:10], separable[10:14], n_trials=1, seed=5, opts=opts)
    assert (one.c1, one.c2) == sample_trials(1, seed=5)[0]
    res = random_search(separable[:10], separable[10:14], n_trials=3, seed=5, opts=opts)
    assert res.to_dict() == random_search(separable[:10], separable[10:14], n_trials=3, seed=5, opts=opts).to_dict()
    best = max(res.trials, key=lambda t: t["f1"])
    first = next(t for t in res.trials if t["f1"] == best["f1"])
    assert (res.c1, res.c2) == (first["c1"], first["c2"])
