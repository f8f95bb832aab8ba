import math

import numpy as np
import pytest

import oracles
from fedsim.core import ParamVector
from fedsim.engine import RoundConfig, centralized_train
from fedsim.errors import ConfigError, LayoutError, NumericalError
from fedsim.optim import ClientOptConfig
from fedsim.tasks import (
    FeatureSet,
    SyntheticTCConfig,
    TaggingConfig,
    TaggingTask,
    TextClassificationTask,
    accuracy,
    bio_decode,
    bio_encode,
    generate_tagging_dataset,
    generate_tc_dataset,
    load_manifest,
    save_manifest,
    span_f1,
    token_f1,
)


def rel_err(a, b):
    return np.linalg.norm(a - b) / max(np.linalg.norm(a), np.linalg.norm(b), 1e-300)


def fd_check(task, batch, model, h=1e-5):
    _, g = task.loss_and_grad(model, batch)

    def f(w):
        return task.loss_and_grad(ParamVector(model.layout, w), batch)[0]

    return rel_err(oracles.numeric_grad(f, model.values.copy(), h), g.values)


# generators


def test_tc_generator_deterministic_and_balanced():
    cfg = SyntheticTCConfig(n_classes=7, n_train=500, n_test=101, seed=3)
    a, at = generate_tc_dataset(cfg)
    b, _ = generate_tc_dataset(cfg)
    assert all(np.array_equal(x, y) for x, y in zip(a.docs, b.docs))
    for split in (a, at):
        counts = np.bincount(split.labels, minlength=7)
        assert counts.max() - counts.min() <= 1
    lengths = [len(d) for d in a.docs]
    assert min(lengths) >= cfg.doc_min and max(lengths) <= cfg.doc_max


def test_tc_generator_config_checks():
    with pytest.raises(ConfigError):
        SyntheticTCConfig(n_classes=1)
    with pytest.raises(ConfigError):
        SyntheticTCConfig(doc_min=10, doc_max=5)


def train_eval(cfg, rounds=3, lr=1.0):
    train, test = generate_tc_dataset(cfg)
    task = TextClassificationTask(cfg.n_classes, feature_dim=256, feature_seed=cfg.seed)
    rc = RoundConfig(total_rounds=rounds, batch_size=10, client_opt=ClientOptConfig("sgd", lr=lr))
    _, rec = centralized_train(task.featurize(train), rc, task, test=task.featurize(test))
    return rec[-1].eval_metrics["accuracy"]


def test_tiny_skew_is_separable():
    assert train_eval(SyntheticTCConfig(n_classes=2, skew=0.01, n_train=1000, n_test=400, seed=4)) > 0.95


def test_huge_skew_has_no_signal():
    acc = train_eval(SyntheticTCConfig(n_classes=20, skew=1e6, n_train=2000, n_test=2000, seed=5))
    assert abs(acc - 1 / 20) <= 0.05


def test_natural_groups():
    train, _ = generate_tc_dataset(SyntheticTCConfig(n_train=100, n_test=10, n_groups=4))
    assert np.array_equal(train.groups, train.labels % 4)


def test_tagging_generator():
    cfg = TaggingConfig(n_train=200, n_test=50, seed=2)
    assert cfg.tag_vocab == 37
    train, _ = generate_tagging_dataset(cfg)
    for s, t in zip(train.sentences, train.tags):
        assert len(s) == len(t) and cfg.sent_min <= len(s)
        assert t.min() >= 0 and t.max() < 37
        # every I follows a B or I of the same type
        for i in np.flatnonzero((t > 0) & (t % 2 == 0)):
            assert i > 0 and t[i - 1] in (t[i] - 1, t[i])
    all_tags = np.concatenate(train.tags)
    assert np.any(all_tags == 0) and np.any(all_tags > 0)


def test_manifest_round_trip(tmp_path):
    tr, te = generate_tc_dataset(SyntheticTCConfig(n_train=30, n_test=10, n_groups=3))
    save_manifest(tmp_path / "tc.json", tr, te)
    task, tr2, te2 = load_manifest(tmp_path / "tc.json")
    assert task == "tc" and np.array_equal(tr2.labels, tr.labels) and np.array_equal(tr2.groups, tr.groups)
    assert all(np.array_equal(a, b) for a, b in zip(te2.docs, te.docs))
    sr, se = generate_tagging_dataset(TaggingConfig(n_train=20, n_test=5))
    save_manifest(tmp_path / "st.json", sr, se)
    task, sr2, _ = load_manifest(tmp_path / "st.json")
    assert task == "st" and all(np.array_equal(a, b) for a, b in zip(sr2.tags, sr.tags))


# text classification loss


def test_zero_weights_give_log_l(tc_small):
    _, _, task, x, _ = tc_small
    loss, _ = task.loss_and_grad(task.model_init(), x.take(np.arange(50)))
    assert loss == pytest.approx(math.log(20), abs=1e-14)


def test_gradient_linear_in_features(tc_small):
    _, _, task, x, _ = tc_small
    b = x.take(np.arange(8))
    _, g1 = task.loss_and_grad(task.model_init(), b)
    _, g2 = task.loss_and_grad(task.model_init(), FeatureSet(2 * b.x, b.y))
    w = task.layout.offsets()["weight"]
    assert np.allclose(g2.values[w], 2 * g1.values[w], rtol=0, atol=1e-15)
    assert np.array_equal(g2.block("bias"), g1.block("bias"))


def test_non_finite_features_raise(tc_small):
    _, _, task, x, _ = tc_small
    bad = FeatureSet(np.full((2, 64), np.inf), np.array([0, 1]))
    with pytest.raises(NumericalError):
        task.loss_and_grad(task.model_init(), bad)


def test_single_example_gradient(rng):
    task = TextClassificationTask(4, feature_dim=16)
    model = ParamVector(task.layout, rng.standard_normal(task.layout.total_len))
    batch = FeatureSet(rng.standard_normal((1, 16)), np.array([2]))
    assert fd_check(task, batch, model) < 1e-6


def test_tc_gradient_random_draws(rng):
    task = TextClassificationTask(5, feature_dim=12)
    for _ in range(25):
        model = ParamVector(task.layout, rng.standard_normal(task.layout.total_len))
        n = int(rng.integers(1, 9))
        batch = FeatureSet(rng.standard_normal((n, 12)), rng.integers(0, 5, size=n))
        assert fd_check(task, batch, model) < 1e-6


def test_tagging_gradient_random_draws(rng):
    task = TaggingTask(7, feature_dim=10)
    for _ in range(25):
        model = ParamVector(task.layout, rng.standard_normal(task.layout.total_len))
        lengths = rng.integers(1, 6, size=int(rng.integers(1, 4)))
        offsets = np.concatenate([[0], np.cumsum(lengths)])
        batch = FeatureSet(rng.standard_normal((offsets[-1], 10)), rng.integers(0, 7, size=offsets[-1]), offsets)
        assert fd_check(task, batch, model) < 1e-6


def test_tagging_task_end_to_end():
    train, test = generate_tagging_dataset(TaggingConfig(entity_vocab=10, seed=1))
    task = TaggingTask(train.n_tags, feature_dim=1024, feature_seed=1)
    x = task.featurize(train)
    assert x.n_rows == sum(len(s) for s in train.sentences) and len(x) == 3000
    rc = RoundConfig(total_rounds=3, batch_size=10, client_opt=ClientOptConfig("adamw", lr=0.05))
    _, rec = centralized_train(x, rc, task, test=task.featurize(test))
    m = rec[-1].eval_metrics
    assert set(m) == {"accuracy", "token_f1", "span_f1", "loss"}
    assert m["token_f1"] > 0.45 and m["span_f1"] > 0.25
    labels = task.labels(train)
    assert labels.shape == (3000,) and labels.max() <= 18


# metrics


def test_perfect_predictions():
    tags = np.array([0, 1, 2, 0, 3, 0])
    assert accuracy(tags, tags) == token_f1(tags, tags) == 1.0
    assert span_f1(bio_decode(tags), bio_decode(tags)) == 1.0


def test_no_predicted_spans():
    assert span_f1([], [(0, 2, 1)]) == 0.0


def test_span_f1_half():
    gold = [(0, 2, 0), (4, 5, 1)]
    pred = [(0, 2, 0), (6, 8, 2)]
    assert span_f1(pred, gold) == pytest.approx(0.5, abs=1e-15)


def test_token_f1_micro():
    gold = np.array([1, 2, 0, 0, 3])
    pred = np.array([1, 0, 0, 3, 3])
    # tp = 2, predicted entities = 3, gold entities = 3
    assert token_f1(pred, gold) == pytest.approx(2 / 3)


def test_length_mismatch():
    with pytest.raises(LayoutError):
        accuracy([1, 2], [1])
    with pytest.raises(LayoutError):
        token_f1([1, 2], [1])


def test_metrics_permutation_invariant(rng):
    p = rng.integers(0, 5, size=200)
    g = rng.integers(0, 5, size=200)
    perm = rng.permutation(200)
    assert accuracy(p, g) == accuracy(p[perm], g[perm])
    assert token_f1(p, g) == token_f1(p[perm], g[perm])
    spans_p = [bio_decode(p[i:i + 10]) for i in range(0, 200, 10)]
    spans_g = [bio_decode(g[i:i + 10]) for i in range(0, 200, 10)]
    order = rng.permutation(20)
    assert span_f1(spans_p, spans_g) == span_f1([spans_p[i] for i in order], [spans_g[i] for i in order])


def test_bio_round_trip(rng):
    for _ in range(200):
        n = int(rng.integers(1, 20))
        spans, i = [], 0
        while i < n:
            if rng.random() < 0.4:
                end = min(n, i + int(rng.integers(1, 4)))
                spans.append((i, end, int(rng.integers(0, 18))))
                i = end
            else:
                i += 1
        tags = bio_encode(spans, n)
        assert bio_decode(tags) == spans
        assert np.array_equal(bio_encode(bio_decode(tags), n), tags)


def test_stray_inside_tag_opens_span():
    # I-type0 with no preceding B, then I-type1 right after type0
    assert bio_decode([0, 2, 2, 4, 0]) == [(1, 3, 0), (3, 4, 1)]
