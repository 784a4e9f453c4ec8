"""Embedded bag-of-embeddings classifier: forward pass, losses, analytic
gradients (checked against central finite differences), saliency, training,
temperature fitting, and parameter serialization."""

import math

import numpy as np
import pytest

from saladbench import toyclf
from saladbench.corpus import Dataset, Example, LabelSet, TextInput
from saladbench.errors import ArgumentError, DegenerateInputError
from saladbench.toyclf import (LossConfig, ToyModelParams, TrainConfig,
                               build_vocab, fit_temperature, forward, grad,
                               init_params, load_params, loss, nll,
                               saliency, save_params, train, with_temperature)

LABELS = LabelSet(("negative", "positive"))


def tiny_params(emb_a=1.0, w=((math.log(0.8), math.log(0.2)),), b=(0.0, 0.0),
                temperature=1.0):
    """1-d single-task model over vocab (<unk>, a) with hand-set weights."""
    return ToyModelParams(
        vocab=("<unk>", "a"),
        emb=np.array([[0.0], [emb_a]]),
        w=np.array(w, dtype=float).reshape(1, -1),
        b=np.array(b, dtype=float),
        temperature=temperature,
        task_kind="single",
    )


def random_model(rng, task_kind="single", n_classes=3, dim=3, vocab_size=6):
    vocab = ("<unk>",) + tuple(f"w{i}" for i in range(vocab_size - 1))
    k = 2 if task_kind == "pair" else 1
    return ToyModelParams(
        vocab,
        rng.normal(0.0, 0.5, size=(vocab_size, dim)),
        rng.normal(0.0, 0.5, size=(k * dim, n_classes)),
        rng.normal(0.0, 0.5, size=n_classes),
        1.0,
        task_kind,
    )


def random_example(rng, params, ex_id="e"):
    words = list(params.vocab[1:]) + ["oov"]
    def side():
        n = rng.integers(2, 6)
        return " ".join(rng.choice(words, size=n))
    text_b = side() if params.task_kind == "pair" else None
    return Example(ex_id, TextInput(side(), text_b),
                   int(rng.integers(0, params.n_classes)))


# --- forward ---

def test_forward_zero_head_gives_uniform():
    params = tiny_params(w=((0.0, 0.0),))
    probs = forward(params, Example("e", TextInput("a a"), 0))
    assert np.allclose(probs, [0.5, 0.5], atol=1e-15)


def test_forward_hand_computed_softmax():
    # pooled("a a") = 1.0, logits = (log .8, log .2) -> probs (0.8, 0.2)
    params = tiny_params()
    probs = forward(params, Example("e", TextInput("a"), 0))
    assert np.allclose(probs, [0.8, 0.2], atol=1e-12)


def test_forward_unknown_words_map_to_unk_row():
    params = tiny_params()
    p_unk = forward(params, Example("e", TextInput("neverseen"), 0))
    assert np.allclose(p_unk, [0.5, 0.5], atol=1e-15)  # unk row is zero


def test_forward_is_order_blind():
    rng = np.random.default_rng(0)
    params = random_model(rng)
    ex = Example("e", TextInput("w1 w2 w3 w4"), 0)
    perm = Example("e", TextInput("w4 w2 w1 w3"), 0)
    p1, p2 = forward(params, ex), forward(params, perm)
    assert np.allclose(p1, p2, atol=1e-12)
    assert int(np.argmax(p1)) == int(np.argmax(p2))


def test_forward_temperature_flattens_but_keeps_argmax():
    params = tiny_params()
    ex = Example("e", TextInput("a"), 0)
    hot = forward(with_temperature(params, 4.0), ex)
    cold = forward(params, ex)
    assert int(np.argmax(hot)) == int(np.argmax(cold))
    assert hot.max() < cold.max()


def test_forward_empty_side_raises():
    params = tiny_params()
    with pytest.raises(DegenerateInputError):
        forward(params, Example("e", TextInput("   "), 0))


def test_pair_model_requires_text_b():
    rng = np.random.default_rng(1)
    params = random_model(rng, task_kind="pair")
    with pytest.raises(DegenerateInputError):
        forward(params, Example("e", TextInput("w1 w2"), 0))


# --- loss values ---

def test_label_smoothing_hand_value():
    params = tiny_params()
    ex = Example("e", TextInput("a"), 0)
    cfg = LossConfig("label_smoothing", lambda_ls=0.1)
    expected = -0.95 * math.log(0.8) - 0.05 * math.log(0.2)
    assert abs(loss(params, [ex], cfg) - expected) < 1e-12


def test_cross_entropy_hand_value():
    params = tiny_params()
    ex = Example("e", TextInput("a"), 1)
    assert abs(loss(params, [ex], LossConfig()) - (-math.log(0.2))) < 1e-12


def test_focal_gamma_zero_equals_cross_entropy():
    rng = np.random.default_rng(2)
    params = random_model(rng)
    batch = [random_example(rng, params, f"e{i}") for i in range(8)]
    ce = loss(params, batch, LossConfig("cross_entropy"))
    focal0 = loss(params, batch, LossConfig("focal", gamma=0.0))
    assert abs(ce - focal0) < 1e-12


def test_entropic_loss_adds_signed_entropy_term():
    params = tiny_params(w=((0.0, 0.0),))  # uniform probs, H = ln 2
    clean = [Example("c", TextInput("a"), 0)]
    invalid = [Example("i", TextInput("a a"), None)]
    base = math.log(2.0)  # CE under uniform probs
    lmax = loss(params, clean, LossConfig("entropic", lambda_ent=0.5), invalid)
    assert abs(lmax - (base - 0.5 * math.log(2.0))) < 1e-12
    lit = loss(params, clean,
               LossConfig("entropic", lambda_ent=0.5, entropy_sign="paper-literal"),
               invalid)
    assert abs(lit - (base + 0.5 * math.log(2.0))) < 1e-12


def test_loss_config_validation():
    with pytest.raises(ArgumentError):
        LossConfig("hinge")
    with pytest.raises(ArgumentError):
        LossConfig(lambda_ls=1.0)
    with pytest.raises(ArgumentError):
        LossConfig(gamma=-1.0)
    with pytest.raises(ArgumentError):
        LossConfig(entropy_sign="sometimes")


def test_train_config_validation():
    with pytest.raises(ArgumentError):
        TrainConfig(epochs=-1)
    with pytest.raises(ArgumentError):
        TrainConfig(learning_rate=0.0)


# --- gradient vs central finite differences ---

def _numeric_grad(params, batch, cfg, invalid, eps=1e-6):
    """Central finite differences over every parameter entry."""
    arrays = {"emb": params.emb, "w": params.w, "b": params.b}
    out = {}
    for name, arr in arrays.items():
        g = np.zeros_like(arr)
        it = np.nditer(arr, flags=["multi_index"])
        while not it.finished:
            idx = it.multi_index
            for sign in (+1, -1):
                bumped = {k: v.copy() for k, v in arrays.items()}
                bumped[name][idx] += sign * eps
                p = ToyModelParams(params.vocab, bumped["emb"], bumped["w"],
                                   bumped["b"], params.temperature,
                                   params.task_kind)
                val = loss(p, batch, cfg, invalid)
                g[idx] += sign * val / (2 * eps)
            it.iternext()
        out[name] = g
    return out


def _rel_err(analytic, numeric):
    num = np.linalg.norm(analytic - numeric)
    den = max(np.linalg.norm(numeric), 1e-8)
    return num / den


@pytest.mark.parametrize("kind", ["cross_entropy", "label_smoothing", "focal",
                                  "entropic"])
@pytest.mark.parametrize("task_kind", ["single", "pair"])
def test_analytic_gradients_match_finite_differences(kind, task_kind):
    kinds = ["cross_entropy", "label_smoothing", "focal", "entropic"]
    rng = np.random.default_rng(100 * kinds.index(kind)
                                + (1 if task_kind == "pair" else 0))
    for trial in range(4):
        params = random_model(rng, task_kind=task_kind)
        batch = [random_example(rng, params, f"e{i}") for i in range(3)]
        invalid = ([Example(f"i{i}", random_example(rng, params).input, None)
                    for i in range(2)] if kind == "entropic" else ())
        cfg = LossConfig(kind, lambda_ls=0.1, gamma=2.0, lambda_ent=0.3)
        analytic, _ = grad(params, batch, cfg, invalid)
        numeric = _numeric_grad(params, batch, cfg, invalid)
        for name, ga in (("emb", analytic.emb), ("w", analytic.w),
                         ("b", analytic.b)):
            assert _rel_err(ga, numeric[name]) < 1e-4, (kind, task_kind, name)


def test_entropic_paper_literal_gradient_matches_finite_differences():
    rng = np.random.default_rng(11)
    params = random_model(rng)
    batch = [random_example(rng, params, f"e{i}") for i in range(3)]
    invalid = [Example("i0", random_example(rng, params).input, None)]
    cfg = LossConfig("entropic", lambda_ent=0.3, entropy_sign="paper-literal")
    analytic, _ = grad(params, batch, cfg, invalid)
    numeric = _numeric_grad(params, batch, cfg, invalid)
    assert _rel_err(analytic.b, numeric["b"]) < 1e-4
    assert _rel_err(analytic.w, numeric["w"]) < 1e-4
    assert _rel_err(analytic.emb, numeric["emb"]) < 1e-4


def test_gradient_matches_under_temperature_scaling():
    rng = np.random.default_rng(12)
    params = with_temperature(random_model(rng), 2.5)
    batch = [random_example(rng, params, f"e{i}") for i in range(3)]
    cfg = LossConfig()
    analytic, _ = grad(params, batch, cfg)
    numeric = _numeric_grad(params, batch, cfg, ())
    assert _rel_err(analytic.emb, numeric["emb"]) < 1e-4


def test_grad_requires_gold_labels():
    params = tiny_params()
    with pytest.raises(ArgumentError):
        grad(params, [Example("e", TextInput("a"), None)], LossConfig())


# --- saliency ---

def test_saliency_zero_head_is_exactly_zero():
    params = tiny_params(w=((0.0, 0.0),))
    scores = saliency(params, Example("e", TextInput("a a a"), 0))
    assert scores.scores == (0.0, 0.0, 0.0)


def test_saliency_duplicate_tokens_score_equally():
    rng = np.random.default_rng(3)
    params = random_model(rng)
    scores = saliency(params, Example("e", TextInput("w1 w2 w1"), 0))
    assert scores.scores[0] == scores.scores[2]


def test_saliency_loss_label_defaults_to_gold_then_argmax():
    rng = np.random.default_rng(4)
    params = random_model(rng)
    labeled = Example("e", TextInput("w1 w2"), 2)
    assert saliency(params, labeled).loss_label == 2
    unlabeled = Example("e", TextInput("w1 w2"), None)
    predicted = int(np.argmax(forward(params, unlabeled)))
    assert saliency(params, unlabeled).loss_label == predicted


def test_saliency_side_selects_pair_side():
    rng = np.random.default_rng(5)
    params = random_model(rng, task_kind="pair")
    ex = Example("e", TextInput("w1 w2 w3", "w4 w5"), 0)
    assert len(saliency(params, ex, side="a")) == 3
    assert len(saliency(params, ex, side="b")) == 2


def test_saliency_matches_finite_difference_dot_product():
    """score_i == t_i . dL/dt_i, checked by bumping one token's embedding."""
    rng = np.random.default_rng(6)
    params = random_model(rng)
    ex = Example("e", TextInput("w1 w2 w3"), 1)
    scores = saliency(params, ex)
    eps = 1e-6
    cfg = LossConfig()
    # token 0 is w1 -> vocab row 1; scale the row to probe the dot product:
    # d/da L(a * t_i) at a=1 equals t_i . dL/dt_i
    for pos, word in enumerate(("w1", "w2", "w3")):
        row = params.vocab.index(word)
        vals = []
        for sign in (+1, -1):
            emb = params.emb.copy()
            emb[row] *= (1.0 + sign * eps)
            p = ToyModelParams(params.vocab, emb, params.w, params.b,
                               params.temperature, params.task_kind)
            vals.append(loss(p, [ex], cfg))
        numeric = (vals[0] - vals[1]) / (2 * eps)
        assert abs(scores.scores[pos] - numeric) < 1e-6, pos


# --- vocab / init ---

def test_build_vocab_sorted_unk_first_and_covers_both_sides():
    ds = Dataset((Example("a", TextInput("zeta alpha", "mid"), 0),
                  Example("b", TextInput("alpha"), 1)),
                 LABELS, "single")
    # task_kind single ignores text_b at encode time but vocab still scans it
    assert build_vocab(ds) == ("<unk>", "alpha", "mid", "zeta")


def test_init_params_shapes():
    p = init_params(("<unk>", "x"), dim=4, n_classes=3, task_kind="pair", seed=0)
    assert p.emb.shape == (2, 4)
    assert p.w.shape == (8, 3)
    assert np.all(p.w == 0) and np.all(p.b == 0)


def test_params_head_shape_validation():
    with pytest.raises(ArgumentError):
        ToyModelParams(("<unk>",), np.zeros((1, 4)), np.zeros((4, 2)),
                       np.zeros(2), 1.0, "pair")
    with pytest.raises(ArgumentError):
        tiny_params(temperature=0.0)


# --- training ---

def test_train_is_deterministic(sent_split):
    train_ds, _ = sent_split
    cfg = TrainConfig(epochs=2)
    a = train(train_ds, LossConfig(), cfg)
    b = train(train_ds, LossConfig(), cfg)
    assert np.array_equal(a.emb, b.emb)
    assert np.array_equal(a.w, b.w)
    assert np.array_equal(a.b, b.b)


def test_train_zero_epochs_returns_warm_start_unchanged(sent_base, sent_split):
    train_ds, _ = sent_split
    out = train(train_ds, LossConfig(), TrainConfig(epochs=0), warm=sent_base)
    assert np.array_equal(out.emb, sent_base.emb)
    assert np.array_equal(out.w, sent_base.w)
    assert np.array_equal(out.b, sent_base.b)


def test_train_fits_separable_data(sent_base, sent_split):
    train_ds, val_ds = sent_split
    assert toyclf.accuracy(sent_base, train_ds) >= 0.99
    assert toyclf.accuracy(sent_base, val_ds) >= 0.95


def test_train_pair_task(pair_base, pair_split):
    train_ds, _ = pair_split
    assert pair_base.task_kind == "pair"
    assert toyclf.accuracy(pair_base, train_ds) >= 0.99


def test_train_rejects_empty_dataset():
    with pytest.raises(ArgumentError):
        train(Dataset((), LABELS, "single"), LossConfig(), TrainConfig())


# --- temperature ---

def test_fit_temperature_improves_nll_and_keeps_argmax(sent_base, sent_split):
    _, val_ds = sent_split
    t = fit_temperature(sent_base, val_ds)
    assert 0.25 <= t <= 5.0
    assert nll(sent_base, val_ds, temperature=t) <= nll(sent_base, val_ds,
                                                        temperature=1.0)
    scaled = with_temperature(sent_base, t)
    for ex in val_ds.examples:
        assert int(np.argmax(forward(sent_base, ex))) == \
            int(np.argmax(forward(scaled, ex)))


def test_fit_temperature_on_overconfident_model_exceeds_one(sent_base, sent_split):
    # sharpen the logits and flip a third of the calibration labels, so the
    # model is near-certain but only ~67% accurate: the NLL optimum flattens
    _, val_ds = sent_split
    sharp = ToyModelParams(sent_base.vocab, sent_base.emb, sent_base.w * 6.0,
                           sent_base.b * 6.0, 1.0, sent_base.task_kind)
    flipped = Dataset(
        tuple(Example(ex.id, ex.input,
                      1 - ex.gold_label if i % 3 == 0 else ex.gold_label)
              for i, ex in enumerate(val_ds.examples)),
        val_ds.labels, val_ds.task_kind)
    assert fit_temperature(sharp, flipped) > 1.0


def test_fit_temperature_grid_granularity(sent_base, sent_split):
    _, val_ds = sent_split
    t = fit_temperature(sent_base, val_ds)
    assert abs(round(t / 0.01) * 0.01 - t) < 1e-9  # lies on the 0.01 grid


def test_fit_temperature_empty_calibration_set(sent_base):
    with pytest.raises(ArgumentError):
        fit_temperature(sent_base, Dataset((), LABELS, "single"))


# --- serialization ---

def test_save_load_round_trip(tmp_path, sent_base):
    path = tmp_path / "params.bin"
    save_params(sent_base, path, meta={"note": "test"})
    back = load_params(path)
    assert back.vocab == sent_base.vocab
    assert np.array_equal(back.emb, sent_base.emb)
    assert np.array_equal(back.w, sent_base.w)
    assert np.array_equal(back.b, sent_base.b)
    assert back.temperature == sent_base.temperature
    assert back.task_kind == sent_base.task_kind
    assert (tmp_path / "params.bin.json").exists()


def test_load_truncated_file_raises(tmp_path, sent_base):
    path = tmp_path / "params.bin"
    save_params(sent_base, path)
    raw = path.read_bytes()
    path.write_bytes(raw[:-16])
    with pytest.raises(ArgumentError, match="truncated"):
        load_params(path)
