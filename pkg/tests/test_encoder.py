import math

import numpy as np
import pytest

from spanparser.encoder import (
    Hyper,
    NumericError,
    SpanModel,
    Vocabulary,
    build_vocab,
    dropout_mask,
    embed_sentence,
    encode,
    expected_unk_rate,
    features,
    head_forward,
    label_spans,
    loss_and_gradients,
    oov_rate,
    param_shapes,
    solve_unk_scale,
    span_feature,
    structural_spans,
)
from spanparser.synthetic import toy_corpus
from spanparser.training import make_static_examples, parse_sentences
from spanparser.transition import Configuration, choose_label, choose_structural, decode
from spanparser.treebank import LabelInventory, Token, build_label_inventory

SMALL = Hyper(word_dim=6, tag_dim=4, extra_dim=3, lstm_units=5, hidden_units=7)


def toks(words, tags=None):
    tags = tags or ["NN"] * len(words)
    return [Token(w, t) for w, t in zip(words, tags)]


@pytest.fixture
def model(example):
    vocab = build_vocab([example.leaves()], 0.0)
    return SpanModel.create(vocab, build_label_inventory([example]), SMALL)


# -- vocabulary ----------------------------------------------------------------


def test_vocab_closed_form():
    corpus = [toks(["a", "b", "c", "d"])]
    v = build_vocab(corpus, 0.5)
    assert v.unk_scale == pytest.approx(1.0, abs=1e-9)
    assert v.unk_prob("a") == pytest.approx(0.5)


def test_vocab_zero_target():
    v = build_vocab([toks(["a", "b", "a"])], 0.0)
    assert v.unk_scale == 0
    assert v.unk_prob("a") == 0


def test_vocab_empty():
    with pytest.raises(ValueError):
        build_vocab([], 0.1)


def test_vocab_solution_within_tolerance():
    rng = np.random.default_rng(0)
    words = [f"w{int(k)}" for k in rng.zipf(1.6, size=20000)]
    corpus = [toks(words)]
    counts = {}
    for w in words:
        counts[w] = counts.get(w, 0) + 1
    v = build_vocab(corpus, 0.0276)
    assert abs(expected_unk_rate(counts, v.unk_scale) - 0.0276) < 1e-4


def test_vocab_recovers_known_scale():
    # a corpus whose UNK rate at z = 0.8375 is r must give back z = 0.8375
    rng = np.random.default_rng(1)
    counts = {f"w{k}": int(f) for k, f in enumerate(rng.zipf(1.5, size=5000))}
    r = expected_unk_rate(counts, 0.8375)
    assert solve_unk_scale(counts, r) == pytest.approx(0.8375, rel=1e-6)


def test_vocab_serialization():
    v = build_vocab([[Token("a", "DT", ("x",)), Token("b", "NN", ("y",))]], 0.2)
    assert Vocabulary.from_dict(v.to_dict()) == v


def test_oov_rate():
    assert oov_rate([toks(["a", "b"])], [toks(["a", "c", "d", "a"])]) == 0.5


# -- embeddings ----------------------------------------------------------------


def test_embed_known_word_inference(model):
    X, (w, t, _) = embed_sentence(toks(["I", "fish"]), model.vocab, model.params)
    assert X.shape == (4, SMALL.word_dim + SMALL.tag_dim)
    assert w[0] == 1 and w[-1] == 2
    assert w[1] == model.vocab.word_index["I"]
    np.testing.assert_array_equal(X[1, : SMALL.word_dim], model.params["embed.word"][w[1]])


def test_embed_oov_is_unk(model):
    _, (w, _, _) = embed_sentence(toks(["zebra"]), model.vocab, model.params)
    assert w[1] == 0


def test_embed_unk_monte_carlo():
    v = Vocabulary({"rare": 1}, ["NN"], unk_scale=0.8375)
    rng = np.random.default_rng(0)
    sent = toks(["rare"] * 1000)
    replaced = sum(int((v.ids(sent, True, rng)[0][1:-1] == 0).sum()) for _ in range(100))
    assert abs(replaced / 10**5 - 0.8375 / 1.8375) < 0.01
    assert 0.8375 / 1.8375 == pytest.approx(0.4558, abs=1e-4)


def test_embed_extras():
    v = build_vocab([[Token("a", "DT", ("sg",)), Token("b", "NN", ("pl",))]])
    m = SpanModel.create(v, LabelInventory(["NP"]), SMALL)
    X, _ = embed_sentence([Token("a", "DT", ("pl",))], v, m.params)
    assert X.shape[1] == SMALL.word_dim + SMALL.tag_dim + SMALL.extra_dim


def test_default_widths():
    v = build_vocab([toks(["a"])])
    shapes = param_shapes(Hyper(), v, 4)
    assert shapes["embed.word"][1] + shapes["embed.tag"][1] == 70
    assert shapes["lstm1.fwd.W"] == (800, 70 + 200)
    assert shapes["lstm2.bwd.W"] == (800, 400 + 200)
    assert shapes["struct.W1"] == (200, 4 * 800)
    assert shapes["label.W1"] == (200, 3 * 800)
    assert shapes["struct.W2"] == (2, 200)
    assert shapes["label.W2"] == (5, 200)


def test_init_forget_bias(model):
    b = model.params["lstm1.fwd.b"]
    H = SMALL.lstm_units
    assert (b[H:2 * H] == 1).all() and (b[:H] == 0).all() and (b[2 * H:] == 0).all()
    assert model.params["struct.b1"].dtype == np.float32


# -- encoder -------------------------------------------------------------------


def zero_model(model):
    m = model.copy()
    for p in m.params.values():
        p[...] = 0
    return m


def test_zero_parameters(model):
    m = zero_model(model)
    enc = m.encode(toks(["I", "do", "like"]))
    for arr in (enc.F1, enc.B1, enc.F2, enc.B2):
        assert not arr.any()
    assert not span_feature(enc, 0, 3).any()
    c = Configuration(4, (0, 1, 2), frozenset(), 3)
    assert (m.score_structural(enc, c) == 0).all()
    assert choose_structural(m.score_structural(enc, c), c).kind == "shift"
    lc = Configuration(3, (0, 1, 2), frozenset(), 3)
    s = m.score_label(enc, lc)
    assert s.shape == (len(m.inventory) + 1,) and not s.any()
    assert choose_label(s, lc, m.inventory).kind == "nolabel"


def test_single_token_shapes(model):
    enc = model.encode(toks(["fish"]))
    assert enc.n == 1
    assert enc.F1.shape == enc.B2.shape == (2, SMALL.lstm_units)
    assert span_feature(enc, 0, 1).shape == (4 * SMALL.lstm_units,)


def test_boundary_convention(model):
    # f_0 sees only <s>: it is the same for any sentence
    a = model.encode(toks(["I", "do"]))
    b = model.encode(toks(["fish", "like", "do"]))
    np.testing.assert_array_equal(a.F1[0], b.F1[0])
    np.testing.assert_array_equal(a.B1[-1], b.B1[-1])
    assert a.F1[0].any()


def test_encode_deterministic(model):
    sent = toks(["I", "do", "like"])
    X, _ = embed_sentence(sent, model.vocab, model.params)
    mask = dropout_mask(np.random.default_rng(0), (5, 2 * SMALL.lstm_units), 0.5, np.float32)
    a, b = encode(X, model.params, mask), encode(X, model.params, mask)
    np.testing.assert_array_equal(a.F2, b.F2)
    np.testing.assert_array_equal(a.B2, b.B2)


def test_span_feature_layout(model, example):
    enc = model.encode(example.leaves())
    H = SMALL.lstm_units
    f = span_feature(enc, 3, 5)
    np.testing.assert_array_equal(f[:H], enc.F1[5] - enc.F1[3])
    np.testing.assert_array_equal(f[H:2 * H], enc.B1[3] - enc.B1[5])
    np.testing.assert_array_equal(f[2 * H:3 * H], enc.F2[5] - enc.F2[3])
    np.testing.assert_array_equal(f[3 * H:], enc.B2[3] - enc.B2[5])
    for i, j in [(3, 3), (4, 2), (0, 6)]:
        with pytest.raises(ValueError):
            span_feature(enc, i, j)


def test_telescoping(example):
    vocab = build_vocab([example.leaves()])
    m = SpanModel.create(vocab, build_label_inventory([example]))
    enc = m.encode(example.leaves())
    for i, k, j in [(0, 2, 5), (1, 3, 4), (0, 1, 2)]:
        lhs = span_feature(enc, i, k) + span_feature(enc, k, j)
        np.testing.assert_allclose(lhs, span_feature(enc, i, j), atol=1e-6, rtol=0)


def test_feature_schemas():
    c = Configuration(6, (0, 1, 2, 3), frozenset(), 5)
    assert structural_spans(c) == [(0, 1), (1, 2), (2, 3), (3, 5)]
    c = Configuration(10, (0, 3), frozenset(), 3)
    assert structural_spans(c) == [(0, 0), (0, 0), (0, 3), (3, 3)]
    c = Configuration(13, (0, 1, 3, 5), frozenset(), 5)
    assert label_spans(c) == [(0, 3), (3, 5), (5, 5)]


def test_empty_slots_are_zero(model):
    enc = model.encode(toks(["I", "do", "like"]))
    c = Configuration(10, (0, 3), frozenset(), 3)
    X = features(enc, [structural_spans(c)])[0]
    w = 4 * SMALL.lstm_units
    assert not X[:w].any() and not X[w:2 * w].any() and not X[3 * w:].any()
    assert X[2 * w:3 * w].any()


def test_non_finite_detected(model):
    m = model.copy()
    m.params["lstm2.fwd.W"][0, 0] = np.nan
    with pytest.raises(NumericError):
        m.encode(toks(["I"]))


def test_encoding_reuse(model, example):
    model.lstm_passes = 0
    enc = model.encode(example.leaves())
    decode(example.leaves(), model, enc)
    assert model.lstm_passes == 1
    model.sentence_loss(example.leaves(), make_static_examples(example), model.zero_grads(), True,
                        np.random.default_rng(0))
    assert model.lstm_passes == 2


# -- loss and gradients ----------------------------------------------------------


def test_uniform_loss_is_ln2(model, example):
    m = zero_model(model)
    c = Configuration(4, (0, 1, 2), frozenset(), 5)
    from spanparser.transition import Shift

    loss = m.sentence_loss(example.leaves(), [(c, Shift)], None, train=False)
    assert loss == pytest.approx(math.log(2), rel=1e-6)


def test_duplicate_sentence_doubles_loss(model, example):
    item = (example.leaves(), make_static_examples(example))
    one, _ = loss_and_gradients(model, [item], train=False)
    two, _ = loss_and_gradients(model, [item, item], train=False)
    assert two == 2 * one


def finite_difference_check(model, tokens, pairs, eps=1e-5, max_coords=None, seed=0):
    """Worst relative error per parameter block; relative error is
    |a - n| / max(|a|, |n|, 1e-4)."""
    def loss():
        return model.sentence_loss(tokens, pairs, None, True, np.random.default_rng(seed))

    grads = model.zero_grads()
    model.sentence_loss(tokens, pairs, grads, True, np.random.default_rng(seed))
    rng = np.random.default_rng(1)
    worst = {}
    for name, p in model.params.items():
        flat = p.reshape(-1)
        g = grads[name].reshape(-1)
        coords = np.arange(flat.size)
        if max_coords and flat.size > max_coords:
            top = np.argsort(-np.abs(g))[: max_coords // 2]
            coords = np.unique(np.concatenate([top, rng.choice(flat.size, max_coords // 2)]))
        err = 0.0
        for k in coords:
            old = flat[k]
            flat[k] = old + eps
            lp = loss()
            flat[k] = old - eps
            lm = loss()
            flat[k] = old
            num = (lp - lm) / (2 * eps)
            err = max(err, abs(num - g[k]) / max(abs(num), abs(g[k]), 1e-4))
        worst[name] = err
    return worst


def test_gradients_small_model(example):
    trees = toy_corpus(20, seed=3)
    t = next(x for x in trees if len(x) == 3)
    vocab = build_vocab([x.leaves() for x in trees], 0.1)
    extra_vocab = Vocabulary(vocab.word_counts, vocab.tags[3:], [["a", "b"]], vocab.unk_scale)
    tokens = [Token(x.word, x.tag, ("a",)) for x in t.leaves()]
    m = SpanModel.create(extra_vocab, build_label_inventory(trees), SMALL, dtype=np.float64)
    rng = np.random.default_rng(2)
    for p in m.params.values():
        p += rng.normal(0, 0.3, p.shape)
    worst = finite_difference_check(m, tokens, make_static_examples(t))
    assert set(worst) == set(m.params)
    assert max(worst.values()) < 1e-4, worst


def test_dropout_expectation(model, example):
    enc = model.encode(example.leaves())
    c = Configuration(13, (0, 1, 3, 5), frozenset(), 5)
    X = features(enc, [label_spans(c)])
    ref = head_forward(model.params, "label", X)[1][1][0]
    rng = np.random.default_rng(0)
    masks = dropout_mask(rng, (10**4, X.shape[1]), 0.5, np.float32)
    acts = head_forward(model.params, "label", np.repeat(X, len(masks), 0), masks)[1][1]
    mean = acts.mean(axis=0)
    assert np.linalg.norm(mean - ref) <= 0.02 * np.linalg.norm(ref)


def test_dropout_mask_scaling():
    m = dropout_mask(np.random.default_rng(0), (1000, 100), 0.5, np.float32)
    assert set(np.unique(m)) == {0.0, 2.0}
    assert dropout_mask(None, (3,), 0.0, np.float32) is None


def test_parse_is_thread_independent(model):
    sents = [toks("a b c d e".split()[:k]) for k in range(1, 6)] * 3
    a = parse_sentences(model, sents, threads=1)
    b = parse_sentences(model, sents, threads=4)
    assert a == b
