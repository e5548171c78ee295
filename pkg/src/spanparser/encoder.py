"""Sentence encoder and action classifiers.

A two-layer bidirectional LSTM reads ``<s> w_0 ... w_{n-1} </s>``.  For word
boundary i, ``f_i`` is the forward output after ``<s> w_0 .. w_{i-1}`` and
``b_i`` the backward output after ``</s> w_{n-1} .. w_i``.  A span (i, j) is
represented by the differences ``f_j - f_i`` and ``b_i - b_j`` of both
layers, concatenated as [layer1 fwd, layer1 bwd, layer2 fwd, layer2 bwd].
Two single-hidden-layer ReLU classifiers score structural actions (four
spans: prefix, second-from-top, top, suffix) and label actions (prefix, top,
suffix).  All gradients are computed by hand.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import asdict, dataclass, field
from typing import Dict, Optional, Sequence

import numpy as np

from .transition import COMBINE, NOLABEL, SHIFT, Action, Configuration
from .treebank import LabelInventory, Token, join_chain

UNK = "<unk>"
START = "<s>"
STOP = "</s>"
RESERVED = (UNK, START, STOP)


class NumericError(FloatingPointError):
    """Non-finite values in the network."""


# ---------------------------------------------------------------------------
# vocabulary


def expected_unk_rate(counts: Dict[str, int], z: float) -> float:
    """Expected share of training tokens replaced when each occurrence of w
    is dropped to UNK with probability z / (z + f(w))."""
    total = sum(counts.values())
    if z <= 0:
        return 0.0
    return sum(f * z / (z + f) for f in counts.values()) / total


def solve_unk_scale(counts: Dict[str, int], target: float, tol: float = 1e-12) -> float:
    if not 0 <= target < 1:
        raise ValueError("target UNK rate must lie in [0, 1)")
    if target == 0:
        return 0.0
    lo, hi = 0.0, 1.0
    while expected_unk_rate(counts, hi) < target:
        hi *= 2
    while hi - lo > tol * max(1.0, hi):
        mid = (lo + hi) / 2
        if expected_unk_rate(counts, mid) < target:
            lo = mid
        else:
            hi = mid
    return (lo + hi) / 2


class Vocabulary:
    """Word, tag and extra-feature columns.  Ids 0..2 of every column are
    UNK, <s> and </s>."""

    def __init__(self, word_counts: Dict[str, int], tags: Sequence[str],
                 extras: Sequence[Sequence[str]] = (), unk_scale: float = 0.0):
        self.word_counts = dict(word_counts)
        self.words = list(RESERVED) + list(self.word_counts)
        self.tags = list(RESERVED) + [t for t in tags if t not in RESERVED]
        self.extras = [list(RESERVED) + list(col) for col in extras]
        self.unk_scale = float(unk_scale)
        self.word_index = {w: k for k, w in enumerate(self.words)}
        self.tag_index = {t: k for k, t in enumerate(self.tags)}
        self.extra_index = [{x: k for k, x in enumerate(col)} for col in self.extras]

    def __eq__(self, other):
        return isinstance(other, Vocabulary) and self.to_dict() == other.to_dict()

    def unk_prob(self, word: str) -> float:
        f = self.word_counts.get(word, 0)
        if f == 0:
            return 1.0
        return self.unk_scale / (self.unk_scale + f) if self.unk_scale > 0 else 0.0

    def ids(self, tokens: Sequence[Token], train: bool = False, rng=None):
        """Id columns for ``<s> tokens </s>``; in training mode known words
        are dropped to UNK with their UNK probability."""
        words = [1]
        for tok in tokens:
            k = self.word_index.get(tok.word, 0)
            if train and k and rng.random() < self.unk_prob(tok.word):
                k = 0
            words.append(k)
        words.append(2)
        tags = [1] + [self.tag_index.get(t.tag, 0) for t in tokens] + [2]
        extras = []
        for c, index in enumerate(self.extra_index):
            col = [1]
            for tok in tokens:
                col.append(index.get(tok.extras[c], 0) if c < len(tok.extras) else 0)
            extras.append(col + [2])
        return np.array(words), np.array(tags), [np.array(col) for col in extras]

    def to_dict(self):
        return {
            "word_counts": [[w, f] for w, f in self.word_counts.items()],
            "tags": self.tags[len(RESERVED):],
            "extras": [col[len(RESERVED):] for col in self.extras],
            "unk_scale": self.unk_scale,
        }

    @classmethod
    def from_dict(cls, d):
        return cls({w: f for w, f in d["word_counts"]}, d["tags"], d["extras"], d["unk_scale"])


def build_vocab(corpus: Sequence[Sequence[Token]], target_unk_rate: float = 0.0) -> Vocabulary:
    if not corpus or not any(corpus):
        raise ValueError("cannot build a vocabulary from an empty corpus")
    counts = Counter(tok.word for sent in corpus for tok in sent)
    tags = list(dict.fromkeys(tok.tag for sent in corpus for tok in sent))
    n_extra = max(len(tok.extras) for sent in corpus for tok in sent)
    extras = [
        list(dict.fromkeys(tok.extras[c] for sent in corpus for tok in sent if c < len(tok.extras)))
        for c in range(n_extra)
    ]
    words = dict(sorted(counts.items(), key=lambda kv: (-kv[1], kv[0])))
    return Vocabulary(words, tags, extras, solve_unk_scale(counts, target_unk_rate))


def oov_rate(train: Sequence[Sequence[Token]], dev: Sequence[Sequence[Token]]) -> float:
    """Share of dev tokens whose word never occurs in train."""
    known = {tok.word for sent in train for tok in sent}
    toks = [tok.word for sent in dev for tok in sent]
    return sum(w not in known for w in toks) / len(toks) if toks else 0.0


# ---------------------------------------------------------------------------
# parameters


@dataclass
class Hyper:
    word_dim: int = 50
    tag_dim: int = 20
    extra_dim: int = 10
    lstm_units: int = 200
    hidden_units: int = 200
    dropout: float = 0.5
    init_seed: int = 0

    @property
    def span_width(self):
        return 4 * self.lstm_units

    def to_dict(self):
        return asdict(self)


def param_shapes(hyper: Hyper, vocab: Vocabulary, n_labels: int) -> Dict[str, tuple]:
    H = hyper.lstm_units
    in1 = hyper.word_dim + hyper.tag_dim + hyper.extra_dim * len(vocab.extras)
    shapes = {
        "embed.word": (len(vocab.words), hyper.word_dim),
        "embed.tag": (len(vocab.tags), hyper.tag_dim),
    }
    for c, col in enumerate(vocab.extras):
        shapes[f"embed.extra{c}"] = (len(col), hyper.extra_dim)
    for layer, din in ((1, in1), (2, 2 * H)):
        for d in ("fwd", "bwd"):
            shapes[f"lstm{layer}.{d}.W"] = (4 * H, din + H)
            shapes[f"lstm{layer}.{d}.b"] = (4 * H,)
    F = hyper.span_width
    for head, nspans, nout in (("struct", 4, 2), ("label", 3, n_labels + 1)):
        shapes[f"{head}.W1"] = (hyper.hidden_units, nspans * F)
        shapes[f"{head}.b1"] = (hyper.hidden_units,)
        shapes[f"{head}.W2"] = (nout, hyper.hidden_units)
        shapes[f"{head}.b2"] = (nout,)
    return shapes


def init_params(hyper: Hyper, vocab: Vocabulary, n_labels: int, dtype=np.float32) -> Dict[str, np.ndarray]:
    rng = np.random.default_rng(hyper.init_seed)
    params = {}
    for name, shape in param_shapes(hyper, vocab, n_labels).items():
        if len(shape) == 1:
            p = np.zeros(shape)
            if name.startswith("lstm"):
                H = shape[0] // 4
                p[H:2 * H] = 1.0  # forget gate
        else:
            limit = math.sqrt(6.0 / (shape[0] + shape[1]))
            p = rng.uniform(-limit, limit, size=shape)
        params[name] = p.astype(dtype)
    return params


# ---------------------------------------------------------------------------
# LSTM


def _sigmoid(x):
    return 0.5 * (np.tanh(0.5 * x) + 1.0)


def lstm_forward(W, b, X, reverse=False):
    T, D = X.shape
    H = W.shape[0] // 4
    hs = np.zeros((T, H), dtype=W.dtype)
    h = np.zeros(H, dtype=W.dtype)
    c = np.zeros(H, dtype=W.dtype)
    steps = range(T - 1, -1, -1) if reverse else range(T)
    cache = []
    for t in steps:
        xh = np.concatenate([X[t], h])
        z = W @ xh + b
        i = _sigmoid(z[:H])
        f = _sigmoid(z[H:2 * H])
        o = _sigmoid(z[2 * H:3 * H])
        g = np.tanh(z[3 * H:])
        c_prev = c
        c = f * c_prev + i * g
        tc = np.tanh(c)
        h = o * tc
        hs[t] = h
        cache.append((t, xh, i, f, o, g, c_prev, tc))
    return hs, cache


def lstm_backward(W, dH, cache, D):
    H = W.shape[0] // 4
    T = len(cache)
    dX = np.zeros((T, D), dtype=W.dtype)
    dZ = np.zeros((T, 4 * H), dtype=W.dtype)
    XH = np.zeros((T, D + H), dtype=W.dtype)
    dh_next = np.zeros(H, dtype=W.dtype)
    dc_next = np.zeros(H, dtype=W.dtype)
    for k in range(T - 1, -1, -1):
        t, xh, i, f, o, g, c_prev, tc = cache[k]
        dh = dH[t] + dh_next
        do = dh * tc
        dc = dh * o * (1 - tc * tc) + dc_next
        dz = np.concatenate([
            dc * g * i * (1 - i),
            dc * c_prev * f * (1 - f),
            do * o * (1 - o),
            dc * i * (1 - g * g),
        ])
        dc_next = dc * f
        dxh = W.T @ dz
        dX[t] = dxh[:D]
        dh_next = dxh[D:]
        dZ[k] = dz
        XH[k] = xh
    return dX, dZ.T @ XH, dZ.sum(axis=0)


# ---------------------------------------------------------------------------
# encoding and span features


@dataclass
class SentenceEncoding:
    n: int
    F1: np.ndarray  # (n + 1, H) forward layer-1 outputs per boundary
    B1: np.ndarray
    F2: np.ndarray
    B2: np.ndarray
    cache: Optional[dict] = field(default=None, repr=False)

    def spans(self, I, J):
        """Span features for index arrays I < J (equal indices give zeros)."""
        I = np.asarray(I)
        J = np.asarray(J)
        return np.concatenate(
            [self.F1[J] - self.F1[I], self.B1[I] - self.B1[J],
             self.F2[J] - self.F2[I], self.B2[I] - self.B2[J]],
            axis=-1,
        )


def span_feature(enc: SentenceEncoding, i: int, j: int) -> np.ndarray:
    if not 0 <= i < j <= enc.n:
        raise ValueError(f"invalid span ({i}, {j}) for sentence of length {enc.n}")
    return enc.spans([i], [j])[0]


def embed_sentence(tokens, vocab: Vocabulary, params, train=False, rng=None):
    """Embedding rows for ``<s> tokens </s>`` and the ids used."""
    w, t, ex = vocab.ids(tokens, train, rng)
    parts = [params["embed.word"][w], params["embed.tag"][t]]
    parts += [params[f"embed.extra{c}"][col] for c, col in enumerate(ex)]
    return np.concatenate(parts, axis=1), (w, t, ex)


def encode(X, params, mask=None) -> SentenceEncoding:
    """Run both LSTM layers over embedded inputs X of shape (n + 2, D).

    `mask` (n + 2, 2H), if given, multiplies the layer-2 inputs (already
    scaled for inverted dropout).
    """
    n = X.shape[0] - 2
    hf1, cf1 = lstm_forward(params["lstm1.fwd.W"], params["lstm1.fwd.b"], X)
    hb1, cb1 = lstm_forward(params["lstm1.bwd.W"], params["lstm1.bwd.b"], X, reverse=True)
    X2 = np.concatenate([hf1, hb1], axis=1)
    if mask is not None:
        X2 = X2 * mask
    hf2, cf2 = lstm_forward(params["lstm2.fwd.W"], params["lstm2.fwd.b"], X2)
    hb2, cb2 = lstm_forward(params["lstm2.bwd.W"], params["lstm2.bwd.b"], X2, reverse=True)
    if not (np.isfinite(hf2).all() and np.isfinite(hb2).all()):
        raise NumericError("non-finite LSTM state")
    cache = {"X": X, "mask": mask, "lstm": (cf1, cb1, cf2, cb2)}
    return SentenceEncoding(n, hf1[: n + 1], hb1[1:], hf2[: n + 1], hb2[1:], cache)


def encode_backward(enc: SentenceEncoding, dF1, dB1, dF2, dB2, params, grads):
    """Backpropagate boundary-state gradients; returns d(embedded inputs)."""
    X = enc.cache["X"]
    mask = enc.cache["mask"]
    cf1, cb1, cf2, cb2 = enc.cache["lstm"]
    T, D = X.shape
    H = dF1.shape[1]
    n = enc.n
    dhf2 = np.zeros((T, H), dtype=X.dtype)
    dhb2 = np.zeros((T, H), dtype=X.dtype)
    dhf2[: n + 1] = dF2
    dhb2[1:] = dB2
    dX2 = np.zeros((T, 2 * H), dtype=X.dtype)
    for name, dh, cache in (("lstm2.fwd", dhf2, cf2), ("lstm2.bwd", dhb2, cb2)):
        dx, dW, db = lstm_backward(params[name + ".W"], dh, cache, 2 * H)
        grads[name + ".W"] += dW
        grads[name + ".b"] += db
        dX2 += dx
    if mask is not None:
        dX2 = dX2 * mask
    dhf1 = dX2[:, :H].copy()
    dhb1 = dX2[:, H:].copy()
    dhf1[: n + 1] += dF1
    dhb1[1:] += dB1
    dX = np.zeros_like(X)
    for name, dh, cache in (("lstm1.fwd", dhf1, cf1), ("lstm1.bwd", dhb1, cb1)):
        dx, dW, db = lstm_backward(params[name + ".W"], dh, cache, D)
        grads[name + ".W"] += dW
        grads[name + ".b"] += db
        dX += dx
    return dX


# ---------------------------------------------------------------------------
# feature schemas


def structural_spans(c: Configuration):
    """(prefix, second-from-top, top, suffix); missing slots are empty spans."""
    s, n = c.sigma, c.n
    top = (s[-2], s[-1]) if len(s) >= 2 else (0, 0)
    second = (s[-3], s[-2]) if len(s) >= 3 else (0, 0)
    prefix = (0, s[-3]) if len(s) >= 3 else (0, 0)
    return [prefix, second, top, (s[-1], n)]


def label_spans(c: Configuration):
    i, j = c.top
    return [(0, i), (i, j), (j, c.n)]


def features(enc: SentenceEncoding, span_lists) -> np.ndarray:
    """Rows of concatenated span features, one row per span list."""
    I = np.array([[i for i, _ in spans] for spans in span_lists])
    J = np.array([[j for _, j in spans] for spans in span_lists])
    f = enc.spans(I, J)  # (m, k, F)
    return f.reshape(len(span_lists), -1)


def features_backward(enc: SentenceEncoding, span_lists, dfeat, grads_state):
    """Scatter feature gradients onto the boundary states."""
    dF1, dB1, dF2, dB2 = grads_state
    m = len(span_lists)
    k = len(span_lists[0])
    H = dF1.shape[1]
    g = dfeat.reshape(m * k, 4, H)
    I = np.array([i for spans in span_lists for i, _ in spans])
    J = np.array([j for spans in span_lists for _, j in spans])
    for arr, part, sign in ((dF1, 0, 1), (dB1, 1, -1), (dF2, 2, 1), (dB2, 3, -1)):
        np.add.at(arr, J, sign * g[:, part])
        np.add.at(arr, I, -sign * g[:, part])


def head_forward(params, head, X, mask=None):
    if mask is not None:
        X = X * mask
    A = X @ params[f"{head}.W1"].T + params[f"{head}.b1"]
    Hd = np.maximum(A, 0)
    S = Hd @ params[f"{head}.W2"].T + params[f"{head}.b2"]
    return S, (X, A, Hd, mask)


def head_backward(params, head, dS, cache, grads):
    X, A, Hd, mask = cache
    grads[f"{head}.W2"] += dS.T @ Hd
    grads[f"{head}.b2"] += dS.sum(axis=0)
    dA = (dS @ params[f"{head}.W2"]) * (A > 0)
    grads[f"{head}.W1"] += dA.T @ X
    grads[f"{head}.b1"] += dA.sum(axis=0)
    dX = dA @ params[f"{head}.W1"]
    if mask is not None:
        dX = dX * mask
    return dX


def dropout_mask(rng, shape, p, dtype):
    if p <= 0:
        return None
    return ((rng.random(shape) >= p) / (1.0 - p)).astype(dtype)


def log_softmax(S):
    m = S.max(axis=1, keepdims=True)
    Z = S - m
    return Z - np.log(np.exp(Z).sum(axis=1, keepdims=True))


# ---------------------------------------------------------------------------
# the model


class SpanModel:
    """Parameters, vocabularies and label inventory; an ActionScorer."""

    def __init__(self, params, vocab: Vocabulary, inventory: LabelInventory, hyper: Hyper):
        self.params = params
        self.vocab = vocab
        self.inventory = inventory
        self.hyper = hyper
        self.lstm_passes = 0

    @classmethod
    def create(cls, vocab, inventory, hyper=None, dtype=np.float32):
        hyper = hyper or Hyper()
        return cls(init_params(hyper, vocab, len(inventory), dtype), vocab, inventory, hyper)

    def astype(self, dtype) -> "SpanModel":
        params = {k: v.astype(dtype) for k, v in self.params.items()}
        return SpanModel(params, self.vocab, self.inventory, self.hyper)

    def copy(self) -> "SpanModel":
        return self.astype(self.dtype)

    @property
    def dtype(self):
        return self.params["struct.W1"].dtype

    # -- inference ---------------------------------------------------------

    def encode(self, tokens, train=False, rng=None) -> SentenceEncoding:
        X, ids = embed_sentence(tokens, self.vocab, self.params, train, rng)
        mask = None
        if train:
            mask = dropout_mask(rng, (X.shape[0], 2 * self.hyper.lstm_units),
                                self.hyper.dropout, self.dtype)
        self.lstm_passes += 1
        enc = encode(X, self.params, mask)
        enc.cache["ids"] = ids
        return enc

    def score_structural(self, enc, c: Configuration, mask=None) -> np.ndarray:
        X = features(enc, [structural_spans(c)])
        return head_forward(self.params, "struct", X, mask)[0][0]

    def score_label(self, enc, c: Configuration, mask=None) -> np.ndarray:
        X = features(enc, [label_spans(c)])
        return head_forward(self.params, "label", X, mask)[0][0]

    def action_id(self, a: Action) -> int:
        if a.kind == SHIFT:
            return 0
        if a.kind == COMBINE:
            return 1
        if a.kind == NOLABEL:
            return 0
        return 1 + self.inventory.index[join_chain(a.chain)]

    # -- training ----------------------------------------------------------

    def sentence_loss(self, tokens, pairs, grads, train=True, rng=None, enc=None):
        """Summed negative log-likelihood of the gold actions in `pairs`
        (configuration, action) for one sentence; adds gradients into
        `grads` when it is not None.  The LSTM runs once per sentence."""
        if enc is None:
            enc = self.encode(tokens, train, rng)
        H = self.hyper.lstm_units
        p = self.hyper.dropout if train else 0.0
        total = 0.0
        dstate = [np.zeros((enc.n + 1, H), dtype=self.dtype) for _ in range(4)]
        for head, schema, want in (
            ("struct", structural_spans, lambda a: a.structural),
            ("label", label_spans, lambda a: not a.structural),
        ):
            sel = [(c, a) for c, a in pairs if want(a)]
            if not sel:
                continue
            span_lists = [schema(c) for c, _ in sel]
            X = features(enc, span_lists)
            mask = dropout_mask(rng, X.shape, p, self.dtype) if p > 0 else None
            S, cache = head_forward(self.params, head, X, mask)
            y = np.array([self.action_id(a) for _, a in sel])
            logp = log_softmax(S)
            total -= float(logp[np.arange(len(y)), y].sum())
            if grads is None:
                continue
            dS = np.exp(logp)
            dS[np.arange(len(y)), y] -= 1
            dX = head_backward(self.params, head, dS, cache, grads)
            features_backward(enc, span_lists, dX, dstate)
        if not math.isfinite(total):
            raise NumericError("non-finite loss")
        if grads is not None:
            dEmb = encode_backward(enc, *dstate, self.params, grads)
            w, t, ex = enc.cache["ids"]
            dw = self.hyper.word_dim
            dt = self.hyper.tag_dim
            np.add.at(grads["embed.word"], w, dEmb[:, :dw])
            np.add.at(grads["embed.tag"], t, dEmb[:, dw:dw + dt])
            off = dw + dt
            for c, col in enumerate(ex):
                np.add.at(grads[f"embed.extra{c}"], col, dEmb[:, off:off + self.hyper.extra_dim])
                off += self.hyper.extra_dim
        return total

    def zero_grads(self):
        return {k: np.zeros_like(v) for k, v in self.params.items()}


def loss_and_gradients(model: SpanModel, batch, train=True, rng=None):
    """Sum of per-sentence losses over `batch` = [(tokens, pairs), ...]."""
    grads = model.zero_grads()
    loss = 0.0
    for tokens, pairs in batch:
        loss += model.sentence_loss(tokens, pairs, grads, train, rng)
    return loss, grads
