"""Example generation (static oracle, dynamic oracle with optional
exploration) and the epoch / minibatch training loop."""

from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Callable, List, Optional, Sequence

import numpy as np

from .encoder import Hyper, NumericError, SpanModel, build_vocab, oov_rate
from .metrics import F1Report, corpus_parseval
from .optim import AdaDelta
from .oracle import GoldTreeIndex, OracleState, dyna, static_oracle
from .transition import (
    COMBINE,
    NOLABEL,
    SHIFT,
    Combine,
    Label,
    NoLabel,
    Shift,
    apply,
    decode,
    initial,
    is_final,
    legal_actions,
)
from .treebank import Tree, build_label_inventory, split_chain, tree_to_brackets

log = logging.getLogger(__name__)

MODES = ("static", "dynamic", "dynamic-explore")


@dataclass
class TrainingConfig:
    epochs: int = 10
    batch_size: int = 10
    mode: str = "static"
    alpha: float = 1.0
    seed: int = 0
    dropout: float = 0.5
    # None: match the dev-set out-of-vocabulary rate
    unk_rate: Optional[float] = None
    rho: float = 0.99
    eps: float = 1e-7
    threads: int = 1

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {', '.join(MODES)}, not {self.mode!r}")
        if not self.alpha > 0:
            raise ValueError("alpha must be positive")
        if not 0 <= self.dropout < 1:
            raise ValueError("dropout must lie in [0, 1)")
        if self.epochs < 1 or self.batch_size < 1 or self.threads < 1:
            raise ValueError("epochs, batch size and threads must be positive")

    def to_dict(self):
        return asdict(self)


# ---------------------------------------------------------------------------
# examples


def make_static_examples(gold: Tree) -> list:
    c = initial(len(gold))
    pairs = []
    for a in static_oracle(gold):
        pairs.append((c, a))
        c = apply(c, a)
    return pairs


@dataclass
class RolloutStats:
    steps: int = 0
    off_gold: int = 0

    def __add__(self, other):
        return RolloutStats(self.steps + other.steps, self.off_gold + other.off_gold)


def _softmax_sample(scores, rng):
    s = scores - scores.max()
    p = np.exp(s)
    p /= p.sum()
    return int(rng.choice(len(p), p=p))


def _legal_scored(model, enc, c):
    """Legal actions of `c` with their model scores."""
    legal = legal_actions(c)
    if c.z % 2 == 0:
        s = model.score_structural(enc, c)
        acts = [(Shift, s[0])] if SHIFT in legal else []
        if COMBINE in legal:
            acts.append((Combine, s[1]))
        return acts
    s = model.score_label(enc, c)
    acts = [(NoLabel, s[0])] if NOLABEL in legal else []
    acts += [(Label(split_chain(x)), s[k + 1]) for k, x in enumerate(model.inventory.labels)]
    return acts


def make_exploration_examples(gold: Tree, model: SpanModel, alpha: Optional[float], rng, enc=None):
    """Roll out the model and label every visited configuration with the
    dynamic oracle.

    With `alpha` the executed action is sampled from softmax(alpha * scores)
    over the legal actions; with ``alpha=None`` the model's best action is
    taken.  Returns (pairs, stats); a step counts as off the gold path when
    the stack or bracket set differs from the static-oracle trajectory.
    """
    if enc is None:
        enc = model.encode(gold.leaves())
    idx = GoldTreeIndex.from_tree(gold)
    root_chain = gold.chain
    static = [c for c, _ in make_static_examples(gold)]
    c, state = initial(len(gold)), OracleState(idx)
    pairs = []
    stats = RolloutStats()
    while not is_final(c):
        scored = _legal_scored(model, enc, c)
        scores = np.array([s for _, s in scored], dtype=np.float64)
        good = dyna(c, state, root_chain)
        if len(good) == 1:
            target = next(iter(good))
        else:
            target = max((x for x in scored if x[0] in good), key=lambda x: x[1])[0]
        pairs.append((c, target))
        ref = static[c.z]
        stats.steps += 1
        if ref.sigma != c.sigma or ref.t != c.t:
            stats.off_gold += 1
        if alpha is None:
            a = scored[int(np.argmax(scores))][0]
        else:
            a = scored[_softmax_sample(alpha * scores, rng)][0]
        c = state.step(c, a)
    return pairs, stats


# ---------------------------------------------------------------------------
# parsing and evaluation


def _map(fn, items, threads):
    if threads <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


def parse_sentences(model: SpanModel, sentences, threads: int = 1) -> list:
    """Greedy parses, one tree per token list."""

    def one(tokens):
        return decode(tokens, model, model.encode(tokens))[0]

    return _map(one, sentences, threads)


def evaluate(model: SpanModel, gold_trees: Sequence[Tree], threads: int = 1) -> F1Report:
    preds = parse_sentences(model, [t.leaves() for t in gold_trees], threads)
    return corpus_parseval(
        (tree_to_brackets(p), tree_to_brackets(g)) for p, g in zip(preds, gold_trees)
    )


# ---------------------------------------------------------------------------
# training loop


@dataclass
class EpochReport:
    epoch: int
    loss: float
    dev: F1Report
    steps: int
    off_gold: int
    best: bool = False

    def line(self) -> str:
        return f"epoch {self.epoch}: loss {self.loss:.4f}, dev {self.dev.format()}"


TSV_HEADER = "epoch\tloss\tdev_LR\tdev_LP\tdev_F1\tsteps\toff_gold\tbest"


def report_tsv(epochs: Sequence[EpochReport]) -> str:
    rows = [TSV_HEADER]
    for e in epochs:
        rows.append(
            f"{e.epoch}\t{e.loss:.6f}\t{100 * float(e.dev.recall):.2f}\t"
            f"{100 * float(e.dev.precision):.2f}\t{100 * float(e.dev.f1):.2f}\t"
            f"{e.steps}\t{e.off_gold}\t{int(e.best)}"
        )
    return "\n".join(rows) + "\n"


@dataclass
class TrainResult:
    model: SpanModel  # parameters from the best dev epoch
    final: SpanModel
    epochs: List[EpochReport] = field(default_factory=list)

    @property
    def best_epoch(self) -> int:
        return next(e.epoch for e in self.epochs if e.best)


def sentence_rng(seed: int, epoch: int, index: int):
    return np.random.default_rng([seed, epoch, index])


def sentence_step(model: SpanModel, gold: Tree, cfg: TrainingConfig, rng):
    """Loss, gradients and rollout stats for one training sentence; the LSTM
    runs once."""
    tokens = gold.leaves()
    enc = model.encode(tokens, train=True, rng=rng)
    if cfg.mode == "static":
        pairs = make_static_examples(gold)
        stats = RolloutStats(len(pairs), 0)
    else:
        alpha = cfg.alpha if cfg.mode == "dynamic-explore" else None
        pairs, stats = make_exploration_examples(gold, model, alpha, rng, enc=enc)
    grads = model.zero_grads()
    loss = model.sentence_loss(tokens, pairs, grads, train=True, rng=rng, enc=enc)
    return loss, grads, stats


def prepare_model(train_trees, dev_trees, cfg: TrainingConfig, hyper: Hyper = None) -> SpanModel:
    sents = [t.leaves() for t in train_trees]
    target = cfg.unk_rate if cfg.unk_rate is not None else oov_rate(sents, [t.leaves() for t in dev_trees])
    vocab = build_vocab(sents, target)
    hyper = hyper or Hyper()
    hyper.dropout = cfg.dropout
    return SpanModel.create(vocab, build_label_inventory(train_trees), hyper)


def train(
    train_trees: Sequence[Tree],
    dev_trees: Sequence[Tree],
    cfg: TrainingConfig,
    hyper: Hyper = None,
    model: SpanModel = None,
    on_epoch: Callable[[EpochReport], None] = None,
) -> TrainResult:
    if not train_trees or not dev_trees:
        raise ValueError("training and dev corpora must be nonempty")
    model = model or prepare_model(train_trees, dev_trees, cfg, hyper)
    opt = AdaDelta(cfg.rho, cfg.eps)
    epochs: List[EpochReport] = []
    best = None
    best_f1 = -1
    for epoch in range(1, cfg.epochs + 1):
        order = np.random.default_rng([cfg.seed, epoch]).permutation(len(train_trees))
        total = 0.0
        stats = RolloutStats()
        for start in range(0, len(order), cfg.batch_size):
            batch = [int(k) for k in order[start:start + cfg.batch_size]]

            def work(k):
                try:
                    return sentence_step(model, train_trees[k], cfg, sentence_rng(cfg.seed, epoch, k))
                except NumericError as e:
                    raise NumericError(f"{e} in epoch {epoch}, sentence {k}") from None

            results = _map(work, batch, cfg.threads)
            # ordered reduction keeps results independent of the thread count
            grads = model.zero_grads()
            batch_loss = 0.0
            for loss, g, st in results:
                batch_loss += loss
                stats = stats + st
                for name in grads:
                    grads[name] += g[name]
            if not math.isfinite(batch_loss) or not all(np.isfinite(g).all() for g in grads.values()):
                raise NumericError(
                    f"non-finite loss or gradient in epoch {epoch}, sentences {batch}"
                )
            total += batch_loss
            opt.step(model.params, grads)
        dev = evaluate(model, dev_trees, cfg.threads)
        report = EpochReport(epoch, total, dev, stats.steps, stats.off_gold)
        if dev.f1 > best_f1:
            best_f1 = dev.f1
            best = model.copy()
            for e in epochs:
                e.best = False
            report.best = True
        epochs.append(report)
        log.info(report.line())
        if on_epoch:
            on_epoch(report)
    return TrainResult(best, model, epochs)
