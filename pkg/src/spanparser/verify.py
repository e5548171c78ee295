"""Exhaustive checks of the dynamic oracle against brute-force search.

`BruteForce` realizes the set of final trees reachable from a configuration
by enumerating every legal action sequence.  Sequences are memoized on
``(z, sigma)``: the brackets a suffix adds depend only on the actions, never
on the brackets already built, and each span is created (hence labeled) at
most once per trajectory, so additions are disjoint from ``t``.  Bracket sets
are summarized by their (gold matches, size) counts; the optimal sets
themselves are recovered by searching optimal actions only.
"""

from __future__ import annotations

import random
from collections import Counter
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Dict, Iterable, List, Optional

from .oracle import (
    GoldTreeIndex,
    OracleState,
    dyna,
    next_bracket,
    next_bracket_naive,
    reach,
    static_oracle,
)
from .transition import (
    COMBINE,
    NOLABEL,
    SHIFT,
    Combine,
    Configuration,
    Label,
    NoLabel,
    Shift,
    apply,
    initial,
    is_final,
    legal_actions,
)
from .treebank import Bracket, LabelInventory, Tree, span_chains

MAX_LEN = 6
MAX_LABELS = 5


class EnumerationTooLarge(ValueError):
    pass


def f1_counts(matched: int, predicted: int, gold: int) -> Fraction:
    if matched == 0:
        return Fraction(0)
    return Fraction(2 * matched, predicted + gold)


def all_actions(c: Configuration, chains) -> list:
    out = []
    for kind in sorted(legal_actions(c)):
        if kind == SHIFT:
            out.append(Shift)
        elif kind == COMBINE:
            out.append(Combine)
        elif kind == NOLABEL:
            out.append(NoLabel)
        else:
            out.extend(Label(ch) for ch in chains)
    return out


class BruteForce:
    def __init__(self, gold: Iterable[Bracket], n: int, labels: LabelInventory, guard: bool = True):
        if guard and (n > MAX_LEN or len(labels) > MAX_LABELS):
            raise EnumerationTooLarge(
                f"enumeration limited to n <= {MAX_LEN} and <= {MAX_LABELS} labels "
                f"(got n={n}, {len(labels)} labels)"
            )
        self.gold = frozenset(gold)
        self.n = n
        self.chains = labels.chains()
        self._bit: Dict[Bracket, int] = {}
        self._brackets: List[Bracket] = []
        self.gold_mask = self.mask(self.gold)
        self.final_z = 4 * n - 2
        self._tables: Dict[tuple, frozenset] = {}
        self._move_cache: Dict[tuple, list] = {}
        self._best: Dict[tuple, Fraction] = {}
        self._opt_cache: Dict[tuple, list] = {}
        self._add_cache: Dict[tuple, frozenset] = {}

    def mask(self, brackets) -> int:
        m = 0
        for b in brackets:
            if b not in self._bit:
                self._bit[b] = len(self._brackets)
                self._brackets.append(b)
            m |= 1 << self._bit[b]
        return m

    def unmask(self, m: int) -> frozenset:
        out = []
        k = 0
        while m:
            if m & 1:
                out.append(self._brackets[k])
            m >>= 1
            k += 1
        return frozenset(out)

    def _moves(self, z: int, sigma: tuple) -> list:
        """(action, z', sigma', gold matches added, brackets added, mask)."""
        key = (z, sigma)
        moves = self._move_cache.get(key)
        if moves is None:
            c = Configuration(z, sigma, frozenset(), self.n)
            moves = []
            for a in all_actions(c, self.chains):
                child = apply(c, a)
                moves.append((a, child.z, child.sigma, len(child.t & self.gold),
                              len(child.t), self.mask(child.t)))
            self._move_cache[key] = moves
        return moves

    def additions(self, z: int, sigma: tuple) -> frozenset:
        """(matched, size) pairs of the bracket sets addable from (z, sigma)."""
        key = (z, sigma)
        table = self._tables.get(key)
        if table is None:
            if z == self.final_z:
                table = frozenset({(0, 0)})
            else:
                table = frozenset(
                    (m + dm, s + ds)
                    for _, z2, s2, dm, ds, _ in self._moves(z, sigma)
                    for m, s in self.additions(z2, s2)
                )
            self._tables[key] = table
        return table

    def _base(self, c):
        return len(c.t & self.gold), len(c.t)

    def _best_f1(self, z, sigma, m0, s0) -> Fraction:
        key = (z, sigma, m0, s0)
        best = self._best.get(key)
        if best is None:
            g = len(self.gold)
            best = max(f1_counts(m0 + m, s0 + s, g) for m, s in self.additions(z, sigma))
            self._best[key] = best
        return best

    def best_f1(self, c: Configuration) -> Fraction:
        return self._best_f1(c.z, c.sigma, *self._base(c))

    def _optimal(self, z, sigma, m0, s0) -> list:
        key = (z, sigma, m0, s0)
        out = self._opt_cache.get(key)
        if out is None:
            best = self._best_f1(z, sigma, m0, s0)
            out = [
                mv for mv in self._moves(z, sigma)
                if self._best_f1(mv[1], mv[2], m0 + mv[3], s0 + mv[4]) == best
            ]
            self._opt_cache[key] = out
        return out

    def optimal_actions(self, c: Configuration) -> frozenset:
        return frozenset(mv[0] for mv in self._optimal(c.z, c.sigma, *self._base(c)))

    def _optimal_additions(self, z, sigma, m0, s0, cap) -> frozenset:
        key = (z, sigma, m0, s0, cap)
        out = self._add_cache.get(key)
        if out is not None:
            return out
        if z == self.final_z:
            out = frozenset({0})
        else:
            acc = set()
            for _, z2, s2, dm, ds, added in self._optimal(z, sigma, m0, s0):
                for x in self._optimal_additions(z2, s2, m0 + dm, s0 + ds, cap):
                    acc.add(added | x)
                    if cap and len(acc) >= cap:
                        break
                if cap and len(acc) >= cap:
                    break
            out = frozenset(acc)
        self._add_cache[key] = out
        return out

    def optimal_additions(self, c: Configuration, cap: Optional[int] = None) -> frozenset:
        """Distinct bracket-set masks added by the F1-optimal completions of c.

        Every optimal completion starts with an optimal action, so only those
        branches are searched.  With `cap`, stops after `cap` distinct sets
        (enough to decide uniqueness).
        """
        return self._optimal_additions(c.z, c.sigma, *self._base(c), cap)

    def best(self, c: Configuration, cap: Optional[int] = None):
        """Maximum F1 over D(c) and the final bracket sets attaining it."""
        return self.best_f1(c), {c.t | self.unmask(x) for x in self.optimal_additions(c, cap)}

    def best_recall_precision(self, c: Configuration):
        m0, s0 = self._base(c)
        keys = self.additions(c.z, c.sigma)
        recall = max(Fraction(m0 + m, len(self.gold)) for m, s in keys)
        precision = max(Fraction(m0 + m, s0 + s) if s0 + s else Fraction(0) for m, s in keys)
        return recall, precision

def brute_force_best_f1(c: Configuration, gold, labels: LabelInventory):
    return BruteForce(gold, c.n, labels).best(c)


# ---------------------------------------------------------------------------
# property suite


PROPERTIES = (
    "oracle_optimality",
    "tstar_optimal_f1",
    "tstar_max_recall_precision",
    "unique_optimum",
    "reach_kept_by_structural",
    "tstar_kept_iff_in_dyna",
    "rollout_reaches_tstar",
    "reach_disjoint_from_t",
    "cursor_matches_definition",
    "amortized_traversals",
    "static_action_in_dyna",
)


@dataclass
class PropertyReport:
    checked: Counter = field(default_factory=Counter)
    violations: Counter = field(default_factory=Counter)
    counterexamples: Dict[str, str] = field(default_factory=dict)
    configurations: int = 0

    def record(self, name, ok, path=None, detail=""):
        self.checked[name] += 1
        if not ok:
            self.violations[name] += 1
            if name not in self.counterexamples:
                trace = " ".join(str(a) for a in (path or [])) or "<initial>"
                self.counterexamples[name] = f"{trace} :: {detail}".rstrip(": ")

    def merge(self, other: "PropertyReport"):
        self.checked.update(other.checked)
        self.violations.update(other.violations)
        self.configurations += other.configurations
        for k, v in other.counterexamples.items():
            self.counterexamples.setdefault(k, v)

    @property
    def ok(self) -> bool:
        return not any(self.violations.values())

    def lines(self) -> list:
        out = []
        for name in PROPERTIES:
            if self.checked[name]:
                v = self.violations[name]
                status = "PASS" if v == 0 else "FAIL"
                out.append(f"{status} {name}: {self.checked[name]} checked, {v} violations")
                if v:
                    out.append(f"  counterexample: {self.counterexamples[name]}")
        return out


DynaFn = Callable[[Configuration, OracleState], frozenset]


def _rollout(c, state, dyna_fn):
    state = state.copy()
    while not is_final(c):
        choices = sorted(dyna_fn(c, state))
        if not choices:
            return None
        # any member of dyna(c) must do; take a fixed one
        c = state.step(c, choices[0])
    return c.t


class OracleChecker:
    """Runs every oracle property at given configurations of one gold tree."""

    def __init__(self, gold: Tree, labels: LabelInventory, dyna_fn: DynaFn = dyna, guard=True):
        self.gold_tree = gold
        self.index = GoldTreeIndex.from_tree(gold)
        self.n = gold.span[1]
        self.labels = labels
        self.bf = BruteForce(self.index.gold, self.n, labels, guard=guard)
        self.dyna_fn = dyna_fn
        self.report = PropertyReport()

    def check(self, c: Configuration, state: OracleState, path=()):
        rec = self.report.record
        idx = self.index
        self.report.configurations += 1
        r = reach(c, idx)
        rec("reach_disjoint_from_t", not (r & c.t), path, f"{sorted(r & c.t)}")
        ts = c.t | r
        if is_final(c):
            rec("tstar_optimal_f1", ts == c.t, path)
            return
        if c.z > 0:
            got, want = next_bracket(state, c), next_bracket_naive(c, idx)
            rec("cursor_matches_definition", got == want, path, f"cursor {got} vs {want}")

        d = self.dyna_fn(c, state)
        o = self.bf.optimal_actions(c)
        rec("oracle_optimality", d == o, path,
            f"dyna {sorted(map(str, d))} vs brute force {sorted(map(str, o))}")

        best, argmax = self.bf.best(c, cap=2)
        g = len(idx.gold)
        f1_ts = f1_counts(len(ts & idx.gold), len(ts), g)
        rec("tstar_optimal_f1", f1_ts == best, path, f"F1(t*)={f1_ts} vs max {best}")
        rmax, pmax = self.bf.best_recall_precision(c)
        m = len(ts & idx.gold)
        rec("tstar_max_recall_precision",
            Fraction(m, g) == rmax and Fraction(m, len(ts)) == pmax, path)
        rec("unique_optimum", argmax == {ts}, path,
            f"{len(argmax)} optimal trees")

        for a in all_actions(c, self.labels.chains()):
            child_state = state.copy()
            child = child_state.step(c, a)
            r2 = reach(child, idx)
            if a.structural:
                ok = (r2 == r) if a in d else (r2 < r)
                rec("reach_kept_by_structural", ok, list(path) + [a], f"in dyna: {a in d}")
            same = (child.t | r2) == ts
            rec("tstar_kept_iff_in_dyna", same == (a in d), list(path) + [a],
                f"in dyna: {a in d}")

        final_t = _rollout(c, state, self.dyna_fn)
        rec("rollout_reaches_tstar", final_t == ts, path)

    def enumerate_all(self):
        """Visit every configuration reachable from the initial one."""
        chains = self.labels.chains()
        stack = [(initial(self.n), OracleState(self.index), ())]
        while stack:
            c, state, path = stack.pop()
            self.check(c, state, path)
            if is_final(c):
                continue
            for a in all_actions(c, chains):
                s2 = state.copy()
                stack.append((s2.step(c, a), s2, path + (a,)))

    def sample(self, count: int, rng: random.Random):
        """Check `count` configurations drawn by uniform random rollouts."""
        chains = self.labels.chains()
        total = 4 * self.n - 2
        for _ in range(count):
            stop = rng.randrange(total + 1)
            c, state, path = initial(self.n), OracleState(self.index), []
            while c.z < stop:
                a = rng.choice(all_actions(c, chains))
                c = state.step(c, a)
                path.append(a)
            self.check(c, state, path)

    def check_gold_path(self):
        c, state = initial(self.n), OracleState(self.index)
        path = []
        for a in static_oracle(self.gold_tree):
            d = self.dyna_fn(c, state)
            self.report.record("static_action_in_dyna", a in d, path, str(a))
            c = state.step(c, a)
            path.append(a)
        bound = len(self.index.gold) + (4 * self.n - 2)
        self.report.record("amortized_traversals", state.traversals <= bound, path,
                           f"{state.traversals} > {bound}")


def enumeration_labels(gold: Tree, distractors=("X",), cap: int = 3) -> LabelInventory:
    """Gold label actions plus distractor labels, at most `cap` in total."""
    own = list(dict.fromkeys(node.label for node in gold.subtrees()))
    extra = [d for d in distractors if d not in own]
    return LabelInventory((own + extra)[: max(cap, len(own))])


def amortization_stats(trees: Iterable[Tree], rng: random.Random = None, explore: float = 0.0):
    """Parent-link traversals per sentence along a dyna rollout.

    With `explore` > 0, each step takes a uniformly random legal action with
    that probability instead of an oracle action (labels then come from the
    sentence's own chains).  Returns a list of (traversals, gold size, steps).
    """
    rng = rng or random.Random(0)
    out = []
    for tree in trees:
        idx = GoldTreeIndex.from_tree(tree)
        n = tree.span[1]
        chains = [node.chain for node in tree.subtrees()]
        c, state = initial(n), OracleState(idx)
        while not is_final(c):
            if rng.random() < explore:
                a = rng.choice(all_actions(c, chains))
            else:
                a = sorted(dyna(c, state))[0]
            c = state.step(c, a)
        out.append((state.traversals, len(idx.gold), 4 * n - 2))
    return out


def distinct_golds(trees: Iterable[Tree]) -> list:
    seen = set()
    out = []
    for t in trees:
        key = tuple(sorted(span_chains(t).items()))
        if key not in seen:
            seen.add(key)
            out.append(t)
    return out


def mutated_dyna(c: Configuration, state: OracleState, fallback_chain=None) -> frozenset:
    """The dynamic oracle with its first structural case flipped (combine
    where shift is optimal); a deliberately broken oracle for exercising
    the checker."""
    if c.z % 2 == 0 and c.z > 0:
        i, j = c.top
        nb = next_bracket(state, c)
        if nb.i == i and nb.j > j:
            return frozenset({Combine}) if COMBINE in legal_actions(c) else frozenset()
    return dyna(c, state, fallback_chain)


@dataclass
class CheckSummary:
    report: PropertyReport
    exhaustive: int = 0
    sampled: int = 0
    skipped: List[str] = field(default_factory=list)


def run_oracle_check(
    trees: Iterable[Tree],
    max_len: int = 5,
    exhaustive_len: int = 4,
    samples: int = 1000,
    seed: int = 0,
    dyna_fn: DynaFn = dyna,
    progress: Callable[[str], None] = None,
) -> CheckSummary:
    """Exhaustive enumeration on distinct gold trees with n <= exhaustive_len
    and `samples` random configurations spread over the longer ones up to
    `max_len`."""
    if max_len > MAX_LEN:
        raise EnumerationTooLarge(
            f"--max-len {max_len} is infeasible for brute-force search; use at most {MAX_LEN} "
            f"(exhaustive enumeration grows exponentially in sentence length)"
        )
    summary = CheckSummary(PropertyReport())
    golds = distinct_golds(t for t in trees if len(t) <= max_len)
    long = []
    for t in golds:
        labels = enumeration_labels(t)
        if len(labels) > MAX_LABELS:
            summary.skipped.append(f"n={len(t)} with {len(labels)} labels")
            continue
        if len(t) > exhaustive_len:
            long.append((t, labels))
            continue
        checker = OracleChecker(t, labels, dyna_fn)
        checker.enumerate_all()
        checker.check_gold_path()
        summary.report.merge(checker.report)
        summary.exhaustive += 1
        if progress:
            progress(f"n={len(t)}, {len(labels)} labels: {checker.report.configurations} configurations")
    if long and samples:
        rng = random.Random(seed)
        counts = Counter(rng.randrange(len(long)) for _ in range(samples))
        for k in sorted(counts):
            t, labels = long[k]
            checker = OracleChecker(t, labels, dyna_fn)
            checker.sample(counts[k], rng)
            checker.check_gold_path()
            summary.report.merge(checker.report)
            summary.sampled += 1
            if progress:
                progress(f"n={len(t)}, {len(labels)} labels: {counts[k]} sampled configurations")
    return summary
