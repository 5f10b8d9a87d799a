"""Selection strategies: windowed first-free/first-busy rules and pairwise voting."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateError, InvalidInputError
from .posterior import OraclePolicy, oracle_policy, status_matrix
from .ranking_models import (
    CandidatePool,
    Explicit,
    PermutationTable,
    SuperstarDistribution,
    model_table,
    permutation_prob,
)

FIRST_FREE = "first_free"
FIRST_BUSY = "first_busy"


# --------------------------------------------------------------------------
# strategy specs


@dataclass(frozen=True)
class FollowRanking:
    pass


@dataclass(frozen=True)
class KFree:
    k: int


@dataclass(frozen=True)
class KBusy:
    k: int


@dataclass(frozen=True)
class SuperstarAlgo:
    pass


@dataclass(frozen=True)
class PairwiseVoteAlgo:
    vote_mode: str = "magnitude"

    def __post_init__(self):
        if self.vote_mode not in ("magnitude", "count"):
            raise InvalidInputError(f"unknown vote mode {self.vote_mode!r}")


@dataclass(frozen=True)
class OracleRef:
    pass


StrategySpec = FollowRanking | KFree | KBusy | SuperstarAlgo | PairwiseVoteAlgo | OracleRef


def strategy_name(strategy) -> str:
    if isinstance(strategy, (KFree, KBusy)):
        return f"{type(strategy).__name__.lower()}_{strategy.k}"
    if isinstance(strategy, PairwiseVoteAlgo):
        return f"pairwise_vote_{strategy.vote_mode}"
    return {FollowRanking: "follow_ranking", SuperstarAlgo: "superstar_algo",
            OracleRef: "oracle"}.get(type(strategy), type(strategy).__name__.lower())


def first_in_window(statuses: np.ndarray, k: int, want: int) -> np.ndarray:
    """Vectorized k-free (want=1) / k-busy (want=0) pick over rows of ranked statuses."""
    window = statuses[:, :k] == want
    hit = window.any(axis=1)
    return np.where(hit, window.argmax(axis=1), 0)


def window_picks(strategy, statuses: np.ndarray) -> np.ndarray:
    n = statuses.shape[1]
    if isinstance(strategy, FollowRanking):
        return np.zeros(len(statuses), dtype=np.int64)
    if isinstance(strategy, (KFree, KBusy)):
        if not 1 <= strategy.k <= n:
            raise InvalidInputError(f"window {strategy.k} outside 1..{n}")
        return first_in_window(statuses, strategy.k, 1 if isinstance(strategy, KFree) else 0)
    raise InvalidInputError(f"{strategy!r} is not a fixed-window strategy")


# --------------------------------------------------------------------------
# superstar algorithm


@dataclass(frozen=True)
class WindowComputation:
    ratio_r: float
    threshold_R: float
    direction: str
    window_jstar: int
    # 1/R when seeking free candidates, R when seeking busy ones
    threshold: float

    @property
    def strategy(self):
        return KFree(self.window_jstar) if self.direction == FIRST_FREE else KBusy(self.window_jstar)


def superstar_window(pool: CandidatePool, dist: SuperstarDistribution) -> WindowComputation:
    if not pool.is_superstar:
        raise InvalidInputError("the window rule needs a superstar pool")
    v1, v2 = pool.values[0], pool.values[1]
    g1, g2 = pool.busy_penalties[0], pool.busy_penalties[1]
    denom = v1 - v2 / g2
    if denom <= 0:
        raise DegenerateError("v1 - v2/gamma2 must be positive")
    r = pool.free_busy_ratio
    R = (v1 / g1 - v2) / denom * r
    if R <= 1:
        direction = FIRST_FREE
        # R <= 0: a busy pick never beats a free one, so hunt the whole list
        threshold = math.inf if R <= 0 else 1.0 / R
    else:
        direction, threshold = FIRST_BUSY, R
    probs = dist.index_probs
    jstar = 1
    for j in range(1, dist.n):
        if probs[j] > 0 and probs[0] / probs[j] <= threshold:
            jstar = j + 1
    return WindowComputation(r, R, direction, jstar, threshold)


def superstar_select(window: WindowComputation, s) -> int:
    want = 1 if window.direction == FIRST_FREE else 0
    for pos in range(min(window.window_jstar, len(s))):
        if s[pos] == want:
            return pos
    return 0


@dataclass(frozen=True)
class ErrorBound:
    bound_value: float
    kind: str


def theorem3_bound(pool: CandidatePool, dist: SuperstarDistribution, j: int) -> ErrorBound:
    """Additive suboptimality bound of the window rule when position j is the alternative."""
    if j < 1:
        raise InvalidInputError("j must be a position after the top")
    p1, p2 = pool.free_probs[0], pool.free_probs[1]
    v2, g2 = pool.values[1], pool.busy_penalties[1]
    P = dist.index_probs
    value = (p2 / p1) * v2 * (1 - 1 / g2) * (1 - P[0] - P[j])
    return ErrorBound(max(value, 0.0), "theorem3")


# --------------------------------------------------------------------------
# pairwise voting


@dataclass(frozen=True)
class VoteLedger:
    # G > 0 favours the candidate at position j, G < 0 the top candidate
    pair_scores: dict
    sum_positive: float
    sum_negative: float
    decision: int


def _prob_fn(model, pool):
    if isinstance(model, PermutationTable):
        return model.prob
    return lambda perm: permutation_prob(model, pool, perm)


def pair_permutation(values, i: int, k: int, j: int, reverse: bool = False) -> tuple:
    """Candidate i on top, k at position j, the rest in value order.

    ``reverse=True`` puts the rest in ascending value order instead, the
    arrangement least favourable to the top candidate.
    """
    rest = sorted((c for c in range(len(values)) if c not in (i, k)),
                  key=lambda c: (-values[c], c))
    if reverse:
        rest = rest[::-1]
    return tuple([i] + rest[: j - 1] + [k] + rest[j - 1:])


def _swap(perm, a, b):
    out = list(perm)
    out[a], out[b] = out[b], out[a]
    return tuple(out)


def _pair_terms(pool, i, k, s_top):
    """Likelihood ratio and per-orientation gains of picking position j over the top."""
    v, p, g = pool.values, pool.free_probs, pool.busy_penalties
    r_ik = p[k] * (1 - p[i]) / ((1 - p[k]) * p[i])
    if s_top == 0:
        return r_ik, v[k] - v[i] / g[i], v[i] - v[k] / g[k]
    return 1.0 / r_ik, v[k] / g[k] - v[i], v[i] / g[i] - v[k]


def pair_score(pool, prob, i, k, j, s_top, reverse=False) -> float:
    perm = pair_permutation(pool.values, i, k, j, reverse)
    rho, gain_top, gain_flip = _pair_terms(pool, i, k, s_top)
    return rho * prob(perm) * gain_top + prob(_swap(perm, 0, j)) * gain_flip


def pairwise_vote_select(pool: CandidatePool, model, s_top: int, j: int,
                         vote_mode: str = "magnitude") -> VoteLedger:
    """Vote between the top position and position j (the first with the other status).

    ``model`` is a model spec with permutation probabilities or an explicit table.
    """
    if not 1 <= j < pool.n:
        raise InvalidInputError("j must be a position after the top")
    if s_top not in (0, 1):
        raise InvalidInputError("s_top is a status bit")
    prob = _prob_fn(model, pool)
    v = pool.values
    scores = {}
    for i, k in itertools.permutations(range(pool.n), 2):
        if v[i] > v[k]:
            scores[(i, k)] = pair_score(pool, prob, i, k, j, s_top)
    pos = [x for x in scores.values() if x > 0]
    neg = [x for x in scores.values() if x < 0]
    sum_pos, sum_neg = float(sum(pos)), float(-sum(neg))
    if vote_mode == "magnitude":
        pick_j = sum_pos > sum_neg
    elif vote_mode == "count":
        pick_j = len(pos) > len(neg)
    else:
        raise InvalidInputError(f"unknown vote mode {vote_mode!r}")
    return VoteLedger(scores, sum_pos, sum_neg, j if pick_j else 0)


def first_other_status(s) -> int | None:
    for pos in range(1, len(s)):
        if s[pos] != s[0]:
            return pos
    return None


def pairwise_vote_policy(pool, model, vote_mode="magnitude") -> OraclePolicy:
    statuses = status_matrix(pool.n)
    cache = {}
    picks = np.zeros(len(statuses), dtype=np.int64)
    for idx, s in enumerate(statuses):
        j = first_other_status(s)
        if j is None:
            continue
        key = (int(s[0]), j)
        if key not in cache:
            cache[key] = pairwise_vote_select(pool, model, key[0], j, vote_mode).decision
        picks[idx] = cache[key]
    return OraclePolicy(pool.n, picks)


def _status_likelihoods(table: PermutationTable, pool: CandidatePool, s) -> np.ndarray:
    perms = np.array(list(itertools.permutations(range(pool.n))))
    p_at = np.asarray(pool.free_probs)[perms]
    s = np.asarray(s)
    return np.prod(np.where(s == 1, p_at, 1 - p_at), axis=1)


def lemma9_bounds(pool: CandidatePool, model, s, decision: int | None = None,
                  vote_mode: str = "magnitude", with_coefficient: bool = True) -> ErrorBound:
    """Upper bound on the voting rule's regret for status vector ``s``.

    ``with_coefficient`` multiplies every term by max P[s|a]/P[s|b] over
    permutations; without it this is the looser-looking statement version,
    whose gaps are plain value differences.
    """
    j = first_other_status(s)
    if j is None:
        return ErrorBound(0.0, "lemma9_pick_1")
    s_top = int(s[0])
    ledger = pairwise_vote_select(pool, model, s_top, j, vote_mode)
    decision = ledger.decision if decision is None else decision
    table = model if isinstance(model, PermutationTable) else model_table(model, pool)
    prob = table.prob
    v, g = pool.values, pool.busy_penalties

    if with_coefficient:
        lik = _status_likelihoods(table, pool, s)
        coef = float(lik.max() / lik.min())
    else:
        coef = 1.0

    # probability that candidates {i, k} occupy positions {0, j}
    perms, probs = table.support
    occupied = {}
    for (a, b), pr in zip(map(tuple, perms[:, [0, j]]), probs):
        key = (a, b) if v[a] > v[b] else (b, a)
        occupied[key] = occupied.get(key, 0.0) + pr

    total = 0.0
    for (i, k), G in ledger.pair_scores.items():
        mass = occupied.get((i, k), 0.0)
        if not with_coefficient:
            gap = v[i] - v[k]
        elif decision == j:
            gap = max(v[i] / g[i] - v[k], 0.0) if s_top == 0 else v[i] - v[k] / g[k]
        else:
            gap = v[i] - v[k] / g[k] if s_top == 0 else max(v[i] / g[i] - v[k], 0.0)
        if decision == j and G < 0:
            total += coef * mass * gap
        elif decision != j and G > 0:
            total += coef * mass * gap
        elif decision != j and G < 0:
            rev = pair_permutation(v, i, k, j, reverse=True)
            norm = prob(rev) + prob(_swap(rev, 0, j))
            worst = pair_score(pool, prob, i, k, j, s_top, reverse=True) / norm if norm > 0 else 0.0
            total += coef * mass * max(worst, 0.0)
    kind = "lemma9_pick_j" if decision == j else "lemma9_pick_1"
    return ErrorBound(total, kind)


# --------------------------------------------------------------------------
# uniform policy view


def _superstar_dist(dist, pool) -> SuperstarDistribution:
    if isinstance(dist, SuperstarDistribution):
        return dist
    if isinstance(dist, PermutationTable) and pool.is_superstar:
        perms, probs = dist.support
        pos = np.argmax(perms == 0, axis=1)
        return SuperstarDistribution(tuple(np.bincount(pos, weights=probs, minlength=pool.n)))
    raise InvalidInputError("the window rule needs a superstar distribution")


def strategy_as_policy(strategy, pool: CandidatePool, dist=None, model=None) -> OraclePolicy:
    """Materialize a strategy as a status-vector -> position table."""
    statuses = status_matrix(pool.n)
    if isinstance(strategy, OraclePolicy):
        return strategy
    if isinstance(strategy, (FollowRanking, KFree, KBusy)):
        return OraclePolicy(pool.n, window_picks(strategy, statuses))
    if isinstance(strategy, SuperstarAlgo):
        window = superstar_window(pool, _superstar_dist(dist, pool))
        return OraclePolicy(pool.n, window_picks(window.strategy, statuses))
    if isinstance(strategy, PairwiseVoteAlgo):
        if model is None:
            if not isinstance(dist, PermutationTable):
                raise InvalidInputError("pairwise voting needs permutation probabilities")
            model = Explicit(dist)
        return pairwise_vote_policy(pool, model, strategy.vote_mode)
    if isinstance(strategy, OracleRef):
        return oracle_policy(dist, pool)
    raise InvalidInputError(f"unknown strategy {strategy!r}")
