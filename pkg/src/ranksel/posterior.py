"""Exact Bayes posteriors over ranked positions and the optimal selection rule."""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import CapacityError, ImpossibleStatusError, InvalidInputError
from .ranking_models import (
    ENUM_CAP,
    CandidatePool,
    ModelSpec,
    PermutationTable,
    SuperstarDistribution,
    sample_rankings,
)

SUPERSTAR_CAP = 12
TIE_TOL = 1e-12
UNREACHABLE = -1


@lru_cache(maxsize=16)
def status_matrix(n: int) -> np.ndarray:
    """All 2^n status vectors (1 = free), position 0 varying slowest."""
    return np.array(list(itertools.product((0, 1), repeat=n)), dtype=np.int8)


def status_code(bits) -> int:
    code = 0
    for b in bits:
        code = (code << 1) | int(b)
    return code


def support(dist, pool: CandidatePool):
    """Permutations carrying mass, as ``(perms (m, n), probs (m,))``.

    A superstar distribution becomes n cells: the high-value candidate at each
    position with the interchangeable low-value candidates filling the rest.
    """
    if isinstance(dist, SuperstarDistribution):
        if dist.n != pool.n:
            raise InvalidInputError("distribution and pool disagree on n")
        if dist.n > SUPERSTAR_CAP:
            raise CapacityError(f"superstar posteriors are limited to n <= {SUPERSTAR_CAP}")
        low = pool.values[1:], pool.free_probs[1:], pool.busy_penalties[1:]
        if not pool.values[0] > pool.values[1] or any(len(set(x)) != 1 for x in low):
            raise InvalidInputError("a superstar distribution needs a superstar pool "
                                    "with identical low-value candidates")
        n = pool.n
        perms = np.empty((n, n), dtype=np.int64)
        for k in range(n):
            others = list(range(1, n))
            perms[k] = others[:k] + [0] + others[k:]
        return perms, dist.as_array()
    if isinstance(dist, PermutationTable):
        if dist.n != pool.n:
            raise InvalidInputError("table and pool disagree on n")
        if dist.n > ENUM_CAP:
            raise CapacityError(f"explicit tables are limited to n <= {ENUM_CAP}")
        return dist.support
    raise InvalidInputError(f"not a ranking distribution: {dist!r}")


def _joint(perms, probs, pool: CandidatePool, statuses: np.ndarray):
    """Joint weights and unnormalized utilities for a batch of status vectors.

    Returns ``W`` with ``W[s, c] = P[perm_c] * P[s | perm_c]`` plus per-position
    sums of ``W * value`` and ``W * value / penalty``.
    """
    v, p, g = pool.arrays()
    p_at = p[perms]
    S = statuses.astype(float)
    # product over positions of p^s (1-p)^(1-s), done as a sum of logs
    log_lik = S @ np.log(p_at).T + (1.0 - S) @ np.log1p(-p_at).T
    W = np.exp(log_lik) * probs[None, :]
    ev = W @ v[perms]
    ev_busy = W @ (v / g)[perms]
    return W, ev, ev_busy


def _argmax_low(row: np.ndarray) -> int:
    top = row.max()
    return int(np.flatnonzero(row >= top - TIE_TOL * max(1.0, abs(top)))[0])


@dataclass(frozen=True)
class PosteriorReport:
    expected_values: tuple
    expected_utilities: tuple
    best_index: int
    status_prob: float
    # P[s] * expected_utilities, handy for comparing unnormalized terms
    joint_utilities: tuple


def posterior_report(dist, pool: CandidatePool, s) -> PosteriorReport:
    perms, probs = support(dist, pool)
    s = np.asarray(s, dtype=np.int8)
    if s.shape != (pool.n,) or not set(s.tolist()) <= {0, 1}:
        raise InvalidInputError("status vector must hold one 0/1 bit per position")
    W, ev, ev_busy = _joint(perms, probs, pool, s[None, :])
    ps = float(W.sum())
    if ps <= 0:
        raise ImpossibleStatusError(f"status {s.tolist()} has zero probability")
    joint_u = np.where(s == 1, ev[0], ev_busy[0])
    eu = joint_u / ps
    return PosteriorReport(
        expected_values=tuple(ev[0] / ps),
        expected_utilities=tuple(eu),
        best_index=_argmax_low(eu),
        status_prob=ps,
        joint_utilities=tuple(joint_u),
    )


@dataclass(frozen=True, eq=False)
class OraclePolicy:
    """Status vector -> picked position, for all 2^n vectors.

    ``picks[status_code(s)]`` is the position; ``UNREACHABLE`` marks vectors
    with zero probability. Every tabulated strategy uses this shape.
    """

    n: int
    picks: np.ndarray

    def __getitem__(self, s) -> int | None:
        pick = int(self.picks[status_code(s)])
        return None if pick == UNREACHABLE else pick

    def as_dict(self) -> dict:
        return {tuple(int(b) for b in s): self[s] for s in status_matrix(self.n)}


def status_table(dist, pool: CandidatePool):
    """Joint quantities for every status vector: ``(statuses, P[s], joint utilities)``."""
    perms, probs = support(dist, pool)
    statuses = status_matrix(pool.n)
    W, ev, ev_busy = _joint(perms, probs, pool, statuses)
    joint_u = np.where(statuses == 1, ev, ev_busy)
    return statuses, W.sum(axis=1), joint_u


def oracle_policy(dist, pool: CandidatePool) -> OraclePolicy:
    statuses, ps, joint_u = status_table(dist, pool)
    picks = np.full(len(statuses), UNREACHABLE, dtype=np.int64)
    for idx in np.flatnonzero(ps > 0):
        picks[idx] = _argmax_low(joint_u[idx] / ps[idx])
    return OraclePolicy(pool.n, picks)


def _as_policy(policy, dist, pool) -> OraclePolicy:
    if isinstance(policy, OraclePolicy):
        return policy
    from .strategies import strategy_as_policy

    return strategy_as_policy(policy, pool, dist)


def policy_expected_utility(policy, dist, pool: CandidatePool) -> float:
    """Exact expected utility of a tabulated policy or a strategy spec."""
    table = _as_policy(policy, dist, pool)
    statuses, ps, joint_u = status_table(dist, pool)
    reach = ps > 0
    picks = np.where(table.picks < 0, 0, table.picks)
    return float(joint_u[np.arange(len(ps)), picks][reach].sum())


def ranked_statuses(rankings: np.ndarray, free: np.ndarray) -> np.ndarray:
    """Free bits reordered into ranked positions."""
    return np.take_along_axis(free, rankings, axis=1)


def draw_free(pool: CandidatePool, size: int, rng: np.random.Generator) -> np.ndarray:
    """Per-candidate free bits (size, n), drawn independently of the ranking."""
    return (rng.random((size, pool.n)) < np.asarray(pool.free_probs)).astype(np.int8)


def picked_utilities(pool: CandidatePool, rankings, statuses, picks) -> np.ndarray:
    v, _, g = pool.arrays()
    rows = np.arange(len(picks))
    cand = rankings[rows, picks]
    free = statuses[rows, picks] == 1
    return np.where(free, v[cand], v[cand] / g[cand])


def policy_expected_utility_mc(policy, spec: ModelSpec, pool: CandidatePool, samples: int,
                               seed: int, dist=None):
    """Monte Carlo estimate ``(mean, stderr)``; rankings come from ``spec``."""
    table = _as_policy(policy, dist, pool)
    rng = np.random.default_rng(seed)
    rankings = sample_rankings(spec, pool, samples, rng)
    statuses = ranked_statuses(rankings, draw_free(pool, samples, rng))
    codes = statuses.astype(np.int64) @ (1 << np.arange(pool.n - 1, -1, -1))
    picks = table.picks[codes]
    picks = np.where(picks < 0, 0, picks)
    u = picked_utilities(pool, rankings, statuses, picks)
    return float(u.mean()), float(u.std(ddof=1) / np.sqrt(samples))
