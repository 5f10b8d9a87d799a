"""Dynamic market: candidates turn busy when hired and free up at random.

A background firm hires from each ranking; candidate strategies are scored
counterfactually on the same (ranking, status) state without touching it.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidInputError
from .ranking_models import CandidatePool, sample_rankings
from .strategies import FollowRanking, KBusy, KFree, strategy_name, window_picks

CHUNK = 100
BAND_SIGMAS = 2.0


@dataclass(frozen=True)
class SimConfig:
    pool: CandidatePool
    model: object
    refresh_prob: float
    background_strategy: object
    candidate_strategies: tuple = ()
    steps: int = 2000
    replicates: int = 200
    seed: int = 0
    burn_in: float = 0.1

    def __post_init__(self):
        if not 0 < self.refresh_prob <= 1:
            raise InvalidInputError("refresh_prob must lie in (0, 1]")
        if self.steps < 1 or self.replicates < 1:
            raise InvalidInputError("steps and replicates must be positive")
        if not 0 <= self.burn_in < 1:
            raise InvalidInputError("burn_in is a fraction in [0, 1)")
        for s in (self.background_strategy, *self.candidate_strategies):
            if not isinstance(s, (FollowRanking, KFree, KBusy)):
                raise InvalidInputError(f"market strategies must be window rules, got {s!r}")


@dataclass(frozen=True)
class StrategyScore:
    name: str
    strategy: object
    mean: float
    stderr: float


@dataclass(frozen=True)
class SimReport:
    steady_free_prob: tuple
    strategy_utilities: tuple
    best_strategy: object
    # names whose paired gap to the best is within two standard errors
    best_band: tuple
    background_utility: float
    background_stderr: float
    # time-averaged free probabilities over steps [T/4, T/2) and [T/2, T)
    free_prob_quarters: tuple = field(default=((), ()))
    # free probability at the end of a step, after the background hire
    free_prob_after_pick: tuple = ()

    def score(self, name: str) -> StrategyScore:
        for s in self.strategy_utilities:
            if s.name == name:
                return s
        raise KeyError(name)


def _draw_replicate(cfg: SimConfig, seq: np.random.SeedSequence):
    rng = np.random.default_rng(seq)
    refresh = rng.random((cfg.steps, cfg.pool.n)) < cfg.refresh_prob
    rankings = sample_rankings(cfg.model, cfg.pool, cfg.steps, rng)
    return refresh, rankings


def _run_chunk(cfg: SimConfig, seqs, strategies):
    n, T = cfg.pool.n, cfg.steps
    R = len(seqs)
    draws = [_draw_replicate(cfg, s) for s in seqs]
    refresh = np.stack([d[0] for d in draws], axis=1)  # (T, R, n)
    rankings = np.stack([d[1] for d in draws], axis=1)  # (T, R, n)
    v, _, g = cfg.pool.arrays()
    start = int(np.floor(cfg.burn_in * T))
    q1, q2 = T // 4, T // 2

    free = np.ones((R, n), dtype=bool)
    rows = np.arange(R)
    free_sum = np.zeros((R, n))
    free_q = [np.zeros((R, n)), np.zeros((R, n))]
    after_pick = np.zeros((R, n))
    util = np.zeros((len(strategies), R))
    bg_util = np.zeros(R)
    for t in range(T):
        free |= refresh[t]
        ranking = rankings[t]
        ranked = np.take_along_axis(free, ranking, axis=1).astype(np.int8)
        if t >= start:
            free_sum += free
        if q1 <= t < q2:
            free_q[0] += free
        elif t >= q2:
            free_q[1] += free
        if t >= start:
            for idx, s in enumerate(strategies):
                pos = window_picks(s, ranked)
                cand = ranking[rows, pos]
                util[idx] += np.where(ranked[rows, pos] == 1, v[cand], v[cand] / g[cand])
        pos = window_picks(cfg.background_strategy, ranked)
        cand = ranking[rows, pos]
        if t >= start:
            bg_util += np.where(ranked[rows, pos] == 1, v[cand], v[cand] / g[cand])
        free[rows, cand] = False
        if t >= start:
            after_pick += free
    kept = T - start
    return (free_sum / kept, free_q[0] / max(q2 - q1, 1), free_q[1] / max(T - q2, 1),
            after_pick / kept, util / kept, bg_util / kept)


def _stderr(x: np.ndarray) -> float:
    return float(x.std(ddof=1) / np.sqrt(len(x))) if len(x) > 1 else 0.0


def run_sim(config: SimConfig) -> SimReport:
    strategies = list(config.candidate_strategies)
    seqs = np.random.SeedSequence(config.seed).spawn(config.replicates)
    parts = [_run_chunk(config, seqs[i:i + CHUNK], strategies)
             for i in range(0, config.replicates, CHUNK)]
    free, fq1, fq2, after = (np.concatenate([p[k] for p in parts]) for k in range(4))
    util = np.concatenate([p[4] for p in parts], axis=1)
    bg = np.concatenate([p[5] for p in parts])

    scores = tuple(StrategyScore(strategy_name(s), s, float(u.mean()), _stderr(u))
                   for s, u in zip(strategies, util))
    if scores:
        best_idx = int(np.argmax([s.mean for s in scores]))
        band = tuple(s.name for idx, s in enumerate(scores)
                     if idx == best_idx
                     or util[best_idx].mean() - util[idx].mean()
                     <= BAND_SIGMAS * _stderr(util[best_idx] - util[idx]))
        best = strategies[best_idx]
    else:
        band, best = (), None
    return SimReport(
        steady_free_prob=tuple(float(x) for x in free.mean(axis=0)),
        strategy_utilities=scores,
        best_strategy=best,
        best_band=band,
        background_utility=float(bg.mean()),
        background_stderr=_stderr(bg),
        free_prob_quarters=(tuple(float(x) for x in fq1.mean(axis=0)),
                            tuple(float(x) for x in fq2.mean(axis=0))),
        free_prob_after_pick=tuple(float(x) for x in after.mean(axis=0)),
    )


def default_family(n: int) -> tuple:
    return (FollowRanking(), *(KFree(k) for k in range(1, n + 1)),
            *(KBusy(k) for k in range(1, n + 1)))


def strategy_sweep(config: SimConfig, strategy_family_grid=None) -> SimReport:
    """Score every window strategy (or the given family) against one market."""
    family = tuple(strategy_family_grid) if strategy_family_grid else default_family(config.pool.n)
    return run_sim(SimConfig(
        pool=config.pool, model=config.model, refresh_prob=config.refresh_prob,
        background_strategy=config.background_strategy, candidate_strategies=family,
        steps=config.steps, replicates=config.replicates, seed=config.seed,
        burn_in=config.burn_in))


def ranked_scores(report: SimReport) -> list:
    return sorted(report.strategy_utilities, key=lambda s: -s.mean)
