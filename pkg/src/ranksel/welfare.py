"""Welfare quantities: busy-pick rate, top-pick rate and firm utility."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from .errors import InvalidInputError
from .posterior import (
    draw_free,
    oracle_policy,
    picked_utilities,
    ranked_statuses,
    status_table,
)
from .ranking_models import (
    CandidatePool,
    PlackettLuce,
    SuperstarDistribution,
    sample_rankings,
    superstar_index_probs,
)
from .strategies import (
    FIRST_FREE,
    KBusy,
    KFree,
    OracleRef,
    strategy_as_policy,
    superstar_window,
)

CLOSED_TOL = 1e-12


@dataclass(frozen=True)
class MetricsRecord:
    p_picked_busy: float
    p_top_picked: float
    firm_utility: float
    regret_vs_oracle: float
    oracle_utility: float
    p_picked_busy_stderr: float | None = None
    p_top_picked_stderr: float | None = None
    firm_utility_stderr: float | None = None
    regret_stderr: float | None = None

    def as_dict(self) -> dict:
        return asdict(self)


def _window(strategy, n):
    if not isinstance(strategy, (KFree, KBusy)):
        raise InvalidInputError("closed forms cover KFree / KBusy windows only")
    if not 1 <= strategy.k <= n:
        raise InvalidInputError(f"window {strategy.k} outside 1..{n}")
    return strategy.k


def p_picked_busy_closed(dist: SuperstarDistribution, p1: float, p2: float, strategy) -> float:
    k = _window(strategy, dist.n)
    Pk = dist.prefix_mass(k)
    if isinstance(strategy, KFree):
        return (1 - p2) ** (k - 1) * (Pk * (p2 - p1) + (1 - p2))
    return 1 - p2 ** (k - 1) * (Pk * (p1 - p2) + p2)


def p_top_picked_closed(dist: SuperstarDistribution, p1: float, p2: float, strategy) -> float:
    k = _window(strategy, dist.n)
    Pk, P1 = dist.prefix_mass(k), dist.prefix_mass(1)
    if isinstance(strategy, KFree):
        return p2 + (1 - p2) ** k + (p2 - p1) * ((1 - p2) ** (k - 1) * Pk - P1)
    return 1 - p2 + p2 ** k + (p2 - p1) * (P1 - p2 ** (k - 1) * Pk)


def metrics_exact(strategy, dist, pool: CandidatePool, model=None) -> MetricsRecord:
    """Full enumeration over rankings and status vectors."""
    statuses, ps, joint_u = status_table(dist, pool)
    policy = strategy_as_policy(strategy, pool, dist, model)
    oracle = oracle_policy(dist, pool)
    reach = ps > 0
    picks = np.where(policy.picks < 0, 0, policy.picks)
    rows = np.arange(len(ps))
    utility = float(joint_u[rows, picks][reach].sum())
    best = float(joint_u[rows, np.where(oracle.picks < 0, 0, oracle.picks)][reach].sum())

    p_busy = float(ps[statuses[rows, picks] == 0].sum())
    # the top-ranked candidate is picked exactly when the pick is position 0
    p_top = float(ps[picks == 0].sum())
    return MetricsRecord(
        p_picked_busy=min(max(p_busy, 0.0), 1.0),
        p_top_picked=min(max(p_top, 0.0), 1.0),
        firm_utility=utility,
        regret_vs_oracle=max(best - utility, 0.0),
        oracle_utility=best,
    )


def _exact_dist(spec, pool):
    if isinstance(spec, PlackettLuce) and pool.is_superstar and len(set(pool.values[1:])) == 1 \
            and len(set(pool.free_probs[1:])) == 1 and len(set(pool.busy_penalties[1:])) == 1:
        return superstar_index_probs(pool.values[0], pool.values[1], pool.n, spec.beta)
    from .ranking_models import ENUM_CAP, Explicit, model_table
    if isinstance(spec, Explicit):
        return spec.table
    if pool.n <= ENUM_CAP and not hasattr(spec, "sigma"):
        return model_table(spec, pool)
    return None


def metrics_mc(strategy, spec, pool: CandidatePool, samples: int, seed: int,
               dist=None) -> MetricsRecord:
    """Monte Carlo estimate; regret uses the exact posterior when one is available."""
    if dist is None:
        dist = _exact_dist(spec, pool)
    rng = np.random.default_rng(seed)
    rankings = sample_rankings(spec, pool, samples, rng)
    statuses = ranked_statuses(rankings, draw_free(pool, samples, rng))
    codes = statuses.astype(np.int64) @ (1 << np.arange(pool.n - 1, -1, -1))
    if dist is None:
        from .strategies import window_picks
        picks = window_picks(strategy, statuses)
        oracle_u = np.full(samples, np.nan)
    else:
        picks = strategy_as_policy(strategy, pool, dist).picks[codes]
        opicks = oracle_policy(dist, pool).picks[codes]
        picks = np.where(picks < 0, 0, picks)
        oracle_u = picked_utilities(pool, rankings, statuses, np.where(opicks < 0, 0, opicks))
    u = picked_utilities(pool, rankings, statuses, picks)
    busy = (statuses[np.arange(samples), picks] == 0).astype(float)
    top = (picks == 0).astype(float)
    diff = oracle_u - u

    def se(x):
        return float(x.std(ddof=1) / math.sqrt(samples))

    return MetricsRecord(
        p_picked_busy=float(busy.mean()),
        p_top_picked=float(top.mean()),
        firm_utility=float(u.mean()),
        regret_vs_oracle=float(diff.mean()),
        oracle_utility=float(oracle_u.mean()),
        p_picked_busy_stderr=se(busy),
        p_top_picked_stderr=se(top),
        firm_utility_stderr=se(u),
        regret_stderr=se(diff),
    )


@dataclass(frozen=True)
class AccuracyReport:
    rows: list
    # metric name -> grid indices where the metric dropped
    decreases: dict
    # metric name -> grid indices where the metric rose
    increases: dict


def accuracy_direction_report(pool: CandidatePool, beta_grid, strategy_rule="best_response",
                              tol: float = CLOSED_TOL) -> AccuracyReport:
    """Metrics along a descending-beta Plackett-Luce chain on a superstar pool.

    ``strategy_rule`` is ``"best_response"`` (the window rule at each beta) or a
    fixed KFree / KBusy spec.
    """
    betas = [float(b) for b in beta_grid]
    if not betas:
        raise InvalidInputError("beta grid is empty")
    if any(b2 > b1 for b1, b2 in zip(betas, betas[1:])):
        raise InvalidInputError("beta grid must be descending (accuracy increasing)")
    if not pool.is_superstar:
        raise InvalidInputError("accuracy report needs a superstar pool")
    p1, p2 = pool.free_probs[0], pool.free_probs[1]
    rows = []
    for beta in betas:
        dist = superstar_index_probs(pool.values[0], pool.values[1], pool.n, beta)
        window = superstar_window(pool, dist)
        strat = window.strategy if strategy_rule == "best_response" else strategy_rule
        exact = metrics_exact(strat, dist, pool)
        oracle = metrics_exact(OracleRef(), dist, pool)
        rows.append({
            "beta": beta,
            "direction": window.direction if strategy_rule == "best_response" else (
                FIRST_FREE if isinstance(strat, KFree) else "first_busy"),
            "window": strat.k,
            "threshold_r": window.threshold_R,
            "p_picked_busy_closed": p_picked_busy_closed(dist, p1, p2, strat),
            "p_top_picked_closed": p_top_picked_closed(dist, p1, p2, strat),
            "p_picked_busy": exact.p_picked_busy,
            "p_top_picked": exact.p_top_picked,
            "firm_utility": exact.firm_utility,
            "oracle_utility": oracle.firm_utility,
            "regret_vs_oracle": exact.regret_vs_oracle,
        })
    metrics = ["p_picked_busy_closed", "p_top_picked_closed", "firm_utility", "oracle_utility"]
    dec = {m: [] for m in metrics}
    inc = {m: [] for m in metrics}
    for idx in range(1, len(rows)):
        for m in metrics:
            delta = rows[idx][m] - rows[idx - 1][m]
            if delta < -tol:
                dec[m].append(idx)
            elif delta > tol:
                inc[m].append(idx)
    return AccuracyReport(rows, dec, inc)
