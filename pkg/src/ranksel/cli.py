"""``ranksel`` command line: run an experiment from a YAML/JSON config and write rows."""

from __future__ import annotations

import argparse
import csv
import io
import itertools
import json
import subprocess
import sys
from pathlib import Path

import numpy as np
import yaml

from . import __version__
from .errors import CapacityError, RankselError
from .market import SimConfig, default_family, strategy_sweep
from .posterior import posterior_report, status_table
from .ranking_models import (
    ENUM_CAP,
    CandidatePool,
    GaussianRUM,
    Mallows,
    PlackettLuce,
    gaussian_rum_table,
    is_inversion_monotone,
    model_table,
    superstar_index_probs,
)
from .strategies import (
    FollowRanking,
    KBusy,
    KFree,
    PairwiseVoteAlgo,
    SuperstarAlgo,
    first_other_status,
    superstar_window,
    theorem3_bound,
)
from .welfare import metrics_exact, p_picked_busy_closed, p_top_picked_closed

KINDS = ("strategy_map", "welfare_sweep", "regret_curve", "monotone_check", "market_sim",
         "oracle_dump")
STOCHASTIC = {"market_sim", "monotone_check"}


class UsageError(RankselError):
    pass


# --------------------------------------------------------------------------
# config


def load_config(path) -> dict:
    text = Path(path).read_text()
    try:
        cfg = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise UsageError(f"cannot parse config: {exc}") from exc
    if not isinstance(cfg, dict):
        raise UsageError("config must be a mapping")
    return cfg


def _get(cfg, dotted, default=None):
    node = cfg
    for part in dotted.split("."):
        if not isinstance(node, dict) or part not in node:
            return default
        node = node[part]
    return node


def _need(cfg, dotted):
    value = _get(cfg, dotted)
    if value is None:
        raise UsageError(f"config is missing {dotted}")
    return value


def _grid(cfg, dotted, default=None):
    value = _get(cfg, dotted, default)
    if value is None:
        raise UsageError(f"config is missing {dotted}")
    value = [float(x) for x in (value if isinstance(value, list) else [value])]
    if not value:
        raise UsageError(f"{dotted} must be a non-empty list")
    return value


def build_pool(cfg, gamma=None) -> CandidatePool:
    values = _need(cfg, "pool.values")
    n = len(values)
    probs = _get(cfg, "pool.free_probs", [0.5] * n)
    pens = _get(cfg, "pool.busy_penalties", [1.0] * n)
    if gamma is not None:
        pens = [gamma] * n
    return CandidatePool(tuple(values), tuple(probs), tuple(pens))


def model_kind(cfg) -> str:
    kind = _get(cfg, "model.kind", "plackett_luce")
    if kind not in ("plackett_luce", "mallows", "gaussian_rum"):
        raise UsageError(f"unknown model.kind {kind!r}")
    return kind


def parse_strategy(text: str):
    name, _, arg = str(text).partition(":")
    name = name.strip().lower()
    if name in ("kfree", "first_free"):
        return KFree(int(arg))
    if name in ("kbusy", "first_busy"):
        return KBusy(int(arg))
    if name in ("follow", "followranking", "follow_ranking"):
        return FollowRanking()
    raise UsageError(f"unknown strategy {text!r}")


# --------------------------------------------------------------------------
# experiments; each returns (rows, flags)


def run_strategy_map(cfg, seed):
    base = build_pool(cfg)
    if not base.is_superstar:
        raise UsageError("strategy_map needs a superstar pool")
    rows = []
    for gamma in _grid(cfg, "model.gamma_grid"):
        pool = build_pool(cfg, gamma)
        for beta in _grid(cfg, "model.beta_grid"):
            dist = superstar_index_probs(pool.values[0], pool.values[1], pool.n, beta)
            w = superstar_window(pool, dist)
            rows.append({"gamma": gamma, "beta": beta, "accuracy": 1.0 / beta,
                         "direction": w.direction, "window_jstar": w.window_jstar,
                         "ratio_r": w.ratio_r, "threshold_r": w.threshold_R})
    return rows, {}


def run_welfare_sweep(cfg, seed):
    rows = []
    gammas = _grid(cfg, "model.gamma_grid") if _get(cfg, "model.gamma_grid") else [None]
    for gamma in gammas:
        pool = build_pool(cfg, gamma)
        if not pool.is_superstar:
            raise UsageError("welfare_sweep needs a superstar pool")
        p1, p2 = pool.free_probs[0], pool.free_probs[1]
        for beta in _grid(cfg, "model.beta_grid"):
            dist = superstar_index_probs(pool.values[0], pool.values[1], pool.n, beta)
            for family, k in itertools.product((KFree, KBusy), range(1, pool.n + 1)):
                strat = family(k)
                m = metrics_exact(strat, dist, pool)
                rows.append({"gamma": pool.busy_penalties[0], "beta": beta,
                             "strategy": type(strat).__name__.lower(), "k": k,
                             "p_picked_busy": p_picked_busy_closed(dist, p1, p2, strat),
                             "p_top_picked": p_top_picked_closed(dist, p1, p2, strat),
                             "firm_utility": m.firm_utility,
                             "regret_vs_oracle": m.regret_vs_oracle})
    return rows, {}


def run_regret_curve(cfg, seed):
    pool = build_pool(cfg)
    rows, over = [], 0
    for beta in _grid(cfg, "model.beta_grid"):
        strategies = []
        if pool.is_superstar:
            dist = superstar_index_probs(pool.values[0], pool.values[1], pool.n, beta)
            strategies.append(("superstar_algo", SuperstarAlgo(), dist, None))
        if pool.n <= ENUM_CAP:
            table = model_table(PlackettLuce(beta), pool)
            for mode in ("magnitude", "count"):
                strategies.append((f"pairwise_vote_{mode}", PairwiseVoteAlgo(mode), table,
                                   PlackettLuce(beta)))
        elif not pool.is_superstar:
            raise CapacityError(f"exact regret needs n <= {ENUM_CAP} beyond the superstar case")
        for name, strat, dist, model in strategies:
            m = metrics_exact(strat, dist, pool, model)
            bound = float("nan")
            if name == "superstar_algo":
                statuses, ps, _ = status_table(dist, pool)
                bound = sum(ps[i] * theorem3_bound(pool, dist, j).bound_value
                            for i, s in enumerate(statuses)
                            if (j := first_other_status(s)) is not None)
                over += int(m.regret_vs_oracle > bound + 1e-9)
            rows.append({"beta": beta, "strategy": name, "firm_utility": m.firm_utility,
                         "oracle_utility": m.oracle_utility,
                         "regret_vs_oracle": m.regret_vs_oracle, "bound": bound})
    return rows, {"bound_violations": over}


def run_monotone_check(cfg, seed):
    pool = build_pool(cfg)
    if pool.n > ENUM_CAP:
        raise CapacityError(f"explicit tables are limited to n <= {ENUM_CAP}")
    kind = model_kind(cfg)
    rows, bad = [], 0
    if kind == "plackett_luce":
        params = [(b, PlackettLuce(b)) for b in _grid(cfg, "model.beta_grid")]
    elif kind == "mallows":
        params = [(f, Mallows(f)) for f in _grid(cfg, "model.phi_grid")]
    else:
        params = [(s, GaussianRUM(s)) for s in _grid(cfg, "model.sigma_grid")]
    samples = int(_get(cfg, "samples", 100000))
    nsig = float(_get(cfg, "model.stderr_slack", 4.0))
    for idx, (param, spec) in enumerate(params):
        if isinstance(spec, GaussianRUM):
            table = gaussian_rum_table(pool, spec.sigma, samples, seed + idx)
            slack = nsig * table.max_stderr()
        else:
            table = model_table(spec, pool)
            slack = 0.0
        ok, violations = is_inversion_monotone(table, pool, slack)
        bad += int(not ok)
        rows.append({"model": kind, "param": param, "monotone": bool(ok),
                     "violations": len(violations), "slack": slack})
    return rows, {"non_monotone": bad}


def run_market_sim(cfg, seed):
    pool = build_pool(cfg)
    kind = model_kind(cfg)
    if kind == "plackett_luce":
        model = PlackettLuce(_grid(cfg, "model.beta_grid")[0])
    elif kind == "mallows":
        model = Mallows(_grid(cfg, "model.phi_grid")[0])
    else:
        model = GaussianRUM(_grid(cfg, "model.sigma_grid")[0])
    family = _get(cfg, "sim.strategies")
    family = [parse_strategy(s) for s in family] if family else list(default_family(pool.n))
    config = SimConfig(
        pool=pool, model=model,
        refresh_prob=float(_get(cfg, "sim.refresh_prob", 0.4)),
        background_strategy=parse_strategy(_get(cfg, "sim.background", f"kfree:{pool.n}")),
        candidate_strategies=tuple(family),
        steps=int(_get(cfg, "sim.steps", 2000)),
        replicates=int(_get(cfg, "sim.replicates", 200)),
        seed=seed)
    report = strategy_sweep(config, family)
    rows = [{"record": "strategy", "name": s.name, "value": s.mean, "stderr": s.stderr,
             "in_best_band": s.name in report.best_band} for s in report.strategy_utilities]
    for c, f in enumerate(report.steady_free_prob):
        rows.append({"record": "free_prob", "name": f"candidate_{c}", "value": f,
                     "stderr": float("nan"), "in_best_band": False})
    for c, f in enumerate(report.free_prob_after_pick):
        rows.append({"record": "free_prob_after_pick", "name": f"candidate_{c}", "value": f,
                     "stderr": float("nan"), "in_best_band": False})
    return rows, {"best_band": list(report.best_band)}


def run_oracle_dump(cfg, seed):
    pool = build_pool(cfg)
    beta = _grid(cfg, "model.beta_grid")[0]
    if pool.is_superstar and len(set(pool.busy_penalties[1:])) == 1:
        dist = superstar_index_probs(pool.values[0], pool.values[1], pool.n, beta)
    elif pool.n <= ENUM_CAP:
        dist = model_table(PlackettLuce(beta), pool)
    else:
        raise CapacityError(f"oracle tables need n <= {ENUM_CAP} beyond the superstar case")
    statuses, ps, _ = status_table(dist, pool)
    rows = []
    for s, prob in zip(statuses, ps):
        if prob <= 0:
            continue
        rep = posterior_report(dist, pool, s)
        row = {"status": "".join(map(str, s.tolist())), "status_prob": prob,
               "best_index": rep.best_index}
        row.update({f"utility_{i}": u for i, u in enumerate(rep.expected_utilities)})
        rows.append(row)
    return rows, {}


RUNNERS = {
    "strategy_map": run_strategy_map,
    "welfare_sweep": run_welfare_sweep,
    "regret_curve": run_regret_curve,
    "monotone_check": run_monotone_check,
    "market_sim": run_market_sim,
    "oracle_dump": run_oracle_dump,
}


# --------------------------------------------------------------------------
# output


def _fmt(x):
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (float, np.floating)):
        return f"{float(x):.12g}"
    return str(x)


def _plain(x):
    if isinstance(x, np.generic):
        return x.item()
    return x


def render_csv(rows) -> str:
    buf = io.StringIO()
    if rows:
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(list(rows[0]))
        for row in rows:
            writer.writerow([_fmt(v) for v in row.values()])
    return buf.getvalue()


def render_json(rows, metadata) -> str:
    clean = [{k: _plain(v) for k, v in row.items()} for row in rows]
    return json.dumps({"metadata": metadata, "rows": clean}, indent=1, sort_keys=False) + "\n"


def version_string() -> str:
    try:
        out = subprocess.run(["git", "describe", "--always", "--tags", "--dirty"],
                             cwd=Path(__file__).parent, capture_output=True, text=True,
                             timeout=5)
        if out.returncode == 0 and out.stdout.strip():
            return f"{__version__}+g{out.stdout.strip()}"
    except (OSError, subprocess.SubprocessError):
        pass
    return __version__


def run(kind: str, cfg: dict, seed: int | None, out: str | None, fmt: str | None) -> dict:
    if kind not in RUNNERS:
        raise UsageError(f"unknown experiment kind {kind!r}")
    declared = cfg.get("experiment")
    if declared is not None and declared != kind:
        raise UsageError(f"config declares experiment {declared!r}, command asks for {kind!r}")
    seed = seed if seed is not None else _get(cfg, "rng.seed")
    if seed is None:
        if kind in STOCHASTIC:
            raise UsageError(f"{kind} needs a seed (rng.seed or --seed)")
        seed = 0
    seed = int(seed)
    fmt = fmt or _get(cfg, "output.format", "csv")
    if fmt not in ("csv", "json"):
        raise UsageError(f"unknown output format {fmt!r}")
    out = out or _get(cfg, "output.path")

    rows, flags = RUNNERS[kind](cfg, seed)
    metadata = {"experiment": kind, "seed": seed, "version": version_string(), "config": cfg}
    text = render_csv(rows) if fmt == "csv" else render_json(rows, metadata)
    if out:
        Path(out).parent.mkdir(parents=True, exist_ok=True)
        Path(out).write_text(text)
    bad_prob = sum(1 for r in rows for k, v in r.items()
                   if k.startswith("p_") and isinstance(v, float) and not -1e-12 <= v <= 1 + 1e-12)
    bad_regret = sum(1 for r in rows if r.get("regret_vs_oracle", 0.0) < -1e-9)
    return {"experiment": kind, "seed": seed, "rows": len(rows), "out": out, "format": fmt,
            "violations": {**flags, "probability_range": bad_prob, "negative_regret": bad_regret},
            **({} if out else {"data": text})}


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="ranksel", description=__doc__)
    parser.add_argument("kind", choices=KINDS)
    parser.add_argument("--config", required=True)
    parser.add_argument("--seed", type=int)
    parser.add_argument("--out")
    parser.add_argument("--format", choices=("csv", "json"))
    args = parser.parse_args(argv)
    try:
        cfg = load_config(args.config)
        summary = run(args.kind, cfg, args.seed, args.out, args.format)
    except CapacityError as exc:
        print(json.dumps({"error": "CapacityError", "message": str(exc)}), file=sys.stderr)
        return 3
    except (UsageError, OSError, ValueError, KeyError, TypeError) as exc:
        print(json.dumps({"error": type(exc).__name__, "message": str(exc)}), file=sys.stderr)
        return 2
    except RankselError as exc:
        print(json.dumps({"error": type(exc).__name__, "message": str(exc)}), file=sys.stderr)
        return 1
    print(json.dumps(summary))
    return 0


if __name__ == "__main__":
    sys.exit(main())
