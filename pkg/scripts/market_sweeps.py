"""Dynamic-market strategy sweeps at several busy penalties.

Prints the steady free probabilities and the top strategies with their
two-stderr band for each gamma. Usage:
    python scripts/market_sweeps.py [--replicates 200] [--steps 2000] [--seed 2024]
"""

import argparse

import numpy as np

from ranksel.market import SimConfig, ranked_scores, strategy_sweep
from ranksel.ranking_models import CandidatePool, PlackettLuce
from ranksel.strategies import KBusy, KFree


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--replicates", type=int, default=200)
    parser.add_argument("--steps", type=int, default=2000)
    parser.add_argument("--seed", type=int, default=2024)
    parser.add_argument("--gammas", type=float, nargs="*", default=[1.5, 4.0, 15.0])
    args = parser.parse_args()
    n = 10
    for label, background in (("first-free background", KFree(n)), ("kbusy_3 background", KBusy(3))):
        for gamma in args.gammas:
            pool = CandidatePool((5.0,) + (0.0,) * (n - 1), (0.5,) * n, (gamma,) * n)
            rep = strategy_sweep(SimConfig(pool=pool, model=PlackettLuce(3.0), refresh_prob=0.4,
                                           background_strategy=background, steps=args.steps,
                                           replicates=args.replicates, seed=args.seed))
            free = rep.steady_free_prob
            print(f"{label}, gamma={gamma}: free high={free[0]:.3f} low={np.mean(free[1:]):.3f}"
                  f" (after hire {rep.free_prob_after_pick[0]:.3f}/{np.mean(rep.free_prob_after_pick[1:]):.3f})")
            for s in ranked_scores(rep)[:5]:
                mark = "*" if s.name in rep.best_band else " "
                print(f"  {mark} {s.name:<16} {s.mean:.4f} +- {s.stderr:.4f}")


if __name__ == "__main__":
    main()
