"""Receding-horizon corridor reuse on versus off over a few seeds.

    python3 demos/rhc_ablation.py --seeds 5 --v-max 10
"""

import argparse
import math
from dataclasses import replace

import numpy as np

from corridorplan import ForestSpec, ReplanConfig, TrialSpec, run_trial


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seeds", type=int, default=5)
    ap.add_argument("--density", type=float, default=1 / 25)
    ap.add_argument("--v-max", type=float, default=10.0)
    args = ap.parse_args()

    base = TrialSpec(forest=ForestSpec(density=args.density), v_max=args.v_max)
    rows = {"reuse": [], "cold": []}
    for seed in range(args.seeds):
        rows["reuse"].append(run_trial(replace(base, seed=seed), keep_artifacts=False))
        rows["cold"].append(run_trial(replace(base, seed=seed, replan=ReplanConfig(receding_horizon=False)),
                                      keep_artifacts=False))
    for name, trials in rows.items():
        field = "hot_iterations" if name == "reuse" else "cold_iterations"
        its = [getattr(t, field) for t in trials if not math.isnan(getattr(t, field))]
        print(f"{name:5s}: success {sum(t.success for t in trials)}/{len(trials)}, "
              f"mean optimizer iterations {np.mean(its):.1f}, "
              f"mean planning {np.mean([t.planning_mean for t in trials]):.2f} ms")


if __name__ == "__main__":
    main()
