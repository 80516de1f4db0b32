"""Fly one closed-loop trial and export plot-ready CSV series.

    python3 demos/closed_loop_flight.py --density 0.04 --v-max 10 --seed 1 --out flight
"""

import argparse

from corridorplan import ForestSpec, TrialSpec, export_plots, run_trial
from corridorplan.bench import offline_check, summarize


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--density", type=float, default=1 / 25)
    ap.add_argument("--v-max", type=float, default=10.0)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--out", default="flight")
    args = ap.parse_args()

    spec = TrialSpec(forest=ForestSpec(density=args.density), v_max=args.v_max, seed=args.seed)
    result = run_trial(spec)
    print(summarize([result]))
    check = offline_check(result, spec)
    print("offline re-check: " + ", ".join(f"{k} {v:.4g}" for k, v in check.items()))
    for event in result.artifacts["events"][:5]:
        print(f"  t {event['t']:5.2f} {event['trigger']:18s} success {event['success']} "
              f"reused {event.get('reused_spheres', 0)} iterations {event.get('opt_iterations', '-')}")
    for path in export_plots(result, args.out):
        print(f"  wrote {path}")


if __name__ == "__main__":
    main()
