"""Plan once through a generated forest with the full map known.

    python3 demos/offline_plan.py --density 0.04 --v-max 10 --seed 3
"""

import argparse

import numpy as np

from corridorplan import ForestSpec, OptimizerConfig, SamplerConfig, generate_forest, plan_offline


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--density", type=float, default=1 / 25)
    ap.add_argument("--v-max", type=float, default=10.0)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--out", help="optional CSV for the sampled trajectory")
    args = ap.parse_args()

    world, trees = generate_forest(ForestSpec(density=args.density, seed=args.seed), inflation=0.5)
    plan = plan_offline(world, (-30, 0, 2.5), (30, 0, 2.5), SamplerConfig(), OptimizerConfig(v_max=args.v_max),
                        np.random.default_rng(args.seed))
    traj = plan.result.trajectory
    print(f"{len(trees)} trees, guide path {plan.path.length:.1f} m, {len(plan.corridor)} spheres")
    print(f"duration {traj.total_duration:.2f} s, max speed {plan.report.max_speed:.2f} m/s, "
          f"max accel {plan.report.max_accel:.2f} m/s^2, clearance {plan.clearance:.3f} m")
    print("timings (ms): " + ", ".join(f"{k} {v:.2f}" for k, v in plan.timings_ms.items()))
    if args.out:
        traj.dump_csv(args.out)
        print(f"trajectory -> {args.out}")


if __name__ == "__main__":
    main()
