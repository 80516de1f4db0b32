"""Speed and acceleration profile of a fast flight.

Prints the speed and acceleration norm over time and summarizes the shape:
the initial ramp (time to 90% of v_max and whether speed rises monotonically
until then), the share of the flight spent near v_max, and the peaks
against the limits.

    python3 demos/speed_profile.py --v-max 10 --seed 2
"""

import argparse

import numpy as np

from corridorplan import ForestSpec, TrialSpec, run_trial


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--density", type=float, default=1 / 36)
    ap.add_argument("--v-max", type=float, default=10.0)
    ap.add_argument("--seed", type=int, default=2)
    args = ap.parse_args()

    spec = TrialSpec(forest=ForestSpec(density=args.density), v_max=args.v_max, seed=args.seed)
    result = run_trial(spec)
    trace = result.artifacts["trace"]
    t = trace[:, 0]
    speed = np.linalg.norm(trace[:, 4:7], axis=1)
    accel = np.linalg.norm(trace[:, 7:10], axis=1)
    print(f"success {result.success}, flight time {result.flight_time:.2f} s")
    for frac in np.linspace(0.0, 1.0, 11):
        k = min(int(frac * (len(t) - 1)), len(t) - 1)
        bar = "#" * int(40 * speed[k] / args.v_max)
        print(f"  t {t[k]:6.2f} s  speed {speed[k]:5.2f}  accel {accel[k]:5.2f}  {bar}")
    near = speed >= 0.9 * args.v_max
    if np.any(near):
        k = int(np.argmax(near))
        monotone = bool(np.all(np.diff(speed[: k + 1]) > -1e-6))
        print(f"ramp: 90% of v_max after {t[k]:.2f} s, monotone {monotone}")
    print(f"time at >= 80% of v_max: {100 * np.mean(speed >= 0.8 * args.v_max):.0f}% of the flight")
    print(f"peak speed {speed.max():.2f} m/s (limit {args.v_max}), peak accel {accel.max():.2f} m/s^2 "
          f"(limit {spec.a_max})")


if __name__ == "__main__":
    main()
