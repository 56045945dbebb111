"""Hover regulation, then nominal against GP-augmented NMPC under a body-z disturbance."""
import argparse
import time

import numpy as np

from dmcc.tracking import Disturbance, NmpcConfig, hover_reference, run_closed_loop, simulate_loop


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--disturbance", type=float, default=-0.5, help="body z acceleration, m/s^2")
    ap.add_argument("--duration", type=float, default=20.0)
    args = ap.parse_args()
    ref = hover_reference((0.0, 0.0, 1.0))

    t0 = time.perf_counter()
    # start 0.4 m off the hover point
    x0 = np.r_[0.3, -0.2, 0.8, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0]
    hover = simulate_loop(ref, NmpcConfig(), Disturbance(), 10.0, x0=x0)
    print(f"hover: steady-state error {hover.steady_state_error():.2e} m ({time.perf_counter() - t0:.1f} s)")

    t0 = time.perf_counter()
    res = run_closed_loop(ref, Disturbance(body=(0.0, 0.0, args.disturbance)), use_gpr=True,
                          duration=args.duration)
    print(f"nominal mean error {res.collection.mean_error():.4f} m")
    print(f"gp      mean error {res.log.mean_error():.4f} m ({time.perf_counter() - t0:.1f} s)")


if __name__ == "__main__":
    main()
