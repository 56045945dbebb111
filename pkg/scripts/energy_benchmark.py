"""Energy behaviour of the variational integrator against RK4 on a fast spin."""
import argparse

from dmcc.reference import SpinCase, energy_benchmark


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--dt", type=float, default=0.01)
    ap.add_argument("--steps", type=int, default=1000)
    ap.add_argument("--spin", type=float, default=20.0, help="body z rate, rad/s")
    ap.add_argument("--tilt", type=float, default=0.4, help="initial roll, rad")
    args = ap.parse_args()
    r = energy_benchmark(SpinCase(dt=args.dt, steps=args.steps, spin=args.spin, tilt=args.tilt))
    print(f"E0 = {r['energy0']:.6f} J")
    print(f"variational: slope {r['del_slope']:+.3e} J/s, range {r['del_range']:.3e} J ({r['del_time']:.1f} s)")
    print(f"rk4        : slope {r['rk4_slope']:+.3e} J/s, range {r['rk4_range']:.3e} J ({r['rk4_time']:.1f} s)")


if __name__ == "__main__":
    main()
