"""Waypoint-count sweep comparing variational and RK4 transcriptions."""
import argparse
from pathlib import Path

from dmcc import io
from dmcc.model import table1
from dmcc.racing import sweep


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--counts", type=int, nargs="+", default=[1, 2, 3, 4])
    ap.add_argument("--out", default="results/race")
    args = ap.parse_args()
    rows = []
    for n in args.counts:
        for mode in ("del", "rk4"):
            (r,) = sweep([n], [mode], table1())
            rows.append(r)
            print(f"n={n} {mode:>3}: t_N={r['t_N']:.5f} s  {r['status']}  ({r['wall_time']:.1f} s)", flush=True)
    by = {(r["n_waypoints"], r["mode"]): r["t_N"] for r in rows}
    for n in args.counts:
        a, b = by[(n, "del")], by[(n, "rk4")]
        print(f"n={n}: relative gap {abs(a - b) / b:.2e}")
    io.write_csv(Path(args.out) / "race_sweep.csv", io.SWEEP_COLUMNS,
                 [[r["n_waypoints"], r["mode"], r["t_N"], r["wall_time"], r["optimal"]] for r in rows])


if __name__ == "__main__":
    main()
