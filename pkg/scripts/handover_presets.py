"""Solve the handover presets and write plan CSV/JSON plus figure data."""
import argparse
from pathlib import Path

from dmcc import io, plotdata
from dmcc.planner import plan_handover


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--presets", default="static,linear,circle")
    ap.add_argument("--kappa", type=float, nargs="*", default=[], help="extra circle runs with these kappa_init")
    ap.add_argument("--out", default="results/handover")
    args = ap.parse_args()
    out = Path(args.out)
    runs = [(p, []) for p in args.presets.split(",")]
    runs += [("circle", [f"constraints.kappa_init={k}"]) for k in args.kappa]
    for name, overrides in runs:
        scen = io.load_scenario(preset_name=name, overrides=overrides)
        _, spec, params, opts, _ = io.build(scen)
        res = plan_handover(spec, params, opts, raise_on_failure=False)
        stem = name + "".join("_k" + o.split("=")[1] for o in overrides)
        d = out / stem
        io.write_plan(res, d, "plan", scenario=scen)
        for fig in ("fig5", "fig6", "fig7"):
            getattr(plotdata, fig)(res, d)
        inv = res.check_invariants()
        print(f"{stem:>12}: {res.report.status.value:<10} t_N={res.t_N:.4f} s  active={inv['n_active']}  "
              f"max d={inv['max_contact_distance']:.4g} m  ({res.report.wall_time:.1f} s)")


if __name__ == "__main__":
    main()
