#!/usr/bin/env python3
"""Run the bundled 39-bus ramp-and-shed scenario and dump plot-ready traces.

    python scripts/run_ne39_scenario.py --out runs/ne39 [--no-noise] [--plot]

Writes trace.csv (buses 3, 12, 20, 34 by default), report.json and, with
--plot, traces.png (needs matplotlib, which the package itself does not).
"""

import argparse
import json
import time
from pathlib import Path


from vcpi.simkit import NoiseModel, bundled_scenario, compare_to_oracle, load_scenario, run_scenario


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--out", type=Path, default=Path("runs/ne39"))
    ap.add_argument("--buses", default="3,12,20,34")
    ap.add_argument("--no-noise", action="store_true")
    ap.add_argument("--kind")
    ap.add_argument("--every", type=int, default=10)
    ap.add_argument("--plot", action="store_true")
    args = ap.parse_args()

    sc = load_scenario(bundled_scenario("ne39_ramp"))
    sc = sc.with_overrides(index_kind=args.kind, noise=NoiseModel.off() if args.no_noise else None)
    t0 = time.perf_counter()
    tr = run_scenario(sc)
    print(f"simulated {sc.duration:.0f}s + {sc.warmup:.0f}s warm-up in {time.perf_counter() - t0:.1f}s")

    buses = [int(b) for b in args.buses.split(",")]
    args.out.mkdir(parents=True, exist_ok=True)
    tr.write_csv(args.out / "trace.csv", args.every, buses)
    rep = compare_to_oracle(tr)
    (args.out / "report.json").write_text(json.dumps(
        {"meta": tr.metadata, "comparison": rep.to_dict(), "events": tr.events}, indent=1, default=float))

    for w in rep.windows:
        print(f"window [{w.t0:6.1f}, {w.t1:6.1f}) {w.statistic} error {w.worst:.2e} "
              f"{'ok' if w.passed else 'FAIL'}")
    for e in tr.events:
        if e["event"] not in ("consensus",):
            print(f"  t={e['t']:7.2f}  {e['event']:<12} bus {e['bus']}")
    for b in buses:
        x = tr.estimate(b)
        print(f"bus {b:>3}: t=10 {x[tr.round_at(10)]:.4f}  t=100 {x[tr.round_at(100)]:.4f}  "
              f"t=320 {x[tr.round_at(320)]:.4f}")

    if args.plot:
        import matplotlib
        matplotlib.use("Agg")
        import matplotlib.pyplot as plt

        fig, ax = plt.subplots(figsize=(8, 4.5))
        orc = tr.oracle_per_round()
        for b in buses:
            c = tr.col(b)
            line, = ax.plot(tr.times, tr.x[:, c], label=f"bus {b}")
            ax.plot(tr.times, orc[:, c], ls="--", lw=0.8, color=line.get_color())
        ax.set_xlim(0, sc.duration)
        ax.set_xlabel("time (s)")
        ax.set_ylabel(sc.index_kind.value)
        ax.legend()
        fig.tight_layout()
        fig.savefig(args.out / "traces.png", dpi=120)
        print(f"wrote {args.out / 'traces.png'}")


if __name__ == "__main__":
    main()
