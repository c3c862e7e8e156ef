"""Sweeping oversubscription levels and reading the throughput trend.

Run with: python3 demos/05_oversubscription_sweep.py  (about 15s)
"""

from stagesim.scenario import build_simulation, scenario_from_dict


def main():
    print("ResNet18-like preset, six contexts, load pinned at device capacity.")
    print("Higher oversubscription lets busy contexts borrow idle contexts' SMs:\n")
    print("  oversub   label     jobs/s   lp miss rate")
    for os_ in (1, 1.5, 2, 6):
        cfg = scenario_from_dict({
            "preset": "resnet18_main",
            "gpu": {"oversubscription": os_},
            "overload_factor": 1.0,
            "duration": 1.5,
            "seed": 0,
        })
        report = build_simulation(cfg, collect_log=False).run().report
        print(f"  {os_:>7}   {report.label:>7}   {report.jps:6.1f}   "
              f"{report.dmr_lp:12.4f}")

    print("\nThe full policy grid lives in sweeps/full_grid.json; run it with:")
    print("  stagesim --scenario scenarios/resnet18.json "
          "--sweep sweeps/full_grid.json --out grid.csv")


if __name__ == "__main__":
    main()
