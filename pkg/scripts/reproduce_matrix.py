"""Full brake x sensor-set x TTC-threshold matrix on a generated corpus.

Prints the avoided-percentage grid and writes json/csv/markdown reports.
"""

import argparse
import time
from pathlib import Path

from crashsim.harness import ExperimentConfig, emit_report, run_experiment


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--n", type=int, default=500)
    ap.add_argument("--profile", default="mixed")
    ap.add_argument("--seed", type=int, default=2024)
    ap.add_argument("--jobs", type=int, default=1)
    ap.add_argument("--out", default="results/matrix")
    args = ap.parse_args()

    cfg = ExperimentConfig(generator={"n": args.n, "profile": args.profile, "seed": args.seed}, jobs=args.jobs)
    t0 = time.perf_counter()
    report = run_experiment(cfg)
    elapsed = time.perf_counter() - t0

    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    for fmt, ext in (("json", "json"), ("csv", "csv"), ("markdown", "md")):
        emit_report(report, fmt, out.with_suffix("." + ext))
    print(emit_report(report, "markdown"))
    print(f"{args.n} scenarios, {len(report.cells)} cells, {elapsed:.1f} s")


if __name__ == "__main__":
    main()
