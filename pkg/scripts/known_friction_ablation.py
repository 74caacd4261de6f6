"""AEB avoidance and Friction-cause counts with the road friction unknown vs known."""

import argparse

from crashsim.harness import ExperimentConfig, run_experiment


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--n", type=int, default=200)
    ap.add_argument("--profile", default="low-friction")
    ap.add_argument("--seed", type=int, default=5)
    ap.add_argument("--sensor-set", default="1R1V")
    args = ap.parse_args()

    gen = {"n": args.n, "profile": args.profile, "seed": args.seed}
    print(f"{'friction':>10} {'avoided %':>10} {'Friction':>9}")
    for known in (False, True):
        cfg = ExperimentConfig(generator=gen, brake_types=("aeb",), sensor_sets=(args.sensor_set,), friction_known=known)
        st = run_experiment(cfg).cell("aeb", args.sensor_set)
        fri = st.causes.get("AEB", {}).get("Friction", 0)
        print(f"{'known' if known else 'unknown':>10} {st.avoided_pct:10.1f} {fri:9d}")


if __name__ == "__main__":
    main()
