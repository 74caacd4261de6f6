"""Classify cause-targeted scenarios and compare with the designed label.

Every design places exactly one blocker in front of its brake, so agreement should be 100 %.
"""

import argparse
from collections import Counter

from crashsim.brakes import brake_preset
from crashsim.causes import classify
from crashsim.engine import Replay, run
from crashsim.generator import generate_corpus
from crashsim.targeted import DESIGN_SENSOR_SET, DESIGNS, observed_label


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--n", type=int, default=20, help="scenarios per design")
    ap.add_argument("--seed", type=int, default=11)
    args = ap.parse_args()

    total_bad = 0
    for key, design in DESIGNS.items():
        brake = brake_preset(design.brake, design.ttc_threshold)
        got = Counter()
        for s in generate_corpus(args.n, f"cause-targeted:{key}", args.seed):
            rp = Replay(s)
            o = run(s, brake, DESIGN_SENSOR_SET, record_trace=False, replay=rp)
            got[observed_label(classify(o, s, brake, replay=rp)) if o.crashed else "avoided"] += 1
        ok = got[design.expected]
        total_bad += args.n - ok
        print(f"{key:22s} {ok:3d}/{args.n}  {dict(got)}")
    print("all agree" if total_bad == 0 else f"{total_bad} disagreements")


if __name__ == "__main__":
    main()
