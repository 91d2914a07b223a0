"""Generate a synthetic corpus and run every CLI step on it, timing each one."""

import argparse
import sys
import time
from pathlib import Path

from streethazard.cli import main as cli

STEPS = ("validate", "label", "score", "scene", "mirror", "chord", "radar", "hexbin",
         "landscape", "metrics", "ordinal")


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--workdir", default="runs/synth")
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--n-images", type=int, default=2000)
    ap.add_argument("--threads", type=int, default=4)
    args = ap.parse_args()

    work = Path(args.workdir)
    corpus, out = work / "corpus", work / "out"
    t0 = time.perf_counter()
    rc = cli(["synth", "--seed", str(args.seed), "--n-images", str(args.n_images), "--out", str(corpus)])
    print(f"  synth {time.perf_counter() - t0:6.2f} s", file=sys.stderr)
    if rc:
        return rc
    for step in STEPS:
        t0 = time.perf_counter()
        rc = cli([step, "--corpus", str(corpus), "--out", str(out), "--threads", str(args.threads)])
        print(f"  {step} {time.perf_counter() - t0:6.2f} s", file=sys.stderr)
        if rc:
            print(f"{step} exited {rc}", file=sys.stderr)
            return rc
    return 0


if __name__ == "__main__":
    sys.exit(main())
