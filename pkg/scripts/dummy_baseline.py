"""Monte Carlo over synthetic corpora: constrained vs similarity-only mirrors.

Hazard scores are drawn independently of the scenes (no disorder coupling),
so the similarity-only search should show no systematic improvement while
the constrained search improves both scores by construction.
"""

import argparse
import math
import tempfile

import numpy as np

from streethazard import pipeline
from streethazard.ingest import AccidentType
from streethazard.mirror import ConstraintMode, MirrorError, MirrorQuery, find_mirrors, improvement_ratios
from streethazard.synth import SynthSpec, generate_corpus


def log_ratios(corpus, mode, k):
    lp, lv = [], []
    for iid in corpus.ids:
        res = find_mirrors(MirrorQuery(iid, k, mode=mode), corpus)
        try:
            ratios = improvement_ratios(res)
        except MirrorError:
            continue
        for rp, rv in ratios:
            lp.append(math.log(rp))
            lv.append(math.log(rv))
    return np.array(lp), np.array(lv)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--corpora", type=int, default=4)
    ap.add_argument("--n-images", type=int, default=500)
    ap.add_argument("--k", type=int, default=5)
    ap.add_argument("--coupling", type=float, default=0.0)
    args = ap.parse_args()

    acc = {m: ([], []) for m in ConstraintMode}
    with tempfile.TemporaryDirectory() as tmp:
        for seed in range(args.corpora):
            spec = SynthSpec(seed=seed, n_images=args.n_images, sd_coupling=args.coupling)
            manifest = generate_corpus(spec, f"{tmp}/{seed}")
            scenes = pipeline.compute_scenes(manifest, 0.7, AccidentType.P, fixation_types=())
            corpus = pipeline.build_mirror_corpus(scenes, pipeline.hazard_table(manifest))
            for mode in ConstraintMode:
                lp, lv = log_ratios(corpus, mode, args.k)
                acc[mode][0].append(lp)
                acc[mode][1].append(lv)
                print(f"seed {seed} {mode.value:>5}: mean log ratio P {lp.mean():+.4f}  V {lv.mean():+.4f}  n={len(lp)}")
    for mode, (lp, lv) in acc.items():
        lp, lv = np.concatenate(lp), np.concatenate(lv)
        print(f"{mode.value:>5} overall: P {lp.mean():+.4f} (sd {lp.std():.3f})  V {lv.mean():+.4f} (sd {lv.std():.3f})")


if __name__ == "__main__":
    main()
