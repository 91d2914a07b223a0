"""Recompute recall/precision/accuracy from published confusion percentages.

Also checks F1 for the best architecture row. Prints one line per row with
the recomputed values, the reported ones and the largest absolute gap.
"""

import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "tests"))

from reported import CONFUSION_ROWS, RESNET_V2_50  # noqa: E402

from streethazard.metrics import ConfusionCounts, accuracy, f1_from, precision, recall  # noqa: E402


def main():
    worst = 0.0
    print(f"{'row':<18} {'recall':>13} {'precision':>13} {'accuracy':>13}  gap")
    for name, (r, p, a, fp, tp, tn, fn) in CONFUSION_ROWS.items():
        c = ConfusionCounts(tp=tp, fp=fp, tn=tn, fn=fn)
        got = (recall(c), precision(c), accuracy(c))
        gap = max(abs(g - want) for g, want in zip(got, (r, p, a)))
        worst = max(worst, gap)
        cols = " ".join(f"{g:.3f}/{want:.2f}".rjust(13) for g, want in zip(got, (r, p, a)))
        print(f"{name:<18} {cols}  {gap:.4f}")
    p, r, reported = RESNET_V2_50
    print(f"F1({p}, {r}) = {f1_from(p, r):.4f} (reported {reported})")
    print(f"largest gap {worst:.4f} -> {'within' if worst <= 0.01 else 'OUTSIDE'} 0.01")
    return 0 if worst <= 0.01 else 1


if __name__ == "__main__":
    sys.exit(main())
