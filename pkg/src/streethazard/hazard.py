"""Hazard index, inverse-frequency class weights and weighted cross-entropy."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Iterable, Mapping, Optional

from .ingest import AccidentType, ImageRecord, LogitPair

BAND_LO = 0.33
BAND_HI = 0.66
PRED_EPS = 1e-12


@dataclass(frozen=True)
class HazardScore:
    value: float
    accident_type: AccidentType

    def __post_init__(self):
        if not 0.0 <= self.value <= 1.0:
            raise ValueError(f"hazard {self.value} outside [0, 1]")


def hazard_index(logits: LogitPair, accident_type: AccidentType = AccidentType.P) -> HazardScore:
    """Two-class softmax probability of the dangerous class.

    Evaluated on the logit difference so that neither exponential overflows.
    """
    zs, zd = logits.z_safe, logits.z_danger
    if not (math.isfinite(zs) and math.isfinite(zd)):
        raise ValueError(f"non-finite logits ({zs}, {zd})")
    m = max(zs, zd)
    es = math.exp(zs - m)
    ed = math.exp(zd - m)
    return HazardScore(ed / (es + ed), accident_type)


def image_hazard(image: ImageRecord, accident_type: AccidentType) -> Optional[float]:
    """H for one image: from logits when present, else the supplied score verbatim."""
    logits = image.logits(accident_type)
    if logits is not None:
        return hazard_index(logits, accident_type).value
    return image.score(accident_type)


def class_weight(ratio: float, c: float = 1.0) -> float:
    """1 / ln(c + r): rarer classes (smaller r) get larger weights."""
    if not c > 0:
        raise ValueError(f"smoothing constant must be positive, got {c}")
    if not 0.0 <= ratio <= 1.0:
        raise ValueError(f"class ratio {ratio} outside [0, 1]")
    if c + ratio <= 1.0:
        raise ValueError(f"non-positive log argument regime: c + r = {c + ratio} <= 1")
    return 1.0 / math.log(c + ratio)


@dataclass(frozen=True)
class DatasetComposition:
    counts: Mapping[str, int]

    def __post_init__(self):
        if any(v < 0 for v in self.counts.values()):
            raise ValueError("negative class count")
        if self.total <= 0:
            raise ValueError("composition with no samples")

    @property
    def total(self) -> int:
        return sum(self.counts.values())

    @property
    def ratios(self) -> dict:
        total = self.total
        return {k: v / total for k, v in self.counts.items()}


def class_weights(composition: DatasetComposition, c: float = 1.0) -> dict:
    return {k: class_weight(r, c) for k, r in composition.ratios.items()}


def weighted_bce_loss(samples: Iterable[tuple[int, float, float]], eps: float = PRED_EPS) -> float:
    """Mean class-weighted binary cross-entropy over (y, y_hat, weight) samples.

    Uses the conventional negated form so the loss is non-negative; y_hat is
    clamped to [eps, 1 - eps].
    """
    total = 0.0
    n = 0
    for y, y_hat, w in samples:
        if y not in (0, 1):
            raise ValueError(f"label must be 0 or 1, got {y}")
        if not w > 0:
            raise ValueError(f"class weight must be positive, got {w}")
        p = min(max(y_hat, eps), 1.0 - eps)
        total += w * (y * math.log(p) + (1 - y) * math.log(1.0 - p))
        n += 1
    if n == 0:
        raise ValueError("loss over an empty sample set")
    return -total / n


class HazardBand(str, enum.Enum):
    SAFE = "safe"
    MODERATE = "moderate"
    DANGEROUS = "dangerous"


def band(score: HazardScore | float, lo: float = BAND_LO, hi: float = BAND_HI) -> HazardBand:
    h = score.value if isinstance(score, HazardScore) else score
    if h < lo:
        return HazardBand.SAFE
    if h > hi:
        return HazardBand.DANGEROUS
    return HazardBand.MODERATE
