"""Constrained nearest-neighbor search for lower-hazard "mirror" scenes.

For a target image the search compares its activation-masked surrogate
vector against the full area vectors of every other image and keeps the k
closest ones. In ``both`` mode only images with strictly lower pedestrian and
vehicle hazard are eligible; ``dummy`` mode drops that constraint and serves
as a similarity-only baseline.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Mapping, Optional, Sequence

import numpy as np

from .ingest import AccidentType

DEFAULT_K = 5


class ConstraintMode(str, enum.Enum):
    BOTH = "both"
    DUMMY = "dummy"


class MirrorError(ValueError):
    pass


@dataclass(frozen=True)
class MirrorQuery:
    target_image_id: str
    k: int = DEFAULT_K
    mask_type: AccidentType = AccidentType.P
    mode: ConstraintMode = ConstraintMode.BOTH

    def __post_init__(self):
        if self.k < 1:
            raise MirrorError(f"k must be >= 1, got {self.k}")


@dataclass(frozen=True)
class Candidate:
    image_id: str
    distance: float
    h_p: float
    h_v: float


@dataclass(frozen=True)
class MirrorResult:
    target_image_id: str
    target_h_p: float
    target_h_v: float
    mode: ConstraintMode
    k: int
    candidates: tuple[Candidate, ...]

    @property
    def shortfall(self) -> bool:
        return len(self.candidates) < self.k


@dataclass(frozen=True, eq=False)
class MirrorCorpus:
    """Immutable search space: ids sorted ascending, one row per image.

    ``surrogates`` maps an image id to its masked vector; only targets need one.
    """

    ids: tuple[str, ...]
    vectors: np.ndarray
    h_p: np.ndarray
    h_v: np.ndarray
    surrogates: Mapping[str, np.ndarray] = field(default_factory=dict)

    def __post_init__(self):
        n = len(self.ids)
        if list(self.ids) != sorted(self.ids) or len(set(self.ids)) != n:
            raise MirrorError("corpus ids must be unique and sorted")
        vectors = np.asarray(self.vectors, dtype=np.float64)
        if vectors.ndim != 2 or vectors.shape[0] != n:
            raise MirrorError(f"vector table shape {vectors.shape} does not match {n} ids")
        for name in ("h_p", "h_v"):
            arr = np.asarray(getattr(self, name), dtype=np.float64)
            if arr.shape != (n,):
                raise MirrorError(f"{name} shape {arr.shape} does not match {n} ids")
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)
        vectors.flags.writeable = False
        object.__setattr__(self, "vectors", vectors)
        object.__setattr__(self, "_pos", {iid: i for i, iid in enumerate(self.ids)})

    @classmethod
    def from_rows(cls, rows: Sequence[tuple[str, np.ndarray, float, float]],
                  surrogates: Optional[Mapping[str, np.ndarray]] = None) -> "MirrorCorpus":
        rows = sorted(rows, key=lambda r: r[0])
        dim = len(rows[0][1]) if rows else 0
        return cls(
            ids=tuple(r[0] for r in rows),
            vectors=np.array([r[1] for r in rows], dtype=np.float64).reshape(len(rows), dim),
            h_p=np.array([r[2] for r in rows], dtype=np.float64),
            h_v=np.array([r[3] for r in rows], dtype=np.float64),
            surrogates=dict(surrogates or {}),
        )

    def position(self, image_id: str) -> int:
        try:
            return self._pos[image_id]
        except KeyError:
            raise MirrorError(f"unknown image {image_id!r}") from None


def find_mirrors(query: MirrorQuery, corpus: MirrorCorpus) -> MirrorResult:
    """Exhaustive scan returning the k nearest eligible images.

    Ties in distance are broken by ascending image id; fewer than k eligible
    images yields a partial result flagged as a shortfall.
    """
    i = corpus.position(query.target_image_id)
    target = corpus.surrogates.get(query.target_image_id)
    if target is None:
        raise MirrorError(f"target {query.target_image_id!r} has no surrogate vector")
    hp, hv = corpus.h_p[i], corpus.h_v[i]
    if not (math.isfinite(hp) and math.isfinite(hv)):
        raise MirrorError(f"target {query.target_image_id!r} lacks hazard scores")

    if query.mode is ConstraintMode.BOTH:
        eligible = (corpus.h_p < hp) & (corpus.h_v < hv)
    else:
        eligible = np.ones(len(corpus.ids), dtype=bool)
    eligible[i] = False
    idx = np.nonzero(eligible)[0]

    diff = corpus.vectors[idx] - np.asarray(target, dtype=np.float64)
    dist = np.sqrt(np.einsum("ij,ij->i", diff, diff))
    # ids are sorted, so row position is the id tie-breaker
    order = np.lexsort((idx, dist))[: query.k]
    candidates = tuple(
        Candidate(corpus.ids[idx[j]], float(dist[j]), float(corpus.h_p[idx[j]]), float(corpus.h_v[idx[j]]))
        for j in order
    )
    return MirrorResult(query.target_image_id, float(hp), float(hv), query.mode, query.k, candidates)


def dummy_mirrors(query: MirrorQuery, corpus: MirrorCorpus) -> MirrorResult:
    if query.mode is not ConstraintMode.DUMMY:
        query = MirrorQuery(query.target_image_id, query.k, query.mask_type, ConstraintMode.DUMMY)
    return find_mirrors(query, corpus)


def improvement_ratios(result: MirrorResult) -> list[tuple[float, float]]:
    """(H_P ratio, H_V ratio) of each candidate relative to the target."""
    if not (result.target_h_p > 0 and result.target_h_v > 0):
        raise MirrorError(f"target {result.target_image_id!r} has zero hazard; ratio undefined")
    return [(c.h_p / result.target_h_p, c.h_v / result.target_h_v) for c in result.candidates]
