"""Corpus-level summaries: fixation radar ratios, disorder/hazard bins,
category flow (chord) matrices and the GeoJSON hazard landscape."""

from __future__ import annotations

import enum
import json
import os
from dataclasses import dataclass
from fractions import Fraction
from typing import Mapping, Optional, Sequence

import numpy as np

from .hazard import BAND_HI, BAND_LO, HazardBand, band
from .ingest import GeoPoint

DEFAULT_GRID_N = 20


class AggregateError(ValueError):
    pass


# ---------------------------------------------------------------------------
# Category grouping (display-time relabeling, e.g. vegetation+terrain -> nature)


def load_grouping(path: Optional[os.PathLike]) -> Optional[dict]:
    if path is None:
        return None
    with open(path, encoding="utf-8") as fh:
        grouping = json.load(fh)
    if not isinstance(grouping, dict) or not all(isinstance(v, list) for v in grouping.values()):
        raise AggregateError(f"{path}: grouping must map group names to lists of category names")
    return grouping


def group_index(names: Sequence[str], grouping: Optional[Mapping[str, Sequence[str]]]) -> tuple[list[str], np.ndarray]:
    """Output names and a (len(names), n_groups) 0/1 membership matrix.

    Categories not mentioned by ``grouping`` keep their own name. Group order
    follows the first member's position in ``names``.
    """
    owner = {n: n for n in names}
    for group, members in (grouping or {}).items():
        for m in members:
            if m not in owner:
                raise AggregateError(f"grouping refers to unknown category {m!r}")
            owner[m] = group
    out: list[str] = []
    for n in names:
        if owner[n] not in out:
            out.append(owner[n])
    member = np.zeros((len(names), len(out)))
    for i, n in enumerate(names):
        member[i, out.index(owner[n])] = 1.0
    return out, member


# ---------------------------------------------------------------------------
# Radar ratios


@dataclass(frozen=True)
class RadarTable:
    """ratio_safe[c] / ratio_dangerous[c]; None where the global mean is zero."""

    categories: tuple[str, ...]
    ratio_safe: tuple[Optional[float], ...]
    ratio_dangerous: tuple[Optional[float], ...]
    n_safe: int
    n_dangerous: int
    n_total: int


def radar_ratios(profiles: np.ndarray, scores: Sequence[float], categories: Sequence[str],
                 lo: float = BAND_LO, hi: float = BAND_HI) -> RadarTable:
    """Mean fixation of the safe and dangerous subsets relative to the global mean.

    ``profiles`` is (n_images, n_categories); moderate images count only
    towards the global mean.
    """
    f = np.asarray(profiles, dtype=np.float64)
    h = np.asarray(scores, dtype=np.float64)
    if f.ndim != 2 or f.shape[0] != len(h) or f.shape[1] != len(categories):
        raise AggregateError(f"profile table {f.shape} inconsistent with {len(h)} scores, {len(categories)} categories")
    if len(h) == 0:
        raise AggregateError("radar over an empty corpus")
    bands = [band(x, lo, hi) for x in h]
    safe = np.array([b is HazardBand.SAFE for b in bands])
    dangerous = np.array([b is HazardBand.DANGEROUS for b in bands])
    if not safe.any():
        raise AggregateError("empty safe subset")
    if not dangerous.any():
        raise AggregateError("empty dangerous subset")
    mean_all = f.mean(axis=0)
    mean_safe = f[safe].mean(axis=0)
    mean_dangerous = f[dangerous].mean(axis=0)

    def ratios(sub):
        return tuple(float(s / g) if g > 0 else None for s, g in zip(sub, mean_all))

    return RadarTable(tuple(categories), ratios(mean_safe), ratios(mean_dangerous),
                      int(safe.sum()), int(dangerous.sum()), len(h))


# ---------------------------------------------------------------------------
# Disorder / hazard binning


@dataclass(frozen=True, eq=False)
class DisorderHazardBins:
    """Square grid over (H_V, H_P); ``count[a, b]`` covers H_V bin a, H_P bin b."""

    grid_n: int
    count: np.ndarray
    sd_sum: np.ndarray

    @property
    def mean_sd(self) -> np.ndarray:
        with np.errstate(invalid="ignore", divide="ignore"):
            return np.where(self.count > 0, self.sd_sum / np.maximum(self.count, 1), np.nan)

    def cells(self):
        """Populated cells as (a, b, count, mean_sd), row-major."""
        mean = self.mean_sd
        for a, b in zip(*np.nonzero(self.count)):
            yield int(a), int(b), int(self.count[a, b]), float(mean[a, b])


def _bin(values: np.ndarray, n: int) -> np.ndarray:
    # [k/n, (k+1)/n) with the last cell closed at 1
    return np.clip(np.floor(values * n).astype(np.int64), 0, n - 1)


def disorder_hexbin(h_p: Sequence[float], h_v: Sequence[float], sd: Sequence[float],
                    grid_n: int = DEFAULT_GRID_N) -> DisorderHazardBins:
    if grid_n < 1:
        raise AggregateError(f"grid_n must be positive, got {grid_n}")
    h_p = np.asarray(h_p, dtype=np.float64)
    h_v = np.asarray(h_v, dtype=np.float64)
    sd = np.asarray(sd, dtype=np.float64)
    if not (len(h_p) == len(h_v) == len(sd)):
        raise AggregateError("score and disorder arrays differ in length")
    for name, arr in (("h_p", h_p), ("h_v", h_v), ("sd", sd)):
        if len(arr) and not np.all((arr >= 0) & (arr <= 1)):
            raise AggregateError(f"{name} values outside [0, 1]")
    a = _bin(h_v, grid_n)
    b = _bin(h_p, grid_n)
    flat = a * grid_n + b
    count = np.bincount(flat, minlength=grid_n * grid_n).reshape(grid_n, grid_n)
    sd_sum = np.bincount(flat, weights=sd, minlength=grid_n * grid_n).reshape(grid_n, grid_n)
    return DisorderHazardBins(grid_n, count, sd_sum)


# ---------------------------------------------------------------------------
# Chord flows


def pair_flows(v_i: np.ndarray, v_j: np.ndarray) -> np.ndarray:
    """Flow matrix for one target -> mirror change of composition.

    Each losing category spreads its lost area over the gaining categories in
    proportion to their gains. Fraction inputs stay exact.
    """
    dtype = _dtype_for(v_i, v_j)
    v_i = np.asarray(v_i, dtype=dtype)
    v_j = np.asarray(v_j, dtype=dtype)
    if v_i.shape != v_j.shape or v_i.ndim != 1:
        raise AggregateError(f"vector shapes differ: {v_i.shape} vs {v_j.shape}")
    delta = v_j - v_i
    zero = Fraction(0) if dtype is object else 0.0
    gain = np.where(delta > 0, delta, zero)
    loss = np.where(delta < 0, -delta, zero)
    total_gain = gain.sum()
    if total_gain == 0 or loss.sum() == 0:
        return np.full((len(v_i), len(v_i)), zero, dtype=dtype)
    return np.outer(loss, gain / total_gain)


def _dtype_for(*vectors):
    exact = any(isinstance(x, Fraction) for v in vectors for x in (v.tolist() if isinstance(v, np.ndarray) else v))
    return object if exact else np.float64


def chord_flows(pairs: Sequence[tuple[np.ndarray, np.ndarray]], n_categories: int = 19) -> np.ndarray:
    flow = None
    for v_i, v_j in pairs:
        f = pair_flows(v_i, v_j)
        flow = f if flow is None else flow + f
    if flow is None:
        return np.zeros((n_categories, n_categories))
    if flow.shape != (n_categories, n_categories):
        raise AggregateError(f"flow shape {flow.shape} does not match {n_categories} categories")
    return flow


def group_flows(flow: np.ndarray, member: np.ndarray) -> np.ndarray:
    """Sum a category flow matrix into groups; flows inside a group are kept on the diagonal."""
    return member.T @ flow @ member


# ---------------------------------------------------------------------------
# Landscape


class Selector(str, enum.Enum):
    HIGH_P_ONLY = "HighPOnly"
    HIGH_V_ONLY = "HighVOnly"
    BOTH = "Both"
    NEITHER = "Neither"


def selector(h_p: float, h_v: float, hi: float = BAND_HI) -> Selector:
    high_p = h_p >= hi
    high_v = h_v >= hi
    if high_p and high_v:
        return Selector.BOTH
    if high_p:
        return Selector.HIGH_P_ONLY
    if high_v:
        return Selector.HIGH_V_ONLY
    return Selector.NEITHER


@dataclass(frozen=True)
class LandscapeFeature:
    image_id: str
    location: GeoPoint
    h_p: float
    h_v: float

    @property
    def selector(self) -> Selector:
        return selector(self.h_p, self.h_v)


def _round9(x: float) -> float:
    return float(f"{x:.9g}")


def landscape_export(features: Sequence[LandscapeFeature], only: Optional[Sequence[Selector]] = None,
                     lo: float = BAND_LO, hi: float = BAND_HI) -> dict:
    """RFC 7946 FeatureCollection with one Point per image, sorted by image id."""
    keep = None if only is None else set(only)
    out = []
    for feat in sorted(features, key=lambda f: f.image_id):
        sel = selector(feat.h_p, feat.h_v, hi)
        if keep is not None and sel not in keep:
            continue
        out.append({
            "type": "Feature",
            "id": feat.image_id,
            "geometry": {
                "type": "Point",
                "coordinates": [feat.location.longitude, feat.location.latitude],
            },
            "properties": {
                "image_id": feat.image_id,
                "h_p": _round9(feat.h_p),
                "h_v": _round9(feat.h_v),
                "selector": sel.value,
                "band_p": band(feat.h_p, lo, hi).value,
                "band_v": band(feat.h_v, lo, hi).value,
            },
        })
    return {"type": "FeatureCollection", "features": out}
