"""Per-image scene statistics over segmentation and activation rasters.

IGNORE pixels never contribute: they are dropped from disorder pairs, area
vectors and activation mass alike.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .ingest import IGNORE, N_CATEGORIES, ActivationRaster, SegmentationRaster, match_activation

DEFAULT_CAM_THRESHOLD = 0.7


class SceneError(ValueError):
    pass


@dataclass(frozen=True)
class DisorderScore:
    value: float
    raw_transitions: int
    counted_pairs: int


@dataclass(frozen=True, eq=False)
class CategoryAreaVector:
    v: np.ndarray
    valid_pixels: int


@dataclass(frozen=True, eq=False)
class MaskedCharacteristicVector:
    v_tilde: np.ndarray
    retained_fraction: float


@dataclass(frozen=True, eq=False)
class FixationProfile:
    f: np.ndarray


def scene_disorder(raster: SegmentationRaster) -> DisorderScore:
    """Fraction of right/below neighbor pairs whose labels differ."""
    a = raster.labels
    right_l, right_r = a[:, :-1], a[:, 1:]
    below_t, below_b = a[:-1, :], a[1:, :]
    valid_r = (right_l != IGNORE) & (right_r != IGNORE)
    valid_b = (below_t != IGNORE) & (below_b != IGNORE)
    pairs = int(valid_r.sum()) + int(valid_b.sum())
    if pairs == 0:
        raise SceneError("no countable neighbor pairs")
    transitions = int(((right_l != right_r) & valid_r).sum()) + int(((below_t != below_b) & valid_b).sum())
    return DisorderScore(transitions / pairs, transitions, pairs)


def _category_counts(labels: np.ndarray) -> np.ndarray:
    flat = labels.ravel()
    return np.bincount(flat[flat != IGNORE], minlength=N_CATEGORIES)[:N_CATEGORIES]


def area_vector(raster: SegmentationRaster) -> CategoryAreaVector:
    counts = _category_counts(raster.labels)
    total = int(counts.sum())
    if total == 0:
        raise SceneError("raster has no labeled pixels")
    return CategoryAreaVector(counts / total, total)


def _paired(raster: SegmentationRaster, cam: ActivationRaster) -> np.ndarray:
    return match_activation(cam, raster).activation


def fixation_profile(raster: SegmentationRaster, cam: ActivationRaster) -> FixationProfile:
    """Share of the image's activation mass falling on each category."""
    act = _paired(raster, cam).ravel()
    labels = raster.labels.ravel()
    keep = labels != IGNORE
    mass = np.bincount(labels[keep], weights=act[keep], minlength=N_CATEGORIES)[:N_CATEGORIES]
    total = mass.sum()
    if not total > 0:
        raise SceneError("zero activation mass over labeled pixels")
    return FixationProfile(mass / total)


def surrogate_vector(raster: SegmentationRaster, cam: ActivationRaster,
                     threshold: float = DEFAULT_CAM_THRESHOLD) -> MaskedCharacteristicVector:
    """Area vector restricted to pixels whose activation is strictly below ``threshold``.

    Renormalized over the retained pixels so it is comparable with full-image
    area vectors.
    """
    act = _paired(raster, cam).ravel()
    labels = raster.labels.ravel()
    valid = labels != IGNORE
    n_valid = int(valid.sum())
    retained = valid & (act < threshold)
    counts = np.bincount(labels[retained], minlength=N_CATEGORIES)[:N_CATEGORIES]
    kept = int(counts.sum())
    if kept == 0:
        raise SceneError("fully activated scene: no pixel below the activation threshold")
    return MaskedCharacteristicVector(counts / kept, kept / n_valid)
