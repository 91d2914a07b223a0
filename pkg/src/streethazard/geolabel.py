"""Radius labeling of image points against geolocated accidents."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .ingest import ACCIDENT_TYPES, AccidentRecord, AccidentType, GeoPoint, ImageRecord

EARTH_RADIUS_M = 6371008.8
DEFAULT_RADIUS_M = 50.0

# queries are processed in chunks to bound the candidate-pair buffer
_QUERY_CHUNK = 50_000
_LAT_OFFSET = 1 << 31


def haversine_m(a: GeoPoint, b: GeoPoint) -> float:
    """Great-circle distance in meters on a sphere of mean Earth radius."""
    phi1 = math.radians(a.latitude)
    phi2 = math.radians(b.latitude)
    dphi = phi2 - phi1
    dlmb = math.radians(b.longitude - a.longitude)
    h = math.sin(dphi / 2) ** 2 + math.cos(phi1) * math.cos(phi2) * math.sin(dlmb / 2) ** 2
    return 2.0 * EARTH_RADIUS_M * math.asin(math.sqrt(min(1.0, h)))


def haversine_many(lat1, lon1, lat2, lon2) -> np.ndarray:
    """Vectorized haversine over degree arrays (broadcasting)."""
    phi1 = np.radians(lat1)
    phi2 = np.radians(lat2)
    dphi = phi2 - phi1
    dlmb = np.radians(np.asarray(lon2) - np.asarray(lon1))
    h = np.sin(dphi / 2) ** 2 + np.cos(phi1) * np.cos(phi2) * np.sin(dlmb / 2) ** 2
    return 2.0 * EARTH_RADIUS_M * np.arcsin(np.sqrt(np.minimum(1.0, h)))


class Binary(str, enum.Enum):
    DANGEROUS = "dangerous"
    SAFE = "safe"


class OrdinalClass(enum.IntEnum):
    NO_DANGER = 1
    MILD_DANGER = 2
    DANGER = 3
    HIGH_DANGER = 4


def ordinal_bin(pedestrian_count: int) -> OrdinalClass:
    if pedestrian_count < 0:
        raise ValueError(f"negative accident count {pedestrian_count}")
    if pedestrian_count == 0:
        return OrdinalClass.NO_DANGER
    if pedestrian_count == 1:
        return OrdinalClass.MILD_DANGER
    if pedestrian_count <= 5:
        return OrdinalClass.DANGER
    return OrdinalClass.HIGH_DANGER


class _Grid:
    """Accidents of one type bucketed into lat/lon cells, sorted by cell key."""

    def __init__(self, lat: np.ndarray, lon: np.ndarray, cell_lat: float, cell_lon: float):
        self.cell_lat = cell_lat
        self.cell_lon = cell_lon
        keys = self._keys(lat, lon)
        order = np.argsort(keys, kind="stable")
        self.lat = lat[order]
        self.lon = lon[order]
        self.order = order
        sorted_keys = keys[order]
        self.keys, self.starts, self.counts = np.unique(sorted_keys, return_index=True, return_counts=True)

    def _cells(self, lat, lon):
        return (np.floor(lat / self.cell_lat).astype(np.int64),
                np.floor(lon / self.cell_lon).astype(np.int64))

    @staticmethod
    def _key(ci, cj):
        return ((ci + _LAT_OFFSET) << 32) | (cj + _LAT_OFFSET)

    def _keys(self, lat, lon):
        ci, cj = self._cells(lat, lon)
        return self._key(ci, cj)

    def candidates(self, qlat: np.ndarray, qlon: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """(query index, sorted accident index) pairs from the 3x3 cell neighborhood."""
        if len(self.keys) == 0 or len(qlat) == 0:
            empty = np.empty(0, dtype=np.int64)
            return empty, empty
        ci, cj = self._cells(qlat, qlon)
        q_parts, a_parts = [], []
        for di in (-1, 0, 1):
            for dj in (-1, 0, 1):
                k = self._key(ci + di, cj + dj)
                pos = np.searchsorted(self.keys, k)
                pos_c = np.minimum(pos, len(self.keys) - 1)
                hit = self.keys[pos_c] == k
                qi = np.nonzero(hit)[0]
                if len(qi) == 0:
                    continue
                starts = self.starts[pos_c[qi]]
                counts = self.counts[pos_c[qi]]
                total = int(counts.sum())
                q_parts.append(np.repeat(qi, counts))
                # ranges [start, start+count) flattened
                offsets = np.arange(total) - np.repeat(np.cumsum(counts) - counts, counts)
                a_parts.append(np.repeat(starts, counts) + offsets)
        if not q_parts:
            empty = np.empty(0, dtype=np.int64)
            return empty, empty
        return np.concatenate(q_parts), np.concatenate(a_parts)


@dataclass(frozen=True)
class SpatialIndex:
    """Grid-bucketed accidents, one partition per accident type.

    Cell edges are at least the query radius in both directions for any point
    whose latitude is within reach of the indexed accidents, so the 3x3 cell
    neighborhood of a query contains every accident within the radius.
    """

    radius_m: float
    cell_lat_deg: float
    cell_lon_deg: float
    grids: dict
    accidents: dict

    def query(self, point: GeoPoint, accident_type: AccidentType, radius_m: float | None = None) -> list[AccidentRecord]:
        """Accidents of ``accident_type`` within ``radius_m`` (closed ball)."""
        radius_m = self.radius_m if radius_m is None else radius_m
        _check_radius(self, radius_m)
        grid = self.grids[accident_type]
        qi, ai = grid.candidates(np.array([point.latitude]), np.array([point.longitude]))
        d = haversine_many(point.latitude, point.longitude, grid.lat[ai], grid.lon[ai])
        keep = np.sort(grid.order[ai[d <= radius_m]])
        return [self.accidents[accident_type][i] for i in keep]

    def count_within(self, lat: np.ndarray, lon: np.ndarray, accident_type: AccidentType,
                     radius_m: float | None = None) -> np.ndarray:
        radius_m = self.radius_m if radius_m is None else radius_m
        _check_radius(self, radius_m)
        grid = self.grids[accident_type]
        lat = np.asarray(lat, dtype=np.float64)
        lon = np.asarray(lon, dtype=np.float64)
        counts = np.zeros(len(lat), dtype=np.int64)
        for s in range(0, len(lat), _QUERY_CHUNK):
            qlat, qlon = lat[s:s + _QUERY_CHUNK], lon[s:s + _QUERY_CHUNK]
            qi, ai = grid.candidates(qlat, qlon)
            if len(qi) == 0:
                continue
            d = haversine_many(qlat[qi], qlon[qi], grid.lat[ai], grid.lon[ai])
            counts[s:s + len(qlat)] += np.bincount(qi[d <= radius_m], minlength=len(qlat))
        return counts


def _check_radius(index: SpatialIndex, radius_m: float) -> None:
    if not 0 < radius_m <= index.radius_m:
        raise ValueError(f"query radius {radius_m} m exceeds index cell radius {index.radius_m} m")


def cell_edges_deg(radius_m: float, max_abs_lat: float) -> tuple[float, float]:
    """Cell edges (lat, lon) in degrees guaranteeing the 3x3 neighborhood covers the radius."""
    ang = radius_m / EARTH_RADIUS_M
    cell_lat = math.degrees(ang)
    # any point within radius of an indexed accident lies below this latitude
    phi = math.radians(max_abs_lat) + ang
    if phi >= math.pi / 2:
        cell_lon = 360.0
    else:
        s = math.sin(ang / 2) / math.cos(phi)
        cell_lon = 360.0 if s >= 1 else math.degrees(2 * math.asin(s))
    slack = 1 + 1e-9
    return cell_lat * slack, min(360.0, cell_lon * slack)


def build_spatial_index(accidents: Sequence[AccidentRecord], radius_m: float = DEFAULT_RADIUS_M) -> SpatialIndex:
    if not radius_m > 0:
        raise ValueError(f"radius must be positive, got {radius_m}")
    lats = [a.location.latitude for a in accidents]
    max_abs_lat = max((abs(x) for x in lats), default=0.0)
    cell_lat, cell_lon = cell_edges_deg(radius_m, max_abs_lat)
    grids, by_type = {}, {}
    for t in ACCIDENT_TYPES:
        recs = [a for a in accidents if a.accident_type is t]
        lat = np.array([a.location.latitude for a in recs], dtype=np.float64)
        lon = np.array([a.location.longitude for a in recs], dtype=np.float64)
        grids[t] = _Grid(lat, lon, cell_lat, cell_lon)
        by_type[t] = tuple(recs)
    return SpatialIndex(radius_m, cell_lat, cell_lon, grids, by_type)


@dataclass(frozen=True)
class LabeledPoint:
    image_id: str
    counts: dict
    radius_m: float

    @property
    def binary(self) -> dict:
        return {t: Binary.DANGEROUS if c >= 1 else Binary.SAFE for t, c in self.counts.items()}

    @property
    def ordinal_p(self) -> OrdinalClass:
        return ordinal_bin(self.counts[AccidentType.P])


def label_points(images: Sequence[ImageRecord], index: SpatialIndex,
                 radius_m: float = DEFAULT_RADIUS_M) -> list[LabeledPoint]:
    """Count accidents of each type within ``radius_m`` (inclusive) of every image."""
    lat = np.array([im.location.latitude for im in images], dtype=np.float64)
    lon = np.array([im.location.longitude for im in images], dtype=np.float64)
    counts = {t: index.count_within(lat, lon, t, radius_m) for t in ACCIDENT_TYPES}
    return [
        LabeledPoint(im.image_id, {t: int(counts[t][i]) for t in ACCIDENT_TYPES}, radius_m)
        for i, im in enumerate(images)
    ]


@dataclass(frozen=True)
class Composition:
    n_points: int
    dangerous: dict
    safe: dict


def composition_report(labels: Sequence[LabeledPoint]) -> Composition:
    """Fraction of points with and without accidents, per accident type."""
    n = len(labels)
    if n == 0:
        raise ValueError("composition of an empty label set")
    dangerous, safe = {}, {}
    for t in ACCIDENT_TYPES:
        k = sum(1 for lp in labels if lp.counts[t] >= 1)
        dangerous[t] = k / n
        safe[t] = (n - k) / n
    return Composition(n, dangerous, safe)
