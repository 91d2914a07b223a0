"""Deterministic synthetic corpora for tests and Monte Carlo checks.

Every random draw comes from a Philox4x64-10 counter stream keyed by the
corpus seed, with the image index and a purpose tag in the high counter
words. Uniforms, normals and Poisson draws are derived from the raw 64-bit
words here rather than through numpy's distribution methods, so a seed
produces the same corpus regardless of numpy version. Floats written to disk
are rounded to 6 decimals.
"""

from __future__ import annotations

import csv
import json
import math
import os
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .geolabel import EARTH_RADIUS_M, DEFAULT_RADIUS_M, build_spatial_index, label_points, ordinal_bin
from .ingest import (
    ACCIDENT_HEADER,
    DEFAULT_CATEGORIES,
    MANIFEST_HEADER,
    AccidentRecord,
    AccidentType,
    CorpusManifest,
    GeoPoint,
    SegmentationRaster,
    load_corpus,
    quantize_activation,
    write_pgm,
)
from .scene import scene_disorder

_M64 = (1 << 64) - 1

# stream purposes
LOCATION, RASTER, CAM_P, CAM_V, HAZARD, ACCIDENTS, ORDINAL = range(7)

# rough street-scene category frequencies, indexed like DEFAULT_CATEGORIES
STREET_WEIGHTS = (
    8, 5, 8, 1, 1, 1, 0.5, 0.5, 4, 1, 5, 2, 0.5, 4, 1, 0.5, 0.2, 0.5, 0.5,
)
_CAT = {name: i for i, name in enumerate(DEFAULT_CATEGORIES)}
HOT_P = tuple(_CAT[c] for c in ("person", "rider", "sidewalk", "bicycle"))
HOT_V = tuple(_CAT[c] for c in ("car", "truck", "bus", "motorcycle"))


class RandomStream:
    """Uniform/normal/Poisson draws from one Philox counter stream."""

    def __init__(self, seed: int, index: int = 0, purpose: int = 0):
        if seed < 0:
            raise ValueError("seed must be non-negative")
        key = [seed & _M64, (seed >> 64) & _M64]
        self._bits = np.random.Philox(key=key, counter=[0, 0, index & _M64, purpose & _M64])

    def raw(self, n: int) -> np.ndarray:
        return self._bits.random_raw(n)

    def uniform(self, n: int) -> np.ndarray:
        """Floats in [0, 1) with 53 random bits each."""
        return (self.raw(n) >> np.uint64(11)).astype(np.float64) * (2.0 ** -53)

    def uniform1(self) -> float:
        return float(self.uniform(1)[0])

    def integers(self, upper: int, n: int) -> np.ndarray:
        return np.minimum(np.floor(self.uniform(n) * upper).astype(np.int64), upper - 1)

    def normal(self, n: int) -> np.ndarray:
        # Box-Muller on (0, 1] x [0, 1)
        m = (n + 1) // 2
        u1 = 1.0 - self.uniform(m)
        u2 = self.uniform(m)
        r = np.sqrt(-2.0 * np.log(u1))
        z = np.concatenate((r * np.cos(2 * np.pi * u2), r * np.sin(2 * np.pi * u2)))
        return z[:n]

    def poisson(self, lam: float) -> int:
        """Inversion sampling; intended for small rates."""
        if lam <= 0:
            return 0
        u = self.uniform1()
        k, p = 0, math.exp(-lam)
        cdf = p
        while u > cdf and k < 10_000:
            k += 1
            p *= lam / k
            cdf += p
        return k

    def choice(self, weights: Sequence[float], n: int) -> np.ndarray:
        cdf = np.cumsum(np.asarray(weights, dtype=np.float64))
        cdf /= cdf[-1]
        return np.minimum(np.searchsorted(cdf, self.uniform(n), side="right"), len(cdf) - 1)


@dataclass
class SynthSpec:
    seed: int = 0
    n_images: int = 200
    raster_width: int = 32
    raster_height: int = 32
    cam_factor: int = 4
    max_blobs: int = 96
    # H = coupling * min(1, SD / sd_scale) + (1 - coupling) * uniform + noise
    sd_coupling: float = 1.0
    sd_scale: float = 0.3
    composition_coupling: float = 0.0
    hazard_noise: float = 0.05
    accident_rate_p: float = 1.5
    accident_rate_v: float = 3.0
    accident_spread_m: float = 60.0
    center_lat: float = 41.3874
    center_lon: float = 2.1686
    extent_m: float = 3000.0
    score_every: int = 10
    category_weights: tuple = field(default=STREET_WEIGHTS)

    def stream(self, index: int, purpose: int) -> RandomStream:
        return RandomStream(self.seed, index, purpose)


def image_id(index: int) -> str:
    return f"img{index:06d}"


def generate_raster(spec: SynthSpec, index: int, n_blobs: Optional[int] = None) -> SegmentationRaster:
    """Voronoi blob raster: each pixel takes the category of its nearest seed site.

    More blobs means more label boundaries and so higher disorder.
    """
    rs = spec.stream(index, RASTER)
    h, w = spec.raster_height, spec.raster_width
    n_pix = h * w
    if n_blobs is None:
        u = rs.uniform1()
        n_blobs = 1 + int(u * u * spec.max_blobs)
    n_blobs = max(1, min(n_blobs, n_pix))
    # partial Fisher-Yates over pixel sites
    sites = np.arange(n_pix)
    picks = rs.uniform(n_blobs)
    for k in range(n_blobs):
        j = k + min(int(picks[k] * (n_pix - k)), n_pix - k - 1)
        sites[k], sites[j] = sites[j], sites[k]
    sites = sites[:n_blobs]
    cats = rs.choice(spec.category_weights, n_blobs).astype(np.uint8)
    if n_blobs == 1:
        return SegmentationRaster(np.full((h, w), cats[0], dtype=np.uint8))
    sy, sx = sites // w, sites % w
    yy, xx = np.divmod(np.arange(n_pix), w)
    labels = np.empty(n_pix, dtype=np.uint8)
    chunk = max(1, 4_000_000 // n_blobs)
    for s in range(0, n_pix, chunk):
        d = (yy[s:s + chunk, None] - sy[None, :]) ** 2 + (xx[s:s + chunk, None] - sx[None, :]) ** 2
        labels[s:s + chunk] = cats[np.argmin(d, axis=1)]
    return SegmentationRaster(labels.reshape(h, w))


def generate_cam(spec: SynthSpec, index: int, raster: SegmentationRaster, accident_type: AccidentType) -> np.ndarray:
    """Coarse activation bytes, hotter over the type's planted categories."""
    rs = spec.stream(index, CAM_P if accident_type is AccidentType.P else CAM_V)
    f = spec.cam_factor
    ch, cw = spec.raster_height // f, spec.raster_width // f
    hot = HOT_P if accident_type is AccidentType.P else HOT_V
    blocks = raster.labels[: ch * f, : cw * f].reshape(ch, f, cw, f).transpose(0, 2, 1, 3).reshape(ch, cw, f * f)
    hot_share = np.isin(blocks, hot).mean(axis=2)
    act = 0.05 + 0.55 * rs.uniform(ch * cw).reshape(ch, cw) + 0.4 * hot_share
    cam = quantize_activation(act)
    if cam.min() >= 179:
        cam.flat[int(np.argmin(cam))] = 100
    return cam


def _hazard(spec: SynthSpec, index: int, sd: float, area: np.ndarray) -> tuple[float, float]:
    rs = spec.stream(index, HAZARD)
    u = rs.uniform(2)
    z = rs.normal(2)
    s = min(1.0, sd / spec.sd_scale)
    comp_p = area[list(HOT_P)].sum() - 0.15
    comp_v = area[list(HOT_V)].sum() - 0.15
    out = []
    for k, comp in enumerate((comp_p, comp_v)):
        h = spec.sd_coupling * s + (1 - spec.sd_coupling) * u[k]
        h += spec.composition_coupling * comp + spec.hazard_noise * z[k]
        out.append(round(min(0.99, max(0.01, h)), 6))
    return out[0], out[1]


def _offset(lat: float, lon: float, dx_m: float, dy_m: float) -> tuple[float, float]:
    dlat = math.degrees(dy_m / EARTH_RADIUS_M)
    dlon = math.degrees(dx_m / (EARTH_RADIUS_M * math.cos(math.radians(lat))))
    return round(lat + dlat, 6), round(lon + dlon, 6)


def _f6(x: float) -> str:
    return f"{x:.6f}"


def generate_corpus(spec: SynthSpec, out_dir: os.PathLike) -> CorpusManifest:
    """Write images.csv, accidents.csv, rasters and ordinal_probs.csv under ``out_dir``."""
    out = Path(out_dir)
    for sub in ("seg", "cam_p", "cam_v"):
        (out / sub).mkdir(parents=True, exist_ok=True)

    rows, accidents = [], []
    locations = []
    for i in range(spec.n_images):
        iid = image_id(i)
        u = spec.stream(i, LOCATION).uniform(2)
        lat, lon = _offset(spec.center_lat, spec.center_lon,
                           (u[0] - 0.5) * spec.extent_m, (u[1] - 0.5) * spec.extent_m)
        locations.append((iid, lat, lon))

        raster = generate_raster(spec, i)
        sd = scene_disorder(raster).value
        area = np.bincount(raster.labels.ravel(), minlength=19)[:19] / raster.labels.size
        h_p, h_v = _hazard(spec, i, sd, area)

        seg_rel = f"seg/{iid}.pgm"
        cam_p_rel = f"cam_p/{iid}.pgm"
        cam_v_rel = f"cam_v/{iid}.pgm"
        write_pgm(out / seg_rel, raster.labels)
        write_pgm(out / cam_p_rel, generate_cam(spec, i, raster, AccidentType.P))
        write_pgm(out / cam_v_rel, generate_cam(spec, i, raster, AccidentType.V))

        row = {k: "" for k in MANIFEST_HEADER}
        row.update(image_id=iid, lat=_f6(lat), lon=_f6(lon), seg_path=seg_rel,
                   cam_p_path=cam_p_rel, cam_v_path=cam_v_rel)
        if spec.score_every and i % spec.score_every == spec.score_every - 1:
            row.update(score_p=_f6(h_p), score_v=_f6(h_v))
        else:
            for kind, h in (("p", h_p), ("v", h_v)):
                row[f"logit_safe_{kind}"] = _f6(0.0)
                row[f"logit_danger_{kind}"] = _f6(math.log(h / (1 - h)))
        rows.append(row)

        ra = spec.stream(i, ACCIDENTS)
        for t, rate, h in ((AccidentType.P, spec.accident_rate_p, h_p), (AccidentType.V, spec.accident_rate_v, h_v)):
            n = ra.poisson(rate * h * h)
            for k in range(n):
                r, theta = ra.uniform(2)
                dist = spec.accident_spread_m * math.sqrt(r)
                alat, alon = _offset(lat, lon, dist * math.cos(2 * math.pi * theta), dist * math.sin(2 * math.pi * theta))
                accidents.append(AccidentRecord(f"a{i:06d}{t.value.lower()}{k}", GeoPoint(alat, alon), t))

    with open(out / "images.csv", "w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=MANIFEST_HEADER, lineterminator="\n")
        writer.writeheader()
        writer.writerows(rows)
    with open(out / "accidents.csv", "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(ACCIDENT_HEADER)
        for a in accidents:
            writer.writerow([a.accident_id, _f6(a.location.latitude), _f6(a.location.longitude), a.accident_type.value])

    # noisy cumulative P(y > k) estimates around the true ordinal class
    manifest = load_corpus(out / "images.csv", out / "accidents.csv")
    labels = label_points(manifest.images, build_spatial_index(manifest.accidents, DEFAULT_RADIUS_M))
    with open(out / "ordinal_probs.csv", "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["image_id", "p_gt_1", "p_gt_2", "p_gt_3"])
        for i, lp in enumerate(labels):
            cls = int(ordinal_bin(lp.counts[AccidentType.P]))
            z = spec.stream(i, ORDINAL).normal(3)
            probs = [1 / (1 + math.exp(-(2.0 * (cls - k - 0.5) + z[k - 1]))) for k in (1, 2, 3)]
            writer.writerow([lp.image_id] + [_f6(p) for p in probs])

    with open(out / "synth.json", "w", encoding="utf-8") as fh:
        json.dump(asdict(spec), fh, indent=2, sort_keys=True)
        fh.write("\n")
    return manifest
