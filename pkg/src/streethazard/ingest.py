"""Parsing and validation of corpus inputs.

Accident records and the image manifest are UTF-8 CSV files; segmentation and
activation rasters are binary PGM (P5, maxval 255). Raster loading is lazy:
the manifest only stores paths, resolved against the manifest's directory.
"""

from __future__ import annotations

import csv
import enum
import io
import json
import math
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import BinaryIO, Iterable, Optional

import numpy as np

IGNORE = 255
N_CATEGORIES = 19

DEFAULT_CATEGORIES: tuple[str, ...] = (
    "road",
    "sidewalk",
    "building",
    "wall",
    "fence",
    "pole",
    "traffic light",
    "traffic sign",
    "vegetation",
    "terrain",
    "sky",
    "person",
    "rider",
    "car",
    "truck",
    "bus",
    "train",
    "motorcycle",
    "bicycle",
)

ACCIDENT_HEADER = ["accident_id", "lat", "lon", "type"]
MANIFEST_HEADER = [
    "image_id",
    "lat",
    "lon",
    "seg_path",
    "cam_p_path",
    "cam_v_path",
    "logit_safe_p",
    "logit_danger_p",
    "logit_safe_v",
    "logit_danger_v",
    "score_p",
    "score_v",
]


class CorpusError(ValueError):
    """Malformed or out-of-range corpus input."""


class AccidentType(str, enum.Enum):
    P = "P"
    V = "V"

    @classmethod
    def parse(cls, text: str) -> "AccidentType":
        key = text.strip().lower()
        if key in ("p", "pedestrian"):
            return cls.P
        if key in ("v", "vehicle"):
            return cls.V
        raise CorpusError(f"unknown accident type {text!r}")


ACCIDENT_TYPES = (AccidentType.P, AccidentType.V)


@dataclass(frozen=True)
class GeoPoint:
    latitude: float
    longitude: float

    def __post_init__(self):
        if not math.isfinite(self.latitude) or not -90.0 <= self.latitude <= 90.0:
            raise CorpusError(f"latitude out of range: {self.latitude}")
        if not math.isfinite(self.longitude) or not -180.0 <= self.longitude <= 180.0:
            raise CorpusError(f"longitude out of range: {self.longitude}")


@dataclass(frozen=True)
class AccidentRecord:
    accident_id: str
    location: GeoPoint
    accident_type: AccidentType


@dataclass(frozen=True)
class LogitPair:
    """Raw classifier outputs for the (safe, dangerous) classes."""

    z_safe: float
    z_danger: float

    def __post_init__(self):
        if not (math.isfinite(self.z_safe) and math.isfinite(self.z_danger)):
            raise CorpusError(f"non-finite logits ({self.z_safe}, {self.z_danger})")


@dataclass(frozen=True)
class ImageRecord:
    image_id: str
    location: GeoPoint
    seg_path: Optional[str] = None
    cam_p_path: Optional[str] = None
    cam_v_path: Optional[str] = None
    logits_p: Optional[LogitPair] = None
    logits_v: Optional[LogitPair] = None
    score_p: Optional[float] = None
    score_v: Optional[float] = None

    def cam_path(self, accident_type: AccidentType) -> Optional[str]:
        return self.cam_p_path if accident_type is AccidentType.P else self.cam_v_path

    def logits(self, accident_type: AccidentType) -> Optional[LogitPair]:
        return self.logits_p if accident_type is AccidentType.P else self.logits_v

    def score(self, accident_type: AccidentType) -> Optional[float]:
        return self.score_p if accident_type is AccidentType.P else self.score_v


@dataclass(frozen=True, eq=False)
class SegmentationRaster:
    """Per-pixel category ids, shape (height, width), dtype uint8."""

    labels: np.ndarray

    def __post_init__(self):
        labels = np.ascontiguousarray(self.labels, dtype=np.uint8)
        if labels.ndim != 2 or labels.size == 0:
            raise CorpusError(f"label raster must be a non-empty 2-D array, got {labels.shape}")
        bad = (labels >= N_CATEGORIES) & (labels != IGNORE)
        if bad.any():
            raise CorpusError(f"invalid category id {int(labels[bad][0])}")
        labels.flags.writeable = False
        object.__setattr__(self, "labels", labels)

    @property
    def height(self) -> int:
        return self.labels.shape[0]

    @property
    def width(self) -> int:
        return self.labels.shape[1]

    def __eq__(self, other):
        if not isinstance(other, SegmentationRaster):
            return NotImplemented
        return self.labels.shape == other.labels.shape and bool(np.array_equal(self.labels, other.labels))


@dataclass(frozen=True, eq=False)
class ActivationRaster:
    """Per-pixel activation in [0, 1], shape (height, width), dtype float64."""

    activation: np.ndarray

    def __post_init__(self):
        act = np.array(self.activation, dtype=np.float64)
        if act.ndim != 2 or act.size == 0:
            raise CorpusError(f"activation raster must be a non-empty 2-D array, got {act.shape}")
        if not np.all((act >= 0.0) & (act <= 1.0)):
            raise CorpusError("activation values outside [0, 1]")
        act.flags.writeable = False
        object.__setattr__(self, "activation", act)

    @property
    def height(self) -> int:
        return self.activation.shape[0]

    @property
    def width(self) -> int:
        return self.activation.shape[1]


@dataclass(frozen=True)
class CorpusManifest:
    images: tuple[ImageRecord, ...]
    accidents: tuple[AccidentRecord, ...] = ()
    category_names: tuple[str, ...] = DEFAULT_CATEGORIES
    base_dir: Path = field(default_factory=Path)

    def __post_init__(self):
        if len(self.category_names) != N_CATEGORIES:
            raise CorpusError(f"expected {N_CATEGORIES} category names, got {len(self.category_names)}")
        seen = set()
        for image in self.images:
            if image.image_id in seen:
                raise CorpusError(f"duplicate image_id {image.image_id!r}")
            seen.add(image.image_id)

    def resolve(self, path: str) -> Path:
        p = Path(path)
        return p if p.is_absolute() else self.base_dir / p


# ---------------------------------------------------------------------------
# CSV parsing


def _text_rows(stream: BinaryIO):
    text = io.TextIOWrapper(stream, encoding="utf-8-sig", newline="")
    return csv.reader(text)


def _check_header(reader, expected: list[str]) -> None:
    try:
        header = next(reader)
    except StopIteration:
        raise CorpusError("empty file: missing header") from None
    header = [h.strip() for h in header]
    if header != expected:
        raise CorpusError(f"bad header {header!r}, expected {','.join(expected)}")


def _float(text: str, column: str, line: int) -> float:
    try:
        value = float(text)
    except ValueError:
        raise CorpusError(f"malformed {column} {text!r}, line {line}") from None
    if not math.isfinite(value):
        raise CorpusError(f"non-finite {column} {text!r}, line {line}")
    return value


def _location(lat_text: str, lon_text: str, line: int) -> GeoPoint:
    lat = _float(lat_text, "lat", line)
    lon = _float(lon_text, "lon", line)
    if not -90.0 <= lat <= 90.0:
        raise CorpusError(f"latitude out of range ({lat}), line {line}")
    if not -180.0 <= lon <= 180.0:
        raise CorpusError(f"longitude out of range ({lon}), line {line}")
    return GeoPoint(lat, lon)


def parse_accidents(stream: BinaryIO) -> list[AccidentRecord]:
    """Parse ``accident_id,lat,lon,type`` rows.

    Errors name the physical line number (header is line 1).
    """
    reader = _text_rows(stream)
    _check_header(reader, ACCIDENT_HEADER)
    records = []
    seen = set()
    for row in reader:
        line = reader.line_num
        if not row or all(not cell.strip() for cell in row):
            continue
        if len(row) != len(ACCIDENT_HEADER):
            raise CorpusError(f"expected {len(ACCIDENT_HEADER)} columns, got {len(row)}, line {line}")
        acc_id, lat, lon, kind = (cell.strip() for cell in row)
        if not acc_id:
            raise CorpusError(f"empty accident_id, line {line}")
        if acc_id in seen:
            raise CorpusError(f"duplicate accident_id {acc_id!r}, line {line}")
        seen.add(acc_id)
        try:
            accident_type = AccidentType.parse(kind)
        except CorpusError:
            raise CorpusError(f"unknown type {kind!r} in column type, line {line}") from None
        records.append(AccidentRecord(acc_id, _location(lat, lon, line), accident_type))
    return records


def format_accidents(records: Iterable[AccidentRecord]) -> bytes:
    """Serialize records so that ``parse_accidents`` recovers them exactly."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(ACCIDENT_HEADER)
    for r in records:
        writer.writerow([r.accident_id, repr(r.location.latitude), repr(r.location.longitude), r.accident_type.value])
    return buf.getvalue().encode("utf-8")


def _optional(text: str) -> Optional[str]:
    text = text.strip()
    return text or None


def parse_manifest(stream: BinaryIO) -> list[ImageRecord]:
    """Parse the image manifest. No raster files are touched."""
    reader = _text_rows(stream)
    _check_header(reader, MANIFEST_HEADER)
    images = []
    seen = set()
    for row in reader:
        line = reader.line_num
        if not row or all(not cell.strip() for cell in row):
            continue
        if len(row) != len(MANIFEST_HEADER):
            raise CorpusError(f"expected {len(MANIFEST_HEADER)} columns, got {len(row)}, line {line}")
        cells = dict(zip(MANIFEST_HEADER, (c.strip() for c in row)))
        image_id = cells["image_id"]
        if not image_id:
            raise CorpusError(f"empty image_id, line {line}")
        if image_id in seen:
            raise CorpusError(f"duplicate image_id {image_id!r}, line {line}")
        seen.add(image_id)

        def logits(kind: str) -> Optional[LogitPair]:
            safe, danger = cells[f"logit_safe_{kind}"], cells[f"logit_danger_{kind}"]
            if not safe and not danger:
                return None
            if not (safe and danger):
                raise CorpusError(f"incomplete logit pair for type {kind.upper()}, line {line}")
            return LogitPair(_float(safe, f"logit_safe_{kind}", line), _float(danger, f"logit_danger_{kind}", line))

        def score(kind: str) -> Optional[float]:
            text = cells[f"score_{kind}"]
            if not text:
                return None
            value = _float(text, f"score_{kind}", line)
            if not 0.0 <= value <= 1.0:
                raise CorpusError(f"score outside [0,1] ({value}) in column score_{kind}, line {line}")
            return value

        images.append(
            ImageRecord(
                image_id=image_id,
                location=_location(cells["lat"], cells["lon"], line),
                seg_path=_optional(cells["seg_path"]),
                cam_p_path=_optional(cells["cam_p_path"]),
                cam_v_path=_optional(cells["cam_v_path"]),
                logits_p=logits("p"),
                logits_v=logits("v"),
                score_p=score("p"),
                score_v=score("v"),
            )
        )
    return images


def load_categories(path: Optional[os.PathLike]) -> tuple[str, ...]:
    if path is None:
        return DEFAULT_CATEGORIES
    with open(path, encoding="utf-8") as fh:
        names = json.load(fh)
    if not isinstance(names, list) or not all(isinstance(n, str) for n in names):
        raise CorpusError(f"{path}: category vocabulary must be a JSON list of strings")
    if len(names) != N_CATEGORIES:
        raise CorpusError(f"{path}: expected {N_CATEGORIES} category names, got {len(names)}")
    return tuple(names)


def load_corpus(images_csv: os.PathLike, accidents_csv: Optional[os.PathLike] = None,
                categories_json: Optional[os.PathLike] = None) -> CorpusManifest:
    images_csv = Path(images_csv)
    with open(images_csv, "rb") as fh:
        images = parse_manifest(fh)
    accidents: list[AccidentRecord] = []
    if accidents_csv is not None:
        with open(accidents_csv, "rb") as fh:
            accidents = parse_accidents(fh)
    return CorpusManifest(
        images=tuple(images),
        accidents=tuple(accidents),
        category_names=load_categories(categories_json),
        base_dir=images_csv.parent,
    )


# ---------------------------------------------------------------------------
# PGM rasters

_WHITESPACE = b" \t\r\n\x0b\x0c"


def _pgm_header(data: bytes, path) -> tuple[int, int, int, int]:
    """Return (width, height, maxval, payload offset)."""
    if data[:2] != b"P5":
        raise CorpusError(f"{path}: not a binary PGM (magic {data[:2]!r}, expected b'P5')")
    pos = 2
    tokens = []
    while len(tokens) < 3:
        if pos >= len(data):
            raise CorpusError(f"{path}: truncated PGM header")
        ch = data[pos:pos + 1]
        if ch == b"#":
            end = data.find(b"\n", pos)
            pos = len(data) if end < 0 else end + 1
        elif ch in _WHITESPACE:
            pos += 1
        else:
            start = pos
            while pos < len(data) and data[pos:pos + 1] not in _WHITESPACE and data[pos:pos + 1] != b"#":
                pos += 1
            tok = data[start:pos]
            if not tok.isdigit():
                raise CorpusError(f"{path}: malformed PGM header token {tok!r}")
            tokens.append(int(tok))
    if pos >= len(data) or data[pos:pos + 1] not in _WHITESPACE:
        raise CorpusError(f"{path}: truncated PGM header")
    width, height, maxval = tokens
    if width <= 0 or height <= 0:
        raise CorpusError(f"{path}: non-positive PGM dimensions {width}x{height}")
    if maxval != 255:
        raise CorpusError(f"{path}: unsupported PGM maxval {maxval}, expected 255")
    return width, height, maxval, pos + 1


def read_pgm_size(path: os.PathLike) -> tuple[int, int]:
    """(width, height) from the header alone."""
    with open(path, "rb") as fh:
        head = fh.read(4096)
    width, height, _, _ = _pgm_header(head, path)
    return width, height


def read_pgm(path: os.PathLike) -> np.ndarray:
    with open(path, "rb") as fh:
        data = fh.read()
    width, height, _, offset = _pgm_header(data, path)
    payload = data[offset:]
    need = width * height
    if len(payload) < need:
        raise CorpusError(f"{path}: truncated PGM payload ({len(payload)} of {need} bytes)")
    if len(payload) > need:
        raise CorpusError(f"{path}: {len(payload) - need} unexpected trailing bytes")
    return np.frombuffer(payload, dtype=np.uint8).reshape(height, width)


def write_pgm(path: os.PathLike, pixels: np.ndarray) -> None:
    pixels = np.ascontiguousarray(pixels, dtype=np.uint8)
    height, width = pixels.shape
    with open(path, "wb") as fh:
        fh.write(b"P5\n%d %d\n255\n" % (width, height))
        fh.write(pixels.tobytes())


def load_label_raster(path: os.PathLike) -> SegmentationRaster:
    pixels = read_pgm(path)
    bad = (pixels >= N_CATEGORIES) & (pixels != IGNORE)
    if bad.any():
        raise CorpusError(f"{path}: invalid category id {int(pixels[bad][0])}")
    return SegmentationRaster(pixels)


def load_activation_raster(path: os.PathLike) -> ActivationRaster:
    # k / 255 exactly; the 0.7 cut falls between bytes 178 and 179
    return ActivationRaster(read_pgm(path).astype(np.float64) / 255.0)


def write_label_raster(path: os.PathLike, raster: SegmentationRaster) -> None:
    write_pgm(path, raster.labels)


def quantize_activation(activation: np.ndarray) -> np.ndarray:
    return np.rint(np.clip(activation, 0.0, 1.0) * 255.0).astype(np.uint8)


def upsample_factors(cam_shape: tuple[int, int], seg_shape: tuple[int, int]) -> tuple[int, int]:
    """Integer (row, col) factors mapping a CAM onto a segmentation raster."""
    factors = []
    for c, s in zip(cam_shape, seg_shape):
        if c <= 0 or s % c:
            raise CorpusError(f"activation raster {cam_shape[1]}x{cam_shape[0]} does not divide "
                              f"segmentation raster {seg_shape[1]}x{seg_shape[0]}")
        factors.append(s // c)
    return factors[0], factors[1]


def match_activation(cam: ActivationRaster, seg: SegmentationRaster) -> ActivationRaster:
    """Nearest-neighbor upsample ``cam`` to the dimensions of ``seg``."""
    fy, fx = upsample_factors(cam.activation.shape, seg.labels.shape)
    if fy == 1 and fx == 1:
        return cam
    return ActivationRaster(np.repeat(np.repeat(cam.activation, fy, axis=0), fx, axis=1))


# ---------------------------------------------------------------------------
# Validation


@dataclass(frozen=True)
class AnalysisFlags:
    hazard: bool = False
    scene: bool = False
    fixation: bool = False
    mirror: bool = False

    @classmethod
    def all(cls) -> "AnalysisFlags":
        return cls(True, True, True, True)


@dataclass(frozen=True)
class ValidationIssue:
    image_id: str
    kind: str
    detail: str


@dataclass
class ValidationReport:
    issues: list[ValidationIssue] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.issues

    def __len__(self):
        return len(self.issues)

    def for_image(self, image_id: str) -> list[ValidationIssue]:
        return [i for i in self.issues if i.image_id == image_id]


def validate_corpus(manifest: CorpusManifest, required: AnalysisFlags,
                    mask_type: AccidentType = AccidentType.P) -> ValidationReport:
    """Report missing artifacts and raster dimension mismatches per image.

    Only PGM headers are read. Never raises on bad inputs; every problem
    becomes an issue in the report.
    """
    report = ValidationReport()
    add = report.issues.append

    def size_of(image_id: str, rel: str, what: str) -> Optional[tuple[int, int]]:
        path = manifest.resolve(rel)
        if not path.is_file():
            add(ValidationIssue(image_id, f"missing-{what}-file", str(path)))
            return None
        try:
            return read_pgm_size(path)
        except (CorpusError, OSError) as exc:
            add(ValidationIssue(image_id, f"bad-{what}-file", str(exc)))
            return None

    needs_seg = required.scene or required.fixation or required.mirror
    for image in manifest.images:
        iid = image.image_id
        if required.hazard or required.mirror:
            for t in ACCIDENT_TYPES:
                if image.logits(t) is None and image.score(t) is None:
                    add(ValidationIssue(iid, f"missing-score-{t.value.lower()}",
                                        f"no logits or score for type {t.value}"))
        seg_size = None
        if needs_seg:
            if image.seg_path is None:
                add(ValidationIssue(iid, "missing-seg", "no segmentation raster"))
            else:
                seg_size = size_of(iid, image.seg_path, "seg")
        cam_types = []
        if required.fixation:
            cam_types = list(ACCIDENT_TYPES)
        elif required.mirror:
            cam_types = [mask_type]
        for t in cam_types:
            rel = image.cam_path(t)
            tag = f"cam-{t.value.lower()}"
            if rel is None:
                add(ValidationIssue(iid, f"missing-{tag}", f"no activation raster for type {t.value}"))
                continue
            cam_size = size_of(iid, rel, tag)
            if cam_size is not None and seg_size is not None:
                try:
                    upsample_factors(cam_size[::-1], seg_size[::-1])
                except CorpusError as exc:
                    add(ValidationIssue(iid, f"mismatch-{tag}", str(exc)))
    return report

