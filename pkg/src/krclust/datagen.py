"""Synthetic dataset generators plus CSV and PPM file I/O.

Generators are pure functions of their seed.  CSV files are comma-separated
with '.' decimals and LF line endings; floats are written with 17 significant
digits so a write/read round-trip is exact.  PPM support covers binary P6 and
ASCII P3 with maxval up to 255.
"""

from __future__ import annotations

from dataclasses import dataclass
from math import prod
from typing import NamedTuple

import numpy as np

from . import core
from ._validation import DataFormatError, check_aggregator, check_cardinalities

__all__ = [
    "BlobSpec",
    "KrStructSpec",
    "KrStructData",
    "gen_blobs",
    "gen_kr_structured",
    "standardize",
    "read_csv",
    "write_csv",
    "read_labels",
    "write_labels",
    "PpmImage",
    "read_ppm",
    "write_ppm",
]

SAMPLERS = ("standard_normal", "uniform_positive")

# uniform_positive draws protocentroid entries from this interval; products of
# such entries stay bounded away from zero, keeping update denominators safe
_POSITIVE_LOW, _POSITIVE_HIGH = 0.5, 2.0


@dataclass(frozen=True)
class BlobSpec:
    """Isotropic Gaussian clusters with uniformly drawn centers."""

    n: int
    m: int
    k: int
    cluster_std: float = 1.0
    center_box: tuple[float, float] = (-10.0, 10.0)
    seed: int = 0

    def __post_init__(self):
        if self.n < 1 or self.m < 1 or self.k < 1:
            raise ValueError("n, m and k must all be >= 1")
        if self.k > self.n:
            raise ValueError(f"k={self.k} clusters need at least k points, got n={self.n}")
        if self.cluster_std < 0:
            raise ValueError("cluster_std must be non-negative")
        lo, hi = self.center_box
        if not lo < hi:
            raise ValueError("center_box must be a non-empty interval")


def gen_blobs(spec: BlobSpec) -> core.Dataset:
    """Sample points around k centers, split as evenly as possible."""
    rng = np.random.default_rng(spec.seed)
    lo, hi = spec.center_box
    centers = rng.uniform(lo, hi, size=(spec.k, spec.m))
    sizes = np.full(spec.k, spec.n // spec.k, dtype=np.int64)
    sizes[: spec.n % spec.k] += 1
    labels = np.repeat(np.arange(spec.k), sizes)
    points = centers[labels] + rng.normal(0.0, spec.cluster_std, size=(spec.n, spec.m))
    return core.Dataset(points=points, labels=labels)


@dataclass(frozen=True)
class KrStructSpec:
    """Data whose true centroids aggregate from sampled protocentroid sets."""

    cardinalities: tuple[int, ...]
    aggregator: str
    m: int
    points_per_cluster: int
    noise_std: float = 0.0
    sampler: str = "standard_normal"
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "cardinalities", check_cardinalities(self.cardinalities))
        check_aggregator(self.aggregator)
        if self.m < 1:
            raise ValueError("m must be >= 1")
        if self.points_per_cluster < 1:
            raise ValueError("points_per_cluster must be >= 1")
        if self.noise_std < 0:
            raise ValueError("noise_std must be non-negative")
        if self.sampler not in SAMPLERS:
            raise ValueError(f"sampler must be one of {SAMPLERS}, got {self.sampler!r}")
        if self.aggregator == "product" and self.sampler != "uniform_positive":
            raise ValueError(
                "product aggregator requires the uniform_positive sampler; "
                "signed or zero protocentroid entries make the problem degenerate"
            )


class KrStructData(NamedTuple):
    dataset: core.Dataset
    protosets: core.ProtoSets


def gen_kr_structured(spec: KrStructSpec) -> KrStructData:
    """Sample protocentroid sets, then points around every cell centroid.

    Labels are the flat cell indices of the generating cells.
    """
    rng = np.random.default_rng(spec.seed)
    sets = []
    for h in spec.cardinalities:
        if spec.sampler == "standard_normal":
            sets.append(rng.standard_normal((h, spec.m)))
        else:
            sets.append(rng.uniform(_POSITIVE_LOW, _POSITIVE_HIGH, size=(h, spec.m)))
    protosets = core.ProtoSets(tuple(sets), spec.aggregator)
    centroids = core.materialize_centroids(protosets)
    n_cells = prod(spec.cardinalities)
    labels = np.repeat(np.arange(n_cells), spec.points_per_cluster)
    points = centroids[labels] + rng.normal(
        0.0, spec.noise_std, size=(labels.shape[0], spec.m)
    )
    return KrStructData(core.Dataset(points=points, labels=labels), protosets)


def standardize(points: np.ndarray):
    """Per-feature z-scoring.  Returns (scaled, mean, std); zero stds become 1."""
    points = np.asarray(points, dtype=np.float64)
    mean = points.mean(axis=0)
    std = points.std(axis=0)
    std = np.where(std == 0, 1.0, std)
    return (points - mean) / std, mean, std


# ---------------------------------------------------------------------------
# CSV


def write_csv(dataset: core.Dataset, path, header: bool = False) -> None:
    """Write points (and the label column last, when present) as CSV."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        if header:
            names = [f"f{j}" for j in range(dataset.m)]
            if dataset.labels is not None:
                names.append("label")
            fh.write(",".join(names) + "\n")
        for i in range(dataset.n):
            fields = [format(v, ".17g") for v in dataset.points[i]]
            if dataset.labels is not None:
                fields.append(str(int(dataset.labels[i])))
            fh.write(",".join(fields) + "\n")


def read_csv(path, has_header: bool = False, label_column: int | None = None) -> core.Dataset:
    """Parse a numeric CSV into a Dataset, optionally peeling a label column."""
    with open(path, "r", encoding="utf-8") as fh:
        lines = fh.read().split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    start = 1 if has_header else 0
    rows: list[list[float]] = []
    labels: list[int] = []
    width = None
    for lineno, line in enumerate(lines[start:], start=start + 1):
        fields = line.split(",")
        if width is None:
            width = len(fields)
            if label_column is not None and not -width <= label_column < width:
                raise DataFormatError(
                    f"label column {label_column} out of range for {width} fields"
                )
        elif len(fields) != width:
            raise DataFormatError(
                f"{path}: line {lineno}: expected {width} fields, got {len(fields)}"
            )
        lab_idx = None if label_column is None else label_column % width
        row = []
        for j, field in enumerate(fields):
            text = field.strip()
            if j == lab_idx:
                try:
                    labels.append(int(text))
                except ValueError as exc:
                    raise DataFormatError(
                        f"{path}: line {lineno}: label {text!r} is not an integer"
                    ) from exc
            else:
                try:
                    row.append(float(text))
                except ValueError as exc:
                    raise DataFormatError(
                        f"{path}: line {lineno}: {text!r} is not a number"
                    ) from exc
        rows.append(row)
    if not rows:
        raise DataFormatError(f"{path}: no data rows")
    points = np.asarray(rows, dtype=np.float64)
    return core.Dataset(
        points=points,
        labels=np.asarray(labels, dtype=np.int64) if label_column is not None else None,
    )


def write_labels(labels, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for v in labels:
            fh.write(f"{int(v)}\n")


def read_labels(path) -> np.ndarray:
    """Read one integer label per line (extra CSV columns are ignored)."""
    out = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            text = line.strip()
            if not text:
                continue
            first = text.split(",")[0].strip()
            try:
                out.append(int(first))
            except ValueError as exc:
                raise DataFormatError(
                    f"{path}: line {lineno}: {first!r} is not an integer label"
                ) from exc
    if not out:
        raise DataFormatError(f"{path}: no labels")
    return np.asarray(out, dtype=np.int64)


# ---------------------------------------------------------------------------
# PPM (netpbm P3 / P6)


class PpmImage(NamedTuple):
    dataset: core.Dataset
    width: int
    height: int


def _read_header_tokens(buf: bytes, count: int):
    """Pull whitespace-separated header tokens, honoring '#' comments.

    Returns the tokens and the offset just past the single whitespace byte
    that terminates the header.
    """
    tokens = []
    i = 0
    while len(tokens) < count:
        if i >= len(buf):
            raise DataFormatError("truncated header")
        c = buf[i : i + 1]
        if c == b"#":
            while i < len(buf) and buf[i : i + 1] not in (b"\n", b"\r"):
                i += 1
        elif c.isspace():
            i += 1
        else:
            j = i
            while j < len(buf) and not buf[j : j + 1].isspace() and buf[j : j + 1] != b"#":
                j += 1
            tokens.append(buf[i:j])
            i = j
    if i >= len(buf) or not buf[i : i + 1].isspace():
        raise DataFormatError("missing whitespace after header")
    return tokens, i + 1


def read_ppm(path) -> PpmImage:
    """Read a P6 or P3 image into pixel rows scaled to [0, 1]."""
    with open(path, "rb") as fh:
        buf = fh.read()
    if buf[:2] not in (b"P3", b"P6"):
        magic = buf[:2].decode("ascii", "replace")
        raise DataFormatError(f"unsupported format magic {magic!r}, expected P3 or P6")
    tokens, offset = _read_header_tokens(buf, 4)
    magic = tokens[0]
    try:
        width, height, maxval = (int(t) for t in tokens[1:])
    except ValueError as exc:
        raise DataFormatError("non-numeric header field") from exc
    if width < 1 or height < 1:
        raise DataFormatError(f"bad dimensions {width}x{height}")
    if not 0 < maxval <= 255:
        raise DataFormatError(f"maxval {maxval} out of supported range (1..255)")
    n_samples = width * height * 3
    if magic == b"P6":
        payload = buf[offset : offset + n_samples]
        if len(payload) < n_samples:
            raise DataFormatError(
                f"truncated pixel data: expected {n_samples} bytes, got {len(payload)}"
            )
        raw = np.frombuffer(payload, dtype=np.uint8).astype(np.float64)
    else:
        try:
            values = [int(t) for t in buf[offset - 1 :].split()]
        except ValueError as exc:
            raise DataFormatError("non-numeric P3 sample") from exc
        if len(values) < n_samples:
            raise DataFormatError(
                f"truncated pixel data: expected {n_samples} samples, got {len(values)}"
            )
        raw = np.asarray(values[:n_samples], dtype=np.float64)
        if raw.min() < 0 or raw.max() > maxval:
            raise DataFormatError("P3 sample out of range")
    points = (raw / maxval).reshape(width * height, 3)
    return PpmImage(core.Dataset(points=points), width, height)


def write_ppm(dataset: core.Dataset, width: int, height: int, path) -> None:
    """Write pixels in [0, 1] as binary P6 with maxval 255, rounding half-up."""
    if dataset.m != 3:
        raise ValueError(f"PPM output needs 3 channels, got {dataset.m}")
    if dataset.n != width * height:
        raise ValueError(
            f"dataset has {dataset.n} pixels, expected width*height = {width * height}"
        )
    scaled = np.floor(np.clip(dataset.points, 0.0, 1.0) * 255.0 + 0.5)
    payload = scaled.astype(np.uint8).tobytes()
    with open(path, "wb") as fh:
        fh.write(f"P6\n{width} {height}\n255\n".encode("ascii"))
        fh.write(payload)
