"""Intensity extraction, cohort rescaling and kernel density estimation.

The ingest stage turns per-(subject, sequence, region) voxel intensity
samples into densities on a shared uniform grid over [0,1]:

1. pull voxel values out of a labeled volume (or read them pre-extracted
   from ``voxels.csv``),
2. rescale each sequence to [0,1] with the cohort-wide min/max,
3. estimate a Gaussian kernel density on ``m`` grid points and
   renormalize it to unit trapezoidal integral.

Region and sequence names are plain strings; the conventional defaults
cover four MRI sequences and three tumor sub-regions but nothing below
depends on those particular names.
"""

from __future__ import annotations

import csv
import json
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import stats as sstats

from .errors import DataError
from .geometry import trapezoid_weights

DEFAULT_SEQUENCES = ("T1", "T1Gd", "T2", "FLAIR")
DEFAULT_REGIONS = ("NC", "ED", "ET")
DEFAULT_LABEL_MAP = {1: "NC", 2: "ED", 4: "ET"}
DEFAULT_GRID_SIZE = 512

SUMMARY_CASES = ("a", "b", "c", "d", "e", "f", "g")


@dataclass
class IntensitySample:
    """Raw or rescaled voxel intensities for one (subject, sequence, region)."""

    subject_id: str
    sequence: str
    region: str
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64).ravel()
        if self.values.size == 0:
            raise DataError(
                f"empty intensity sample for {self.subject_id}/{self.sequence}/{self.region}"
            )
        if not np.all(np.isfinite(self.values)):
            raise DataError(
                f"non-finite intensities for {self.subject_id}/{self.sequence}/{self.region}"
            )


@dataclass
class DensityGrid:
    """A probability density sampled on ``m`` uniform points over [0,1]."""

    values: np.ndarray
    bandwidth: float

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64).ravel()
        if self.bandwidth <= 0:
            raise DataError("bandwidth must be positive")
        if np.any(self.values < 0):
            raise DataError("density values must be non-negative")
        integral = float(trapezoid_weights(self.values.size) @ self.values)
        if abs(integral - 1.0) > 1e-6:
            raise DataError(f"density integral {integral} deviates from 1")

    @property
    def grid_size(self) -> int:
        return self.values.size


def extract_region_intensities(
    volume: np.ndarray,
    mask: np.ndarray,
    label_map: dict[int, str] = DEFAULT_LABEL_MAP,
) -> dict[str, np.ndarray]:
    """Collect voxel values per labeled region.

    Returns a dict mapping region name to the volume values at voxels
    carrying that label, in row-major order. Regions with no voxels are
    absent from the dict; callers decide whether to drop the subject.
    """
    volume = np.asarray(volume)
    mask = np.asarray(mask)
    if volume.shape != mask.shape:
        raise DataError(f"volume shape {volume.shape} != mask shape {mask.shape}")
    flat_vol = volume.reshape(-1)
    flat_mask = mask.reshape(-1)
    out: dict[str, np.ndarray] = {}
    for label, region in label_map.items():
        sel = flat_mask == label
        if sel.any():
            out[region] = flat_vol[sel].astype(np.float64)
    return out


def rescale_sequence(samples: list[IntensitySample]) -> list[IntensitySample]:
    """Affine-map one sequence's cohort to [0,1] using the cohort-wide
    min and max across all provided samples."""
    if not samples:
        raise DataError("no samples to rescale")
    seqs = {s.sequence for s in samples}
    if len(seqs) != 1:
        raise DataError(f"rescale_sequence expects one sequence, got {sorted(seqs)}")
    lo = min(float(s.values.min()) for s in samples)
    hi = max(float(s.values.max()) for s in samples)
    if hi == lo:
        raise DataError(f"constant sequence {seqs.pop()}: max == min == {lo}")
    span = hi - lo
    return [
        IntensitySample(s.subject_id, s.sequence, s.region, (s.values - lo) / span)
        for s in samples
    ]


def _quartiles(values: np.ndarray) -> tuple[float, float]:
    q1, q3 = np.quantile(values, [0.25, 0.75], method="hazen")
    return float(q1), float(q3)


def bandwidth_for(values: np.ndarray, rule: str = "silverman") -> float:
    """Plug-in kernel bandwidth for a 1-D sample.

    ``silverman`` is the robust normal-reference rule
    1.06 * min(sd, IQR/1.34) * n^(-1/5); ``scott`` drops the IQR guard.
    ``silverman*<f>`` scales the silverman value by a factor, which is
    how the bandwidth sensitivity sweep builds perturbed variants.
    """
    values = np.asarray(values, dtype=np.float64)
    n = values.size
    factor = 1.0
    base = rule
    if rule.startswith("silverman*"):
        base = "silverman"
        factor = float(rule.split("*", 1)[1])
        if factor <= 0:
            raise DataError(f"bandwidth scale factor must be positive: {rule}")
    sd = float(np.std(values, ddof=1)) if n > 1 else 0.0
    if base == "silverman":
        q1, q3 = _quartiles(values)
        spread = min(sd, (q3 - q1) / 1.34)
    elif base == "scott":
        spread = sd
    else:
        raise DataError(f"unknown bandwidth rule {rule!r}")
    return 1.06 * spread * n ** (-0.2) * factor


def kde(
    sample: IntensitySample | np.ndarray,
    grid_size: int = DEFAULT_GRID_SIZE,
    bandwidth_rule: str = "silverman",
    bandwidth: float | None = None,
) -> DensityGrid:
    """Gaussian kernel density of a rescaled sample on the uniform grid.

    The estimate is renormalized to unit trapezoidal integral over [0,1]
    (mass smoothed outside the interval is folded back by rescaling
    rather than boundary-corrected). A degenerate sample with zero
    spread gets the bandwidth floored at 1/m, with a warning.
    """
    values = sample.values if isinstance(sample, IntensitySample) else np.asarray(sample, float)
    if values.size < 2:
        raise DataError("kde needs a sample of size >= 2")
    if values.min() < 0.0 or values.max() > 1.0:
        raise DataError("kde expects values rescaled to [0,1]")
    if bandwidth is None:
        bandwidth = bandwidth_for(values, bandwidth_rule)
    if bandwidth <= 0.0:
        bandwidth = 1.0 / grid_size
        warnings.warn("degenerate sample: bandwidth floored at 1/m", stacklevel=2)

    grid = np.linspace(0.0, 1.0, grid_size)
    dens = np.zeros(grid_size)
    # chunk over sample values so the (chunk, m) kernel matrix stays small
    chunk = max(1, int(2**22 // grid_size))
    for start in range(0, values.size, chunk):
        block = values[start : start + chunk]
        z = (grid[None, :] - block[:, None]) / bandwidth
        dens += np.exp(-0.5 * z * z).sum(axis=0)
    dens /= values.size * bandwidth * np.sqrt(2.0 * np.pi)

    integral = float(trapezoid_weights(grid_size) @ dens)
    if integral <= 0.0:
        raise DataError("kernel density integrated to zero")
    return DensityGrid(values=dens / integral, bandwidth=float(bandwidth))


def summary_features(sample: IntensitySample | np.ndarray, case: str) -> np.ndarray:
    """Classical per-sample summaries used as density-free baselines.

    Cases: (a) mean; (b) mean, Q1, Q3; (c) five-number summary;
    (d) mean, sd, skewness, kurtosis; (e) deciles; (f) 15 equally spaced
    percentiles; (g) 20 equally spaced percentiles. K equally spaced
    percentiles sit at k/(K+1), so case (e) is exactly the deciles.
    """
    values = sample.values if isinstance(sample, IntensitySample) else np.asarray(sample, float)
    if values.size < 4:
        raise DataError("summary_features needs a sample of size >= 4")
    if case not in SUMMARY_CASES:
        raise DataError(f"unknown summary case {case!r}")
    if case == "a":
        return np.array([values.mean()])
    if case == "b":
        q1, q3 = _quartiles(values)
        return np.array([values.mean(), q1, q3])
    if case == "c":
        q1, q3 = _quartiles(values)
        med = float(np.quantile(values, 0.5, method="hazen"))
        return np.array([values.min(), q1, med, q3, values.max()])
    if case == "d":
        return np.array(
            [
                values.mean(),
                np.std(values, ddof=1),
                sstats.skew(values),
                sstats.kurtosis(values),
            ]
        )
    count = {"e": 9, "f": 15, "g": 20}[case]
    probs = np.arange(1, count + 1) / (count + 1)
    return np.quantile(values, probs, method="hazen")


# ---------------------------------------------------------------------------
# file formats


def load_raw_volume(data_path: str | Path, header_path: str | Path | None = None) -> np.ndarray:
    """Read a raw little-endian array with a JSON sidecar header.

    The sidecar (default ``<data_path>.json``) holds ``{"dims": [...],
    "dtype": "float32"}``; the array is reshaped in row-major order.
    """
    data_path = Path(data_path)
    header_path = Path(header_path) if header_path else data_path.with_suffix(
        data_path.suffix + ".json"
    )
    if not header_path.exists():
        raise DataError(f"missing sidecar header {header_path}")
    header = json.loads(header_path.read_text())
    dtype = np.dtype(header.get("dtype", "float32")).newbyteorder("<")
    dims = tuple(int(d) for d in header["dims"])
    arr = np.fromfile(data_path, dtype=dtype)
    if arr.size != int(np.prod(dims)):
        raise DataError(
            f"{data_path}: expected {np.prod(dims)} values for dims {dims}, got {arr.size}"
        )
    return arr.reshape(dims)


def read_voxels_csv(path: str | Path) -> list[IntensitySample]:
    """Read pre-extracted voxels from the long-form CSV
    ``subject_id,sequence,region,intensity``."""
    groups: dict[tuple[str, str, str], list[float]] = {}
    with open(path, newline="") as fh:
        reader = csv.DictReader(row for row in fh if not row.startswith("#"))
        required = {"subject_id", "sequence", "region", "intensity"}
        if reader.fieldnames is None or not required.issubset(reader.fieldnames):
            raise DataError(f"{path}: expected columns {sorted(required)}")
        for row in reader:
            key = (row["subject_id"], row["sequence"], row["region"])
            try:
                groups.setdefault(key, []).append(float(row["intensity"]))
            except ValueError as exc:
                raise DataError(f"{path}: bad intensity {row['intensity']!r}") from exc
    if not groups:
        raise DataError(f"{path}: no voxel rows")
    return [
        IntensitySample(subject_id=k[0], sequence=k[1], region=k[2], values=np.array(v))
        for k, v in groups.items()
    ]


def write_densities_csv(
    path: str | Path,
    densities: dict[tuple[str, str, str], DensityGrid],
    header_comment: str | None = None,
) -> None:
    """Write one row per (subject, sequence, region):
    ``subject_id,sequence,region,bandwidth,v1..vm``."""
    if not densities:
        raise DataError("no densities to write")
    m = next(iter(densities.values())).grid_size
    with open(path, "w", newline="") as fh:
        if header_comment:
            fh.write(f"# {header_comment}\n")
        writer = csv.writer(fh)
        writer.writerow(
            ["subject_id", "sequence", "region", "bandwidth"] + [f"v{i + 1}" for i in range(m)]
        )
        for (subject, sequence, region), dg in sorted(densities.items()):
            if dg.grid_size != m:
                raise DataError("densities mix grid sizes")
            writer.writerow(
                [subject, sequence, region, repr(float(dg.bandwidth))]
                + [repr(float(v)) for v in dg.values]
            )


def read_densities_csv(path: str | Path) -> dict[tuple[str, str, str], DensityGrid]:
    out: dict[tuple[str, str, str], DensityGrid] = {}
    with open(path, newline="") as fh:
        reader = csv.reader(row for row in fh if not row.startswith("#"))
        header = next(reader, None)
        if header is None or header[:4] != ["subject_id", "sequence", "region", "bandwidth"]:
            raise DataError(f"{path}: not a densities table")
        for row in reader:
            key = (row[0], row[1], row[2])
            out[key] = DensityGrid(
                values=np.array([float(v) for v in row[4:]]), bandwidth=float(row[3])
            )
    if not out:
        raise DataError(f"{path}: no density rows")
    return out
