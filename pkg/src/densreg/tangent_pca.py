"""PCA of square-root densities in the tangent space at their Karcher mean.

Each density is lifted to the tangent space of the sample Karcher mean
with the inverse-exponential map; principal directions and scores come
from an SVD of the (n, m) tangent-vector matrix under the trapezoidal
inner product. The SVD route gives the same spectrum as an explicit
(m, m) covariance while never forming it.

Scores are projections onto unit-norm directions, so a direction's
eigenvalue is the sample variance of its score column.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import geometry
from .errors import DataError


@dataclass
class PcBasis:
    """Karcher mean, orthonormal principal directions and eigenvalues for
    one (sequence, region) group of densities."""

    mean: np.ndarray
    directions: np.ndarray  # (L, m), rows unit-norm in the weighted L2 sense
    eigenvalues: np.ndarray  # (L,), non-increasing
    group: tuple[str, str] | None = None

    def validate(self, atol: float = 1e-8) -> None:
        w = geometry.trapezoid_weights(self.mean.size)
        gram = (self.directions * w) @ self.directions.T
        if not np.allclose(gram, np.eye(self.directions.shape[0]), atol=atol):
            raise DataError("principal directions are not orthonormal")
        ev = self.eigenvalues
        if np.any(np.diff(ev) > 1e-12) or np.any(ev < -1e-12):
            raise DataError("eigenvalues must be non-increasing and non-negative")


@dataclass
class PcScores:
    """Per-subject principal component scores for one group."""

    matrix: np.ndarray  # (n, L)
    subject_ids: list[str]
    column_names: list[str]
    group: tuple[str, str] | None = None

    def __post_init__(self):
        if self.matrix.shape != (len(self.subject_ids), len(self.column_names)):
            raise DataError("score matrix shape does not match labels")


def pc_column_names(group: tuple[str, str], count: int) -> list[str]:
    seq, region = group
    return [f"{seq}_{region}.{k + 1}" for k in range(count)]


def _tangent_vectors(srds: np.ndarray, weights: np.ndarray, **karcher_kw) -> tuple[np.ndarray, np.ndarray]:
    mean = geometry.karcher_mean(srds, weights=weights, **karcher_kw)
    tangents = np.empty_like(srds)
    for i in range(srds.shape[0]):
        tangents[i] = geometry.inv_exp_map(mean, srds[i], weights)
    return mean, tangents


def _weighted_svd(tangents: np.ndarray, weights: np.ndarray):
    """SVD of the tangent sample under the trapezoidal inner product.

    Returns (eigenvalues, directions, scores) for all min(n, m)
    components: directions are unit-norm rows in the weighted sense, and
    scores[i, k] is the weighted projection of tangent i on direction k.
    """
    n = tangents.shape[0]
    sqw = np.sqrt(weights)
    scaled = tangents * sqw
    u, s, vh = np.linalg.svd(scaled / np.sqrt(n - 1), full_matrices=False)
    eigenvalues = s**2
    directions = vh / sqw
    scores = u * (s * np.sqrt(n - 1))

    # deterministic sign: largest-|coordinate| entry of each direction positive
    for k in range(directions.shape[0]):
        j = int(np.argmax(np.abs(directions[k])))
        if directions[k, j] < 0:
            directions[k] = -directions[k]
            scores[:, k] = -scores[:, k]
    return eigenvalues, directions, scores


def fit_pca(
    srds: np.ndarray,
    variance_cutoff: float = 0.9999,
    subject_ids: list[str] | None = None,
    group: tuple[str, str] | None = None,
    **karcher_kw,
) -> tuple[PcBasis, PcScores]:
    """Tangent-space PCA of a sample of square-root densities.

    The number of retained components L is the smallest count whose
    cumulative eigenvalue fraction reaches ``variance_cutoff``. A fully
    degenerate sample (all densities identical) keeps a single direction
    with eigenvalue 0 and all-zero scores.
    """
    srds = np.asarray(srds, dtype=np.float64)
    if srds.ndim != 2 or srds.shape[0] < 2:
        raise DataError("fit_pca needs at least 2 densities on a shared grid")
    if not 0.0 < variance_cutoff <= 1.0:
        raise DataError("variance_cutoff must lie in (0, 1]")
    n, m = srds.shape
    if subject_ids is None:
        subject_ids = [f"s{i + 1}" for i in range(n)]
    weights = geometry.trapezoid_weights(m)

    mean, tangents = _tangent_vectors(srds, weights, **karcher_kw)
    eigenvalues, directions, scores = _weighted_svd(tangents, weights)

    total = float(eigenvalues.sum())
    if total <= 0.0:
        count = 1
    else:
        fraction = np.cumsum(eigenvalues) / total
        count = int(np.searchsorted(fraction, variance_cutoff - 1e-12) + 1)
        count = min(count, eigenvalues.size)

    basis = PcBasis(
        mean=mean,
        directions=directions[:count],
        eigenvalues=np.maximum(eigenvalues[:count], 0.0),
        group=group,
    )
    names = pc_column_names(group, count) if group else [f"pc.{k + 1}" for k in range(count)]
    pcscores = PcScores(
        matrix=scores[:, :count],
        subject_ids=list(subject_ids),
        column_names=names,
        group=group,
    )
    return basis, pcscores


def loo_basis_stability(
    srds: np.ndarray,
    k_max: int,
    **karcher_kw,
) -> np.ndarray:
    """Leave-one-out angles between full-sample and reduced-sample
    principal directions.

    Entry [i, k] is the angle between the (k+1)-th directions computed
    with and without subject i, folded into [0, pi/2] because the sign
    of an eigenvector carries no meaning. Components unavailable in the
    reduced fit come back as NaN.
    """
    srds = np.asarray(srds, dtype=np.float64)
    n, m = srds.shape
    if n < 3:
        raise DataError("leave-one-out stability needs at least 3 densities")
    weights = geometry.trapezoid_weights(m)

    _, tangents = _tangent_vectors(srds, weights, **karcher_kw)
    _, full_dirs, _ = _weighted_svd(tangents, weights)
    k_full = min(k_max, full_dirs.shape[0])

    out = np.full((n, k_max), np.nan)
    for i in range(n):
        reduced = np.delete(srds, i, axis=0)
        _, tang_i = _tangent_vectors(reduced, weights, **karcher_kw)
        _, dirs_i, _ = _weighted_svd(tang_i, weights)
        k_i = min(k_full, dirs_i.shape[0])
        for k in range(k_i):
            c = np.clip(np.sum(weights * full_dirs[k] * dirs_i[k]), -1.0, 1.0)
            angle = float(np.arccos(c))
            if angle > np.pi / 2:
                angle = np.pi - angle
            out[i, k] = angle
    return out


# ---------------------------------------------------------------------------
# file formats


def write_pcscores_csv(
    path: str | Path,
    subject_ids: list[str],
    column_names: list[str],
    matrix: np.ndarray,
    header_comment: str | None = None,
) -> None:
    matrix = np.asarray(matrix, dtype=np.float64)
    if matrix.shape != (len(subject_ids), len(column_names)):
        raise DataError("pcscores shape mismatch")
    with open(path, "w", newline="") as fh:
        if header_comment:
            fh.write(f"# {header_comment}\n")
        writer = csv.writer(fh)
        writer.writerow(["subject_id"] + list(column_names))
        for sid, row in zip(subject_ids, matrix):
            writer.writerow([sid] + [repr(float(v)) for v in row])


def read_pcscores_csv(path: str | Path) -> tuple[list[str], list[str], np.ndarray]:
    with open(path, newline="") as fh:
        reader = csv.reader(row for row in fh if not row.startswith("#"))
        header = next(reader, None)
        if header is None or header[0] != "subject_id":
            raise DataError(f"{path}: not a pcscores table")
        names = header[1:]
        subject_ids, rows = [], []
        for row in reader:
            subject_ids.append(row[0])
            rows.append([float(v) for v in row[1:]])
    if not rows:
        raise DataError(f"{path}: no score rows")
    return subject_ids, names, np.asarray(rows)


def write_pcgroups_csv(
    path: str | Path,
    column_names: list[str],
    group_indices: list[int],
    header_comment: str | None = None,
) -> None:
    if len(column_names) != len(group_indices):
        raise DataError("pcgroups length mismatch")
    with open(path, "w", newline="") as fh:
        if header_comment:
            fh.write(f"# {header_comment}\n")
        writer = csv.writer(fh)
        writer.writerow(["column", "group"])
        for name, g in zip(column_names, group_indices):
            writer.writerow([name, g])


def read_pcgroups_csv(path: str | Path) -> dict[str, int]:
    with open(path, newline="") as fh:
        reader = csv.reader(row for row in fh if not row.startswith("#"))
        header = next(reader, None)
        if header != ["column", "group"]:
            raise DataError(f"{path}: not a pcgroups table")
        return {row[0]: int(row[1]) for row in reader}
