"""Sphere geometry of square-root densities.

A density on [0,1] sampled at ``m`` uniform grid points maps to its
square root, a point on the positive orthant of the unit sphere in L2.
On that sphere the distance between two densities is the great-circle
arc length, and the exponential / inverse-exponential maps move between
the sphere and its tangent spaces along geodesics. All inner products
are discretized with trapezoidal weights on the shared grid.

Functions here operate on plain 1-D float64 arrays; callers keep track
of the shared grid size. ``srd_from_density`` is the entry point from a
density to the sphere.
"""

from __future__ import annotations

import numpy as np

from .errors import DataError, KarcherConvergenceError

EPS_FLOOR = 1e-10


def grid_points(m: int) -> np.ndarray:
    """Uniform grid of m points on [0,1], endpoints included."""
    return np.linspace(0.0, 1.0, m)


def trapezoid_weights(m: int) -> np.ndarray:
    """Quadrature weights so that ``w @ f`` is the trapezoidal integral."""
    if m < 2:
        raise DataError("grid needs at least 2 points")
    dx = 1.0 / (m - 1)
    w = np.full(m, dx)
    w[0] *= 0.5
    w[-1] *= 0.5
    return w


def inner(u: np.ndarray, v: np.ndarray, weights: np.ndarray) -> float:
    # weights applied to the commutative product, so inner(u, v) and
    # inner(v, u) are bitwise identical
    return float(np.sum(weights * (u * v)))


def norm(u: np.ndarray, weights: np.ndarray) -> float:
    return float(np.sqrt(np.sum(weights * u * u)))


def _check_same_grid(a: np.ndarray, b: np.ndarray) -> None:
    if a.shape != b.shape:
        raise DataError(f"grid mismatch: {a.shape} vs {b.shape}")


def srd_from_density(f: np.ndarray, weights: np.ndarray | None = None) -> np.ndarray:
    """Square root of a density, floored at a small positive value and
    renormalized to unit L2 norm on the grid."""
    f = np.asarray(f, dtype=np.float64)
    if weights is None:
        weights = trapezoid_weights(f.size)
    h = np.sqrt(np.maximum(f, EPS_FLOOR))
    return h / norm(h, weights)


def geodesic_distance(h1: np.ndarray, h2: np.ndarray, weights: np.ndarray | None = None) -> float:
    """Arc length between two unit-norm square-root densities, in [0, pi]."""
    _check_same_grid(h1, h2)
    if weights is None:
        weights = trapezoid_weights(h1.size)
    c = np.clip(inner(h1, h2, weights), -1.0, 1.0)
    return float(np.arccos(c))


def exp_map(h: np.ndarray, v: np.ndarray, weights: np.ndarray | None = None) -> np.ndarray:
    """Follow the geodesic from h in tangent direction v for arc length |v|.

    Returns a unit-norm, positivity-floored point. The zero vector maps
    back to h.
    """
    _check_same_grid(h, v)
    if weights is None:
        weights = trapezoid_weights(h.size)
    vnorm = norm(v, weights)
    if vnorm < 1e-12:
        return h.copy()
    out = np.cos(vnorm) * h + np.sin(vnorm) * (v / vnorm)
    out = np.maximum(out, EPS_FLOOR)
    return out / norm(out, weights)


def inv_exp_map(h1: np.ndarray, h2: np.ndarray, weights: np.ndarray | None = None) -> np.ndarray:
    """Tangent vector at h1 pointing to h2 with length equal to their
    geodesic distance. Returns the zero vector for coincident points."""
    _check_same_grid(h1, h2)
    if weights is None:
        weights = trapezoid_weights(h1.size)
    theta = geodesic_distance(h1, h2, weights)
    if theta < 1e-12:
        return np.zeros_like(h1)
    return theta * (h2 - np.cos(theta) * h1) / np.sin(theta)


def karcher_mean(
    srds: np.ndarray,
    eps1: float = 1e-6,
    step: float = 0.5,
    max_iter: int = 200,
    weights: np.ndarray | None = None,
) -> np.ndarray:
    """Sample Karcher mean of square-root densities.

    Gradient descent on the variance functional sum_i d(h, h_i)^2:
    starting from the normalized extrinsic average, repeatedly move along
    the mean tangent direction until its norm drops below ``eps1``. The
    step size starts at ``step`` and is halved whenever a move fails to
    decrease the variance functional, which keeps the descent monotone.

    Parameters
    ----------
    srds : array (n, m)
        Sample of unit-norm square-root densities on a shared grid.
    """
    srds = np.asarray(srds, dtype=np.float64)
    if srds.ndim != 2 or srds.shape[0] == 0:
        raise DataError("karcher_mean needs a non-empty (n, m) sample")
    n, m = srds.shape
    if weights is None:
        weights = trapezoid_weights(m)
    if n == 1:
        return srds[0].copy()

    mean = np.maximum(srds.mean(axis=0), EPS_FLOOR)
    mean /= norm(mean, weights)

    def variance(h: np.ndarray) -> float:
        c = np.clip(srds @ (weights * h), -1.0, 1.0)
        return float(np.sum(np.arccos(c) ** 2))

    current_var = variance(mean)
    grad_norm = np.inf
    for _ in range(max_iter):
        mean_tangent = np.zeros(m)
        for i in range(n):
            mean_tangent += inv_exp_map(mean, srds[i], weights)
        mean_tangent /= n
        grad_norm = norm(mean_tangent, weights)
        if grad_norm < eps1:
            return mean

        eps2 = step
        while True:
            candidate = exp_map(mean, eps2 * mean_tangent, weights)
            cand_var = variance(candidate)
            if cand_var < current_var or eps2 < 1e-8:
                mean, current_var = candidate, cand_var
                break
            eps2 *= 0.5

    raise KarcherConvergenceError(grad_norm, max_iter)
