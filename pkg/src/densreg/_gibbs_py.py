"""NumPy implementation of the grouped spike-and-slab Gibbs sweep.

This is the fallback for the compiled kernel in ``_gibbs_core``; both
consume random variates from the underlying bit generator in exactly
the same order (per iteration: L normals, G uniforms, L gammas, one
beta, one gamma), so chains from either backend explore the same
posterior and a fixed (seed, backend) pair reproduces bit-identical
draws.

Sweep over the conditionals, one iteration:

1. beta   ~ N(S X'y, sigma2 S),  S = (X'X + Gamma^-1)^-1,
   Gamma = diag(zeta_g * nu2_gk)
2. zeta_g ~ two-point {v0, 1}; the v0 weight is
   (1-w) v0^(-Lg/2) exp(-q_g / (2 sigma2 v0)) against
   w exp(-q_g / (2 sigma2)) for 1, with q_g = sum_k beta_gk^2 / nu2_gk
   (computed in log space: v0^(-Lg/2) overflows at realistic Lg)
3. nu2_gk^-1 ~ Gamma(a1 + 1/2, rate a2 + beta_gk^2 / (2 sigma2 zeta_g))
4. w      ~ Beta(1 + #{zeta=1}, 1 + #{zeta=v0})
5. sigma2^-1 ~ Gamma(b1 + (n + L)/2,
                     rate b2 + (||y - X beta||^2 + beta' Gamma^-1 beta)/2)
"""

from __future__ import annotations

import numpy as np
from scipy import linalg as sla

from .errors import NumericalError


def sample_beta_conditional(
    XtX: np.ndarray,
    Xty: np.ndarray,
    gamma: np.ndarray,
    sigma2: float,
    rng: np.random.Generator,
) -> np.ndarray:
    """One draw from beta | rest via the Cholesky factor of the precision."""
    A = XtX + np.diag(1.0 / gamma)
    try:
        chol = np.linalg.cholesky(A)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"precision matrix not positive definite: {exc}") from exc
    mu = sla.cho_solve((chol, True), Xty)
    z = rng.standard_normal(Xty.size)
    return mu + np.sqrt(sigma2) * sla.solve_triangular(chol, z, lower=True, trans="T")


def run_chain(
    X: np.ndarray,
    y: np.ndarray,
    groups0: np.ndarray,
    n_groups: int,
    v0: float,
    a1: float,
    a2: float,
    b1: float,
    b2: float,
    iterations: int,
    burnin: int,
    thin: int,
    bit_generator,
) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Run one chain; returns retained (beta, sigma2, w, zeta) draws."""
    rng = np.random.Generator(bit_generator)
    X = np.ascontiguousarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    groups0 = np.asarray(groups0, dtype=np.intp)
    n, L = X.shape
    G = int(n_groups)
    XtX = X.T @ X
    Xty = X.T @ y
    group_sizes = np.bincount(groups0, minlength=G).astype(np.float64)
    log_v0 = np.log(v0)

    beta = np.zeros(L)
    nu2 = np.ones(L)
    zeta = np.ones(G)
    w = 0.5
    sigma2 = 1.0

    kept = (iterations - burnin) // thin
    beta_out = np.empty((kept, L))
    sigma2_out = np.empty(kept)
    w_out = np.empty(kept)
    zeta_out = np.empty((kept, G))

    for t in range(1, iterations + 1):
        try:
            gamma = zeta[groups0] * nu2
            beta = sample_beta_conditional(XtX, Xty, gamma, sigma2, rng)

            q = np.bincount(groups0, weights=beta**2 / nu2, minlength=G)
            log_w1 = np.log1p(-w) - 0.5 * group_sizes * log_v0 - q / (2.0 * sigma2 * v0)
            log_w2 = np.log(w) - q / (2.0 * sigma2)
            p_slab = 1.0 / (1.0 + np.exp(np.minimum(log_w1 - log_w2, 700.0)))
            u = rng.random(G)
            zeta = np.where(u < p_slab, 1.0, v0)

            rate_nu = a2 + beta**2 / (2.0 * sigma2 * zeta[groups0])
            nu2 = rate_nu / rng.standard_gamma(a1 + 0.5, size=L)

            n_slab = int(np.count_nonzero(zeta == 1.0))
            w = rng.beta(1.0 + n_slab, 1.0 + (G - n_slab))

            resid = y - X @ beta
            quad = float(np.sum(beta**2 / (zeta[groups0] * nu2)))
            rate_sigma = b2 + 0.5 * (float(resid @ resid) + quad)
            sigma2 = rate_sigma / rng.standard_gamma(b1 + 0.5 * (n + L))
        except NumericalError as exc:
            raise NumericalError(f"iteration {t}: {exc}") from exc
        except FloatingPointError as exc:
            raise NumericalError(f"numerical failure at iteration {t}: {exc}") from exc

        if t > burnin and (t - burnin) % thin == 0:
            s = (t - burnin) // thin - 1
            beta_out[s] = beta
            sigma2_out[s] = sigma2
            w_out[s] = w
            zeta_out[s] = zeta

    return beta_out, sigma2_out, w_out, zeta_out
