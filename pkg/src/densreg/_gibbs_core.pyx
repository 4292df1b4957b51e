# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled kernel for the grouped spike-and-slab Gibbs sweep.

Mirrors ``_gibbs_py.run_chain``: identical conditional updates and the
same per-iteration random-variate order (L normals, G uniforms, L
gammas, one beta, one gamma) pulled straight from the NumPy bit
generator's C interface. Dense linear algebra goes through BLAS/LAPACK
(dpotrf + triangular solves on the precision matrix), so a sweep costs
O(L^3) with a small constant instead of NumPy per-call overhead.
"""

import numpy as np

cimport numpy as cnp
from cpython.pycapsule cimport PyCapsule_GetPointer, PyCapsule_IsValid
from libc.math cimport exp, log, log1p, sqrt
from libc.string cimport memcpy

from numpy.random cimport bitgen_t
from numpy.random.c_distributions cimport (
    random_beta,
    random_standard_gamma,
    random_standard_normal,
    random_standard_uniform,
)
from scipy.linalg.cython_blas cimport ddot, dgemv, dtrsv
from scipy.linalg.cython_lapack cimport dpotrf

from .errors import NumericalError

cnp.import_array()


def run_chain(
    double[:, ::1] X,
    double[::1] y,
    cnp.intp_t[::1] groups0,
    int n_groups,
    double v0,
    double a1,
    double a2,
    double b1,
    double b2,
    long iterations,
    long burnin,
    long thin,
    object bit_generator,
):
    """Run one chain; returns retained (beta, sigma2, w, zeta) draws."""
    cdef int n = X.shape[0]
    cdef int L = X.shape[1]
    cdef int G = n_groups
    cdef long kept = (iterations - burnin) // thin

    XtX_arr = np.ascontiguousarray(np.asarray(X).T @ np.asarray(X))
    Xty_arr = np.asarray(X).T @ np.asarray(y)
    cdef double[:, ::1] XtX = XtX_arr
    cdef double[::1] Xty = Xty_arr

    A_arr = np.empty((L, L))
    cdef double[:, ::1] A = A_arr
    cdef double[::1] beta = np.zeros(L)
    cdef double[::1] mu = np.empty(L)
    cdef double[::1] z = np.empty(L)
    cdef double[::1] nu2 = np.ones(L)
    cdef double[::1] zeta = np.ones(G)
    cdef double[::1] q = np.empty(G)
    cdef double[::1] resid = np.empty(n)
    cdef double[::1] group_sizes = np.bincount(groups0, minlength=G).astype(np.float64)

    beta_out_arr = np.empty((kept, L))
    sigma2_out_arr = np.empty(kept)
    w_out_arr = np.empty(kept)
    zeta_out_arr = np.empty((kept, G))
    cdef double[:, ::1] beta_out = beta_out_arr
    cdef double[::1] sigma2_out = sigma2_out_arr
    cdef double[::1] w_out = w_out_arr
    cdef double[:, ::1] zeta_out = zeta_out_arr

    cdef bitgen_t *bitgen
    capsule = bit_generator.capsule
    if not PyCapsule_IsValid(capsule, "BitGenerator"):
        raise ValueError("invalid BitGenerator capsule")
    bitgen = <bitgen_t *> PyCapsule_GetPointer(capsule, "BitGenerator")

    cdef double w = 0.5
    cdef double sigma2 = 1.0
    cdef double log_v0 = log(v0)
    cdef double shape_nu = a1 + 0.5
    cdef double shape_sigma = b1 + 0.5 * (n + L)
    cdef double gamma_k, d, p_slab, rate, rss, quad, u, sqrt_sigma
    cdef long t, s
    cdef int i, k, g, info, n_slab, inc = 1
    cdef char lo = b'L'
    cdef char tr_n = b'N'
    cdef char tr_t = b'T'
    cdef double one = 1.0, neg_one = -1.0
    cdef int fail_iter = 0

    with bit_generator.lock, nogil:
        for t in range(1, iterations + 1):
            # --- beta | rest -------------------------------------------------
            memcpy(&A[0, 0], &XtX[0, 0], L * L * sizeof(double))
            for k in range(L):
                gamma_k = zeta[groups0[k]] * nu2[k]
                A[k, k] += 1.0 / gamma_k
            # A is symmetric, so its column-major view equals the matrix;
            # dpotrf('L') leaves the factor where the solves below expect it
            dpotrf(&lo, &L, &A[0, 0], &L, &info)
            if info != 0:
                fail_iter = <int> t
                break
            for k in range(L):
                mu[k] = Xty[k]
            dtrsv(&lo, &tr_n, &tr_n, &L, &A[0, 0], &L, &mu[0], &inc)
            dtrsv(&lo, &tr_t, &tr_n, &L, &A[0, 0], &L, &mu[0], &inc)
            for k in range(L):
                z[k] = random_standard_normal(bitgen)
            dtrsv(&lo, &tr_t, &tr_n, &L, &A[0, 0], &L, &z[0], &inc)
            sqrt_sigma = sqrt(sigma2)
            for k in range(L):
                beta[k] = mu[k] + sqrt_sigma * z[k]

            # --- zeta | rest -------------------------------------------------
            for g in range(G):
                q[g] = 0.0
            for k in range(L):
                q[groups0[k]] += beta[k] * beta[k] / nu2[k]
            for g in range(G):
                d = (log1p(-w) - log(w)) - 0.5 * group_sizes[g] * log_v0 \
                    - q[g] / (2.0 * sigma2 * v0) + q[g] / (2.0 * sigma2)
                if d > 700.0:
                    d = 700.0
                p_slab = 1.0 / (1.0 + exp(d))
                u = random_standard_uniform(bitgen)
                zeta[g] = 1.0 if u < p_slab else v0

            # --- nu2 | rest --------------------------------------------------
            for k in range(L):
                rate = a2 + beta[k] * beta[k] / (2.0 * sigma2 * zeta[groups0[k]])
                nu2[k] = rate / random_standard_gamma(bitgen, shape_nu)

            # --- w | zeta ----------------------------------------------------
            n_slab = 0
            for g in range(G):
                if zeta[g] == 1.0:
                    n_slab += 1
            w = random_beta(bitgen, 1.0 + n_slab, 1.0 + (G - n_slab))

            # --- sigma2 | rest -----------------------------------------------
            memcpy(&resid[0], &y[0], n * sizeof(double))
            # C-contiguous X reads as the (L, n) matrix X^T in column-major,
            # so trans='T' applies X itself
            dgemv(&tr_t, &L, &n, &neg_one, &X[0, 0], &L, &beta[0], &inc,
                  &one, &resid[0], &inc)
            rss = ddot(&n, &resid[0], &inc, &resid[0], &inc)
            quad = 0.0
            for k in range(L):
                quad += beta[k] * beta[k] / (zeta[groups0[k]] * nu2[k])
            rate = b2 + 0.5 * (rss + quad)
            sigma2 = rate / random_standard_gamma(bitgen, shape_sigma)

            # --- retain ------------------------------------------------------
            if t > burnin and (t - burnin) % thin == 0:
                s = (t - burnin) // thin - 1
                for k in range(L):
                    beta_out[s, k] = beta[k]
                sigma2_out[s] = sigma2
                w_out[s] = w
                for g in range(G):
                    zeta_out[s, g] = zeta[g]

    if fail_iter:
        raise NumericalError(
            f"iteration {fail_iter}: precision matrix not positive definite"
        )
    return beta_out_arr, sigma2_out_arr, w_out_arr, zeta_out_arr
