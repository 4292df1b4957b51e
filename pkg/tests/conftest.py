"""Shared fixtures: random densities on the sphere, a small regression
problem with an independent quadrature oracle, and MC-error helpers."""

from __future__ import annotations

import numpy as np
import pytest
from scipy import stats

from densreg import geometry
from densreg.gss import GroupedDesignMatrix


def make_srds(n: int, m: int, rng: np.random.Generator) -> np.ndarray:
    """Random positive densities (log-space random Fourier bumps) mapped
    to unit-norm square-root densities on the shared grid."""
    x = np.linspace(0.0, 1.0, m)
    w = geometry.trapezoid_weights(m)
    out = np.empty((n, m))
    for i in range(n):
        log_f = np.zeros(m)
        for k in range(1, 4):
            log_f += rng.normal(0, 1.0 / k) * np.sin(2 * np.pi * k * x + rng.uniform(0, 2 * np.pi))
        f = np.exp(log_f)
        f /= w @ f
        out[i] = geometry.srd_from_density(f, w)
    return out


def unimodal_samples(n_points: int, loc: float, scale: float, rng: np.random.Generator) -> np.ndarray:
    """A unimodal sample inside [0,1] (clipped normal draws)."""
    return np.clip(rng.normal(loc, scale, size=n_points), 0.0, 1.0)


@pytest.fixture(scope="session")
def toy_problem():
    """Single-covariate, single-group regression used by the sampler
    correctness checks. Shapes are small so the quadrature oracle stays
    cheap."""
    rng = np.random.default_rng(42)
    n = 20
    x = rng.standard_normal(n)
    y = 0.8 * x + 0.5 * rng.standard_normal(n)
    y = y - y.mean()
    design = GroupedDesignMatrix(X=x[:, None], groups=np.array([1]))
    return design, y


def toy_posterior_mean_quadrature(
    x: np.ndarray,
    y: np.ndarray,
    v0: float = 0.005,
    a1: float = 0.001,
    a2: float = 0.001,
    b1: float = 0.001,
    b2: float = 0.001,
    n_nu: int = 1600,
    n_sig: int = 1600,
) -> float:
    """Posterior mean of the single coefficient by 2-D log-grid
    quadrature over the precision hyperparameters, summing the two-point
    group indicator (whose prior marginal is 1/2 each once the
    complexity weight integrates out) and integrating the coefficient
    analytically under its conjugate normal."""
    n = y.size
    Sxx = float(x @ x)
    Sxy = float(x @ y)
    Syy = float(y @ y)
    lnu = np.linspace(np.log(1e-10), np.log(1e8), n_nu)
    lsig = np.linspace(np.log(1e-8), np.log(1e6), n_sig)
    nu_inv = np.exp(lnu)[:, None]
    sig_inv = np.exp(lsig)[None, :]
    wnu = np.ones(n_nu)
    wnu[0] = wnu[-1] = 0.5
    wsig = np.ones(n_sig)
    wsig[0] = wsig[-1] = 0.5
    quad_w = wnu[:, None] * wsig[None, :]

    branches = []
    for zeta in (v0, 1.0):
        c = zeta / nu_inv  # prior variance scale of beta (zeta * nu^2)
        s2 = 1.0 / sig_inv
        amp = 1.0 + c * Sxx
        quad_form = Syy - c * Sxy**2 / amp
        loglik = -0.5 * n * np.log(2 * np.pi * s2) - 0.5 * np.log(amp) - 0.5 * sig_inv * quad_form
        logprior = stats.gamma.logpdf(nu_inv, a1, scale=1.0 / a2) + stats.gamma.logpdf(
            sig_inv, b1, scale=1.0 / b2
        )
        logw = loglik + logprior + np.log(nu_inv) + np.log(sig_inv)  # log-grid Jacobian
        e_beta = Sxy / (Sxx + 1.0 / c)
        branches.append((logw, e_beta))

    peak = max(logw.max() for logw, _ in branches)
    num = den = 0.0
    for logw, e_beta in branches:
        w = np.exp(logw - peak) * quad_w
        num += 0.5 * float((w * e_beta).sum())
        den += 0.5 * float(w.sum())
    return num / den


def batch_means_se(draws: np.ndarray, n_batches: int = 20) -> float:
    """Monte-Carlo standard error of the chain mean via batch means."""
    draws = np.asarray(draws, dtype=np.float64).ravel()
    size = draws.size // n_batches
    batches = draws[: n_batches * size].reshape(n_batches, size).mean(axis=1)
    return float(batches.std(ddof=1) / np.sqrt(n_batches))


def write_phantom_inputs(
    root,
    n_subjects: int = 20,
    sequences=("T1", "T2"),
    regions=("NC", "ED", "ET"),
    n_pathways: int = 5,
    n_genes: int = 40,
    voxels_per_region: int = 120,
    incomplete_subjects: int = 0,
    seed: int = 123,
):
    """Write a synthetic voxels/expression/genesets trio under ``root``
    and return their paths. Subject s<i> gets unimodal intensities whose
    location/scale vary smoothly with i; pathway scores end up loosely
    tied to those latents through the expression draw."""
    rng = np.random.default_rng(seed)
    root.mkdir(parents=True, exist_ok=True)
    subjects = [f"s{i + 1:02d}" for i in range(n_subjects)]

    voxels = root / "voxels.csv"
    with open(voxels, "w") as fh:
        fh.write("subject_id,sequence,region,intensity\n")
        for i, subject in enumerate(subjects):
            for sequence in sequences:
                for r, region in enumerate(regions):
                    if incomplete_subjects and i < incomplete_subjects and r == 0:
                        continue
                    loc = 40.0 + 30.0 * i / n_subjects + 8.0 * r
                    scale = 4.0 + 2.0 * rng.random()
                    values = rng.normal(loc, scale, size=voxels_per_region)
                    for v in values:
                        fh.write(f"{subject},{sequence},{region},{v:.4f}\n")

    genes = [f"g{i + 1:03d}" for i in range(n_genes)]
    expression = root / "expression.csv"
    with open(expression, "w") as fh:
        fh.write("gene," + ",".join(subjects) + "\n")
        base = rng.standard_normal((n_genes, n_subjects))
        subject_latent = np.linspace(-1, 1, n_subjects)
        base[: n_genes // 2] += 0.8 * subject_latent
        for g, gene in enumerate(genes):
            fh.write(gene + "," + ",".join(f"{v:.5f}" for v in base[g]) + "\n")

    gmt = root / "genesets.gmt"
    with open(gmt, "w") as fh:
        per_set = max(3, n_genes // (2 * n_pathways))
        for k in range(n_pathways):
            members = genes[k * per_set : (k + 1) * per_set]
            fh.write(f"path{k + 1}\tsynthetic\t" + "\t".join(members) + "\n")

    return voxels, expression, gmt


def write_phantom_config(root, voxels, expression, gmt, **overrides) -> "Path":
    """A small, fast configuration pointing at the phantom inputs."""
    from pathlib import Path

    values = {
        "voxels_csv": voxels,
        "expression_csv": expression,
        "genesets_gmt": gmt,
        "out_dir": root / "out",
        "m": 128,
        "variance_cutoff": 0.999,
        "iterations": 3000,
        "burnin": 500,
        "thin": 5,
        "seed": 7,
        "alpha": 0.05,
        "c": 0.001,
    }
    values.update(overrides)
    path = Path(root) / "config.txt"
    path.write_text("".join(f"{k} = {v}\n" for k, v in values.items()))
    return path
