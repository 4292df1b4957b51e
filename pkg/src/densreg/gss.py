"""Bayesian linear regression with a grouped spike-and-slab prior.

Pathway scores regress on grouped PC-score predictors; a per-group
indicator scales every coefficient hypervariance in the group, so whole
groups shrink toward zero together. Fitting is plain Gibbs sampling
with conjugate conditional draws; see ``_gibbs_py`` for the sweep.

A compiled kernel (``_gibbs_core``) is used when the extension built,
with a NumPy fallback otherwise; both draw identically-ordered variates
from the same seeded bit generator. Chains are deterministic given
(inputs, seed, backend).
"""

from __future__ import annotations

import csv
import zlib
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import _gibbs_py
from .errors import DataError
from .ingest import bandwidth_for

try:
    from . import _gibbs_core
except ImportError:  # extension not built; the NumPy sweep is the fallback
    _gibbs_core = None

HAVE_COMPILED = _gibbs_core is not None
BACKENDS = ("auto", "compiled", "python")


def default_backend() -> str:
    return "compiled" if HAVE_COMPILED else "python"


@dataclass
class Hyperparameters:
    """Prior settings: gamma shape/rate pairs for the precision
    hyperpriors and the spike scale v0."""

    a1: float = 0.001
    a2: float = 0.001
    b1: float = 0.001
    b2: float = 0.001
    v0: float = 0.005

    def __post_init__(self):
        for name in ("a1", "a2", "b1", "b2", "v0"):
            if getattr(self, name) <= 0:
                raise DataError(f"hyperparameter {name} must be positive")
        if self.v0 >= 1:
            raise DataError("v0 must be smaller than 1")


@dataclass
class McmcSettings:
    iterations: int = 100_000
    burnin: int = 20_000
    thin: int = 125
    chains: int = 1

    def __post_init__(self):
        if not (0 <= self.burnin < self.iterations):
            raise DataError("need 0 <= burnin < iterations")
        if self.thin < 1 or self.chains < 1:
            raise DataError("thin and chains must be >= 1")

    @property
    def retained(self) -> int:
        return (self.iterations - self.burnin) // self.thin


@dataclass
class GroupedDesignMatrix:
    """Predictor matrix with a group label (1..G) per column."""

    X: np.ndarray
    groups: np.ndarray  # (L,) ints in 1..G
    column_names: list[str] = field(default_factory=list)

    def __post_init__(self):
        self.X = np.ascontiguousarray(self.X, dtype=np.float64)
        self.groups = np.asarray(self.groups, dtype=np.intp)
        if self.X.ndim != 2:
            raise DataError("design matrix must be 2-D")
        n, L = self.X.shape
        if self.groups.shape != (L,):
            raise DataError("one group label per column required")
        if not self.column_names:
            self.column_names = [f"x{k + 1}" for k in range(L)]
        if len(self.column_names) != L:
            raise DataError("column_names length mismatch")
        if self.groups.min() < 1:
            raise DataError("group labels start at 1")
        present = np.unique(self.groups)
        if not np.array_equal(present, np.arange(1, present.size + 1)):
            raise DataError("group labels must cover 1..G without gaps")

    @property
    def n_groups(self) -> int:
        return int(self.groups.max())

    def standardized(self) -> "GroupedDesignMatrix":
        """Columns centered and scaled to unit sd; constant columns are
        only centered."""
        mean = self.X.mean(axis=0)
        sd = self.X.std(axis=0, ddof=0)
        sd = np.where(sd > 1e-12, sd, 1.0)
        return GroupedDesignMatrix(
            X=(self.X - mean) / sd,
            groups=self.groups.copy(),
            column_names=list(self.column_names),
        )


@dataclass
class ResponseVector:
    values: np.ndarray
    pathway: str = ""

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64).ravel()
        if not np.all(np.isfinite(self.values)):
            raise DataError(f"non-finite response for pathway {self.pathway!r}")


@dataclass
class PosteriorDraws:
    """Retained Gibbs draws for one chain plus the run description."""

    beta: np.ndarray  # (S, L)
    sigma2: np.ndarray  # (S,)
    w: np.ndarray  # (S,)
    zeta: np.ndarray  # (S, G)
    column_names: list[str]
    groups: np.ndarray
    settings: McmcSettings
    seed: int
    beta0: float = 0.0
    pathway: str = ""

    @property
    def n_draws(self) -> int:
        return self.beta.shape[0]

    def iteration_numbers(self) -> np.ndarray:
        s = self.settings
        return s.burnin + s.thin * np.arange(1, self.n_draws + 1)


def pathway_seed(master_seed: int, pathway: str) -> int:
    """Stable per-pathway seed: master plus a crc32 of the pathway name."""
    return (int(master_seed) + zlib.crc32(pathway.encode("utf-8"))) % (2**63)


def _chain_bitgen(seed: int, chain_index: int) -> np.random.PCG64:
    ss = np.random.SeedSequence([int(seed), int(chain_index)])
    return np.random.PCG64(ss)


def _resolve_backend(backend: str):
    if backend not in BACKENDS:
        raise DataError(f"unknown backend {backend!r}; pick one of {BACKENDS}")
    if backend == "compiled" or (backend == "auto" and HAVE_COMPILED):
        if not HAVE_COMPILED:
            raise DataError("compiled backend requested but the extension is not built")
        return _gibbs_core
    return _gibbs_py


def gibbs_fit(
    y: ResponseVector | np.ndarray,
    design: GroupedDesignMatrix,
    hp: Hyperparameters | None = None,
    settings: McmcSettings | None = None,
    seed: int = 0,
    chain_index: int = 0,
    backend: str = "auto",
    standardize: bool = False,
) -> PosteriorDraws:
    """Fit the grouped spike-and-slab model by Gibbs sampling.

    The response is mean-centered before sampling and the intercept is
    reported as its mean (the PC-score predictors are already near
    zero-mean, so centering the response absorbs the intercept).
    Standardizing the design is off by default; the simulation harness
    turns it on.
    """
    hp = hp or Hyperparameters()
    settings = settings or McmcSettings()
    if not isinstance(y, ResponseVector):
        y = ResponseVector(values=y)
    if design.X.shape[0] != y.values.size:
        raise DataError("response length does not match design rows")
    if standardize:
        design = design.standardized()

    beta0 = float(y.values.mean())
    y_centered = y.values - beta0
    module = _resolve_backend(backend)
    bitgen = _chain_bitgen(seed, chain_index)
    beta, sigma2, w, zeta = module.run_chain(
        design.X,
        y_centered,
        np.asarray(design.groups - 1, dtype=np.intp),
        design.n_groups,
        hp.v0,
        hp.a1,
        hp.a2,
        hp.b1,
        hp.b2,
        settings.iterations,
        settings.burnin,
        settings.thin,
        bitgen,
    )
    return PosteriorDraws(
        beta=beta,
        sigma2=sigma2,
        w=w,
        zeta=zeta,
        column_names=list(design.column_names),
        groups=design.groups.copy(),
        settings=settings,
        seed=int(seed),
        beta0=beta0,
        pathway=y.pathway,
    )


def fit_chains(
    y: ResponseVector | np.ndarray,
    design: GroupedDesignMatrix,
    hp: Hyperparameters | None = None,
    settings: McmcSettings | None = None,
    seed: int = 0,
    backend: str = "auto",
    standardize: bool = False,
) -> list[PosteriorDraws]:
    """Run ``settings.chains`` independent chains with per-chain streams."""
    settings = settings or McmcSettings()
    return [
        gibbs_fit(
            y,
            design,
            hp=hp,
            settings=settings,
            seed=seed,
            chain_index=c,
            backend=backend,
            standardize=standardize,
        )
        for c in range(settings.chains)
    ]


def map_estimate(draws: PosteriorDraws | np.ndarray, grid_size: int = 512) -> np.ndarray:
    """Per-coefficient posterior mode from the retained draws.

    The marginal density of each coefficient is smoothed with a
    Gaussian kernel (plug-in bandwidth) and the mode read off a grid
    spanning the draw range.
    """
    beta = draws.beta if isinstance(draws, PosteriorDraws) else np.asarray(draws, float)
    if beta.ndim == 1:
        beta = beta[:, None]
    S, L = beta.shape
    if S < 100:
        raise DataError("map_estimate needs at least 100 retained draws")
    modes = np.empty(L)
    for k in range(L):
        col = beta[:, k]
        lo, hi = float(col.min()), float(col.max())
        if hi == lo:
            modes[k] = lo
            continue
        bw = bandwidth_for(col, "silverman")
        bw = max(bw, (hi - lo) / grid_size)
        grid = np.linspace(lo, hi, grid_size)
        z = (grid[:, None] - col[None, :]) / bw
        dens = np.exp(-0.5 * z * z).sum(axis=1)
        modes[k] = grid[int(np.argmax(dens))]
    return modes


def psrf(chains: list[PosteriorDraws] | list[np.ndarray]) -> np.ndarray:
    """Potential scale reduction factor per coefficient.

    Compares between- and within-chain variance over chains of equal
    retained length; values near 1 indicate the chains agree.
    """
    if len(chains) < 2:
        raise DataError("psrf needs at least 2 chains")
    arrays = [c.beta if isinstance(c, PosteriorDraws) else np.asarray(c, float) for c in chains]
    S = arrays[0].shape[0]
    if any(a.shape != arrays[0].shape for a in arrays):
        raise DataError("psrf chains must share the same retained shape")
    stacked = np.stack(arrays)  # (m, S, L)
    m = stacked.shape[0]
    within = stacked.var(axis=1, ddof=1).mean(axis=0)
    chain_means = stacked.mean(axis=1)  # (m, L)
    between_over_s = chain_means.var(axis=0, ddof=1)
    v_hat = (S - 1) / S * within + (1.0 + 1.0 / m) * between_over_s
    out = np.empty(within.shape)
    both_zero = (within == 0) & (between_over_s == 0)
    out[both_zero] = 1.0
    nz = ~both_zero
    with np.errstate(divide="ignore"):
        out[nz] = np.sqrt(v_hat[nz] / within[nz])
    return out


# ---------------------------------------------------------------------------
# file formats


def write_draws_csv(path: str | Path, draws: PosteriorDraws, header_comment: str | None = None) -> None:
    """Retained iterations only: ``iter,beta_<col>...,sigma2,w,zeta_1..G``."""
    G = draws.zeta.shape[1]
    iters = draws.iteration_numbers()
    with open(path, "w", newline="") as fh:
        if header_comment:
            fh.write(f"# {header_comment}\n")
        fh.write(f"# beta0={draws.beta0!r} seed={draws.seed}\n")
        writer = csv.writer(fh)
        writer.writerow(
            ["iter"]
            + [f"beta_{c}" for c in draws.column_names]
            + ["sigma2", "w"]
            + [f"zeta_{g + 1}" for g in range(G)]
        )
        for s in range(draws.n_draws):
            writer.writerow(
                [int(iters[s])]
                + [repr(float(v)) for v in draws.beta[s]]
                + [repr(float(draws.sigma2[s])), repr(float(draws.w[s]))]
                + [repr(float(v)) for v in draws.zeta[s]]
            )


def read_draws_csv(path: str | Path) -> tuple[list[str], np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Returns (column_names, beta, sigma2, w, zeta) from a draws table."""
    with open(path, newline="") as fh:
        reader = csv.reader(row for row in fh if not row.startswith("#"))
        header = next(reader, None)
        if header is None or header[0] != "iter":
            raise DataError(f"{path}: not a draws table")
        beta_cols = [c for c in header if c.startswith("beta_")]
        zeta_cols = [c for c in header if c.startswith("zeta_")]
        L, G = len(beta_cols), len(zeta_cols)
        names = [c[len("beta_") :] for c in beta_cols]
        beta_rows, sig_rows, w_rows, zeta_rows = [], [], [], []
        for row in reader:
            vals = [float(v) for v in row[1:]]
            beta_rows.append(vals[:L])
            sig_rows.append(vals[L])
            w_rows.append(vals[L + 1])
            zeta_rows.append(vals[L + 2 : L + 2 + G])
    if not beta_rows:
        raise DataError(f"{path}: no retained draws")
    return (
        names,
        np.asarray(beta_rows),
        np.asarray(sig_rows),
        np.asarray(w_rows),
        np.asarray(zeta_rows),
    )
