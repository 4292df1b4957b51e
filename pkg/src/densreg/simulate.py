"""Synthetic-data studies: signal recovery across noise levels and
sensitivity sweeps over the spike scale and the KDE bandwidth rule.

The recovery study plants a grouped signal (a dense first group, a
1-sparse second group, an empty third group) in a standardized Gaussian
design, then measures how often the fit-plus-selection pipeline finds
both signal groups as the signal-to-noise ratio decays.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from itertools import groupby
from pathlib import Path

import numpy as np

from . import geometry, tangent_pca
from .errors import DataError
from .gss import (
    GroupedDesignMatrix,
    Hyperparameters,
    McmcSettings,
    ResponseVector,
    gibbs_fit,
    pathway_seed,
)
from .ingest import IntensitySample, kde
from .selection import build_report

DEFAULT_SNR_GRID = (10.0, 1.5, 1.0, 0.8, 0.6, 0.4, 0.25)
DEFAULT_V0_GRID = (0.0001, 0.0005, 0.001, 0.005, 0.01, 0.05, 0.1)


@dataclass
class SimScenario:
    """Recovery-study configuration.

    The design stands in for per-region PC scores of a real cohort,
    which are unavailable here; two substitutes are provided. The
    default, ``design="pc"``, computes tangent-PCA scores of a synthetic
    density cohort whose regions share subject-level latents, giving the
    cross-region collinearity a real cohort exhibits (``region_jitter``
    sets how strongly regions decouple). ``design="gauss"`` is a plain
    iid standard-normal matrix, which is nearly orthogonal and therefore
    recovers planted signals more easily at low SNR. Columns are
    standardized either way.

    ``response_scale`` rescales the simulated response to a fixed
    standard deviation before fitting. The selection thresholds are
    calibrated for enrichment-score-scale responses (spreads of roughly
    0.1 to 0.5); leaving the response at its raw simulated scale, which
    grows with 1/snr, would put the sampler in a regime where the spike
    is wide relative to the local-FDR threshold and selection saturates.
    Set it to None to disable the rescaling.

    Replications redraw the coefficient vector and the noise by
    default, so the recovery proportions average over coefficient
    realizations; clearing ``beta_per_replication`` instead fixes one
    coefficient draw per scenario and varies only the noise.

    The default chain settings are the reduced 20000/4000/25 schedule,
    which retains the same number of draws as the full 100000/20000/125
    schedule; their agreement is checked on a small reference problem in
    the test suite.
    """

    group_sizes: tuple[int, ...] = (9, 7, 12)
    snr_grid: tuple[float, ...] = DEFAULT_SNR_GRID
    replications: int = 50
    n: int = 61
    theta: float = 1.0
    seed: int = 0
    design: str = "pc"
    region_jitter: float = 0.4
    response_scale: float | None = 0.3
    beta_per_replication: bool = True
    settings: McmcSettings = field(default_factory=lambda: McmcSettings(20_000, 4_000, 25))
    hp: Hyperparameters = field(default_factory=Hyperparameters)
    alpha: float = 0.05
    c: float = 0.001
    boundary: str = "strict_plus_zero"
    backend: str = "auto"

    def __post_init__(self):
        if self.replications < 1:
            raise DataError("replications must be >= 1")
        if any(s <= 0 for s in self.snr_grid):
            raise DataError("SNR values must be positive")
        if len(self.group_sizes) < 2 or any(g < 1 for g in self.group_sizes):
            raise DataError("need at least two non-empty groups")
        if self.design not in ("pc", "gauss"):
            raise DataError(f"unknown design kind {self.design!r}")


def synthetic_cohort_design(
    seed: int,
    group_sizes: tuple[int, ...] = (9, 7, 12),
    n: int = 61,
    grid_size: int = 256,
    region_jitter: float = 0.4,
) -> GroupedDesignMatrix:
    """Standardized tangent-PCA scores of a synthetic density cohort.

    Each subject gets one density per region, all driven by shared
    subject-level location/scale/shape latents plus region-specific
    perturbations of size ``region_jitter``; smaller jitter means the
    regions' PC scores are more collinear across groups.
    """
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence([int(seed), 29])))
    x = np.linspace(0.0, 1.0, grid_size)
    w = geometry.trapezoid_weights(grid_size)
    loc = rng.uniform(0.25, 0.75, size=n)
    scale = rng.uniform(0.04, 0.18, size=n)
    mix = rng.uniform(0.0, 0.5, size=n)
    loc2 = rng.uniform(0.1, 0.9, size=n)

    region_params = [(0.0, 1.0), (0.06, 1.25), (-0.05, 0.8)]
    blocks, group_ids = [], []
    for r, size in enumerate(group_sizes):
        dloc, dscale = region_params[r % len(region_params)]
        srds = []
        for i in range(n):
            l1 = np.clip(loc[i] + dloc + region_jitter * rng.standard_normal(), 0.05, 0.95)
            s1 = scale[i] * dscale * np.exp(2.0 * region_jitter * rng.standard_normal())
            l2 = np.clip(loc2[i] + region_jitter * rng.standard_normal(), 0.05, 0.95)
            f = (1.0 - mix[i]) * np.exp(-0.5 * ((x - l1) / s1) ** 2) / s1
            f += mix[i] * np.exp(-0.5 * ((x - l2) / (1.6 * s1)) ** 2) / (1.6 * s1)
            f /= w @ f
            srds.append(geometry.srd_from_density(f, w))
        _, scores = tangent_pca.fit_pca(np.stack(srds), variance_cutoff=1.0)
        if scores.matrix.shape[1] < size:
            raise DataError(f"synthetic cohort yields fewer than {size} components")
        blocks.append(scores.matrix[:, :size])
        group_ids.extend([r + 1] * size)
    design = GroupedDesignMatrix(X=np.hstack(blocks), groups=np.asarray(group_ids))
    return design.standardized()


def _design_for(scenario: SimScenario) -> GroupedDesignMatrix:
    """Study design, fixed across replications (derived from the
    scenario seed, not the replication seed)."""
    if scenario.design == "pc":
        return synthetic_cohort_design(
            scenario.seed,
            group_sizes=scenario.group_sizes,
            n=scenario.n,
            region_jitter=scenario.region_jitter,
        )
    L = int(sum(scenario.group_sizes))
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence([scenario.seed, 13])))
    X = rng.standard_normal((scenario.n, L))
    groups = np.concatenate(
        [np.full(sz, g + 1, dtype=np.intp) for g, sz in enumerate(scenario.group_sizes)]
    )
    return GroupedDesignMatrix(X=X, groups=groups).standardized()


def _beta_for(scenario: SimScenario, rng: np.random.Generator) -> np.ndarray:
    sizes = scenario.group_sizes
    beta = np.zeros(int(sum(sizes)))
    beta[: sizes[0]] = rng.laplace(scale=scenario.theta, size=sizes[0])
    beta[sizes[0]] = 1.0
    return beta


def simulate_group_data(
    scenario: SimScenario, snr: float, rep_seed: int
) -> tuple[GroupedDesignMatrix, np.ndarray, np.ndarray]:
    """One replication: (standardized design, response, true coefficients).

    The first group's coefficients are double-exponential draws with
    scale theta, the second group is 1-sparse with unit coefficient,
    later groups are zero; the response adds N(0, sigma^2) noise with
    sigma = theta / snr and is then rescaled to ``response_scale``.
    """
    if snr <= 0:
        raise DataError("snr must be positive")
    design = _design_for(scenario)
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence([int(rep_seed)])))
    if scenario.beta_per_replication:
        beta = _beta_for(scenario, rng)
    else:
        beta_rng = np.random.Generator(
            np.random.PCG64(np.random.SeedSequence([scenario.seed, 7]))
        )
        beta = _beta_for(scenario, beta_rng)
    sigma = scenario.theta / snr
    y = design.X @ beta + sigma * rng.standard_normal(scenario.n)
    if scenario.response_scale is not None:
        y = (y - y.mean()) / y.std(ddof=0) * scenario.response_scale
    return design, y, beta


def _replication_success(scenario: SimScenario, snr: float, rep: int) -> bool:
    rep_seed = scenario.seed ^ rep
    design, y, _ = simulate_group_data(scenario, snr, rep_seed)
    draws = gibbs_fit(
        y,
        design,
        hp=scenario.hp,
        settings=scenario.settings,
        seed=rep_seed,
        backend=scenario.backend,
    )
    report = build_report(draws, alpha=scenario.alpha, c=scenario.c, boundary=scenario.boundary)
    group1 = report.selected[np.asarray(design.groups) == 1]
    beta21 = report.selected[scenario.group_sizes[0]]
    return bool(group1.any() and beta21)


def recovery_study(scenario: SimScenario, progress=None) -> dict[float, float]:
    """Proportion of replications recovering both signal groups, per SNR.

    Success means at least one first-group coefficient is selected and
    the planted second-group coefficient is selected.
    """
    out: dict[float, float] = {}
    for snr in scenario.snr_grid:
        hits = 0
        for rep in range(scenario.replications):
            hits += _replication_success(scenario, snr, rep)
            if progress is not None:
                progress(snr, rep)
        out[snr] = hits / scenario.replications
    return out


def write_recovery_csv(path: str | Path, table: dict[float, float], header_comment: str | None = None) -> None:
    with open(path, "w", newline="") as fh:
        if header_comment:
            fh.write(f"# {header_comment}\n")
        writer = csv.writer(fh)
        writer.writerow(["snr", "proportion"])
        for snr in sorted(table, reverse=True):
            writer.writerow([repr(float(snr)), repr(float(table[snr]))])


# ---------------------------------------------------------------------------
# sensitivity sweeps


def sensitivity_v0(
    design: GroupedDesignMatrix,
    responses: dict[str, np.ndarray],
    v0_grid: tuple[float, ...] = DEFAULT_V0_GRID,
    hp: Hyperparameters | None = None,
    settings: McmcSettings | None = None,
    seed: int = 0,
    alpha: float = 0.05,
    c: float = 0.001,
    boundary: str = "strict_plus_zero",
    backend: str = "auto",
) -> list[dict]:
    """Stability of post-selection estimates across spike scales.

    For every response the model refits at each v0 in the grid with the
    same seed; per coefficient the standard deviation of the estimates
    across the grid is summarized by its mean and max over coefficients.
    """
    if len(v0_grid) < 2:
        raise DataError("v0 sensitivity needs at least 2 grid values")
    hp = hp or Hyperparameters()
    settings = settings or McmcSettings()
    rows = []
    for name, y in responses.items():
        estimates = []
        for v0 in v0_grid:
            hp_v = Hyperparameters(a1=hp.a1, a2=hp.a2, b1=hp.b1, b2=hp.b2, v0=v0)
            draws = gibbs_fit(
                ResponseVector(values=y, pathway=name),
                design,
                hp=hp_v,
                settings=settings,
                seed=pathway_seed(seed, name),
                backend=backend,
            )
            estimates.append(build_report(draws, alpha=alpha, c=c, boundary=boundary).beta_map)
        spread = np.std(np.stack(estimates), axis=0, ddof=1)
        rows.append(
            {"pathway": name, "mean_sd": float(spread.mean()), "max_sd": float(spread.max())}
        )
    return rows


def sensitivity_bandwidth(
    samples: list[IntensitySample],
    rules: tuple[str, ...] = ("silverman", "scott"),
    grid_size: int = 512,
) -> list[dict]:
    """Geodesic distance between density estimates under different
    bandwidth rules, aggregated per (sequence, region).

    Every rule is compared against the first; rows report the mean and
    sd of the per-subject distances, all bounded by pi/2.
    """
    if len(rules) < 2:
        raise DataError("bandwidth sensitivity needs at least 2 rules")
    weights = geometry.trapezoid_weights(grid_size)

    def srd(sample: IntensitySample, rule: str) -> np.ndarray:
        return geometry.srd_from_density(
            kde(sample, grid_size=grid_size, bandwidth_rule=rule).values, weights
        )

    keyed = sorted(samples, key=lambda s: (s.sequence, s.region, s.subject_id))
    rows = []
    for (sequence, region), block in groupby(keyed, key=lambda s: (s.sequence, s.region)):
        block = list(block)
        base = {s.subject_id: srd(s, rules[0]) for s in block}
        for rule in rules[1:]:
            dists = [
                geometry.geodesic_distance(base[s.subject_id], srd(s, rule), weights)
                for s in block
            ]
            rows.append(
                {
                    "sequence": sequence,
                    "region": region,
                    "rule_a": rules[0],
                    "rule_b": rule,
                    "mean": float(np.mean(dists)),
                    "sd": float(np.std(dists, ddof=1)) if len(dists) > 1 else 0.0,
                }
            )
    return rows


def write_sensitivity_csv(path: str | Path, rows: list[dict], header_comment: str | None = None) -> None:
    if not rows:
        raise DataError("no sensitivity rows to write")
    fieldnames = list(rows[0].keys())
    with open(path, "w", newline="") as fh:
        if header_comment:
            fh.write(f"# {header_comment}\n")
        writer = csv.DictWriter(fh, fieldnames=fieldnames)
        writer.writeheader()
        for row in rows:
            writer.writerow(row)
