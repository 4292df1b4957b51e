"""End-to-end pipeline: voxels -> densities -> PC scores -> pathway
scores -> per-pathway fit and FDR selection -> association matrix.

Every stage persists its artifact as CSV under the configured output
directory, each stamped with a hash of the configuration so artifacts
are self-describing. A failing stage aborts the run with the stage name
attached; artifacts written by earlier stages stay on disk.
"""

from __future__ import annotations

import csv
import hashlib
import logging
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from . import geometry, gsva, tangent_pca
from .errors import DataError, NumericalError
from .gss import (
    GroupedDesignMatrix,
    Hyperparameters,
    McmcSettings,
    ResponseVector,
    gibbs_fit,
    pathway_seed,
    write_draws_csv,
)
from .ingest import (
    DEFAULT_GRID_SIZE,
    DEFAULT_REGIONS,
    DEFAULT_SEQUENCES,
    DensityGrid,
    IntensitySample,
    kde,
    read_densities_csv,
    read_voxels_csv,
    rescale_sequence,
    summary_features,
    write_densities_csv,
)
from .selection import (
    SelectionReport,
    build_report,
    spearman_fit,
    write_fitplot_csv,
    write_selection_csv,
)

log = logging.getLogger(__name__)

BASELINE_CASES = ("a", "b", "c", "d", "e", "f", "g")


@dataclass
class PipelineConfig:
    """Flat configuration for the pipeline and its sweeps."""

    voxels_csv: str = ""
    densities_csv: str = ""
    expression_csv: str = ""
    genesets_gmt: str = ""
    out_dir: str = "out"
    cohort: str = ""  # optional file with one sample id per line
    sequences: tuple[str, ...] = ()
    regions: tuple[str, ...] = ()
    m: int = DEFAULT_GRID_SIZE
    bandwidth_rule: str = "silverman"
    variance_cutoff: float = 0.9999
    a1: float = 0.001
    a2: float = 0.001
    b1: float = 0.001
    b2: float = 0.001
    v0: float = 0.005
    iterations: int = 100_000
    burnin: int = 20_000
    thin: int = 125
    chains: int = 1
    seed: int = 0
    alpha: float = 0.05
    c: float = 0.001
    fdr_boundary: str = "strict_plus_zero"
    tau: float = 1.0
    score_variant: str = "diff"
    standardize: bool = False
    backend: str = "auto"

    def __post_init__(self):
        for name in ("m", "iterations", "thin", "chains"):
            if getattr(self, name) <= 0:
                raise DataError(f"config field {name} must be positive")
        for name in ("variance_cutoff", "alpha", "c", "v0", "tau"):
            if getattr(self, name) <= 0:
                raise DataError(f"config field {name} must be positive")
        for name in ("voxels_csv", "densities_csv", "expression_csv", "genesets_gmt", "cohort"):
            value = getattr(self, name)
            if value and not Path(value).exists():
                raise DataError(f"config file {name}={value!r} does not exist")

    def hyperparameters(self) -> Hyperparameters:
        return Hyperparameters(a1=self.a1, a2=self.a2, b1=self.b1, b2=self.b2, v0=self.v0)

    def mcmc_settings(self) -> McmcSettings:
        return McmcSettings(
            iterations=self.iterations, burnin=self.burnin, thin=self.thin, chains=self.chains
        )

    def config_hash(self) -> str:
        """Hash of the analysis-relevant configuration.

        ``out_dir`` and ``cohort`` are excluded: the former never
        affects artifact content, and the latter affects only the
        pathway-score stage, so imaging artifacts stay byte-identical
        across cohort-calibration reruns.
        """
        skip = {"out_dir", "cohort"}
        text = "\n".join(
            f"{k}={getattr(self, k)}" for k in sorted(vars(self)) if k not in skip
        )
        return hashlib.sha256(text.encode()).hexdigest()[:12]

    def stamp(self) -> str:
        return f"config_hash={self.config_hash()}"


_BOOL_KEYS = {"standardize"}
_INT_KEYS = {"m", "iterations", "burnin", "thin", "chains", "seed"}
_FLOAT_KEYS = {"variance_cutoff", "a1", "a2", "b1", "b2", "v0", "alpha", "c", "tau"}
_TUPLE_KEYS = {"sequences", "regions"}


def parse_config(path: str | Path, **overrides) -> PipelineConfig:
    """Read ``key = value`` lines (# comments allowed) into a config."""
    values: dict = {}
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise DataError(f"cannot read config file {path}: {exc}") from exc
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise DataError(f"{path}:{lineno}: expected 'key = value', got {raw!r}")
        key, _, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if key not in PipelineConfig.__dataclass_fields__:
            raise DataError(f"{path}:{lineno}: unknown config key {key!r}")
        if key in _INT_KEYS:
            values[key] = int(value)
        elif key in _FLOAT_KEYS:
            values[key] = float(value)
        elif key in _BOOL_KEYS:
            values[key] = value.lower() in ("1", "true", "yes")
        elif key in _TUPLE_KEYS:
            values[key] = tuple(v.strip() for v in value.split(",") if v.strip())
        else:
            values[key] = value
    values.update({k: v for k, v in overrides.items() if v is not None})
    return PipelineConfig(**values)


def _stage(name: str):
    """Decorator attaching the stage name to propagated errors."""

    def wrap(fn):
        def inner(*args, **kwargs):
            try:
                return fn(*args, **kwargs)
            except (DataError, NumericalError) as exc:
                raise type(exc)(f"stage {name}: {exc}") from exc

        inner.__name__ = fn.__name__
        return inner

    return wrap


def _ordered(found: set[str], preferred: tuple[str, ...]) -> list[str]:
    head = [s for s in preferred if s in found]
    tail = sorted(found - set(head))
    return head + tail


@dataclass
class Cohort:
    """Rescaled samples and densities for the subjects kept."""

    subjects: list[str]
    sequences: list[str]
    regions: list[str]
    samples: dict[tuple[str, str, str], IntensitySample]
    densities: dict[tuple[str, str, str], DensityGrid]
    dropped: list[str]


@_stage("densities")
def build_cohort(config: PipelineConfig) -> Cohort:
    """Rescale per sequence, estimate densities, drop incomplete subjects."""
    samples_by_key: dict[tuple[str, str, str], IntensitySample] = {}
    densities: dict[tuple[str, str, str], DensityGrid] = {}

    if config.voxels_csv:
        raw = read_voxels_csv(config.voxels_csv)
        sequences = _ordered(
            {s.sequence for s in raw}, config.sequences or DEFAULT_SEQUENCES
        )
        regions = _ordered({s.region for s in raw}, config.regions or DEFAULT_REGIONS)
        for sequence in sequences:
            seq_samples = [s for s in raw if s.sequence == sequence]
            for s in rescale_sequence(seq_samples):
                samples_by_key[(s.subject_id, s.sequence, s.region)] = s
    elif config.densities_csv:
        densities = read_densities_csv(config.densities_csv)
        sequences = _ordered(
            {k[1] for k in densities}, config.sequences or DEFAULT_SEQUENCES
        )
        regions = _ordered({k[2] for k in densities}, config.regions or DEFAULT_REGIONS)
    else:
        raise DataError("config needs voxels_csv or densities_csv")

    keys = samples_by_key or densities
    subjects = sorted({k[0] for k in keys})
    complete, dropped = [], []
    for subject in subjects:
        missing = [
            (seq, reg)
            for seq in sequences
            for reg in regions
            if (subject, seq, reg) not in keys
        ]
        (dropped if missing else complete).append(subject)
    if dropped:
        log.warning("dropped %d subjects lacking a region: %s", len(dropped), dropped)
    if not complete:
        raise DataError("no subject has all (sequence, region) samples")

    if samples_by_key:
        samples_by_key = {k: v for k, v in samples_by_key.items() if k[0] in set(complete)}
        for key, sample in samples_by_key.items():
            densities[key] = kde(
                sample, grid_size=config.m, bandwidth_rule=config.bandwidth_rule
            )
    else:
        densities = {k: v for k, v in densities.items() if k[0] in set(complete)}

    return Cohort(
        subjects=complete,
        sequences=list(sequences),
        regions=list(regions),
        samples=samples_by_key,
        densities=densities,
        dropped=dropped,
    )


@_stage("pca")
def cohort_pc_design(config: PipelineConfig, cohort: Cohort) -> GroupedDesignMatrix:
    """Tangent PCA per (sequence, region) group, assembled column-wise."""
    blocks, names, group_ids = [], [], []
    g = 0
    for sequence in cohort.sequences:
        for region in cohort.regions:
            g += 1
            srds = np.stack(
                [
                    geometry.srd_from_density(
                        cohort.densities[(subject, sequence, region)].values
                    )
                    for subject in cohort.subjects
                ]
            )
            _, scores = tangent_pca.fit_pca(
                srds,
                variance_cutoff=config.variance_cutoff,
                subject_ids=cohort.subjects,
                group=(sequence, region),
            )
            blocks.append(scores.matrix)
            names.extend(scores.column_names)
            group_ids.extend([g] * scores.matrix.shape[1])
    return GroupedDesignMatrix(
        X=np.hstack(blocks), groups=np.asarray(group_ids), column_names=names
    )


@_stage("gsva")
def cohort_pathway_scores(config: PipelineConfig) -> tuple[list[str], list[str], np.ndarray]:
    """Pathway scores for the configured expression cohort."""
    if not config.expression_csv or not config.genesets_gmt:
        raise DataError("config needs expression_csv and genesets_gmt")
    expr = gsva.read_expression_csv(config.expression_csv)
    if config.cohort:
        wanted = [
            line.strip()
            for line in Path(config.cohort).read_text().splitlines()
            if line.strip()
        ]
        missing = [s for s in wanted if s not in expr.samples]
        if missing:
            raise DataError(f"cohort samples missing from expression: {missing[:5]}")
        idx = [expr.samples.index(s) for s in wanted]
        expr = gsva.ExpressionMatrix(
            genes=expr.genes, samples=wanted, values=expr.values[:, idx]
        )
    sets = gsva.load_gmt(config.genesets_gmt, genes=expr.genes)
    names, scores = gsva.pathway_scores(
        expr, sets, tau=config.tau, variant=config.score_variant
    )
    return names, expr.samples, scores


def _fit_and_select(
    config: PipelineConfig,
    design: GroupedDesignMatrix,
    pathway: str,
    y: np.ndarray,
    out_dir: Path,
    stamp: str,
    write_draws: bool = True,
):
    draws = gibbs_fit(
        ResponseVector(values=y, pathway=pathway),
        design,
        hp=config.hyperparameters(),
        settings=config.mcmc_settings(),
        seed=pathway_seed(config.seed, pathway),
        backend=config.backend,
        standardize=config.standardize,
    )
    report = build_report(draws, alpha=config.alpha, c=config.c, boundary=config.fdr_boundary)
    slug = "".join(ch if ch.isalnum() else "_" for ch in pathway)
    if write_draws:
        write_draws_csv(out_dir / f"draws_{slug}.csv", draws, header_comment=stamp)
    write_selection_csv(out_dir / f"selection_{slug}.csv", report, header_comment=stamp)
    fitted = design.X @ report.beta_map + draws.beta0
    write_fitplot_csv(out_dir / f"fitplot_{slug}.csv", y, fitted, header_comment=stamp)
    rho, defined = spearman_fit(y, design.X, report.beta_map)
    return report, rho, defined


def _write_associations(
    path: Path,
    design: GroupedDesignMatrix,
    reports: dict[str, SelectionReport],
    stamp: str,
) -> int:
    """Matrix of post-selection estimates: rows are pathways with at
    least one selected coefficient, columns the PC columns selected for
    at least one such pathway."""
    retained = {name: r for name, r in reports.items() if r.n_selected > 0}
    col_mask = np.zeros(len(design.column_names), dtype=bool)
    for r in retained.values():
        col_mask |= r.selected
    cols = [c for c, keep in zip(design.column_names, col_mask) if keep]
    with open(path, "w", newline="") as fh:
        fh.write(f"# {stamp}\n")
        writer = csv.writer(fh)
        writer.writerow(["pathway"] + cols)
        for name, r in retained.items():
            writer.writerow([name] + [repr(float(v)) for v in r.beta_map[col_mask]])
    return len(retained)


def run_pipeline(config: PipelineConfig) -> dict:
    """All stages in order; returns a small summary of what was written."""
    out_dir = Path(config.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    stamp = config.stamp()

    cohort = build_cohort(config)
    if config.voxels_csv:
        write_densities_csv(out_dir / "densities.csv", cohort.densities, header_comment=stamp)

    design = cohort_pc_design(config, cohort)
    tangent_pca.write_pcscores_csv(
        out_dir / "pcscores.csv",
        cohort.subjects,
        design.column_names,
        design.X,
        header_comment=stamp,
    )
    tangent_pca.write_pcgroups_csv(
        out_dir / "pcgroups.csv",
        design.column_names,
        [int(g) for g in design.groups],
        header_comment=stamp,
    )

    names, score_samples, scores = cohort_pathway_scores(config)
    gsva.write_pathway_scores_csv(
        out_dir / "pathway_scores.csv", names, score_samples, scores, header_comment=stamp
    )

    common = [s for s in cohort.subjects if s in set(score_samples)]
    if len(common) < 2:
        raise DataError("stage fit: fewer than 2 subjects shared by imaging and expression")
    if len(common) < len(cohort.subjects):
        log.warning(
            "stage fit: %d imaging subjects lack expression and are dropped",
            len(cohort.subjects) - len(common),
        )
    row_idx = [cohort.subjects.index(s) for s in common]
    col_idx = [score_samples.index(s) for s in common]
    fit_design = GroupedDesignMatrix(
        X=design.X[row_idx],
        groups=design.groups.copy(),
        column_names=list(design.column_names),
    )

    reports, spearman_rows = {}, []
    try:
        for i, name in enumerate(names):
            y = scores[i, col_idx]
            report, rho, defined = _fit_and_select(
                config, fit_design, name, y, out_dir, stamp
            )
            reports[name] = report
            spearman_rows.append((name, rho, defined))
    except (DataError, NumericalError) as exc:
        raise type(exc)(f"stage fit: {exc}") from exc

    with open(out_dir / "spearman.csv", "w", newline="") as fh:
        fh.write(f"# {stamp}\n")
        writer = csv.writer(fh)
        writer.writerow(["pathway", "spearman_rho", "defined"])
        for name, rho, defined in spearman_rows:
            writer.writerow([name, repr(float(rho)), int(defined)])

    n_assoc = _write_associations(out_dir / "associations.csv", fit_design, reports, stamp)
    return {
        "subjects": len(common),
        "dropped": len(cohort.dropped),
        "columns": len(design.column_names),
        "pathways": len(names),
        "pathways_with_associations": n_assoc,
        "out_dir": str(out_dir),
    }


def baselines_run(config: PipelineConfig, cases: tuple[str, ...] = BASELINE_CASES) -> dict:
    """Rerun fit and selection with summary-statistic predictors.

    Each case swaps the PC-score design for per-(sequence, region)
    summary features of the rescaled voxel samples, grouped exactly like
    the PC columns. Summary columns mix scales, so the design is
    standardized before fitting.
    """
    for case in cases:
        if case not in BASELINE_CASES:
            raise DataError(f"unknown baseline case {case!r}")
    if not config.voxels_csv:
        raise DataError("baselines need voxels_csv (summary features use raw samples)")
    out_dir = Path(config.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    stamp = config.stamp()

    cohort = build_cohort(config)
    names, score_samples, scores = cohort_pathway_scores(config)
    common = [s for s in cohort.subjects if s in set(score_samples)]
    if len(common) < 2:
        raise DataError("fewer than 2 subjects shared by imaging and expression")
    col_idx = [score_samples.index(s) for s in common]

    summary_rows = []
    config_std = replace(config, standardize=True)
    for case in cases:
        blocks, col_names, group_ids = [], [], []
        g = 0
        for sequence in cohort.sequences:
            for region in cohort.regions:
                g += 1
                feats = np.stack(
                    [
                        summary_features(cohort.samples[(subject, sequence, region)], case)
                        for subject in common
                    ]
                )
                blocks.append(feats)
                col_names.extend(
                    f"{sequence}_{region}.{case}{j + 1}" for j in range(feats.shape[1])
                )
                group_ids.extend([g] * feats.shape[1])
        design = GroupedDesignMatrix(
            X=np.hstack(blocks), groups=np.asarray(group_ids), column_names=col_names
        )

        reports = {}
        for i, name in enumerate(names):
            y = scores[i, col_idx]
            report, rho, defined = _fit_and_select(
                config_std,
                design,
                f"{name}__case_{case}",
                y,
                out_dir,
                stamp,
                write_draws=False,
            )
            reports[name] = report
            summary_rows.append((name, case, rho, defined, report.n_selected))
        _write_associations(out_dir / f"associations_case_{case}.csv", design, reports, stamp)

    with open(out_dir / "spearman_baselines.csv", "w", newline="") as fh:
        fh.write(f"# {stamp}\n")
        writer = csv.writer(fh)
        writer.writerow(["pathway", "case", "spearman_rho", "defined", "n_selected"])
        for row in summary_rows:
            writer.writerow([row[0], row[1], repr(float(row[2])), int(row[3]), row[4]])
    return {"cases": list(cases), "pathways": len(names), "out_dir": str(out_dir)}
