"""Command-line interface.

Subcommands mirror the pipeline stages (densities, pca, gsva, fit,
select), plus end-to-end `pipeline`, the synthetic `simulate` study,
`diagnose` for convergence and sensitivity sweeps, and `baselines` for
the summary-statistic comparison. Stage commands read earlier artifacts
from the output directory.

Exit codes: 0 success, 1 usage, 2 data error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from . import gsva, tangent_pca
from .errors import DataError, NumericalError
from .gss import (
    GroupedDesignMatrix,
    ResponseVector,
    fit_chains,
    gibbs_fit,
    map_estimate,
    pathway_seed,
    psrf,
    read_draws_csv,
    write_draws_csv,
)
from .pipeline import (
    BASELINE_CASES,
    PipelineConfig,
    baselines_run,
    build_cohort,
    cohort_pathway_scores,
    cohort_pc_design,
    parse_config,
    run_pipeline,
)
from .selection import (
    SelectionReport,
    fdr_threshold,
    local_fdr,
    write_selection_csv,
)
from .simulate import (
    DEFAULT_SNR_GRID,
    DEFAULT_V0_GRID,
    SimScenario,
    recovery_study,
    sensitivity_bandwidth,
    sensitivity_v0,
    write_recovery_csv,
    write_sensitivity_csv,
)
from .ingest import write_densities_csv


class _Parser(argparse.ArgumentParser):
    """argparse exits 2 on usage errors; remap to 1 per our contract."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _add_common(p: argparse.ArgumentParser, config_required: bool = True) -> None:
    p.add_argument("--config", required=config_required, help="key = value config file")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out-dir", default=None)
    p.add_argument("--alpha", type=float, default=None)
    p.add_argument("--v0", type=float, default=None)
    p.add_argument("--chains", type=int, default=None)
    p.add_argument("--cohort", default=None, help="file with one sample id per line")


def _config_from(args) -> PipelineConfig:
    overrides = {
        "seed": args.seed,
        "out_dir": args.out_dir,
        "alpha": args.alpha,
        "v0": args.v0,
        "chains": args.chains,
        "cohort": args.cohort,
    }
    if args.config:
        return parse_config(args.config, **overrides)
    return PipelineConfig(**{k: v for k, v in overrides.items() if v is not None})


def _load_fit_inputs(config: PipelineConfig):
    """Design and responses from the pcscores / pcgroups / pathway_scores
    artifacts in the output directory."""
    out_dir = Path(config.out_dir)
    subjects, columns, X = tangent_pca.read_pcscores_csv(out_dir / "pcscores.csv")
    group_of = tangent_pca.read_pcgroups_csv(out_dir / "pcgroups.csv")
    try:
        groups = np.asarray([group_of[c] for c in columns])
    except KeyError as exc:
        raise DataError(f"pcgroups.csv missing column {exc}") from exc
    names, score_samples, scores = gsva.read_pathway_scores_csv(out_dir / "pathway_scores.csv")
    common = [s for s in subjects if s in set(score_samples)]
    if len(common) < 2:
        raise DataError("fewer than 2 subjects shared by pcscores and pathway scores")
    design = GroupedDesignMatrix(
        X=X[[subjects.index(s) for s in common]],
        groups=groups,
        column_names=columns,
    )
    Y = scores[:, [score_samples.index(s) for s in common]]
    return design, names, Y


def _slug(name: str) -> str:
    return "".join(ch if ch.isalnum() else "_" for ch in name)


def cmd_densities(args) -> int:
    config = _config_from(args)
    out_dir = Path(config.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    cohort = build_cohort(config)
    write_densities_csv(out_dir / "densities.csv", cohort.densities, header_comment=config.stamp())
    print(f"densities: {len(cohort.densities)} rows, {len(cohort.dropped)} subjects dropped")
    return 0


def cmd_pca(args) -> int:
    config = _config_from(args)
    out_dir = Path(config.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    cohort = build_cohort(config)
    design = cohort_pc_design(config, cohort)
    tangent_pca.write_pcscores_csv(
        out_dir / "pcscores.csv", cohort.subjects, design.column_names, design.X,
        header_comment=config.stamp(),
    )
    tangent_pca.write_pcgroups_csv(
        out_dir / "pcgroups.csv", design.column_names, [int(g) for g in design.groups],
        header_comment=config.stamp(),
    )
    print(f"pca: {design.X.shape[1]} columns over {design.n_groups} groups")
    return 0


def cmd_gsva(args) -> int:
    config = _config_from(args)
    out_dir = Path(config.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    names, samples, scores = cohort_pathway_scores(config)
    gsva.write_pathway_scores_csv(
        out_dir / "pathway_scores.csv", names, samples, scores, header_comment=config.stamp()
    )
    print(f"gsva: {len(names)} pathways x {len(samples)} samples")
    return 0


def cmd_fit(args) -> int:
    config = _config_from(args)
    out_dir = Path(config.out_dir)
    design, names, Y = _load_fit_inputs(config)
    for i, name in enumerate(names):
        draws = gibbs_fit(
            ResponseVector(values=Y[i], pathway=name),
            design,
            hp=config.hyperparameters(),
            settings=config.mcmc_settings(),
            seed=pathway_seed(config.seed, name),
            backend=config.backend,
            standardize=config.standardize,
        )
        write_draws_csv(out_dir / f"draws_{_slug(name)}.csv", draws, header_comment=config.stamp())
    print(f"fit: {len(names)} pathways, {design.X.shape[1]} coefficients")
    return 0


def cmd_select(args) -> int:
    config = _config_from(args)
    out_dir = Path(config.out_dir)
    draws_files = sorted(out_dir.glob("draws_*.csv"))
    if not draws_files:
        raise DataError(f"no draws_*.csv under {out_dir}")
    group_of = tangent_pca.read_pcgroups_csv(out_dir / "pcgroups.csv")
    for path in draws_files:
        names, beta, _, _, _ = read_draws_csv(path)
        p = local_fdr(beta, c=config.c)
        phi, selected = fdr_threshold(p, alpha=config.alpha)
        modes = map_estimate(beta)
        report = SelectionReport(
            column_names=names,
            groups=np.asarray([group_of.get(c, 0) for c in names]),
            p=p,
            beta_map=np.where(selected, modes, 0.0),
            selected=selected,
            phi_alpha=phi,
            alpha=config.alpha,
            c=config.c,
        )
        out = out_dir / path.name.replace("draws_", "selection_")
        write_selection_csv(out, report, header_comment=config.stamp())
    print(f"select: {len(draws_files)} pathways")
    return 0


def cmd_pipeline(args) -> int:
    config = _config_from(args)
    summary = run_pipeline(config)
    print(
        "pipeline: {subjects} subjects ({dropped} dropped), {columns} PC columns, "
        "{pathways} pathways, {pathways_with_associations} with associations -> {out_dir}".format(
            **summary
        )
    )
    return 0


def cmd_simulate(args) -> int:
    config = _config_from(args) if args.config else None
    scenario = SimScenario(
        snr_grid=tuple(float(v) for v in args.snr.split(",")) if args.snr else DEFAULT_SNR_GRID,
        replications=args.replications,
        seed=args.seed if args.seed is not None else (config.seed if config else 0),
        backend=config.backend if config else "auto",
    )
    table = recovery_study(scenario)
    out_dir = Path(args.out_dir or (config.out_dir if config else "out"))
    out_dir.mkdir(parents=True, exist_ok=True)
    write_recovery_csv(
        out_dir / "recovery.csv",
        table,
        header_comment=f"seed={scenario.seed} replications={scenario.replications}",
    )
    for snr in sorted(table, reverse=True):
        print(f"snr {snr:>6}: recovery {table[snr]:.2f}")
    return 0


def cmd_diagnose(args) -> int:
    config = _config_from(args)
    out_dir = Path(config.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    ran_anything = False

    if args.psrf:
        ran_anything = True
        if config.chains < 2:
            raise DataError("psrf diagnostics need chains >= 2 (use --chains)")
        design, names, Y = _load_fit_inputs(config)
        rows = []
        for i, name in enumerate(names):
            chains = fit_chains(
                ResponseVector(values=Y[i], pathway=name),
                design,
                hp=config.hyperparameters(),
                settings=config.mcmc_settings(),
                seed=pathway_seed(config.seed, name),
                backend=config.backend,
                standardize=config.standardize,
            )
            values = psrf(chains)
            rows.extend(
                {"pathway": name, "column": col, "psrf": float(v)}
                for col, v in zip(design.column_names, values)
            )
        write_sensitivity_csv(out_dir / "psrf.csv", rows, header_comment=config.stamp())
        worst = max(r["psrf"] for r in rows)
        print(f"diagnose psrf: {len(rows)} coefficients, max {worst:.3f}")

    if args.v0_grid:
        ran_anything = True
        grid = tuple(float(v) for v in args.v0_grid.split(","))
        design, names, Y = _load_fit_inputs(config)
        rows = sensitivity_v0(
            design,
            {name: Y[i] for i, name in enumerate(names)},
            v0_grid=grid,
            hp=config.hyperparameters(),
            settings=config.mcmc_settings(),
            seed=config.seed,
            alpha=config.alpha,
            c=config.c,
            backend=config.backend,
        )
        write_sensitivity_csv(out_dir / "sensitivity_v0.csv", rows, header_comment=config.stamp())
        print(f"diagnose v0: {len(rows)} pathways over grid {grid}")

    if args.bandwidth_rules:
        ran_anything = True
        rules = tuple(r.strip() for r in args.bandwidth_rules.split(","))
        cohort = build_cohort(config)
        if not cohort.samples:
            raise DataError("bandwidth sensitivity needs voxels_csv input")
        rows = sensitivity_bandwidth(
            list(cohort.samples.values()), rules=rules, grid_size=config.m
        )
        write_sensitivity_csv(
            out_dir / "sensitivity_bandwidth.csv", rows, header_comment=config.stamp()
        )
        print(f"diagnose bandwidth: {len(rows)} (sequence, region, rule) rows")

    if not ran_anything:
        raise DataError("diagnose: pass --psrf, --v0-grid and/or --bandwidth-rules")
    return 0


def cmd_baselines(args) -> int:
    config = _config_from(args)
    cases = BASELINE_CASES if args.case == "all" else tuple(args.case.split(","))
    summary = baselines_run(config, cases=cases)
    print(f"baselines: cases {','.join(summary['cases'])} -> {summary['out_dir']}")
    return 0


def build_parser() -> _Parser:
    parser = _Parser(prog="densreg", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    for name, fn, needs_config in [
        ("densities", cmd_densities, True),
        ("pca", cmd_pca, True),
        ("gsva", cmd_gsva, True),
        ("fit", cmd_fit, True),
        ("select", cmd_select, True),
        ("pipeline", cmd_pipeline, True),
        ("baselines", cmd_baselines, True),
    ]:
        p = sub.add_parser(name)
        _add_common(p, config_required=needs_config)
        p.set_defaults(fn=fn)
        if name == "baselines":
            p.add_argument("--case", default="all", help="comma list of a..g, or 'all'")

    p = sub.add_parser("simulate")
    _add_common(p, config_required=False)
    p.add_argument("--snr", default=None, help="comma list of signal-to-noise ratios")
    p.add_argument("--replications", type=int, default=50)
    p.set_defaults(fn=cmd_simulate)

    p = sub.add_parser("diagnose")
    _add_common(p, config_required=True)
    p.add_argument("--psrf", action="store_true", help="multi-chain scale reduction factors")
    p.add_argument("--v0-grid", default=None, help=f"comma list, e.g. {','.join(map(str, DEFAULT_V0_GRID))}")
    p.add_argument("--bandwidth-rules", default=None, help="comma list, e.g. silverman,scott")
    p.set_defaults(fn=cmd_diagnose)

    return parser


def main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.fn(args)
    except SystemExit as exc:  # argparse usage errors and --help
        return int(exc.code or 0)
    except DataError as exc:
        print(f"densreg: data error: {exc}", file=sys.stderr)
        return 2
    except NumericalError as exc:
        print(f"densreg: numerical failure: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
