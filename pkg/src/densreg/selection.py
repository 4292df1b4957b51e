"""False-discovery-rate variable selection on posterior draws.

For each coefficient the share of retained draws inside [-c, c] acts as
a local false discovery rate; sorting those shares and growing the
longest prefix whose running mean stays below alpha yields the
selection threshold. Selected coefficients keep their posterior-mode
estimate, everything else is reported as zero.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import stats as sstats

from .errors import DataError
from .gss import PosteriorDraws, map_estimate


def local_fdr(draws: PosteriorDraws | np.ndarray, c: float = 0.001) -> np.ndarray:
    """Per-coefficient share of draws with |beta| <= c."""
    if c <= 0:
        raise DataError("threshold c must be positive")
    beta = draws.beta if isinstance(draws, PosteriorDraws) else np.asarray(draws, float)
    if beta.ndim == 1:
        beta = beta[:, None]
    if beta.shape[0] < 1:
        raise DataError("need at least one draw")
    return (np.abs(beta) <= c).mean(axis=0)


BOUNDARY_RULES = ("strict_plus_zero", "strict", "prefix")


def fdr_threshold(
    p: np.ndarray, alpha: float = 0.05, boundary: str = "strict_plus_zero"
) -> tuple[float, np.ndarray]:
    """Selection threshold controlling the average FDR at ``alpha``.

    Sorting p ascending (stable, so ties keep column order), the cut
    index u is the largest prefix whose running mean stays <= alpha and
    the threshold is phi = p_(u). The boundary rules differ in how
    coefficients exactly at the threshold are treated:

    - ``strict_plus_zero`` (default): select {p < phi}, and always keep
      coefficients with p exactly 0. A pure strict comparison degenerates
      when the qualifying prefix is all zeros (phi = 0 would then select
      nothing, discarding the surest discoveries); zero-p coefficients
      can never raise the average selected FDR, so they are kept.
    - ``strict``: select {p < phi} with no exception.
    - ``prefix``: select the sorted prefix 1..u, so the average selected
      p is <= alpha by construction; ties at the threshold inside the
      prefix are kept.

    When even the smallest p exceeds alpha, the selection is empty with
    threshold 0 under every rule.
    """
    p = np.asarray(p, dtype=np.float64).ravel()
    if p.size == 0:
        raise DataError("empty p-value list")
    if not 0.0 < alpha < 1.0:
        raise DataError("alpha must lie in (0, 1)")
    if boundary not in BOUNDARY_RULES:
        raise DataError(f"unknown boundary rule {boundary!r}")
    order = np.argsort(p, kind="stable")
    sorted_p = p[order]
    prefix_means = np.cumsum(sorted_p) / np.arange(1, p.size + 1)
    ok = np.nonzero(prefix_means <= alpha)[0]
    if ok.size == 0:
        return 0.0, np.zeros(p.size, dtype=bool)
    u = int(ok[-1]) + 1
    phi = float(sorted_p[u - 1])
    if boundary == "prefix":
        selected = np.zeros(p.size, dtype=bool)
        selected[order[:u]] = True
    elif boundary == "strict":
        selected = p < phi
    else:
        selected = (p < phi) | (p == 0.0)
    return phi, selected


def spearman_fit(
    y: np.ndarray, X: np.ndarray, beta_hat: np.ndarray
) -> tuple[float, bool]:
    """Spearman rank correlation between observed y and fitted X @ beta.

    Returns (rho, defined); an all-constant fitted vector has no rank
    ordering, which is reported as rho 0 with defined False.
    """
    y = np.asarray(y, dtype=np.float64).ravel()
    fitted = np.asarray(X, dtype=np.float64) @ np.asarray(beta_hat, dtype=np.float64)
    if fitted.size != y.size:
        raise DataError("length mismatch between observed and fitted")
    if np.ptp(fitted) == 0.0 or np.ptp(y) == 0.0:
        return 0.0, False
    rho = sstats.spearmanr(y, fitted).statistic
    if np.isnan(rho):
        return 0.0, False
    return float(rho), True


@dataclass
class SelectionReport:
    """Per-coefficient FDR quantities and post-selection estimates."""

    column_names: list[str]
    groups: np.ndarray
    p: np.ndarray
    beta_map: np.ndarray  # posterior modes, zeroed where not selected
    selected: np.ndarray
    phi_alpha: float
    alpha: float
    c: float
    pathway: str = ""

    @property
    def n_selected(self) -> int:
        return int(self.selected.sum())


def build_report(
    draws: PosteriorDraws,
    alpha: float = 0.05,
    c: float = 0.001,
    boundary: str = "strict_plus_zero",
) -> SelectionReport:
    """Local FDR, threshold and post-selection modes for one fit."""
    p = local_fdr(draws, c=c)
    phi, selected = fdr_threshold(p, alpha=alpha, boundary=boundary)
    modes = map_estimate(draws)
    return SelectionReport(
        column_names=list(draws.column_names),
        groups=np.asarray(draws.groups),
        p=p,
        beta_map=np.where(selected, modes, 0.0),
        selected=selected,
        phi_alpha=phi,
        alpha=alpha,
        c=c,
        pathway=draws.pathway,
    )


# ---------------------------------------------------------------------------
# file formats


def write_selection_csv(
    path: str | Path, report: SelectionReport, header_comment: str | None = None
) -> None:
    with open(path, "w", newline="") as fh:
        if header_comment:
            fh.write(f"# {header_comment}\n")
        writer = csv.writer(fh)
        writer.writerow(
            ["column", "group", "p_gk", "beta_map", "selected", "phi_alpha", "alpha", "c"]
        )
        for k, name in enumerate(report.column_names):
            writer.writerow(
                [
                    name,
                    int(report.groups[k]),
                    repr(float(report.p[k])),
                    repr(float(report.beta_map[k])),
                    int(report.selected[k]),
                    repr(float(report.phi_alpha)),
                    repr(float(report.alpha)),
                    repr(float(report.c)),
                ]
            )


def read_selection_csv(path: str | Path) -> SelectionReport:
    with open(path, newline="") as fh:
        reader = csv.reader(row for row in fh if not row.startswith("#"))
        header = next(reader, None)
        if header is None or header[0] != "column":
            raise DataError(f"{path}: not a selection table")
        names, groups, p, beta, sel = [], [], [], [], []
        phi = alpha = c = 0.0
        for row in reader:
            names.append(row[0])
            groups.append(int(row[1]))
            p.append(float(row[2]))
            beta.append(float(row[3]))
            sel.append(bool(int(row[4])))
            phi, alpha, c = float(row[5]), float(row[6]), float(row[7])
    if not names:
        raise DataError(f"{path}: empty selection table")
    return SelectionReport(
        column_names=names,
        groups=np.asarray(groups),
        p=np.asarray(p),
        beta_map=np.asarray(beta),
        selected=np.asarray(sel, dtype=bool),
        phi_alpha=phi,
        alpha=alpha,
        c=c,
    )


def write_fitplot_csv(
    path: str | Path,
    observed: np.ndarray,
    fitted: np.ndarray,
    header_comment: str | None = None,
) -> None:
    observed = np.asarray(observed, float).ravel()
    fitted = np.asarray(fitted, float).ravel()
    if observed.size != fitted.size:
        raise DataError("observed/fitted length mismatch")
    with open(path, "w", newline="") as fh:
        if header_comment:
            fh.write(f"# {header_comment}\n")
        writer = csv.writer(fh)
        writer.writerow(["observed", "fitted"])
        for o, f in zip(observed, fitted):
            writer.writerow([repr(float(o)), repr(float(f))])
