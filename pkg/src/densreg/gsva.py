"""Gene-set enrichment scores from a rank-based random walk.

For every gene a kernel estimate of its expression CDF places each
sample on a common scale; samples then rank genes, ranks are folded
around the center (so both extremes carry large weight), and a
KS-like walk over the ranked gene list turns each gene set into one
enrichment score per sample.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.special import ndtr

from .errors import DataError

log = logging.getLogger(__name__)

SCORE_VARIANTS = ("diff", "max_dev")


@dataclass
class ExpressionMatrix:
    """(p, n) matrix of log-scale expression values."""

    genes: list[str]
    samples: list[str]
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        p, n = len(self.genes), len(self.samples)
        if self.values.shape != (p, n):
            raise DataError(f"expression shape {self.values.shape} != ({p}, {n})")
        if p < 2 or n < 1:
            raise DataError("need at least 2 genes and 1 sample")
        if len(set(self.genes)) != p:
            raise DataError("gene ids must be unique")
        if not np.all(np.isfinite(self.values)):
            raise DataError("expression contains non-finite values")


@dataclass
class GeneSetCollection:
    """Named gene sets, restricted to genes present in the expression."""

    sets: dict[str, list[str]]

    def validate_against(self, genes: list[str]) -> None:
        universe = set(genes)
        for name, members in self.sets.items():
            members = [g for g in members if g in universe]
            if not members:
                raise DataError(f"gene set {name!r} is empty after intersection")
            if len(members) >= len(universe):
                raise DataError(f"gene set {name!r} spans all genes")


def expression_cdf_stats(
    expr: ExpressionMatrix | np.ndarray,
    bandwidths: np.ndarray | None = None,
) -> np.ndarray:
    """Gaussian-kernel CDF estimate of each expression value within its
    gene's cross-sample distribution.

    stat[i, j] = (1/n) * sum_r Phi((z[i,j] - z[i,r]) / s_i) with the
    per-gene bandwidth s_i = sd(row)/4, floored at 1e-6.
    """
    z = expr.values if isinstance(expr, ExpressionMatrix) else np.asarray(expr, float)
    p, n = z.shape
    if bandwidths is None:
        sd = np.std(z, axis=1, ddof=1) if n > 1 else np.zeros(p)
        bandwidths = sd / 4.0
    bandwidths = np.maximum(np.asarray(bandwidths, dtype=np.float64), 1e-6)

    out = np.empty_like(z)
    chunk = max(1, int(2**22 // (n * n)) if n else 1)
    for start in range(0, p, chunk):
        block = z[start : start + chunk]  # (c, n)
        s = bandwidths[start : start + chunk, None, None]
        diff = (block[:, :, None] - block[:, None, :]) / s  # (c, n, n)
        out[start : start + chunk] = ndtr(diff).mean(axis=2)
    return out


def rank_normalize(stats: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Rank genes within each sample and fold ranks around the center.

    Returns ``(t, order)`` where ``order[l, j]`` is the gene index at
    walk position l+1 of sample j (positions run from the largest
    statistic down, ties kept in input gene order), and ``t[i, j] =
    |p/2 - r_ij|`` with numeric ranks r ascending in the statistic
    (largest statistic gets rank p).
    """
    stats = np.asarray(stats, dtype=np.float64)
    p, n = stats.shape
    order = np.argsort(-stats, axis=0, kind="stable")
    ranks = np.empty_like(order)
    positions = np.arange(p)[:, None]
    np.put_along_axis(ranks, order, p - positions, axis=0)
    t = np.abs(p / 2.0 - ranks)
    return t, order


def walk_statistic(
    t: np.ndarray,
    order: np.ndarray,
    member_mask: np.ndarray,
    tau: float = 1.0,
) -> np.ndarray:
    """The running KS-like statistic eta over each sample's ranked walk.

    Accumulates the member genes' |t|^tau fraction against the
    non-member count fraction; eta telescopes to 0 at the end of the
    walk. Members whose weights vanish entirely (all stuck at the fold
    center) fall back to count weighting so the walk stays defined.
    """
    if tau <= 0:
        raise DataError("tau must be positive")
    t = np.asarray(t, dtype=np.float64)
    p, n = t.shape
    member_mask = np.asarray(member_mask, dtype=bool)
    size = int(member_mask.sum())
    if size == 0:
        raise DataError("empty gene set")
    if size >= p:
        raise DataError("set spans all genes")

    in_walk = member_mask[order]  # (p, n): membership along each sample's walk
    t_walk = np.abs(np.take_along_axis(t, order, axis=0)) ** tau
    weights = np.where(in_walk, t_walk, 0.0)
    total = weights.sum(axis=0)  # (n,)
    degenerate = total <= 0.0
    if np.any(degenerate):
        weights[:, degenerate] = in_walk[:, degenerate].astype(float)
        total = weights.sum(axis=0)

    num_in = np.cumsum(weights, axis=0) / total
    num_out = np.cumsum(~in_walk, axis=0) / (p - size)
    return num_in - num_out


def enrichment_score(
    t: np.ndarray,
    order: np.ndarray,
    member_mask: np.ndarray,
    tau: float = 1.0,
    variant: str = "diff",
) -> np.ndarray:
    """Score one gene set per sample from the ranked walk.

    ``diff`` scores max(0, eta) - min(0, eta) over the walk (always in
    [0, 2]); ``max_dev`` keeps the single signed excursion of largest
    magnitude.
    """
    if variant not in SCORE_VARIANTS:
        raise DataError(f"unknown score variant {variant!r}")
    eta = walk_statistic(t, order, member_mask, tau=tau)
    if variant == "diff":
        return np.maximum(eta, 0.0).max(axis=0) - np.minimum(eta, 0.0).min(axis=0)
    idx = np.argmax(np.abs(eta), axis=0)
    return eta[idx, np.arange(eta.shape[1])]


def pathway_scores(
    expr: ExpressionMatrix,
    collection: GeneSetCollection,
    tau: float = 1.0,
    variant: str = "diff",
) -> tuple[list[str], np.ndarray]:
    """Enrichment scores for every set: returns (set names, (sets, n) matrix)."""
    collection.validate_against(expr.genes)
    stats = expression_cdf_stats(expr)
    t, order = rank_normalize(stats)
    gene_index = {g: i for i, g in enumerate(expr.genes)}

    names, rows = [], []
    for name, members in collection.sets.items():
        mask = np.zeros(len(expr.genes), dtype=bool)
        mask[[gene_index[g] for g in members if g in gene_index]] = True
        names.append(name)
        rows.append(enrichment_score(t, order, mask, tau=tau, variant=variant))
    return names, np.asarray(rows)


# ---------------------------------------------------------------------------
# file formats


def load_gmt(path: str | Path, genes: list[str] | None = None) -> GeneSetCollection:
    """Read tab-separated ``set_name<TAB>description<TAB>gene...`` records.

    When ``genes`` is given, members absent from it are dropped (count
    logged per set) and sets left empty are removed with a warning.
    """
    sets: dict[str, list[str]] = {}
    universe = set(genes) if genes is not None else None
    with open(path) as fh:
        for line in fh:
            line = line.rstrip("\n")
            if not line or line.startswith("#"):
                continue
            parts = line.split("\t")
            if len(parts) < 3:
                raise DataError(f"{path}: malformed gmt line {line[:40]!r}")
            name, members = parts[0], list(dict.fromkeys(parts[2:]))
            if universe is not None:
                kept = [g for g in members if g in universe]
                dropped = len(members) - len(kept)
                if dropped:
                    log.info("gene set %s: dropped %d unknown genes", name, dropped)
                if not kept:
                    log.warning("gene set %s has no genes in the expression; skipped", name)
                    continue
                members = kept
            sets[name] = members
    if not sets:
        raise DataError(f"{path}: no usable gene sets")
    return GeneSetCollection(sets=sets)


def read_expression_csv(path: str | Path) -> ExpressionMatrix:
    """Read ``gene,<sample>,...`` rows into an ExpressionMatrix."""
    with open(path, newline="") as fh:
        reader = csv.reader(row for row in fh if not row.startswith("#"))
        header = next(reader, None)
        if header is None or header[0] != "gene":
            raise DataError(f"{path}: expected a 'gene' first column")
        samples = header[1:]
        genes, rows = [], []
        for row in reader:
            genes.append(row[0])
            rows.append([float(v) for v in row[1:]])
    return ExpressionMatrix(genes=genes, samples=samples, values=np.asarray(rows))


def write_pathway_scores_csv(
    path: str | Path,
    set_names: list[str],
    samples: list[str],
    scores: np.ndarray,
    header_comment: str | None = None,
) -> None:
    scores = np.asarray(scores, dtype=np.float64)
    if scores.shape != (len(set_names), len(samples)):
        raise DataError("pathway score shape mismatch")
    with open(path, "w", newline="") as fh:
        if header_comment:
            fh.write(f"# {header_comment}\n")
        writer = csv.writer(fh)
        writer.writerow(["pathway"] + list(samples))
        for name, row in zip(set_names, scores):
            writer.writerow([name] + [repr(float(v)) for v in row])


def read_pathway_scores_csv(path: str | Path) -> tuple[list[str], list[str], np.ndarray]:
    with open(path, newline="") as fh:
        reader = csv.reader(row for row in fh if not row.startswith("#"))
        header = next(reader, None)
        if header is None or header[0] != "pathway":
            raise DataError(f"{path}: not a pathway score table")
        samples = header[1:]
        names, rows = [], []
        for row in reader:
            names.append(row[0])
            rows.append([float(v) for v in row[1:]])
    if not rows:
        raise DataError(f"{path}: no pathway rows")
    return names, samples, np.asarray(rows)
