"""densreg: per-region intensity densities as geometric PC features,
regressed against pathway enrichment scores with a grouped
spike-and-slab prior and FDR-based selection."""

from . import geometry, gss, gsva, ingest, selection, simulate, tangent_pca
from .gss import HAVE_COMPILED, default_backend

__version__ = "0.1.0"

__all__ = [
    "geometry",
    "gss",
    "gsva",
    "ingest",
    "selection",
    "simulate",
    "tangent_pca",
    "HAVE_COMPILED",
    "default_backend",
    "__version__",
]
