"""Exception types shared across the package.

The CLI maps these onto exit codes: usage errors exit 1, ``DataError``
exits 2 and ``NumericalError`` exits 3.
"""


class DataError(ValueError):
    """Invalid or inconsistent input data (shape mismatch, bad file, ...)."""


class NumericalError(RuntimeError):
    """A numerical procedure failed (non-convergence, degenerate system)."""


class KarcherConvergenceError(NumericalError):
    """Karcher mean iteration hit the iteration cap before the gradient
    norm dropped below tolerance. Carries the last gradient norm."""

    def __init__(self, grad_norm: float, max_iter: int):
        self.grad_norm = float(grad_norm)
        self.max_iter = int(max_iter)
        super().__init__(
            f"Karcher mean did not converge in {max_iter} iterations "
            f"(last gradient norm {grad_norm:.3e})"
        )
