"""Exception types shared across the package."""


class ConfigError(ValueError):
    """Invalid configuration file or parameter set."""


class QuadratureError(ArithmeticError):
    """A numerical integral failed its internal convergence check.

    Carries the achieved error estimate and the tolerance that was violated.
    """

    def __init__(self, message, estimate=None, tolerance=None):
        super().__init__(message)
        self.estimate = estimate
        self.tolerance = tolerance


class TableRangeError(ValueError):
    """A kernel-table query fell outside the tabulated radial range."""

    def __init__(self, r, r_max):
        super().__init__(
            f"radius {r:.6g} exceeds tabulated r_max={r_max:.6g}; "
            f"rebuild the table with r_max >= {r:.6g} (size it from the path diameter)"
        )
        self.r = r
        self.r_max = r_max


class GridMismatchError(ValueError):
    """Two objects that must share a time grid do not."""
