"""Exception hierarchy shared across the package."""


class DifAltGDError(Exception):
    """Base class for all package errors."""


class DimensionMismatch(DifAltGDError, ValueError):
    pass


class RankDeficient(DifAltGDError, ValueError):
    """Raised when a factorization meets a (numerically) dependent column."""

    def __init__(self, column, message=None):
        self.column = column
        super().__init__(message or f"matrix is rank deficient at column {column}")


class Underdetermined(DifAltGDError, ValueError):
    pass


class NotSymmetric(DifAltGDError, ValueError):
    pass


class InvalidRank(DifAltGDError, ValueError):
    pass


class SplitSizeError(DifAltGDError, ValueError):
    def __init__(self, n, multiple):
        self.n = n
        self.multiple = multiple
        super().__init__(
            f"n={n} samples cannot be split into equal blocks; n must be a multiple of {multiple}"
        )


class DisconnectedGraph(DifAltGDError, RuntimeError):
    def __init__(self, L, p, retries):
        self.L, self.p, self.retries = L, p, retries
        super().__init__(f"no connected Erdos-Renyi graph with L={L}, p={p} after {retries} draws")


class TooFewTasks(DifAltGDError, ValueError):
    pass


class NoContraction(DifAltGDError, ValueError):
    pass


class InitRankCollapse(DifAltGDError, RuntimeError):
    pass


class DivergenceDetected(DifAltGDError, RuntimeError):
    pass


class ConfigError(DifAltGDError, ValueError):
    pass
