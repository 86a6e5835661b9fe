"""Exception types shared across the package."""


class InvalidConfigError(ValueError):
    """A scenario configuration violates one of its invariants."""


class InfeasibleSizeError(ValueError):
    """An exhaustive computation would exceed its hard size bound."""


class NoEvidenceError(RuntimeError):
    """An amplitude vote received no ratios at all."""
