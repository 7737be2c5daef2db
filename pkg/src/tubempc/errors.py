"""Exception types shared across the package."""


class UsageError(ValueError):
    """Caller passed inconsistent or out-of-contract arguments."""


class EstimationError(RuntimeError):
    """The estimator could not produce a usable result (e.g. too many
    discarded bootstrap replicates)."""


class SolverError(RuntimeError):
    """The QP backend failed to converge.  Distinct from infeasibility,
    which is a regular result, not an error."""
