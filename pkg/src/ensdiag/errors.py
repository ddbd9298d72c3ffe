"""Error taxonomy shared across the package.

ValidationError covers bad inputs: malformed manifests, shape mismatches,
out-of-range labels, degenerate samples. NumericalError covers failures of
the numerics themselves: factorizations that do not converge, identities
that fail their runtime residual check.
"""


class ValidationError(ValueError):
    """Input data or configuration violates a documented precondition."""


class NumericalError(RuntimeError):
    """A numerical routine failed or a runtime identity check was violated."""
