"""Exception types raised across the package."""


class DomainError(ValueError):
    """An argument lies outside the domain of the requested quantity."""


class InversionError(RuntimeError):
    """Numerical Laplace inversion failed its convergence diagnostic."""


class InsufficientSampleError(RuntimeError):
    """Too few Monte Carlo paths survived conditioning to form an estimate."""

    def __init__(self, law_id: str, accepted: int, required: int):
        self.law_id = law_id
        self.accepted = accepted
        self.required = required
        super().__init__(
            f"insufficient conditional sample for {law_id!r}: "
            f"{accepted} accepted paths, {required} required"
        )
