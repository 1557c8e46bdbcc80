"""Exception hierarchy shared by all modules."""


class MixedLiouvillianError(Exception):
    """Base class for every error raised by this package."""


class NonHermitianError(MixedLiouvillianError, ValueError):
    def __init__(self, what, deviation):
        self.deviation = float(deviation)
        super().__init__(f"{what} is not Hermitian (max |A - A^dag| = {deviation:.3e})")


class PoleError(MixedLiouvillianError, ZeroDivisionError):
    """Raised when L_mixed(z) is evaluated at its pole z = -gamma_c."""


class DegeneratePencilError(MixedLiouvillianError, ValueError):
    """gamma_c = 0 makes the quadratic pencil degenerate (A0 = 0)."""


class DefectiveSpectrumError(MixedLiouvillianError, ArithmeticError):
    """The extended matrix is numerically non-diagonalizable."""

    def __init__(self, condition_number, eigenvalues):
        self.condition_number = float(condition_number)
        self.eigenvalues = eigenvalues
        super().__init__(
            f"eigenvector matrix condition number {condition_number:.3e} exceeds limit; "
            f"clustered eigenvalues: {list(eigenvalues)}"
        )


class PropagationError(MixedLiouvillianError, ArithmeticError):
    def __init__(self, step, time, invariant, detail=""):
        self.step = step
        self.time = time
        self.invariant = invariant
        msg = f"step {step} (t={time:g}) violates {invariant}"
        if detail:
            msg += f": {detail}"
        super().__init__(msg)


class VanishedTraceError(MixedLiouvillianError, ValueError):
    """Normalization requested for a state whose trace is (numerically) zero."""


class NotPositiveError(MixedLiouvillianError, ValueError):
    """A density matrix has an eigenvalue below -tol_psd."""


class UnsupportedChannelError(MixedLiouvillianError, ValueError):
    """Channel has no continuum realization (not an elementary jump)."""


class TooLargeError(MixedLiouvillianError, MemoryError):
    """Microscopic model exceeds the configured Liouville dimension cap."""


class ConfigError(MixedLiouvillianError, ValueError):
    """Invalid scenario configuration. ``path`` is a JSON pointer."""

    def __init__(self, message, path=""):
        self.path = path
        self.message = message
        super().__init__(f"{path or '/'}: {message}")
