"""Exception hierarchy. ``exit_code`` is what the CLI returns for each kind."""


class RomforgeError(Exception):
    exit_code = 1


class ConfigError(RomforgeError, ValueError):
    exit_code = 2


class FormatError(RomforgeError, OSError):
    """Bad magic bytes, truncated body, or unreadable/unwritable file."""

    exit_code = 3


class DivergenceError(RomforgeError, ArithmeticError):
    exit_code = 4


class ShapeError(RomforgeError, ValueError):
    exit_code = 5


class BlowUpError(DivergenceError):
    """A time integrator produced a non-finite state."""

    def __init__(self, step, message=None):
        self.step = step
        super().__init__(message or f"non-finite state at step {step}")


class SvdConvergenceError(DivergenceError):
    def __init__(self, residual, sweeps):
        self.residual = residual
        self.sweeps = sweeps
        super().__init__(
            f"Jacobi SVD did not converge after {sweeps} sweeps "
            f"(max relative off-diagonal {residual:.3e})"
        )
