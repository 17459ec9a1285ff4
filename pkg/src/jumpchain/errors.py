"""Exception hierarchy; the CLI maps these onto exit codes."""


class JumpchainError(Exception):
    """Base class for library errors."""


class ConfigError(JumpchainError, ValueError):
    """Invalid parameters or configuration (exit code 2)."""


class NumericalError(JumpchainError, ArithmeticError):
    """A numerical procedure failed to reach its tolerance (exit code 3)."""


class QuadratureDivergence(NumericalError):
    """Shell refinement did not stabilize: the integral looks divergent."""


class LatticeMismatch(JumpchainError, ValueError):
    """Two lattice objects that must agree do not."""
