"""Exception hierarchy and CLI exit codes."""


class NozzleShockError(Exception):
    exit_code = 1


class DomainError(NozzleShockError, ValueError):
    """Invalid state or argument outside the admissible range."""


class OutOfPolarError(DomainError):
    pass


class NoShockError(NozzleShockError):
    """No transonic shock exists (upstream not supersonic, or no subsonic R-H root)."""
    exit_code = 3


class ConfigError(NozzleShockError):
    exit_code = 2


class InputError(ConfigError):
    """Malformed profile or other user input."""


class GridError(ConfigError):
    def __init__(self, msg, suggested_nx=None):
        super().__init__(msg)
        self.suggested_nx = suggested_nx


class RegimeError(NozzleShockError):
    """A hypothesis of the uniqueness regime failed.

    ``location`` carries whatever pinpoints the failure (node indices,
    coordinates, the offending value).
    """
    exit_code = 3

    def __init__(self, msg, location=None):
        super().__init__(msg)
        self.location = location


class EllipticityError(RegimeError):
    pass


class MonotonicityError(RegimeError):
    def __init__(self, msg, sign_changes=None):
        super().__init__(msg, location={"sign_changes": sign_changes})
        self.sign_changes = sign_changes


class DegenerateShockError(RegimeError):
    pass


class ConvergenceError(NozzleShockError):
    exit_code = 4

    def __init__(self, msg, history=None):
        super().__init__(msg)
        self.history = history or []


class NoRootError(NozzleShockError):
    """Solvability function has no sign change: Pe outside the admissible range."""
    exit_code = 5


class SolverError(NozzleShockError):
    """Sparse linear solve failed to reach the requested residual."""
    exit_code = 4
