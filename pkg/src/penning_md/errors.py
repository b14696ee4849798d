"""Exception hierarchy for the simulator."""

from __future__ import annotations


class PenningError(Exception):
    """Base class for all errors raised by penning_md."""


class CoincidentIonsError(PenningError):
    def __init__(self, i: int, j: int):
        super().__init__(f"ions {i} and {j} are coincident; Coulomb energy diverges")
        self.pair = (i, j)


class ConfinementError(PenningError):
    """Planar confinement lost (beta <= 0 or beta <= delta)."""


class ConvergenceError(PenningError):
    def __init__(self, message: str, best=None):
        super().__init__(message)
        self.best = best


class InstabilityError(PenningError):
    def __init__(self, message: str, eigenvalue=None):
        super().__init__(message)
        self.eigenvalue = eigenvalue


class IonEscapeError(PenningError):
    def __init__(self, time: float, radius: float):
        super().__init__(f"ion escaped to r = {radius:.3e} m at t = {time:.6e} s")
        self.time = time
        self.radius = radius


class TimeStepError(PenningError):
    """Scattering probability per step too large for the Poisson linearization."""


class TuningError(PenningError):
    """Metropolis acceptance rate could not be tuned into range."""


class ResolutionError(PenningError):
    """Record too short for the requested spectral resolution."""


class ConfigurationMismatchError(PenningError):
    """Trajectory does not match the equilibrium it is projected onto."""


class ConfigError(PenningError):
    """Invalid experiment configuration; ``field`` names the offending entry."""

    def __init__(self, field: str, message: str):
        super().__init__(f"{field}: {message}")
        self.field = field
