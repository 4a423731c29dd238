# invfilter/utils/errors.py
from typing import List, Optional


class InvfilterError(Exception):
    """Base class for every error raised by invfilter"""


class ConfigurationError(InvfilterError, ValueError):
    """Invalid gains, tables, boxes or scenario contents"""


class DimensionError(InvfilterError, ValueError):
    """A vector or matrix does not match the declared state/control dimension"""


class InfeasibleError(InvfilterError, RuntimeError):
    """No control satisfies the requested constraint set.

    The certificate lists labels of a subset of mutually unsatisfiable constraints.
    """

    def __init__(self, message: str, certificate: Optional[List[str]] = None, tier: Optional[str] = None):
        self.certificate = list(certificate or [])
        self.tier = tier
        detail = f"{message} (certificate: {', '.join(self.certificate)})" if self.certificate else message
        super().__init__(detail)


class SimulationDivergenceError(InvfilterError, RuntimeError):
    """The integrated state stopped being finite"""


class FitDomainError(InvfilterError, ValueError):
    """The series handed to the exponential fit is not positive over the fit window"""


class PriorityInconsistencyError(InvfilterError, RuntimeError):
    """The current priority level and the next-level index set contradict each other"""
