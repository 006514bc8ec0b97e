"""Exception hierarchy shared by the simulator, sweep, emulator and CLI layers."""


class HopperError(Exception):
    """Base class for every error raised by hopper_stiffness."""


# ======================================================
# Input / precondition errors
# ======================================================
class HopperValueError(HopperError, ValueError):
    pass


class CompressionExceedsLeg(HopperValueError):
    """Pre-compression would be at least as long as the leg itself."""


class NoSignChange(HopperValueError):
    """Guard has the same sign at both ends of a bracket."""


class InsufficientHops(HopperValueError):
    pass


class MissingTrajectory(HopperValueError):
    pass


class EmptyCell(HopperValueError):
    """Every leg stiffness failed on a ground-profile cell."""


class UnknownEnergyLevel(HopperValueError):
    pass


class OutOfDomain(HopperValueError):
    pass


class UnreachableCell(HopperValueError):
    pass


class DegenerateTrace(HopperValueError):
    pass


class InsufficientSpread(HopperValueError):
    pass


class TraceFormatError(HopperValueError):
    pass


class ConfigError(HopperValueError):
    pass


# ======================================================
# Numerical errors
# ======================================================
class IntegrationError(HopperError, RuntimeError):
    pass


class StepUnderflow(IntegrationError):
    pass


class NonFiniteState(IntegrationError):
    pass


class FitError(HopperError, RuntimeError):
    pass


class Overdamped(FitError):
    pass


class FitNoConvergence(FitError):
    pass
