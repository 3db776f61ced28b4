"""Exception types shared by the simulator modules."""


class RabiSimError(Exception):
    """Base class for simulator errors."""


class InvalidDimension(RabiSimError, ValueError):
    pass


class LayoutConflict(RabiSimError, ValueError):
    pass


class LayoutError(RabiSimError, KeyError):
    pass


class DegenerateHerald(RabiSimError):
    """A detection branch with (numerically) zero probability."""


class TruncationRisk(RabiSimError):
    pass


class LeakageError(RabiSimError):
    """Population reached the top Fock level of some mode."""


class NotPSD(RabiSimError, ValueError):
    pass


class ConfigError(RabiSimError, ValueError):
    pass
