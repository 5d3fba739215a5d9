"""Typed errors raised by the package."""


class InvalidParameter(ValueError):
    """A parameter violates a stated invariant (message names the invariant)."""


class NotOscillatoryError(InvalidParameter):
    """Operation needs the oscillatory regime a < 4b."""


class SimulationAborted(RuntimeError):
    """A particle or path ensemble reached a state it cannot recover from."""
