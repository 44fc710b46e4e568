# fbclock/errors.py
from typing import Any, Dict, Optional


class ClockError(Exception):
    """Numeric failure inside a simulation or analysis pipeline."""


class CompositionError(ClockError):
    pass


class AlgebraicLoopError(CompositionError):
    pass


class StiffnessError(ClockError):
    pass


class NeverCrossesError(ClockError):
    pass


class DegenerateDistributionError(ClockError):
    pass


class DeviceError(ClockError):
    pass


class RecordError(ClockError):
    pass


class FitError(ClockError):
    def __init__(self, message: str, diagnostics: Optional[Dict[str, Any]] = None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}
