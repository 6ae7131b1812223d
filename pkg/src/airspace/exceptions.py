"""
Exception types raised by the airspace simulator
"""

from typing import List, Optional


class AirspaceError(Exception):
    """Base class for every error raised by this package"""


class InvalidParameterError(AirspaceError, ValueError):
    """A numeric or structural parameter is outside its allowed range"""


class OutOfGridError(AirspaceError, ValueError):
    """A cell or edge reference does not belong to the grid"""


class TimeRegressionError(AirspaceError, ValueError):
    """A traversal record is older than the latest record of its cell"""


class UnreachableGoalError(AirspaceError):
    """The planner found no path between two edges"""


class SimulationTimeout(AirspaceError, RuntimeError):
    """The time cap was reached while aircraft were still unfinished"""

    def __init__(self, max_time_s: float, unfinished: int, arrived: int):
        super().__init__(
            f"Simulation reached max_time_s={max_time_s:g} with "
            f"{unfinished} unfinished aircraft ({arrived} arrived)"
        )
        self.max_time_s = max_time_s
        self.unfinished = unfinished
        self.arrived = arrived

    def __reduce__(self):
        return (type(self), (self.max_time_s, self.unfinished, self.arrived))


class DegenerateSampleError(AirspaceError, ValueError):
    """A statistical test received samples it cannot evaluate"""


class ConfigParseError(AirspaceError, ValueError):
    """Configuration text is not well-formed"""

    def __init__(
        self, message: str, line: Optional[int] = None, column: Optional[int] = None
    ):
        location = f"line {line}, column {column}: " if line is not None else ""
        self.message = message
        super().__init__(f"{location}{message}")
        self.line = line
        self.column = column

    def __reduce__(self):
        return (type(self), (self.message, self.line, self.column))


class ConfigValidationError(AirspaceError, ValueError):
    """Configuration parsed but violates one or more invariants"""

    def __init__(self, violations: List[str]):
        details = "\n".join(f"  - {v}" for v in violations)
        super().__init__(f"Invalid configuration:\n{details}")
        self.violations = list(violations)

    def __reduce__(self):
        return (type(self), (self.violations,))


class StudyRunError(AirspaceError):
    """A single run inside a study failed"""

    def __init__(self, case: str, replication: int, cause: Exception):
        super().__init__(f"Case '{case}' replication {replication} failed: {cause}")
        self.case = case
        self.replication = replication
        self.cause = cause

    def __reduce__(self):
        return (type(self), (self.case, self.replication, self.cause))
