"""
Exception hierarchy shared by solvers and commands
"""
from typing import Any, Iterable, Optional


class HetNetError(Exception):
    """Base class for every error raised by the toolkit"""


class ConfigError(HetNetError, ValueError):
    """Invalid configuration, arguments or input data"""


class TooLargeError(ConfigError):
    """Instance exceeds an enumeration guard"""


class DegenerateError(ConfigError):
    """Training data holds a single label"""


class OutputError(HetNetError, OSError):
    """Reading or writing a file failed"""

    def __init__(self, path: Any, message: str):
        self.path = str(path)
        super().__init__(f"{self.path}: {message}")


class InfeasibleError(HetNetError):
    """No assignment or allocation satisfies the constraints"""

    def __init__(self, message: str, blocking_users: Iterable[int] = ()):
        self.blocking_users = tuple(int(u) for u in blocking_users)
        if self.blocking_users:
            message = f"{message} (blocking users: {', '.join(map(str, self.blocking_users))})"
        super().__init__(message)


class InteriorStartFailed(InfeasibleError):
    """No strictly interior point exists for the barrier iteration"""


class NotConvergedError(HetNetError):
    """Iteration budget exhausted; the last iterate is attached"""

    def __init__(self, message: str, last_iterate: Optional[Any] = None):
        self.last_iterate = last_iterate
        super().__init__(message)
