"""
Exception hierarchy for the bandit simulation lab
"""
from typing import Optional


class BanditLabError(Exception):
    """Base class for every error raised by this package"""


class BudgetRangeError(BanditLabError, ValueError):
    """Variation budget outside the admissible range [1/K, T/K]"""


class BudgetViolationError(BanditLabError, ValueError):
    """A generated mean-reward path spends more variation than its budget"""


class ArmIndexError(BanditLabError, IndexError):
    """Arm or epoch index outside the instance"""


class UpdateBeforeSelectError(BanditLabError, RuntimeError):
    """Exp3 update called without probabilities cached by a select"""


class EpochOrderError(BanditLabError, RuntimeError):
    """Policy fed epochs out of order"""


class InvalidConfigError(BanditLabError, ValueError):
    """Invalid policy or experiment configuration"""

    def __init__(self, message: str, field: Optional[str] = None):
        self.field = field
        if field and field not in message:
            message = f"{field}: {message}"
        super().__init__(message)


class DegenerateInputError(BanditLabError, ValueError):
    """Not enough (or invalid) points for a least-squares fit"""


class SweepError(BanditLabError, RuntimeError):
    """A grid point of a sweep failed"""


class MalformedCSVError(BanditLabError, ValueError):
    """CSV input does not follow the expected schema"""

    def __init__(self, message: str, line: Optional[int] = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
