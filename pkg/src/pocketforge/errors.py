"""Exception hierarchy and CLI exit codes"""

from typing import Any, Dict, Optional

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_USAGE = 2
EXIT_IO = 3
EXIT_NUMERIC = 4


class PocketForgeError(Exception):
    """Base class for every error raised by pocketforge"""

    exit_code = EXIT_FAILURE


# Run-level failures, mapped onto CLI exit codes


class ConfigurationError(PocketForgeError):
    """Bad config key/value, or a dataset that cannot feed the requested stage"""

    exit_code = EXIT_USAGE


class InputError(PocketForgeError):
    """Malformed input file"""

    exit_code = EXIT_IO


class NumericError(PocketForgeError):
    """NaN or Inf encountered in a numeric stage"""

    exit_code = EXIT_NUMERIC

    def __init__(self, message: str, stage: Optional[str] = None):
        super().__init__(message)
        self.stage = stage


class StepSizeError(NumericError):
    """Jump probability of a discrete Euler step exceeds one"""


class SamplingError(NumericError):
    """Integration failure during sampling"""

    def __init__(self, message: str, step: int):
        super().__init__(message, stage=f"sample step {step}")
        self.step = step


class TrainingAbortedError(NumericError):
    """Training stopped on a non-finite loss; carries the last good parameters"""

    def __init__(self, message: str, step: int, last_good_state: Dict[str, Any]):
        super().__init__(message, stage=f"train step {step}")
        self.step = step
        self.last_good_state = last_good_state


# Contract violations of pure functions


class ContractError(PocketForgeError, ValueError):
    """Precondition violated by the caller"""


class InvalidRotationError(ContractError):
    pass


class InvalidStateError(ContractError):
    """Discrete state outside the real-state range of its space"""


class DomainError(ContractError):
    """Argument outside the function's domain, e.g. t >= 1"""


class ShapeError(ContractError):
    pass


class LengthError(ContractError):
    pass


class VocabularyError(ContractError):
    pass


class EmptyAlignmentError(ContractError):
    pass


class AlphabetError(ContractError):
    pass


class GraphError(ContractError):
    pass


class EmptyPocketError(ContractError):
    pass


class DegenerateGeometryError(ContractError):
    pass


def exit_code_for(error: BaseException) -> int:
    """Map an exception onto the documented CLI exit code"""
    if isinstance(error, PocketForgeError):
        return error.exit_code
    if isinstance(error, OSError):
        return EXIT_IO
    return EXIT_FAILURE
