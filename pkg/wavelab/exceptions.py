from enum import IntEnum
from typing import Optional, Union

from wavelab._logging import LogLevel, logger


class WaveLabError(Exception):
    """
    Base class for every error raised by ``wavelab``.
    """


class ParameterError(WaveLabError, ValueError):
    """
    Raised when ``(d, p, a)`` leave the admissible region.
    Carries the violated bound.
    """

    def __init__(self, name: str, value: float, bound: float, relation: str):
        self.name = name
        self.value = value
        self.bound = bound
        self.relation = relation
        super().__init__(f"{name}={value!r} violates {name} {relation} {bound!r}.")


class DimensionOutOfRange(ParameterError):
    def __init__(self, value: float, bound: float, relation: str):
        super().__init__("d", value, bound, relation)


class ExponentOutOfRange(ParameterError):
    def __init__(self, value: float, bound: float, relation: str):
        super().__init__("p", value, bound, relation)


class PotentialBelowThreshold(ParameterError):
    def __init__(self, value: float, bound: float):
        super().__init__("a", value, bound, ">")


class RangeOutsideGrid(WaveLabError, IndexError):
    """
    Raised when a radius or a radial range does not fit in ``[0, r_max]``.
    """

    def __init__(self, r_a: float, r_b: float, r_max: float):
        self.r_a = r_a
        self.r_b = r_b
        self.r_max = r_max
        super().__init__(f"Range [{r_a!r}, {r_b!r}] lies outside the grid [0, {r_max!r}].")


class StabilityViolation(WaveLabError, ArithmeticError):
    """
    Raised when the time step breaks the stability guard or the discrete
    energy jumps within a single step. Full detail is only shown in DEBUG.
    """

    def __init__(
        self,
        message: str,
        step: Optional[int] = None,
        t: Optional[float] = None,
        energy_before: Optional[float] = None,
        energy_after: Optional[float] = None,
    ):
        self.message = message
        self.step = step
        self.t = t
        self.energy_before = energy_before
        self.energy_after = energy_after
        super().__init__(message)

    def __str__(self) -> str:
        if logger.level <= LogLevel.DEBUG and self.step is not None:
            return (
                f"{self.message} (step={self.step}, t={self.t!r}, "
                f"energy {self.energy_before!r} -> {self.energy_after!r})"
            )

        return self.message


class DomainTooSmall(WaveLabError, ValueError):
    """
    Raised when ``r_max`` does not clear the causal reach of the data.
    """

    def __init__(self, r_max: float, required: float):
        self.r_max = r_max
        self.required = required
        super().__init__(
            f"r_max={r_max!r} is below the finite-propagation reach {required!r}. "
            "Enlarge the grid or shorten the run."
        )


class ConeNotSampled(WaveLabError, LookupError):
    def __init__(self, eta: float, available: list[float]):
        self.eta = eta
        super().__init__(f"No cone samples for eta={eta!r}. Sampled: {available}.")


class LineNotSampled(WaveLabError, LookupError):
    def __init__(self, kind: str, offset: float):
        self.kind = kind
        self.offset = offset
        super().__init__(f"No samples along the {kind} line with offset {offset!r}.")


class InsufficientHorizon(WaveLabError, ValueError):
    def __init__(self, message: str):
        super().__init__(message)


class ZeroField(WaveLabError, ValueError):
    def __init__(self):
        super().__init__("Field vanishes identically; the ratio is undefined.")


class ConfigInvalid(WaveLabError, ValueError):
    """
    Raised for a malformed experiment configuration. ``field_path`` is the
    dotted location of the first offending key.
    """

    def __init__(self, message: str, field_path: str = ""):
        self.field_path = field_path
        prefix = f"{field_path}: " if field_path else ""
        super().__init__(f"{prefix}{message}")


class ExperimentUnknown(WaveLabError, LookupError):
    def __init__(self, name: str, available: list[str]):
        self.experiment = name
        super().__init__(f"Unknown experiment '{name}'. Choose from: {', '.join(available)}.")


class AcceptanceFailure(WaveLabError, AssertionError):
    def __init__(self, failed: list[str]):
        self.failed = failed
        super().__init__(f"Acceptance checks failed: {', '.join(failed)}.")


class ExitCode(IntEnum):
    SUCCESS = 0
    FAILURE = 1
    CONFIG_ERROR = 2
    NUMERICAL_GUARD = 3
    ACCEPTANCE_FAILURE = 4


ErrorUnion = Union[
    ConfigInvalid,
    ExperimentUnknown,
    ParameterError,
    DomainTooSmall,
    RangeOutsideGrid,
    ConeNotSampled,
    LineNotSampled,
    InsufficientHorizon,
    StabilityViolation,
    AcceptanceFailure,
]
EXIT_CODE_MAP: dict[type[ErrorUnion], ExitCode] = {
    ConfigInvalid: ExitCode.CONFIG_ERROR,
    ExperimentUnknown: ExitCode.CONFIG_ERROR,
    ParameterError: ExitCode.CONFIG_ERROR,
    DomainTooSmall: ExitCode.CONFIG_ERROR,
    RangeOutsideGrid: ExitCode.CONFIG_ERROR,
    ConeNotSampled: ExitCode.CONFIG_ERROR,
    LineNotSampled: ExitCode.CONFIG_ERROR,
    InsufficientHorizon: ExitCode.CONFIG_ERROR,
    StabilityViolation: ExitCode.NUMERICAL_GUARD,
    AcceptanceFailure: ExitCode.ACCEPTANCE_FAILURE,
}


def exit_code_for(error: BaseException) -> ExitCode:
    for cls in type(error).__mro__:
        if code := EXIT_CODE_MAP.get(cls):
            return code

    return ExitCode.FAILURE
