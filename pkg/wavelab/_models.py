from typing import Annotated

import numpy as np
from pydantic import BaseModel, ConfigDict, PlainSerializer

FloatArray = Annotated[
    np.ndarray,
    PlainSerializer(lambda value: np.asarray(value, dtype=float).tolist(), return_type=list),
]
"""
A float ``numpy`` array that serialises as a JSON list.
"""


class WaveLabModel(BaseModel):
    """
    Base for every value object. Frozen, and allowed to carry ``numpy`` arrays.
    """

    model_config = ConfigDict(
        frozen=True,
        arbitrary_types_allowed=True,
        ser_json_inf_nan="constants",
    )


class CheckResult(WaveLabModel):
    """
    A single signed-slack verdict inside a report.
    """

    name: str
    value: float
    threshold: float
    passed: bool

    @classmethod
    def at_most(cls, name: str, value: float, threshold: float) -> "CheckResult":
        return cls(name=name, value=value, threshold=threshold, passed=bool(value <= threshold))

    @classmethod
    def at_least(cls, name: str, value: float, threshold: float) -> "CheckResult":
        return cls(name=name, value=value, threshold=threshold, passed=bool(value >= threshold))
