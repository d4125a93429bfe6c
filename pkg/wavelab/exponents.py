"""
Closed-form parameter algebra for the radial defocusing wave equation
``u_tt - Δu + a|x|^{-2} u + |u|^{p-1} u = 0``.
"""

import math
from typing import Optional

import numpy as np
from scipy.special import gamma

from wavelab._logging import logger
from wavelab._models import WaveLabModel
from wavelab.exceptions import DimensionOutOfRange, ExponentOutOfRange, PotentialBelowThreshold

MIN_DIMENSION = 3
MAX_DIMENSION = 6
SCALING_TOLERANCE = 1e-12
ENDPOINT_TOLERANCE = 1e-9


def conformal_exponent(d: int) -> float:
    return 1 + 4 / (d - 1)


def energy_critical_exponent(d: int) -> float:
    return 1 + 4 / (d - 2)


def potential_threshold(d: int, p: float) -> float:
    return -((d - 2) ** 2) / 4 + ((d - 2) * p - d) ** 2 / (4 * p**2)


def sphere_area(d: int) -> float:
    """
    Surface area ``c_d`` of the unit sphere in ``R^d``.
    """
    return float(2 * np.pi ** (d / 2) / gamma(d / 2))


class ModelParams(WaveLabModel):
    d: int
    """
    Space dimension, ``3 <= d <= 6``.
    """

    p: float
    """
    Power of the defocusing nonlinearity, ``p_conf <= p < p_e``.
    """

    a: float
    """
    Coefficient of the inverse-square potential, ``a > a_min(d, p)``.
    """


class DerivedConstants(WaveLabModel):
    s_p: float
    sigma: float
    lambda_d: float
    mu_d: float
    kappa_0: float
    beta: float
    a_min: float
    c_d: float
    hardy_const: float
    p_conf: float
    p_e: float


class StrichartzTriple(WaveLabModel):
    q: float
    r: float
    gamma: float


class StrichartzDecision(WaveLabModel):
    admissible: bool
    violations: list[str]
    window: tuple[float, float]
    notes: list[str] = []


def _check_dimension(d: int):
    if d != int(d) or d < MIN_DIMENSION:
        raise DimensionOutOfRange(d, MIN_DIMENSION, ">=")

    elif d > MAX_DIMENSION:
        raise DimensionOutOfRange(d, MAX_DIMENSION, "<=")


def validate(d: int, p: float, a: float) -> ModelParams:
    _check_dimension(d)
    d = int(d)
    if p < (lower := conformal_exponent(d)):
        raise ExponentOutOfRange(p, lower, ">=")

    elif p >= (upper := energy_critical_exponent(d)):
        raise ExponentOutOfRange(p, upper, "<")

    if not a > (threshold := potential_threshold(d, p)):
        raise PotentialBelowThreshold(a, threshold)

    return ModelParams(d=d, p=p, a=a)


def sigma_of(d: int, a: float) -> float:
    half = (d - 2) / 2
    return half - math.sqrt(half**2 + a)


def derive(params: ModelParams) -> DerivedConstants:
    d, p, a = params.d, params.p, params.a
    return DerivedConstants(
        s_p=d / 2 - 2 / (p - 1),
        sigma=sigma_of(d, a),
        lambda_d=(d - 1) * (d - 3) / 4,
        mu_d=(d**2 - 1) / 4,
        kappa_0=((d + 2) - (d - 2) * p) / (p + 1),
        beta=((d - 1) * (p - 1) - 2) / (2 * (p + 1)),
        a_min=potential_threshold(d, p),
        c_d=sphere_area(d),
        hardy_const=(d - 2) ** 2 / 4,
        p_conf=conformal_exponent(d),
        p_e=energy_critical_exponent(d),
    )


def _inverse(q: float) -> float:
    return 0.0 if math.isinf(q) else 1 / q


def gamma_window(d: int, q: float, a: float) -> tuple[float, float]:
    """
    Open interval of regularities ``gamma`` for which the Strichartz
    estimate of the ``-Δ + a|x|^{-2}`` flow holds. Both ends are NaN when
    ``a < -(d-2)²/4``, where the operator is unbounded below.
    """
    if a < -((d - 2) ** 2) / 4:
        return math.nan, math.nan

    inv_q = _inverse(q)
    if d == 3:
        lower = -min(1.0, math.sqrt(a + 9 / 4) - 0.5, math.sqrt(a + 1 / 4) + 1)
        upper = min(2.0, math.sqrt(a + 9 / 4) + 0.5, math.sqrt(a + 1 / 4) + 1 - inv_q)
        return lower, upper

    shift = (d + 3) / (2 * (d - 1))
    lower = -min(
        d / 2 - shift,
        math.sqrt(a + d**2 / 4) - shift,
        math.sqrt(a + (d - 2) ** 2 / 4) + 1,
    )
    upper = min(
        (d + 1) / 2,
        math.sqrt(a + d**2 / 4) + 0.5,
        math.sqrt(a + (d - 2) ** 2 / 4) + 1 - inv_q,
    )
    return lower, upper


def strichartz_admissible(
    d: int, q: float, r: float, gamma: float, a: float, pedantic: bool = False
) -> StrichartzDecision:
    """
    Decide whether ``(q, r, gamma)`` is a Strichartz triple for the
    inverse-square flow. Never raises: every broken condition is listed.
    """
    violations = []
    if q < 2:
        violations.append("q>=2 required")

    if not 2 <= r < math.inf:
        violations.append("r must lie in [2, inf)")

    inv_q = _inverse(q)
    inv_r = _inverse(r)
    if inv_q + (d - 1) * inv_r / 2 > (d - 1) / 4 + SCALING_TOLERANCE:
        violations.append("admissibility 1/q+(d-1)/(2r)<=(d-1)/4 fails")

    if abs(inv_q + d * inv_r - (d / 2 - gamma)) > SCALING_TOLERANCE:
        violations.append("scaling 1/q+d/r=d/2-gamma fails")

    if d == 3 and not q > 2:
        violations.append("q>2 required when d=3")

    lower, upper = gamma_window(d, q, a)
    if math.isnan(lower):
        violations.append("a>=-(d-2)^2/4 required")
    elif not lower < gamma < upper:
        violations.append(f"gamma outside ({lower!r}, {upper!r})")

    notes = []
    for label, endpoint in (("lower", lower), ("upper", upper)):
        if abs(gamma - endpoint) < ENDPOINT_TOLERANCE:
            notes.append(f"gamma within {ENDPOINT_TOLERANCE} of the {label} window endpoint")

    if pedantic:
        for note in notes:
            logger.warning(f"Strichartz triple (q={q}, r={r}, gamma={gamma}): {note}.")

    return StrichartzDecision(
        admissible=not violations,
        violations=violations,
        window=(lower, upper),
        notes=notes,
    )


def nonlinearity_triple(d: int, p: float) -> StrichartzTriple:
    """
    The ``L^q_t L^{2p}_x`` pair that controls ``|u|^{p-1}u`` at regularity one.
    Accepts the closed range ``p_conf <= p <= p_e``.
    """
    _check_dimension(d)
    if p < (lower := conformal_exponent(d)):
        raise ExponentOutOfRange(p, lower, ">=")

    elif p > (upper := energy_critical_exponent(d)):
        raise ExponentOutOfRange(p, upper, "<=")

    denominator = (d - 2) * p - d
    q = math.inf if abs(denominator) < SCALING_TOLERANCE else 2 * p / denominator
    triple = StrichartzTriple(q=q, r=2 * p, gamma=1.0)
    assert abs(_inverse(q) + d / triple.r - (d / 2 - triple.gamma)) < SCALING_TOLERANCE
    return triple


def sample_valid_params(rng: np.random.Generator, size: int) -> list[ModelParams]:
    """
    Draw ``size`` valid parameter triples, uniform in ``d`` and in ``p``,
    with ``a`` spread over ``(a_min, a_min + 4)``.
    """
    samples: list[ModelParams] = []
    while len(samples) < size:
        d = int(rng.integers(MIN_DIMENSION, MAX_DIMENSION + 1))
        p = float(rng.uniform(conformal_exponent(d), energy_critical_exponent(d)))
        a = potential_threshold(d, p) + float(rng.uniform(0.0, 4.0))
        try:
            samples.append(validate(d, p, a))
        except (ExponentOutOfRange, PotentialBelowThreshold):
            continue

    return samples


def verdict(d: int, p: float, a: float) -> dict:
    """
    JSON-ready validation verdict plus, when valid, every derived constant.
    """
    try:
        params = validate(d, p, a)
    except (DimensionOutOfRange, ExponentOutOfRange, PotentialBelowThreshold) as err:
        return {
            "valid": False,
            "violation": type(err).__name__,
            "message": str(err),
            "bound": err.bound,
        }

    constants = derive(params).model_dump()
    triple: Optional[dict] = None
    try:
        triple = nonlinearity_triple(params.d, params.p).model_dump()
    except ExponentOutOfRange:
        triple = None

    return {"valid": True, **constants, "nonlinearity_triple": triple}
