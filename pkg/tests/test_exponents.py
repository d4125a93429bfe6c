import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from wavelab.exceptions import DimensionOutOfRange, ExponentOutOfRange, PotentialBelowThreshold
from wavelab.exponents import (
    conformal_exponent,
    derive,
    energy_critical_exponent,
    gamma_window,
    nonlinearity_triple,
    potential_threshold,
    sample_valid_params,
    sigma_of,
    sphere_area,
    strichartz_admissible,
    validate,
    verdict,
)


@st.composite
def valid_params(draw):
    d = draw(st.integers(min_value=3, max_value=6))
    fraction = draw(st.floats(min_value=0.0, max_value=0.99))
    p = conformal_exponent(d) + fraction * (energy_critical_exponent(d) - conformal_exponent(d))
    offset = draw(st.floats(min_value=1e-6, max_value=4.0))
    return validate(d, p, potential_threshold(d, p) + offset)


def test_reference_constants():
    constants = derive(validate(3, 3.0, -0.2))
    assert constants.a_min == pytest.approx(-0.25)
    assert constants.p_conf == 3.0
    assert constants.p_e == 5.0
    assert constants.lambda_d == 0.0
    assert constants.mu_d == 2.0
    assert constants.hardy_const == 0.25
    assert constants.kappa_0 == pytest.approx(0.5)
    assert constants.beta == pytest.approx(0.25)
    assert constants.s_p == pytest.approx(0.5)
    assert constants.c_d == pytest.approx(4 * math.pi)
    assert constants.sigma == pytest.approx(0.5 - math.sqrt(0.05))


@pytest.mark.parametrize("d,area", [(3, 4 * math.pi), (4, 2 * math.pi**2), (5, 8 * math.pi**2 / 3)])
def test_sphere_area(d, area):
    assert sphere_area(d) == pytest.approx(area)


@pytest.mark.parametrize(
    "d,p,a,error",
    [
        (2, 3.0, 0.0, DimensionOutOfRange),
        (7, 1.5, 0.0, DimensionOutOfRange),
        (3, 2.5, 0.0, ExponentOutOfRange),
        (3, 5.0, 0.0, ExponentOutOfRange),
        (3, 3.0, -0.25, PotentialBelowThreshold),
        (3, 3.0, -1.0, PotentialBelowThreshold),
    ],
)
def test_validate_rejects(d, p, a, error):
    with pytest.raises(error) as info:
        validate(d, p, a)

    assert info.value.value in (d, p, a)


def test_validate_accepts_conformal_endpoint():
    params = validate(4, conformal_exponent(4), 0.0)
    assert params.p == conformal_exponent(4)


@pytest.mark.fuzzing
@settings(max_examples=200, deadline=None)
@given(params=valid_params())
def test_exponent_identities(params):
    constants = derive(params)
    assert 1 - constants.kappa_0 == pytest.approx(2 * constants.beta, abs=1e-12)
    assert constants.sigma**2 - (params.d - 2) * constants.sigma == pytest.approx(
        params.a, abs=1e-9
    )
    assert constants.mu_d + params.a - 2 * constants.sigma >= 0.75 - 1e-12
    assert constants.a_min <= 0
    assert constants.p_conf <= params.p < constants.p_e
    assert 0 < constants.kappa_0 <= 1
    assert constants.sigma < (params.d - 2) / 2 + 1e-12


@pytest.mark.fuzzing
@settings(max_examples=100, deadline=None)
@given(params=valid_params())
def test_nonlinearity_triple_scaling(params):
    triple = nonlinearity_triple(params.d, params.p)
    inv_q = 0.0 if math.isinf(triple.q) else 1 / triple.q
    assert inv_q + params.d / triple.r == pytest.approx(params.d / 2 - 1, abs=1e-12)
    assert triple.gamma == 1.0


def test_nonlinearity_triple_endpoints():
    assert math.isinf(nonlinearity_triple(3, 3.0).q)
    triple = nonlinearity_triple(3, 5.0)
    assert triple.q == pytest.approx(5.0)
    assert triple.r == pytest.approx(10.0)
    with pytest.raises(ExponentOutOfRange):
        nonlinearity_triple(3, 5.1)


def test_sigma_of_free_case():
    assert sigma_of(3, 0.0) == 0.0
    assert sigma_of(5, -1.0) == pytest.approx(1.5 - math.sqrt(1.25))


def test_strichartz_admissible_triple():
    decision = strichartz_admissible(3, 4.0, 4.0, 0.5, 0.0)
    assert decision.admissible
    assert decision.violations == []
    assert decision.window == gamma_window(3, 4.0, 0.0)


def test_strichartz_energy_triple_d4():
    assert strichartz_admissible(4, math.inf, 2.0, 0.0, 0.0).admissible


def test_strichartz_reports_every_violation():
    decision = strichartz_admissible(3, 2.0, 6.0, 0.5, 0.0)
    assert not decision.admissible
    assert "q>2 required when d=3" in decision.violations
    assert any("admissibility" in v for v in decision.violations)

    decision = strichartz_admissible(3, 4.0, 4.0, 0.3, 0.0)
    assert any("scaling" in v for v in decision.violations)


@pytest.mark.parametrize("d,a", [(3, -0.5), (4, -1.5), (6, -4.5)])
def test_strichartz_below_hardy_threshold(d, a):
    assert all(math.isnan(end) for end in gamma_window(d, 4.0, a))

    decision = strichartz_admissible(d, 4.0, 4.0, 0.5, a)
    assert not decision.admissible
    assert "a>=-(d-2)^2/4 required" in decision.violations
    assert not decision.notes


def test_strichartz_pedantic_warns_near_endpoint(mocker):
    warning = mocker.patch("wavelab.exponents.logger.warning")
    lower, upper = gamma_window(3, 4.0, 0.0)
    decision = strichartz_admissible(3, 4.0, math.inf, upper, 0.0, pedantic=True)
    assert not decision.admissible
    assert decision.notes
    warning.assert_called_once()


def test_sample_valid_params():
    rng = np.random.default_rng(7)
    samples = sample_valid_params(rng, 50)
    assert len(samples) == 50
    for params in samples:
        assert validate(params.d, params.p, params.a) == params


def test_verdict_valid():
    result = verdict(3, 3.0, -0.2)
    assert result["valid"]
    assert result["a_min"] == pytest.approx(-0.25)
    assert result["nonlinearity_triple"]["r"] == 6.0


def test_verdict_invalid():
    result = verdict(3, 3.0, -0.3)
    assert result == {
        "valid": False,
        "violation": "PotentialBelowThreshold",
        "message": result["message"],
        "bound": pytest.approx(-0.25),
    }
    assert "a=-0.3" in result["message"]
