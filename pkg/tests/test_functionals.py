import math

import numpy as np
import pytest

from wavelab.exceptions import ConeNotSampled, InsufficientHorizon, RangeOutsideGrid, ZeroField
from wavelab.exponents import derive, sigma_of, validate
from wavelab.functionals import (
    Region,
    cone_flux,
    energy,
    hardy_local,
    integral_estimates,
    interior_energy_series,
    morawetz_check,
    pointwise_envelopes,
    retarded_energy_check,
    tail_decay_check,
    tail_energy,
    virial,
    weighted_energy,
)
from wavelab.mesh import PhysicalState, RadialGrid, random_radial_field
from wavelab.solver import (
    ConeSampler,
    discrete_energy,
    evolve,
    evolve_two_sided,
    gaussian,
    polynomial_tail,
)

from .conftest import make_config


@pytest.fixture(scope="module")
def hardy_grid():
    return RadialGrid(d=3, n=2000, r_max=2.0)


def _witness(grid: RadialGrid, a: float) -> PhysicalState:
    sigma = sigma_of(grid.d, a)
    r = grid.nodes
    u = np.zeros_like(r)
    u_r = np.zeros_like(r)
    u[1:] = r[1:] ** (-sigma)
    u_r[1:] = -sigma * r[1:] ** (-sigma - 1)
    return PhysicalState(t=0.0, u=u, u_r=u_r, u_t=np.zeros_like(r))


def _flux_trajectory(params, n):
    config = make_config(params, n=n, r_max=16.0, t_final=6.0, record_every=n // 100)
    return evolve(gaussian().state(config.grid), config, [ConeSampler([1.0])])


def test_energy_matches_discrete_energy(nonlinear_trajectory):
    config = nonlinear_trajectory.config
    for state in (nonlinear_trajectory.states[0], nonlinear_trajectory.states[-1]):
        continuum = energy(state, config).total
        assert continuum == pytest.approx(discrete_energy(state, config), rel=1e-2)


def test_energy_regions_add_up(nonlinear_trajectory):
    config = nonlinear_trajectory.config
    state = nonlinear_trajectory.state_at(4.0)
    whole = energy(state, config)
    ball = energy(state, config, Region.ball(3.3))
    outside = energy(state, config, Region.annulus(3.3))
    assert ball.total + outside.total == pytest.approx(whole.total, rel=1e-12)
    assert whole.total == pytest.approx(
        whole.kinetic + whole.gradient + whole.hardy + whole.nonlinear
    )
    assert whole.hardy < 0
    assert whole.nonlinear > 0


def test_energy_switches(free_params):
    config = make_config(free_params, n=400, r_max=16.0, nonlinearity_on=False)
    breakdown = energy(gaussian().state(config.grid), config)
    assert breakdown.nonlinear == 0.0
    assert breakdown.hardy == 0.0
    assert breakdown.kinetic == 0.0


@pytest.mark.parametrize("d,a,R", [(3, 1.0, 1.0), (5, -1.0, 1.0), (3, 0.5, 1.5)])
def test_hardy_witness_vanishes(d, a, R):
    grid = RadialGrid(d=d, n=2000, r_max=2.0)
    witness = _witness(grid, a)
    report = hardy_local(witness, grid, R, a, u_r=witness.u_r)
    assert abs(report.f_R) <= 1e-5 * report.scale
    assert report.identity_value <= 1e-20 * report.scale
    assert report.identity_residual <= 1e-5 * report.scale


@pytest.mark.parametrize("a", [-0.2, 0.0, 0.5, 2.0])
def test_hardy_identity_on_random_fields(hardy_grid, a):
    rng = np.random.default_rng(11)
    for _ in range(5):
        field = random_radial_field(rng, hardy_grid)
        report = hardy_local(field, hardy_grid, 1.0, a, u_r=field.u_r)
        assert report.identity_residual <= 1e-4 * report.scale
        assert report.f_R >= -1e-4 * report.scale
        assert report.interior >= report.trace_bound - 1e-4 * report.scale
        assert report.strong_ratio is not None
        assert report.strong_ratio > 0


def test_hardy_radius_outside_grid(hardy_grid):
    field = random_radial_field(np.random.default_rng(0), hardy_grid)
    with pytest.raises(RangeOutsideGrid):
        hardy_local(field, hardy_grid, 2.5, 0.0)


def test_cone_flux_balance(reference_params):
    coarse = cone_flux(_flux_trajectory(reference_params, 200), 1.0, 2.0, 6.0)
    fine = cone_flux(_flux_trajectory(reference_params, 800), 1.0, 2.0, 6.0)
    assert fine.relative_residual <= 1e-2
    assert fine.residual < coarse.residual
    assert fine.cone.t1 == pytest.approx(2.0)
    assert fine.cone.t2 == pytest.approx(6.0)
    assert fine.full_flux_ratio > 0


@pytest.fixture(scope="module")
def cone_trajectory(reference_params):
    config = make_config(reference_params, n=400, r_max=16.0, t_final=6.0, record_every=4)
    return evolve(gaussian().state(config.grid), config, [ConeSampler([0.5, 1.0, 2.0])])


@pytest.mark.parametrize("eta", [0.5, 1.0, 2.0])
def test_cone_trace_hardy_slack(cone_trajectory, eta):
    report = cone_flux(cone_trajectory, eta, 2.0, 6.0)
    assert report.cone_hardy_slack_with_boundary >= -1e-8 * report.energy
    assert report.full_flux_ratio > 0


def test_cone_flux_needs_sampled_cone(cone_trajectory, nonlinear_trajectory):
    with pytest.raises(ConeNotSampled):
        cone_flux(cone_trajectory, 0.75, 2.0, 6.0)

    with pytest.raises(ConeNotSampled):
        cone_flux(nonlinear_trajectory, 1.0, 2.0, 6.0)


def test_virial_vanishes_at_rest(free_params):
    config = make_config(free_params, n=400, r_max=16.0)
    state = gaussian().state(config.grid)
    assert virial(state, config, 2.0) == 0.0


@pytest.fixture(scope="module")
def morawetz_trajectory():
    params = validate(3, 3.0, 0.3)
    config = make_config(params, n=800, r_max=16.0, t_final=4.0, record_every=4)
    return evolve(gaussian().state(config.grid), config)


def test_morawetz_virial_identity(morawetz_trajectory):
    report = morawetz_check(morawetz_trajectory, 2.0, 0.0, 4.0)
    assert abs(report.identity_residual) <= 2e-3 * report.energy
    assert report.passed
    assert report.slack >= -report.budget
    assert set(report.lhs_terms) == {"interior", "boundary", "exterior", "endpoint"}


def test_retarded_check_needs_past(morawetz_trajectory):
    with pytest.raises(InsufficientHorizon):
        retarded_energy_check(morawetz_trajectory, 1.0, 3.0)


@pytest.fixture(scope="module")
def two_sided_trajectory(reference_params):
    config = make_config(reference_params, n=400, r_max=16.0, t_final=8.0, record_every=5)
    return evolve_two_sided(gaussian().state(config.grid), config, -2.0)


@pytest.mark.parametrize("T", [4.0, 8.0])
def test_retarded_energy_check_holds(two_sided_trajectory, T):
    report = retarded_energy_check(two_sided_trajectory, 2.0, T)
    assert report.passed
    assert report.slack >= -1e-4 * two_sided_trajectory.initial_energy
    assert report.lhs > 0
    assert report.rhs_terms["exterior_energy"] > 0
    assert report.rhs == pytest.approx(sum(report.rhs_terms.values()))


def test_pointwise_envelopes_scale_invariant():
    grid = RadialGrid(d=3, n=800, r_max=16.0)
    single = gaussian(amplitude=1.0).state(grid)
    doubled = gaussian(amplitude=2.0).state(grid)
    first = pointwise_envelopes(single, grid, 3.0)
    second = pointwise_envelopes(doubled, grid, 3.0)
    assert second.scale_invariant == pytest.approx(first.scale_invariant, rel=1e-12)
    assert first.scale_invariant > 0
    assert first.interpolated > 0


def test_pointwise_envelopes_zero_field():
    grid = RadialGrid(d=3, n=100, r_max=8.0)
    zeros = np.zeros(grid.n + 1)
    with pytest.raises(ZeroField):
        pointwise_envelopes(PhysicalState(t=0.0, u=zeros, u_r=zeros, u_t=zeros), grid, 3.0)


def test_weighted_and_tail_energy():
    grid = RadialGrid(d=3, n=800, r_max=40.0)
    state = polynomial_tail(3, 3.0, 0.1, grid.r_max).state(grid)
    plain = weighted_energy(state, grid, 3.0, 0.0)
    weighted = weighted_energy(state, grid, 3.0, 0.5)
    assert weighted > plain > 0
    tails = [tail_energy(state, grid, 3.0, 0.5, r) for r in (1.0, 4.0, 16.0)]
    assert tails[0] <= weighted
    assert tails[0] > tails[1] > tails[2] > 0


def test_tail_decay_report(nonlinear_trajectory):
    report = tail_decay_check(nonlinear_trajectory, 0.5, [1.0, 2.0])
    assert len(report.energy_ratio) == 2
    assert all(ratio is None or ratio >= 0 for ratio in report.energy_ratio)
    assert report.weighted_energy > 0


def test_integral_estimates_forward_only(nonlinear_trajectory):
    estimates = integral_estimates(nonlinear_trajectory, 2.0)
    assert estimates.space_time_ratio is None
    assert len(estimates.times) == len(estimates.ratios)
    assert np.all(estimates.ratios >= 0)


def test_interior_energy_series(nonlinear_trajectory):
    series = interior_energy_series(nonlinear_trajectory, 1.0)
    assert len(series.times) > 0
    assert np.all(series.times > 0)
    assert np.all(series.radii < series.times)
    assert np.all(series.positive >= 0)
    assert not math.isnan(series.slope)


def test_integral_estimates_use_given_kappa(nonlinear_trajectory, reference_params):
    p = reference_params.p
    kappa_0 = derive(reference_params).kappa_0
    default = integral_estimates(nonlinear_trajectory, 2.0)
    explicit = integral_estimates(nonlinear_trajectory, 2.0, kappa_0)
    assert explicit.ratios == pytest.approx(default.ratios)

    kappa = kappa_0 + 0.2
    weighted = integral_estimates(nonlinear_trajectory, 2.0, kappa)
    data = nonlinear_trajectory.physical_at(0.0)
    grid = nonlinear_trajectory.grid

    def bound(k):
        return 2.0 ** (-(p + 5) / (p + 3) * k) * weighted_energy(data, grid, p, k) ** (4 / (p + 3))

    early = np.abs(default.times) <= 2.0
    expected = default.ratios[early] * bound(kappa_0) / bound(kappa)
    assert weighted.ratios[early] == pytest.approx(expected, rel=1e-9)
