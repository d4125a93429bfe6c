"""
Energies, light-cone fluxes, local Hardy forms, virial and Morawetz quantities,
and the weighted tail diagnostics, each reported with its residual or slack.
"""

import math
from typing import Literal, Optional, Union

import numpy as np
from scipy.integrate import trapezoid

from wavelab._logging import logger
from wavelab._models import FloatArray, WaveLabModel
from wavelab._utils import is_decreasing, trend_slope
from wavelab.exceptions import InsufficientHorizon, ZeroField
from wavelab.exponents import sigma_of
from wavelab.mesh import ConeSection, PhysicalState, RadialGrid, interpolate, shell_integral
from wavelab.solver import FieldState, SolverConfig, Trajectory, to_physical

AnyState = Union[FieldState, PhysicalState]


class Region(WaveLabModel):
    kind: Literal["ball", "annulus", "all"] = "all"
    r1: float = 0.0
    r2: Optional[float] = None

    @classmethod
    def ball(cls, radius: float) -> "Region":
        return cls(kind="ball", r2=radius)

    @classmethod
    def annulus(cls, r1: float, r2: Optional[float] = None) -> "Region":
        return cls(kind="annulus", r1=r1, r2=r2)

    @classmethod
    def everywhere(cls) -> "Region":
        return cls()

    def bounds(self, grid: RadialGrid) -> tuple[float, float]:
        if self.kind == "all":
            return 0.0, grid.r_max

        elif self.kind == "ball":
            return 0.0, grid.r_max if self.r2 is None else self.r2

        return self.r1, grid.r_max if self.r2 is None else self.r2


class EnergyBreakdown(WaveLabModel):
    kinetic: float
    gradient: float
    hardy: float
    nonlinear: float
    total: float
    region: Region


def _physical(state: AnyState, grid: RadialGrid) -> PhysicalState:
    return state if isinstance(state, PhysicalState) else to_physical(state, grid)


def _exterior(samples: np.ndarray, grid: RadialGrid, radius: float, power: float) -> float:
    if radius >= grid.r_max:
        return 0.0

    return shell_integral(samples, grid, r_a=radius, power=power)


def energy(
    state: AnyState, config: SolverConfig, region: Optional[Region] = None
) -> EnergyBreakdown:
    """
    Local energy ``½u_t² + ½u_r² + (a/2)u²/r² + |u|^{p+1}/(p+1)`` on ``region``.
    The potential and the nonlinearity follow the switches of ``config``.
    """
    grid = config.grid
    region = region or Region.everywhere()
    phys = _physical(state, grid)
    r_a, r_b = region.bounds(grid)

    kinetic = 0.5 * shell_integral(phys.u_t**2, grid, r_a, r_b)
    gradient = 0.5 * shell_integral(phys.u_r**2, grid, r_a, r_b)
    hardy = 0.5 * config.a_eff * shell_integral(phys.u**2, grid, r_a, r_b, power=grid.d - 3)
    nonlinear = 0.0
    if config.nonlinearity_on:
        p = config.p
        nonlinear = shell_integral(np.abs(phys.u) ** (p + 1), grid, r_a, r_b) / (p + 1)

    return EnergyBreakdown(
        kinetic=kinetic,
        gradient=gradient,
        hardy=hardy,
        nonlinear=nonlinear,
        total=kinetic + gradient + hardy + nonlinear,
        region=region,
    )


def _weighted_density(phys: PhysicalState, grid: RadialGrid, p: float, kappa: float):
    density = phys.u_r**2 + phys.u_t**2 + np.abs(phys.u) ** (p + 1)
    return (grid.nodes**kappa + 1) * density


def weighted_energy(state: AnyState, grid: RadialGrid, p: float, kappa: float) -> float:
    """
    ``E_κ = ∫(|x|^κ + 1)(|∇u|² + u_t² + |u|^{p+1}) dx``, without the ½ factors.
    """
    phys = _physical(state, grid)
    return shell_integral(_weighted_density(phys, grid, p, kappa), grid)


def tail_energy(state: AnyState, grid: RadialGrid, p: float, kappa: float, r: float) -> float:
    """
    ``E_{κ,r}``: the weighted energy restricted to ``|x| > r/2``.
    """
    phys = _physical(state, grid)
    return _exterior(_weighted_density(phys, grid, p, kappa), grid, r / 2, grid.d - 1)


class FluxReport(WaveLabModel):
    cone: ConeSection
    flux_value: float
    energy_delta: float
    residual: float
    relative_residual: float
    energy: float
    full_flux_ratio: float
    """
    Whole sampled cone flux ``∫(u_r+u_t)² + u²/r² + |u|^{p+1}`` over the energy.
    """

    cone_hardy_slack: float
    cone_hardy_slack_with_boundary: float


def cone_flux(trajectory: Trajectory, eta: float, t1: float, t2: float) -> FluxReport:
    """
    Compare the energy gained by the ball ``B(0, t - eta)``
    between ``t1`` and ``t2`` with the flux through the cone ``|x| = t - eta``.
    """
    samples = trajectory.cone(eta)
    config = trajectory.config
    grid = config.grid
    d, p, a = grid.d, config.p, config.a_eff
    c_d = grid.c_d

    first, last = trajectory.state_at(t1), trajectory.state_at(t2)
    cone = ConeSection(eta=eta, t1=first.t, t2=last.t)
    slack = 1e-9 * max(1.0, abs(cone.t2))
    window = (samples.t >= cone.t1 - slack) & (samples.t <= cone.t2 + slack)
    t, r = samples.t[window], samples.r[window]
    u, u_r, u_t = samples.u[window], samples.u_r[window], samples.u_t[window]

    nonlinear = np.abs(u) ** (p + 1) if config.nonlinearity_on else np.zeros_like(u)
    density = (
        0.5 * (u_r + u_t) ** 2 * r ** (d - 1)
        + 0.5 * a * u**2 * r ** (d - 3)
        + nonlinear * r ** (d - 1) / (p + 1)
    )
    flux_value = c_d * float(trapezoid(density, t)) if len(t) > 1 else 0.0
    energy_delta = (
        energy(last, config, Region.ball(cone.t2 - eta)).total
        - energy(first, config, Region.ball(cone.t1 - eta)).total
    )
    total = float(trajectory.initial_energy)
    residual = abs(flux_value - energy_delta)

    # Whole sampled cone.
    t_all, r_all = samples.t, samples.r
    trace = samples.u
    derivative = samples.u_r + samples.u_t
    full_nonlinear = np.abs(trace) ** (p + 1) if config.nonlinearity_on else 0 * trace
    full_density = (
        derivative**2 * r_all ** (d - 1)
        + trace**2 * r_all ** (d - 3)
        + full_nonlinear * r_all ** (d - 1)
    )
    full_flux = c_d * float(trapezoid(full_density, t_all)) if len(t_all) > 1 else 0.0

    h = (d - 2) / 2
    if len(t_all) > 1:
        plain = c_d * float(
            trapezoid(derivative**2 * r_all ** (d - 1) - h**2 * trace**2 * r_all ** (d - 3), t_all)
        )
        boundary = c_d * h * (
            r_all[-1] ** (d - 2) * trace[-1] ** 2 - r_all[0] ** (d - 2) * trace[0] ** 2
        )
    else:
        plain = boundary = 0.0

    return FluxReport(
        cone=cone,
        flux_value=flux_value,
        energy_delta=energy_delta,
        residual=residual,
        relative_residual=residual / total if total > 0 else 0.0,
        energy=total,
        full_flux_ratio=full_flux / total if total > 0 else 0.0,
        cone_hardy_slack=plain,
        cone_hardy_slack_with_boundary=plain + boundary,
    )


class HardyReport(WaveLabModel):
    R: float
    f_R: float
    identity_value: float
    identity_residual: float
    boundary_term: float
    interior: float
    """
    The form without its boundary term.
    """

    trace_bound: float
    """
    Lower bound ``-c_d σ R^{d-2} u(R)²`` for ``interior``.
    """

    strong_ratio: Optional[float]
    """
    Observed constant of ``∫_{B_R}(|∇u|² + u²/|x|²) <= C (f(R) + ∫_{|x|=R} u²/|x| dS)``.
    """

    scale: float


def hardy_local(
    state: AnyState,
    grid: RadialGrid,
    R: float,
    a: float,
    u_r: Optional[np.ndarray] = None,
) -> HardyReport:
    """
    The local Hardy form ``f(R)`` on the ball of radius ``R`` next to the
    square it equals after integrating by parts. ``u_r`` replaces the
    finite-difference gradient when given.
    """
    grid.check_range(R, R)
    phys = _physical(state, grid)
    d, c_d = grid.d, grid.c_d
    sigma = sigma_of(d, a)
    u = phys.u
    grad = phys.u_r if u_r is None else np.asarray(u_r, dtype=float)

    gradient = shell_integral(grad**2, grid, 0.0, R)
    inverse_square = shell_integral(u**2, grid, 0.0, R, power=d - 3)
    trace = c_d * R ** (d - 2) * interpolate(u, grid, R) ** 2

    interior = gradient + a * inverse_square
    boundary_term = sigma * trace
    f_R = interior + boundary_term
    identity_value = shell_integral(
        (grid.nodes * grad + sigma * u) ** 2, grid, 0.0, R, power=d - 3
    )
    scale = gradient + inverse_square
    denominator = f_R + trace
    return HardyReport(
        R=R,
        f_R=f_R,
        identity_value=identity_value,
        identity_residual=abs(f_R - identity_value),
        boundary_term=boundary_term,
        interior=interior,
        trace_bound=-sigma * trace,
        strong_ratio=scale / denominator if denominator > 0 else None,
        scale=scale,
    )


def virial(state: AnyState, config: SolverConfig, R: float) -> float:
    """
    ``M(t) = ∫_{B_R} u_t (x·∇u + k u) + R ∫_{|x|>R} u_t (∂_r u + k u/|x|)``
    with ``k = (d-1)/2``.
    """
    grid = config.grid
    grid.check_range(R, R)
    phys = _physical(state, grid)
    k = config.k
    inner = shell_integral(phys.u_t * (grid.nodes * phys.u_r + k * phys.u), grid, 0.0, R)
    outer = _exterior(phys.u_t * phys.u_r, grid, R, grid.d - 1) + k * _exterior(
        phys.u_t * phys.u, grid, R, grid.d - 2
    )
    return inner + R * outer


def virial_bound(state: AnyState, config: SolverConfig, R: float) -> float:
    """
    Upper bound for ``|M(t)|`` in terms of the energy and the ``L²`` pieces of ``u``.
    """
    grid = config.grid
    phys = _physical(state, grid)
    d, a = grid.d, config.a_eff
    sigma = sigma_of(d, a)
    mu = (d**2 - 1) / 4
    total = energy(phys, config).total
    ball_l2 = shell_integral(phys.u**2, grid, 0.0, R)
    exterior = _exterior(phys.u**2, grid, R, d - 3)
    return (
        R * total
        - (mu + a - 2 * sigma) / (2 * R) * ball_l2
        - (config.lambda_d + a) * R / 2 * exterior
    )


class MorawetzReport(WaveLabModel):
    R: float
    t1: float
    t2: float
    lhs_terms: dict[str, float]
    lhs_total: float
    rhs: float
    virial_values: tuple[float, float]
    slack: float
    identity_residual: float
    """
    ``interior + boundary + exterior - (M(T1) - M(T2))/R``.
    """

    virial_bound_slack: tuple[float, float]
    energy: float
    budget: float
    passed: bool


def _time_integral(values: list[float], times: list[float]) -> float:
    return float(trapezoid(values, times)) if len(times) > 1 else 0.0


def morawetz_check(
    trajectory: Trajectory, R: float, T1: float, T2: float, rel_tol: float = 1e-4
) -> MorawetzReport:
    config = trajectory.config
    grid = config.grid
    grid.check_range(R, R)
    d, p, a = grid.d, config.p, config.a_eff
    c_d = grid.c_d
    lam, mu = config.lambda_d, (d**2 - 1) / 4
    sigma = sigma_of(d, a)

    start, end = trajectory.state_at(T1), trajectory.state_at(T2)
    states = trajectory.states_between(start.t, end.t)
    times, interior, surface, exterior = [], [], [], []
    for state in states:
        phys = to_physical(state, grid)
        u = phys.u
        ball = (
            shell_integral(phys.u_r**2 + phys.u_t**2, grid, 0.0, R)
            + a * shell_integral(u**2, grid, 0.0, R, power=d - 3)
        )
        outside = (a + lam) * _exterior(u**2, grid, R, d - 4)
        if config.nonlinearity_on:
            power = np.abs(u) ** (p + 1)
            coefficient = ((d - 1) * (p - 1) - 2) / (p + 1)
            ball += coefficient * shell_integral(power, grid, 0.0, R)
            outside += (d - 1) * (p - 1) / (2 * (p + 1)) * _exterior(power, grid, R, d - 2)

        times.append(state.t)
        interior.append(ball)
        surface.append(c_d * R ** (d - 1) * interpolate(u, grid, R) ** 2)
        exterior.append(outside)

    first, last = to_physical(start, grid), to_physical(end, grid)
    lhs_terms = {
        "interior": _time_integral(interior, times) / (2 * R),
        "boundary": (d - 1) / (4 * R**2) * _time_integral(surface, times),
        "exterior": _time_integral(exterior, times),
        "endpoint": (mu + a - 2 * sigma)
        / (2 * R**2)
        * (
            shell_integral(first.u**2, grid, 0.0, R)
            + shell_integral(last.u**2, grid, 0.0, R)
        ),
    }
    total = energy(first, config).total
    rhs = 2 * total + 0.5 * (-lam + abs(a)) * (
        _exterior(first.u**2, grid, R, d - 3) + _exterior(last.u**2, grid, R, d - 3)
    )
    lhs_total = sum(lhs_terms.values())
    m1, m2 = virial(first, config, R), virial(last, config, R)
    identity_residual = (
        lhs_terms["interior"] + lhs_terms["boundary"] + lhs_terms["exterior"] - (m1 - m2) / R
    )
    slack = rhs - lhs_total
    budget = rel_tol * abs(total)
    if slack < -budget:
        logger.warning(f"Morawetz slack {slack!r} below -{budget!r} for R={R!r}.")

    return MorawetzReport(
        R=R,
        t1=start.t,
        t2=end.t,
        lhs_terms=lhs_terms,
        lhs_total=lhs_total,
        rhs=rhs,
        virial_values=(m1, m2),
        slack=slack,
        identity_residual=identity_residual,
        virial_bound_slack=(
            virial_bound(first, config, R) - abs(m1),
            virial_bound(last, config, R) - abs(m2),
        ),
        energy=total,
        budget=budget,
        passed=bool(slack >= -budget),
    )


class RetardedEnergyReport(WaveLabModel):
    R: float
    T: float
    lhs: float
    rhs_terms: dict[str, float]
    rhs: float
    slack: float
    budget: float
    passed: bool


def retarded_energy_check(
    trajectory: Trajectory, R: float, T: float, rel_tol: float = 1e-4
) -> RetardedEnergyReport:
    """
    Interior energy averaged over ``[R, T]`` against the exterior energy over
    ``[-R, R]`` plus the inverse-power corrections. Needs a trajectory that
    covers ``[-R, T]``.
    """
    config = trajectory.config
    grid = config.grid
    d, a = grid.d, config.a_eff
    earliest, latest = trajectory.state_at(-R), trajectory.state_at(T)
    if not 0 < R < T:
        raise InsufficientHorizon(f"Retarded window needs 0 < R < T, got R={R!r}, T={T!r}.")

    inside_t, inside = [], []
    outside_t, outside = [], []
    weighted_t, weighted = [], []
    for state in trajectory.states_between(earliest.t, latest.t):
        phys = to_physical(state, grid)
        if state.t >= R - 1e-9:
            inside_t.append(state.t)
            inside.append(energy(phys, config, Region.ball(R)).total)

        if state.t <= R + 1e-9:
            outside_t.append(state.t)
            outside.append(energy(phys, config, Region.annulus(R)).total)

        weighted_t.append(state.t)
        weighted.append(_exterior(phys.u**2, grid, R, d - 4))

    first, last = to_physical(earliest, grid), to_physical(latest, grid)
    coefficient = R * (abs(a) - config.lambda_d)
    rhs_terms = {
        "exterior_energy": _time_integral(outside, outside_t),
        "space_time": coefficient * _time_integral(weighted, weighted_t),
        "endpoints": coefficient
        * 0.5
        * (_exterior(first.u**2, grid, R, d - 3) + _exterior(last.u**2, grid, R, d - 3)),
    }
    lhs = _time_integral(inside, inside_t)
    rhs = sum(rhs_terms.values())
    budget = rel_tol * abs(trajectory.initial_energy)
    return RetardedEnergyReport(
        R=R,
        T=T,
        lhs=lhs,
        rhs_terms=rhs_terms,
        rhs=rhs,
        slack=rhs - lhs,
        budget=budget,
        passed=bool(rhs - lhs >= -budget),
    )


class Envelopes(WaveLabModel):
    scale_invariant: float
    """
    ``sup r^{(d-2)/2}|u| / ‖u‖_{Ḣ¹}``.
    """

    interpolated: float
    """
    ``sup r^{2(d-1)/(p+3)}|u| / (‖u‖_{Ḣ¹}^{2/(p+3)} ‖u‖_{p+1}^{(p+1)/(p+3)})``.
    """


def pointwise_envelopes(state: AnyState, grid: RadialGrid, p: float) -> Envelopes:
    phys = _physical(state, grid)
    r, u = grid.nodes, np.abs(phys.u)
    h1 = math.sqrt(shell_integral(phys.u_r**2, grid))
    lp1 = shell_integral(u ** (p + 1), grid) ** (1 / (p + 1))
    if h1 == 0 or lp1 == 0:
        raise ZeroField()

    d = grid.d
    first = float(np.max(r ** ((d - 2) / 2) * u)) / h1
    second = float(np.max(r ** (2 * (d - 1) / (p + 3)) * u)) / (
        h1 ** (2 / (p + 3)) * lp1 ** ((p + 1) / (p + 3))
    )
    return Envelopes(scale_invariant=first, interpolated=second)


class TailDecayReport(WaveLabModel):
    kappa: float
    radii: list[float]
    energy_ratio: list[Optional[float]]
    """
    Per radius, the largest ``∫_{|x|>r+|t|}(...)/(r^{-κ} E_{κ,r})`` over recorded times.
    """

    pointwise_ratio: Optional[float]
    weighted_energy: float
    plain_weighted_energy: float


def _exterior_density(phys: PhysicalState, grid: RadialGrid, p: float, radius: float):
    # |∇u|² + u²/|x|² + u_t² + |u|^{p+1} on |x| > radius.
    density = phys.u_r**2 + phys.u_t**2 + np.abs(phys.u) ** (p + 1)
    dense = _exterior(density, grid, radius, grid.d - 1)
    return dense + _exterior(phys.u**2, grid, radius, grid.d - 3)


def tail_decay_check(
    trajectory: Trajectory, kappa: float, r_list: list[float], t0: float = 0.0
) -> TailDecayReport:
    """
    Exterior energy and pointwise decay of the solution outside the cone
    ``|x| > r + |t|`` against the weighted tail energy of the data at ``t0``.
    """
    config = trajectory.config
    grid = config.grid
    p = config.p
    data = to_physical(trajectory.state_at(t0), grid)
    e_kappa = weighted_energy(data, grid, p, kappa)
    weighted = _weighted_density(data, grid, p, kappa)

    ratios: list[Optional[float]] = []
    for r in r_list:
        bound = r ** (-kappa) * tail_energy(data, grid, p, kappa, r)
        if bound <= 0:
            ratios.append(None)
            continue

        worst = 0.0
        for state in trajectory.states:
            radius = r + abs(state.t - t0)
            if radius >= grid.r_max:
                continue

            phys = to_physical(state, grid)
            worst = max(worst, _exterior_density(phys, grid, p, radius) / bound)

        ratios.append(worst)

    pointwise: Optional[float] = None
    floor = 1e-12 * e_kappa
    for state in trajectory.states:
        elapsed = abs(state.t - t0)
        phys = to_physical(state, grid)
        x = grid.nodes
        mask = x > elapsed
        rho = x[mask] - elapsed
        tails = shell_integral(
            weighted, grid, r_a=np.minimum(rho / 2, grid.r_max), r_b=np.full_like(rho, grid.r_max)
        )
        keep = tails > floor
        if not np.any(keep):
            continue

        d = grid.d
        bound = (
            x[mask][keep] ** (-2 * (d - 1) / (p + 3))
            * rho[keep] ** (-2 * kappa / (p + 3))
            * tails[keep] ** (2 / (p + 3))
        )
        ratio = float(np.max(np.abs(phys.u[mask][keep]) / bound))
        pointwise = ratio if pointwise is None else max(pointwise, ratio)

    return TailDecayReport(
        kappa=kappa,
        radii=list(r_list),
        energy_ratio=ratios,
        pointwise_ratio=pointwise,
        weighted_energy=e_kappa,
        plain_weighted_energy=weighted_energy(data, grid, p, 0.0),
    )


class IntegralEstimates(WaveLabModel):
    R: float
    times: FloatArray
    ratios: FloatArray
    """
    ``∫_{|x|>R} u²/|x|²`` over its bound at each recorded time.
    """

    space_time_T: Optional[float]
    space_time_ratio: Optional[float]


def integral_estimates(
    trajectory: Trajectory, R: float, kappa: Optional[float] = None
) -> IntegralEstimates:
    config = trajectory.config
    grid = config.grid
    d, p = grid.d, config.p
    kappa_0 = ((d + 2) - (d - 2) * p) / (p + 1)
    kappa = kappa_0 if kappa is None else kappa
    data = to_physical(trajectory.state_at(0.0), grid)
    scale = weighted_energy(data, grid, p, kappa) ** (4 / (p + 3))
    decay = (p + 5) / (p + 3) * kappa
    spread = -4 * (d - 1) / (p + 3)

    times, ratios, inverse_cube = [], [], []
    for state in trajectory.states:
        phys = to_physical(state, grid)
        lhs = _exterior(phys.u**2, grid, R, d - 3)
        t = abs(state.t)
        if t <= R:
            bound = R ** (-decay) * scale
        else:
            bound = (t ** (-decay) + (t - R) * R ** (spread + d - 3)) * scale

        times.append(state.t)
        ratios.append(lhs / bound if bound > 0 else 0.0)
        inverse_cube.append(_exterior(phys.u**2, grid, R, d - 4))

    t_arr = np.array(times)
    T = min(-t_arr[0], t_arr[-1], 2 * R * (1 - 1e-9))
    space_time_ratio = None
    if T > R:
        window = np.abs(t_arr) <= T + 1e-9
        lhs = float(trapezoid(np.array(inverse_cube)[window], t_arr[window]))
        bound = (R ** (-decay) + (T - R) ** 2 * R ** (spread + d - 4)) * scale
        space_time_ratio = lhs / bound if bound > 0 else 0.0

    return IntegralEstimates(
        R=R,
        times=t_arr,
        ratios=np.array(ratios),
        space_time_T=T if T > R else None,
        space_time_ratio=space_time_ratio,
    )


class InteriorEnergySeries(WaveLabModel):
    c: float
    times: FloatArray
    radii: FloatArray
    energy: FloatArray
    positive: FloatArray
    """
    ``∫(|∇u|² + u²/|x|² + u_t² + |u|^{p+1})`` on the same balls.
    """

    slope: float
    decreasing: bool


def interior_energy_series(
    trajectory: Trajectory, c: float, kappa_0: Optional[float] = None, start: float = 0.0
) -> InteriorEnergySeries:
    """
    Energy on the shrinking interior ball ``|x| < t - c·t^{1-κ_0}`` at each
    recorded time after ``start``.
    """
    config = trajectory.config
    grid = config.grid
    d, p = grid.d, config.p
    kappa_0 = ((d + 2) - (d - 2) * p) / (p + 1) if kappa_0 is None else kappa_0

    times, radii, signed, positive = [], [], [], []
    for state in trajectory.states:
        t = state.t
        if t <= max(start, 0.0):
            continue

        rho = t - c * t ** (1 - kappa_0)
        if not 0 < rho <= grid.r_max:
            continue

        phys = to_physical(state, grid)
        times.append(t)
        radii.append(rho)
        signed.append(energy(phys, config, Region.ball(rho)).total)
        density = phys.u_r**2 + phys.u_t**2 + np.abs(phys.u) ** (p + 1)
        positive.append(
            shell_integral(density, grid, 0.0, rho)
            + shell_integral(phys.u**2, grid, 0.0, rho, power=d - 3)
        )

    return InteriorEnergySeries(
        c=c,
        times=np.array(times),
        radii=np.array(radii),
        energy=np.array(signed),
        positive=np.array(positive),
        slope=trend_slope(times, positive),
        decreasing=is_decreasing(positive, rtol=1e-6),
    )
