"""
Radiation fields along characteristics, free-wave comparators and the
energy-norm distances that measure scattering.
"""

from collections.abc import Sequence
from typing import Literal, Optional

import numpy as np
from scipy.integrate import cumulative_trapezoid, trapezoid

from wavelab._logging import logger
from wavelab._models import FloatArray, WaveLabModel
from wavelab._utils import is_decreasing, power_law_exponent
from wavelab.exceptions import DimensionOutOfRange, InsufficientHorizon
from wavelab.exponents import derive
from wavelab.functionals import Region, energy
from wavelab.mesh import PhysicalState, RadialGrid, interpolate_many, shell_integral
from wavelab.solver import (
    FieldState,
    SolverConfig,
    Trajectory,
    evolve,
    evolve_two_sided,
    to_physical,
)

Direction = Literal["+", "-"]
MIN_CONE_DEPTH = 1.0
SUPPORT_THRESHOLD = 1e-12


class RadiationProfile(WaveLabModel):
    direction: Direction
    eta_grid: FloatArray
    g: FloatArray
    """
    ``g₊(η)`` for direction ``+``, ``g₋(s)`` for direction ``-``.
    """

    t_used: float
    rate_times: FloatArray
    rate_residuals: FloatArray
    """
    Row ``k`` holds ``|profile at rate_times[k] - g|`` over ``eta_grid``.
    """

    norm_squared: float
    energy_ratio: float
    """
    ``c_d ‖g‖²_{L²} / E``.
    """

    def at(self, eta: np.ndarray) -> np.ndarray:
        return np.interp(eta, self.eta_grid, self.g, left=0.0, right=0.0)


def _half_characteristic(
    state: FieldState, grid: RadialGrid, radii: np.ndarray, sign: int
) -> np.ndarray:
    # ½(w_t + sign·w_r) at the given radii.
    w_r = np.gradient(state.w, grid.dr, edge_order=2)
    return 0.5 * (
        interpolate_many(state.wt, grid, radii) + sign * interpolate_many(w_r, grid, radii)
    )


def _cone_radii(t: float, eta_grid: np.ndarray, direction: Direction) -> np.ndarray:
    """
    Radii where the characteristics through ``eta_grid`` cross time ``t``:
    ``r = t - η`` outgoing, ``r = s - t`` incoming.
    """
    if direction == "+":
        return t - eta_grid

    return eta_grid - t


def _profile_at(
    state: FieldState, grid: RadialGrid, eta_grid: np.ndarray, direction: Direction
) -> np.ndarray:
    radii = _cone_radii(state.t, eta_grid, direction)
    return _half_characteristic(state, grid, radii, -1 if direction == "+" else +1)


def _check_horizon(t: float, eta_grid: np.ndarray, grid: RadialGrid, direction: Direction):
    radii = _cone_radii(t, eta_grid, direction)
    depth, reach = float(np.min(radii)), float(np.max(radii))
    if depth < MIN_CONE_DEPTH:
        raise InsufficientHorizon(
            f"Horizon |t|={abs(t)!r} is too short: the cone reaches radius {depth!r}."
        )

    elif reach > grid.r_max:
        raise InsufficientHorizon(f"Cone radius {reach!r} leaves the grid (r_max={grid.r_max!r}).")


def extract_radiation(
    trajectory: Trajectory,
    eta_grid: Sequence[float],
    direction: Direction = "+",
    t: Optional[float] = None,
    levels: int = 3,
) -> RadiationProfile:
    """
    Read the radiation field off the latest recorded state, or the earliest
    one for the incoming direction, and compare it with the same read-out at
    ``t/2, t/4, ...``.
    """
    grid = trajectory.grid
    etas = np.asarray(eta_grid, dtype=float)
    if t is None:
        t = trajectory.times[-1] if direction == "+" else trajectory.times[0]

    if (direction == "+" and t <= 0) or (direction == "-" and t >= 0):
        raise InsufficientHorizon(f"No {direction} radiation can be read at t={t!r}.")

    state = trajectory.state_at(t)
    _check_horizon(state.t, etas, grid, direction)
    g = _profile_at(state, grid, etas, direction)

    rate_times, residuals = [], []
    for k in range(1, levels + 1):
        earlier = state.t / 2**k
        if float(np.min(_cone_radii(earlier, etas, direction))) < MIN_CONE_DEPTH:
            break

        previous = trajectory.state_at(earlier)
        rate_times.append(previous.t)
        residuals.append(np.abs(_profile_at(previous, grid, etas, direction) - g))

    norm_squared = float(trapezoid(g**2, etas)) if len(etas) > 1 else 0.0
    total = trajectory.initial_energy
    return RadiationProfile(
        direction=direction,
        eta_grid=etas,
        g=g,
        t_used=state.t,
        rate_times=np.array(rate_times),
        rate_residuals=np.array(residuals).reshape(len(rate_times), len(etas)),
        norm_squared=norm_squared,
        energy_ratio=grid.c_d * norm_squared / total if total > 0 else 0.0,
    )


class HorizonStability(WaveLabModel):
    times: FloatArray
    differences: FloatArray
    """
    ``‖g^{(2t)} - g^{(t)}‖_{L²}`` for consecutive horizons.
    """

    fitted_exponent: float
    decreasing: bool


def horizon_stability(
    trajectory: Trajectory, eta_grid: Sequence[float], times: Sequence[float]
) -> HorizonStability:
    etas = np.asarray(eta_grid, dtype=float)
    profiles = [extract_radiation(trajectory, etas, t=t, levels=0) for t in times]
    differences = np.array(
        [
            np.sqrt(trapezoid((later.g - earlier.g) ** 2, etas))
            for earlier, later in zip(profiles[:-1], profiles[1:])
        ]
    )
    used = np.array([p.t_used for p in profiles[:-1]])
    return HorizonStability(
        times=used,
        differences=differences,
        fitted_exponent=power_law_exponent(used, differences),
        decreasing=is_decreasing(differences),
    )


def radiation_residual(
    trajectory: Trajectory, profile: RadiationProfile, t: Optional[float] = None
) -> float:
    """
    ``∫_0^∞ |r^k u_r + g(t - r)|² + |r^k u_t - g(t - r)|² dr`` at time ``t``,
    the latest recorded time by default.
    """
    grid = trajectory.grid
    state = trajectory.state_at(trajectory.times[-1] if t is None else t)
    phys = to_physical(state, grid)
    r = grid.nodes
    weight = r ** ((grid.d - 1) / 2)
    g = profile.at(state.t - r)
    integrand = (weight * phys.u_r + g) ** 2 + (weight * phys.u_t - g) ** 2
    return float(trapezoid(integrand, dx=grid.dr))


def free_config(config: SolverConfig, t_final: float, dt: Optional[float]) -> SolverConfig:
    """
    The same grid and step with ``a = 0`` and the nonlinearity off.
    """
    return SolverConfig(
        params=config.params,
        grid=config.grid,
        t_final=t_final,
        cfl=config.cfl,
        potential_on=False,
        nonlinearity_on=False,
        record_every=config.record_every,
        dt=dt,
    )


def support_radius(state: FieldState, grid: RadialGrid) -> float:
    scale = float(np.max(np.abs(state.w)) + np.max(np.abs(state.wt)))
    if scale == 0:
        return 0.0

    floor = SUPPORT_THRESHOLD * scale
    active = np.nonzero((np.abs(state.w) > floor) | (np.abs(state.wt) > floor))[0]
    return float(grid.nodes[active[-1]])


def free_comparator(trajectory: Trajectory, t_match: float) -> Trajectory:
    """
    Free wave that agrees with the solution at ``t_match``, evolved over the
    recorded window. The backward leg is skipped when it would reach the outer
    boundary.
    """
    match = trajectory.state_at(t_match)
    grid = trajectory.grid
    t_start, t_end = float(trajectory.times[0]), float(trajectory.times[-1])
    config = free_config(trajectory.config, t_end, trajectory.dt)
    backward_span = match.t - t_start
    if backward_span <= 0:
        return evolve(match, config)

    reach = support_radius(match, grid) + backward_span + 5 * grid.dr
    if reach > grid.r_max:
        logger.warning(
            f"Backward free evolution from t={match.t!r} needs r_max >= {reach!r}; "
            "the comparator covers only the forward window."
        )
        return evolve(match, config)

    return evolve_two_sided(match, config, t_start)


def energy_distance(
    u: PhysicalState,
    v: PhysicalState,
    grid: RadialGrid,
    r_a: float = 0.0,
    r_b: Optional[float] = None,
) -> float:
    """
    Squared ``Ḣ¹ × L²`` distance ``c_d ∫ (Δu_r² + Δu_t²) r^{d-1} dr`` on ``[r_a, r_b]``.
    """
    r_b = grid.r_max if r_b is None else min(r_b, grid.r_max)
    r_a = min(max(r_a, 0.0), r_b)
    return shell_integral((u.u_r - v.u_r) ** 2 + (u.u_t - v.u_t) ** 2, grid, r_a, r_b)


def cauchy_criterion(trajectory: Trajectory, T1: float, T2: float) -> float:
    """
    Distance between ``U(T1)`` and ``U(T2)`` pulled back to ``T1`` by the free flow.
    """
    grid = trajectory.grid
    first, second = trajectory.state_at(T1), trajectory.state_at(T2)
    reach = support_radius(second, grid) + abs(second.t - first.t) + 5 * grid.dr
    if reach > grid.r_max:
        logger.warning(
            f"Free pull-back from t={second.t!r} to t={first.t!r} reaches the outer boundary."
        )

    config = free_config(trajectory.config, first.t, trajectory.dt)
    pulled = evolve(second, config).states[0 if second.t > first.t else -1]
    return energy_distance(to_physical(first, grid), to_physical(pulled, grid), grid)


def radiation_free_wave_d3(
    profile: RadiationProfile, grid: RadialGrid, t: float
) -> PhysicalState:
    """
    The three-dimensional free wave ``w = G(t - r) - G(t + r)`` with ``G' = g₊``.
    """
    if grid.d != 3:
        raise DimensionOutOfRange(grid.d, 3, "==")

    etas = profile.eta_grid
    primitive = cumulative_trapezoid(profile.g, etas, initial=0.0)
    r = grid.nodes

    def big_g(s):
        return np.interp(s, etas, primitive, left=0.0, right=primitive[-1])

    w = big_g(t - r) - big_g(t + r)
    wt = profile.at(t - r) - profile.at(t + r)
    w[0] = wt[0] = 0.0
    return to_physical(FieldState(t=t, w=w, wt=wt), grid)


class ExteriorSeries(WaveLabModel):
    eta: float
    times: FloatArray
    distances: FloatArray
    decreasing: bool


class ScatteringReport(WaveLabModel):
    comparator: str
    t_match: Optional[float]
    times: FloatArray
    full_distance: FloatArray
    exterior: list[ExteriorSeries]
    band_c: list[float]
    band_values: list[float]
    band_exponent: float
    cross_check: Optional[float] = None
    """
    Distance between the radiation-built and the matched free waves at ``t_match``.
    """


def _comparator_states(comparator: Trajectory, trajectory: Trajectory):
    slack = 1e-6 * max(1.0, float(np.max(np.abs(trajectory.times))))
    for state in comparator.states:
        nearest = trajectory.state_at(state.t)
        if abs(nearest.t - state.t) <= slack:
            yield nearest, state


def _radiation_pairs(trajectory: Trajectory, profile: RadiationProfile, t_from: float):
    grid = trajectory.grid
    for state in trajectory.states:
        if state.t >= t_from:
            yield state, radiation_free_wave_d3(profile, grid, state.t)


def _matched_pairs(comparator: Trajectory, trajectory: Trajectory):
    grid = trajectory.grid
    for state, free_state in _comparator_states(comparator, trajectory):
        yield state, to_physical(free_state, grid)


def exterior_scattering_check(
    trajectory: Trajectory,
    eta_list: Sequence[float],
    t_match: Optional[float] = None,
    profile: Optional[RadiationProfile] = None,
    comparator: Optional[Trajectory] = None,
    c_values: Sequence[float] = (0.5, 1.0, 2.0),
    band_radius: float = 1.0,
    t_from: float = 0.0,
) -> ScatteringReport:
    """
    Energy distance to a free wave on the exterior regions ``|x| > t - eta``
    and on the bands ``t - c·t^{1-κ_0} < |x| < t + band_radius``. In three
    dimensions a radiation profile selects the radiation-built free wave;
    otherwise the matched-data comparator from ``t_match`` is used.
    """
    grid = trajectory.grid
    kappa_0 = derive(trajectory.config.params).kappa_0
    t_match = float(trajectory.times[-1]) if t_match is None else t_match
    use_radiation = profile is not None and grid.d == 3
    if comparator is None and not use_radiation:
        comparator = free_comparator(trajectory, t_match)

    if use_radiation:
        pairs = _radiation_pairs(trajectory, profile, t_from)
    else:
        pairs = _matched_pairs(comparator, trajectory)

    times, full = [], []
    exterior: dict[float, list[tuple[float, float]]] = {float(eta): [] for eta in eta_list}
    last = None
    for state, v in pairs:
        if state.t < t_from:
            continue

        u = to_physical(state, grid)
        times.append(state.t)
        full.append(energy_distance(u, v, grid))
        for eta in exterior:
            if state.t - eta >= 0:
                exterior[eta].append((state.t, energy_distance(u, v, grid, r_a=state.t - eta)))

        last = (state.t, u, v)

    band_values: list[float] = []
    cross_check = None
    if last is not None:
        t, u, v = last
        for c in c_values:
            inner = max(t - c * t ** (1 - kappa_0), 0.0) if t > 0 else 0.0
            band_values.append(energy_distance(u, v, grid, r_a=inner, r_b=t + band_radius))

    if use_radiation and comparator is not None:
        state = trajectory.state_at(t_match)
        built = radiation_free_wave_d3(profile, grid, state.t)
        cross_check = energy_distance(built, to_physical(comparator.state_at(state.t), grid), grid)

    series = []
    for eta, rows in exterior.items():
        t_arr = np.array([row[0] for row in rows])
        d_arr = np.array([row[1] for row in rows])
        series.append(
            ExteriorSeries(
                eta=eta, times=t_arr, distances=d_arr, decreasing=is_decreasing(d_arr, rtol=1e-3)
            )
        )

    return ScatteringReport(
        comparator="radiation-built" if use_radiation else "matched-data",
        t_match=None if use_radiation else t_match,
        times=np.array(times),
        full_distance=np.array(full),
        exterior=series,
        band_c=[float(c) for c in c_values],
        band_values=band_values,
        band_exponent=power_law_exponent(c_values, band_values) if band_values else float("nan"),
        cross_check=cross_check,
    )


class FreeDecayReport(WaveLabModel):
    etas: list[float]
    interior_sup: list[float]
    radii: list[float]
    exterior_sup: list[float]
    interior_monotone: bool
    exterior_monotone: bool


def free_decay_regions(
    comparator: Trajectory, etas: Sequence[float], radii: Sequence[float]
) -> FreeDecayReport:
    """
    ``sup_t`` of the free-wave energy inside ``|x| < t - eta`` and outside ``|x| > t + R``.
    """
    grid = comparator.grid
    etas, radii = sorted(float(e) for e in etas), sorted(float(r) for r in radii)
    inside = [0.0] * len(etas)
    outside = [0.0] * len(radii)
    for state in comparator.states:
        phys = to_physical(state, grid)
        density = phys.u_r**2 + phys.u_t**2
        for i, eta in enumerate(etas):
            if 0 < state.t - eta <= grid.r_max:
                inside[i] = max(inside[i], shell_integral(density, grid, 0.0, state.t - eta))

        for i, R in enumerate(radii):
            if 0 <= state.t + R < grid.r_max:
                outside[i] = max(outside[i], shell_integral(density, grid, state.t + R))

    return FreeDecayReport(
        etas=etas,
        interior_sup=inside,
        radii=radii,
        exterior_sup=outside,
        interior_monotone=is_decreasing(inside, rtol=1e-9),
        exterior_monotone=is_decreasing(outside, rtol=1e-9),
    )


class CharacteristicVariation(WaveLabModel):
    kind: Literal["outgoing", "incoming"]
    offset: float
    times: FloatArray
    variation: FloatArray
    bound: FloatArray
    ratios: FloatArray
    max_ratio: float
    beta: float


def characteristic_variation(
    trajectory: Trajectory, kind: Literal["outgoing", "incoming"], offset: float
) -> CharacteristicVariation:
    """
    Variation of ``w_t - w_r`` along the outgoing line ``r = t - τ`` (against
    ``(t1 - τ)^{-β}``, with ``t2`` the last sample) or of ``w_t + w_r`` along
    the incoming line ``r = s - t`` (against ``(s - t2)^{-β}``, with ``t1`` the
    first sample).
    """
    samples = trajectory.line(kind, offset)
    beta = derive(trajectory.config.params).beta
    t = samples.t
    if kind == "outgoing":
        keep = t > offset + 1
        t, q = t[keep], samples.minus[keep]
        if len(t) < 2:
            return _empty_variation(kind, offset, beta)

        times, variation = t[:-1], np.abs(q[-1] - q[:-1])
        bound = (times - offset) ** (-beta)
    else:
        keep = t < offset - 1
        t, q = t[keep], samples.plus[keep]
        if len(t) < 2:
            return _empty_variation(kind, offset, beta)

        times, variation = t[1:], np.abs(q[1:] - q[0])
        bound = (offset - times) ** (-beta)

    ratios = variation / bound
    return CharacteristicVariation(
        kind=kind,
        offset=offset,
        times=times,
        variation=variation,
        bound=bound,
        ratios=ratios,
        max_ratio=float(np.max(ratios)),
        beta=beta,
    )


def _empty_variation(kind, offset: float, beta: float) -> CharacteristicVariation:
    empty = np.zeros(0)
    return CharacteristicVariation(
        kind=kind,
        offset=offset,
        times=empty,
        variation=empty,
        bound=empty,
        ratios=empty,
        max_ratio=0.0,
        beta=beta,
    )


class LinearSplit(WaveLabModel):
    t: float
    deltas: list[float]
    exterior_distance: list[float]
    """
    Distance to the comparator on ``|x| > (1 - δ) t``.
    """

    retarded_average: list[float]
    """
    ``(δt)^{-1} ∫_t^{t+δt} E(t'; B(0, t)) dt'``.
    """


def linear_split(
    trajectory: Trajectory, comparator: Trajectory, t: float, deltas: Sequence[float]
) -> LinearSplit:
    grid = trajectory.grid
    config = trajectory.config
    state = trajectory.state_at(t)
    u = to_physical(state, grid)
    v = to_physical(comparator.state_at(state.t), grid)
    exterior, averages = [], []
    for delta in deltas:
        exterior.append(energy_distance(u, v, grid, r_a=(1 - delta) * state.t))
        window = trajectory.states_between(state.t, state.t + delta * state.t)
        values = [energy(s, config, Region.ball(min(state.t, grid.r_max))).total for s in window]
        times = [s.t for s in window]
        span = times[-1] - times[0] if len(times) > 1 else 0.0
        averages.append(float(trapezoid(values, times)) / span if span > 0 else values[0])

    return LinearSplit(
        t=state.t,
        deltas=[float(x) for x in deltas],
        exterior_distance=exterior,
        retarded_average=averages,
    )
