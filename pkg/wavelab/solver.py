"""
Method-of-lines solver for the reduced field ``w = r^{(d-1)/2} u``::

    w_tt - w_rr = -(λ_d + a) w / r² - r^{-(d-1)(p-1)/2} |w|^{p-1} w

with Dirichlet nodes at ``r = 0`` and ``r = r_max``, a centered second difference
in space and classical RK4 in time.
"""

import math
from abc import ABC, abstractmethod
from collections.abc import Callable, Iterable, Sequence
from functools import cached_property
from typing import Literal, Optional

import numpy as np
from pydantic import Field, field_validator
from scipy.integrate import quad

from wavelab._logging import logger
from wavelab._models import FloatArray, WaveLabModel
from wavelab.exceptions import (
    ConeNotSampled,
    DomainTooSmall,
    InsufficientHorizon,
    LineNotSampled,
    StabilityViolation,
)
from wavelab.exponents import ModelParams
from wavelab.mesh import PhysicalState, RadialGrid, interpolate_many

Source = Callable[[float, np.ndarray], np.ndarray]
Profile = Callable[[np.ndarray], np.ndarray]
ENERGY_JUMP_LIMIT = 1.1
TIME_TOLERANCE = 1e-9


class FieldState(WaveLabModel):
    t: float
    w: FloatArray
    wt: FloatArray


class SolverConfig(WaveLabModel):
    params: ModelParams
    grid: RadialGrid
    t_final: float

    cfl: float = 0.25
    """
    Courant number, ``dt <= cfl·dr``.
    """

    potential_on: bool = True
    """
    When off, ``a`` is replaced by 0. The centrifugal term ``λ_d/r²`` stays.
    """

    nonlinearity_on: bool = True

    record_every: int = 1
    """
    Keep every ``record_every``-th state. Cone and line samples are taken every step.
    """

    dt: Optional[float] = None
    """
    Time step override. Must still satisfy the stability guard.
    """

    @field_validator("cfl")
    @classmethod
    def _check_cfl(cls, value: float) -> float:
        if not 0 < value <= 0.5:
            raise ValueError("cfl must lie in (0, 0.5].")

        return value

    @field_validator("record_every")
    @classmethod
    def _check_stride(cls, value: int) -> int:
        if value < 1:
            raise ValueError("record_every must be at least 1.")

        return value

    @property
    def d(self) -> int:
        return self.params.d

    @property
    def p(self) -> float:
        return self.params.p

    @property
    def a_eff(self) -> float:
        return self.params.a if self.potential_on else 0.0

    @property
    def lambda_d(self) -> float:
        return (self.d - 1) * (self.d - 3) / 4

    @property
    def k(self) -> float:
        return (self.d - 1) / 2

    @cached_property
    def potential(self) -> np.ndarray:
        return (self.lambda_d + self.a_eff) * self.grid.radial_weight(-2)

    @cached_property
    def nonlinear_weight(self) -> np.ndarray:
        if not self.nonlinearity_on:
            return np.zeros(self.grid.n + 1)

        return self.grid.radial_weight(-(self.d - 1) * (self.p - 1) / 2)

    @property
    def dt_limit(self) -> float:
        dr = self.grid.dr
        v_max = float(np.max(np.abs(self.potential)))
        return min(self.cfl * dr, 0.5 * dr / math.sqrt(1 + v_max * dr**2))

    def time_steps(self, t_start: float) -> tuple[int, float]:
        """
        Number of uniform steps and the signed step from ``t_start`` to ``t_final``.
        """
        span = self.t_final - t_start
        if span == 0:
            return 0, 0.0

        limit = self.dt_limit if self.dt is None else min(abs(self.dt), self.dt_limit)
        steps = max(1, math.ceil(abs(span) / limit - 1e-9))
        return steps, span / steps

    def check_margin(self, support: float, span: float):
        required = support + abs(span) + 5 * self.grid.dr
        if self.grid.r_max < required:
            raise DomainTooSmall(self.grid.r_max, required)


class InitialData(WaveLabModel):
    """
    Radial Cauchy data ``(u0, u1)`` as vectorised callables of ``r``.
    """

    family: str
    u0: Profile
    u1: Optional[Profile] = None
    u0_prime: Optional[Profile] = None
    support: float
    """
    Radius beyond which the data vanish to double precision.
    """

    def sample(self, grid: RadialGrid) -> tuple[np.ndarray, np.ndarray]:
        r = grid.nodes
        u1 = np.zeros_like(r) if self.u1 is None else np.asarray(self.u1(r), dtype=float)
        return np.asarray(self.u0(r), dtype=float), u1

    def state(self, grid: RadialGrid, t: float = 0.0) -> FieldState:
        u0, u1 = self.sample(grid)
        return from_physical(u0, u1, grid, t=t)


def gaussian(amplitude: float = 1.0, center: float = 0.0, width: float = 1.0) -> InitialData:
    def u0(r):
        return amplitude * np.exp(-(((r - center) / width) ** 2))

    def u0_prime(r):
        return -2 * (r - center) / width**2 * u0(r)

    return InitialData(
        family="gaussian", u0=u0, u0_prime=u0_prime, support=center + 6 * width
    )


def _smooth_bump(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    inside = np.abs(x) < 1
    out = np.zeros_like(x)
    out[inside] = np.exp(-1 / (1 - x[inside] ** 2))
    return out


def bump(amplitude: float = 1.0, center: float = 0.0, width: float = 1.0) -> InitialData:
    def u0(r):
        return amplitude * _smooth_bump((np.asarray(r, dtype=float) - center) / width)

    return InitialData(family="bump", u0=u0, support=center + width)


def _transition(x: np.ndarray) -> np.ndarray:
    # C^∞ step: 0 for x <= 0, 1 for x >= 1.
    x = np.asarray(x, dtype=float)

    def phi(y):
        out = np.zeros_like(y)
        pos = y > 0
        out[pos] = np.exp(-1 / y[pos])
        return out

    left, right = phi(x), phi(1 - x)
    return left / (left + right)


def tail_exponent(d: int, p: float, epsilon: float) -> float:
    return 2 * (p + d + 1) / (p + 1) ** 2 + epsilon


def polynomial_tail(
    d: int, p: float, epsilon: float, r_max: float, amplitude: float = 1.0
) -> InitialData:
    """
    Slowly decaying data ``(1 + r)^{-q}``, smoothly truncated between
    ``0.4·r_max`` and ``0.5·r_max``.
    """
    q = tail_exponent(d, p, epsilon)

    def u0(r):
        r = np.asarray(r, dtype=float)
        cutoff = 1 - _transition((r - 0.4 * r_max) / (0.1 * r_max))
        return amplitude * (1 + r) ** (-q) * cutoff

    return InitialData(family="polynomial_tail", u0=u0, support=0.5 * r_max)


def from_physical(
    u0: np.ndarray, u1: np.ndarray, grid: RadialGrid, t: float = 0.0
) -> FieldState:
    weight = grid.nodes ** ((grid.d - 1) / 2)
    w = weight * np.asarray(u0, dtype=float)
    wt = weight * np.asarray(u1, dtype=float)
    w[0] = wt[0] = 0.0
    w[-1] = wt[-1] = 0.0
    return FieldState(t=t, w=w, wt=wt)


def _divide_by_weight(values: np.ndarray, grid: RadialGrid) -> np.ndarray:
    out = np.empty_like(values)
    out[1:] = values[1:] / grid.nodes[1:] ** ((grid.d - 1) / 2)
    # u is even in r, so the origin value is a quadratic extrapolation.
    out[0] = (4 * out[1] - out[2]) / 3
    return out


def to_physical(state: FieldState, grid: RadialGrid) -> PhysicalState:
    u = _divide_by_weight(state.w, grid)
    u_t = _divide_by_weight(state.wt, grid)
    u_r = np.gradient(u, grid.dr, edge_order=2)
    return PhysicalState(t=state.t, u=u, u_r=u_r, u_t=u_t)


def rhs(
    state: FieldState, config: SolverConfig, source: Optional[Source] = None
) -> tuple[np.ndarray, np.ndarray]:
    w = state.w
    acc = np.zeros_like(w)
    acc[1:-1] = (w[2:] - 2 * w[1:-1] + w[:-2]) / config.grid.dr**2
    acc -= config.potential * w
    if config.nonlinearity_on:
        acc -= config.nonlinear_weight * np.abs(w) ** (config.p - 1) * w

    if source is not None:
        acc += source(state.t, config.grid.nodes)

    acc[0] = acc[-1] = 0.0
    return state.wt.copy(), acc


def discrete_energy(state: FieldState, config: SolverConfig) -> float:
    """
    The energy conserved exactly by the semi-discrete flow.
    """
    dr = config.grid.dr
    w, wt = state.w, state.wt
    density = 0.5 * wt**2 + 0.5 * config.potential * w**2
    if config.nonlinearity_on:
        density += config.nonlinear_weight * np.abs(w) ** (config.p + 1) / (config.p + 1)

    gradient = 0.5 * np.diff(w) ** 2 / dr
    return config.grid.c_d * float(dr * np.sum(density[1:-1]) + np.sum(gradient))


def _advance(
    state: FieldState, dt: float, config: SolverConfig, source: Optional[Source]
) -> FieldState:
    def stage(base: FieldState, scale: float, dw, dwt) -> FieldState:
        return FieldState(t=base.t + scale, w=base.w + scale * dw, wt=base.wt + scale * dwt)

    k1 = rhs(state, config, source)
    k2 = rhs(stage(state, dt / 2, *k1), config, source)
    k3 = rhs(stage(state, dt / 2, *k2), config, source)
    k4 = rhs(stage(state, dt, *k3), config, source)
    w = state.w + dt / 6 * (k1[0] + 2 * k2[0] + 2 * k3[0] + k4[0])
    wt = state.wt + dt / 6 * (k1[1] + 2 * k2[1] + 2 * k3[1] + k4[1])
    w[0] = w[-1] = wt[0] = wt[-1] = 0.0
    return FieldState(t=state.t + dt, w=w, wt=wt)


def _check_jump(
    before: float, after: float, index: int, t: float, guarded: bool = True
):
    if not math.isfinite(after):
        raise StabilityViolation(
            "Discrete energy is no longer finite.",
            step=index,
            t=t,
            energy_before=before,
            energy_after=after,
        )

    elif guarded and before > 0 and after > ENERGY_JUMP_LIMIT * before:
        raise StabilityViolation(
            "Discrete energy grew by more than 10% in one step.",
            step=index,
            t=t,
            energy_before=before,
            energy_after=after,
        )


def step(
    state: FieldState, dt: float, config: SolverConfig, source: Optional[Source] = None
) -> FieldState:
    if abs(dt) > config.dt_limit * (1 + 1e-12):
        raise StabilityViolation(
            f"Time step {abs(dt)!r} exceeds the stability limit {config.dt_limit!r}."
        )

    new = _advance(state, dt, config, source)
    _check_jump(
        discrete_energy(state, config),
        discrete_energy(new, config),
        index=1,
        t=new.t,
        guarded=source is None,
    )
    return new


class ConeSamples(WaveLabModel):
    """
    Physical fields interpolated on the cone ``r = t - eta``.
    """

    eta: float
    t: FloatArray
    r: FloatArray
    u: FloatArray
    u_r: FloatArray
    u_t: FloatArray


class LineSamples(WaveLabModel):
    """
    ``w_t ± w_r`` along an outgoing line ``r = t - offset`` or an incoming
    line ``r = offset - t``.
    """

    kind: Literal["outgoing", "incoming"]
    offset: float
    t: FloatArray
    r: FloatArray
    plus: FloatArray
    minus: FloatArray


class Observer(ABC):
    """
    Called once per step by :func:`evolve`, including the initial state.
    """

    def start(self, config: SolverConfig):
        self.config = config

    @abstractmethod
    def observe(self, state: FieldState, energy: float):
        """
        Record whatever the observer needs from one state.
        """

    @abstractmethod
    def result(self):
        """
        The recorded samples.
        """

    @abstractmethod
    def spawn(self) -> "Observer":
        """
        A fresh observer with the same settings.
        """


class EnergyRecorder(Observer):
    def __init__(self):
        self.times: list[float] = []
        self.energies: list[float] = []

    def observe(self, state: FieldState, energy: float):
        self.times.append(state.t)
        self.energies.append(energy)

    def result(self) -> tuple[np.ndarray, np.ndarray]:
        return np.array(self.times), np.array(self.energies)

    def spawn(self) -> "EnergyRecorder":
        return EnergyRecorder()


class ConeSampler(Observer):
    def __init__(self, etas: Iterable[float]):
        self.etas = sorted({float(eta) for eta in etas})
        self._rows: dict[float, list[tuple]] = {eta: [] for eta in self.etas}

    def observe(self, state: FieldState, energy: float):
        grid = self.config.grid
        active = [eta for eta in self.etas if 0 <= state.t - eta <= grid.r_max]
        if not active:
            return

        phys = to_physical(state, grid)
        radii = np.array([state.t - eta for eta in active])
        u = interpolate_many(phys.u, grid, radii)
        u_r = interpolate_many(phys.u_r, grid, radii)
        u_t = interpolate_many(phys.u_t, grid, radii)
        for i, eta in enumerate(active):
            self._rows[eta].append((state.t, radii[i], u[i], u_r[i], u_t[i]))

    def result(self) -> list[ConeSamples]:
        samples = []
        for eta, rows in self._rows.items():
            t, r, u, u_r, u_t = np.array(rows, dtype=float).reshape(-1, 5).T
            samples.append(ConeSamples(eta=eta, t=t, r=r, u=u, u_r=u_r, u_t=u_t))

        return samples

    def spawn(self) -> "ConeSampler":
        return ConeSampler(self.etas)


class CharacteristicSampler(Observer):
    def __init__(self, taus: Iterable[float] = (), s_list: Iterable[float] = ()):
        self.taus = sorted({float(x) for x in taus})
        self.s_list = sorted({float(x) for x in s_list})
        self._rows: dict[tuple[str, float], list[tuple]] = {
            **{("outgoing", tau): [] for tau in self.taus},
            **{("incoming", s): [] for s in self.s_list},
        }

    def observe(self, state: FieldState, energy: float):
        grid = self.config.grid
        lines = []
        for kind, offset in self._rows:
            r = state.t - offset if kind == "outgoing" else offset - state.t
            if 0 <= r <= grid.r_max:
                lines.append(((kind, offset), r))

        if not lines:
            return

        w_r = np.gradient(state.w, grid.dr, edge_order=2)
        radii = np.array([r for _, r in lines])
        wt = interpolate_many(state.wt, grid, radii)
        wr = interpolate_many(w_r, grid, radii)
        for i, (key, r) in enumerate(lines):
            self._rows[key].append((state.t, r, wt[i] + wr[i], wt[i] - wr[i]))

    def result(self) -> list[LineSamples]:
        samples = []
        for (kind, offset), rows in self._rows.items():
            t, r, plus, minus = np.array(rows, dtype=float).reshape(-1, 4).T
            samples.append(
                LineSamples(kind=kind, offset=offset, t=t, r=r, plus=plus, minus=minus)
            )

        return samples

    def spawn(self) -> "CharacteristicSampler":
        return CharacteristicSampler(self.taus, self.s_list)


def _merge_samples(first: list, second: list, keys: tuple[str, ...]) -> list:
    # Concatenate matching sample series, sort by time and drop repeated times.
    merged = []
    for item in second:
        match = [x for x in first if all(getattr(x, k) == getattr(item, k) for k in keys)]
        if not match:
            merged.append(item)
            continue

        arrays = {
            name: np.concatenate([getattr(match[0], name), getattr(item, name)])
            for name in type(item).model_fields
            if isinstance(getattr(item, name), np.ndarray)
        }
        _, unique = np.unique(arrays["t"], return_index=True)
        merged.append(item.model_copy(update={k: v[unique] for k, v in arrays.items()}))

    return merged


class Trajectory(WaveLabModel):
    config: SolverConfig
    dt: float
    states: list[FieldState]
    """
    Recorded states, strictly increasing in time.
    """

    energy_times: FloatArray
    energies: FloatArray
    """
    Discrete energy at every step.
    """

    cone_samples: list[ConeSamples] = Field(default_factory=list)
    characteristic_samples: list[LineSamples] = Field(default_factory=list)

    @property
    def times(self) -> np.ndarray:
        return np.array([s.t for s in self.states])

    @property
    def grid(self) -> RadialGrid:
        return self.config.grid

    @property
    def initial_energy(self) -> float:
        return float(self.energies[np.argmin(np.abs(self.energy_times))])

    def _in_range(self, t: float) -> bool:
        times = self.times
        slack = TIME_TOLERANCE * max(1.0, abs(t))
        return times[0] - slack <= t <= times[-1] + slack

    def state_at(self, t: float) -> FieldState:
        """
        The recorded state nearest to ``t``.
        """
        if not self._in_range(t):
            times = self.times
            raise InsufficientHorizon(
                f"t={t!r} lies outside the recorded window [{times[0]!r}, {times[-1]!r}]."
            )

        return self.states[int(np.argmin(np.abs(self.times - t)))]

    def physical_at(self, t: float) -> PhysicalState:
        return to_physical(self.state_at(t), self.grid)

    def states_between(self, t1: float, t2: float) -> list[FieldState]:
        slack = TIME_TOLERANCE * max(1.0, abs(t1), abs(t2))
        return [s for s in self.states if t1 - slack <= s.t <= t2 + slack]

    def cone(self, eta: float) -> ConeSamples:
        for samples in self.cone_samples:
            if math.isclose(samples.eta, eta, abs_tol=1e-12):
                return samples

        raise ConeNotSampled(eta, [s.eta for s in self.cone_samples])

    def line(self, kind: str, offset: float) -> LineSamples:
        for samples in self.characteristic_samples:
            if samples.kind == kind and math.isclose(samples.offset, offset, abs_tol=1e-12):
                return samples

        raise LineNotSampled(kind, offset)

    @property
    def energy_drift(self) -> float:
        reference = self.energies[0]
        if reference == 0:
            return 0.0

        return float(np.max(np.abs(self.energies - reference)) / abs(reference))

    @classmethod
    def join(cls, backward: "Trajectory", forward: "Trajectory") -> "Trajectory":
        """
        Glue a backward run and a forward run that start from the same state.
        """
        # The backward run ends on the shared initial state, the forward run starts on it.
        past = backward.states[:-1]
        order = np.argsort(backward.energy_times[1:], kind="stable") + 1
        return cls(
            config=forward.config,
            dt=max(backward.dt, forward.dt),
            states=[*past, *forward.states],
            energy_times=np.concatenate([backward.energy_times[order], forward.energy_times]),
            energies=np.concatenate([backward.energies[order], forward.energies]),
            cone_samples=_merge_samples(backward.cone_samples, forward.cone_samples, ("eta",)),
            characteristic_samples=_merge_samples(
                backward.characteristic_samples,
                forward.characteristic_samples,
                ("kind", "offset"),
            ),
        )


def evolve(
    initial: FieldState,
    config: SolverConfig,
    observers: Sequence[Observer] = (),
    source: Optional[Source] = None,
) -> Trajectory:
    """
    March ``initial`` to ``config.t_final`` with a uniform step, backward when
    ``t_final < initial.t``. Every observer sees every step.
    """
    steps, dt = config.time_steps(initial.t)
    recorder = EnergyRecorder()
    watchers = [recorder, *observers]
    for observer in watchers:
        observer.start(config)

    logger.debug(f"Evolving {steps} steps of dt={dt!r} from t={initial.t!r}.")
    state = initial
    energy = discrete_energy(state, config)
    for observer in watchers:
        observer.observe(state, energy)

    states = [state]
    for index in range(1, steps + 1):
        new = _advance(state, dt, config, source)
        if index == steps:
            new = FieldState(t=config.t_final, w=new.w, wt=new.wt)
        else:
            new = FieldState(t=initial.t + index * dt, w=new.w, wt=new.wt)

        new_energy = discrete_energy(new, config)
        _check_jump(energy, new_energy, index, new.t, guarded=source is None)
        state, energy = new, new_energy
        for observer in watchers:
            observer.observe(state, energy)

        if index % config.record_every == 0 or index == steps:
            states.append(state)

        if index % max(1, steps // 10) == 0:
            logger.debug(f"Step {index}/{steps}, t={state.t!r}, energy={energy!r}.")

    if dt < 0:
        states = states[::-1]

    energy_times, energies = recorder.result()
    cones, lines = [], []
    for observer in observers:
        if isinstance(observer, ConeSampler):
            cones.extend(observer.result())
        elif isinstance(observer, CharacteristicSampler):
            lines.extend(observer.result())

    trajectory = Trajectory(
        config=config,
        dt=abs(dt),
        states=states,
        energy_times=energy_times,
        energies=energies,
        cone_samples=cones,
        characteristic_samples=lines,
    )
    logger.info(
        f"Evolved to t={config.t_final!r} in {steps} steps "
        f"(dt={abs(dt)!r}, energy drift {trajectory.energy_drift!r})."
    )
    return trajectory


def evolve_two_sided(
    initial: FieldState,
    config: SolverConfig,
    t_start: float,
    observers: Sequence[Observer] = (),
) -> Trajectory:
    """
    Evolve backward to ``t_start`` and forward to ``config.t_final`` from the
    same data, and join the two runs into one trajectory over ``[t_start, t_final]``.
    """
    backward_config = config.model_copy(update={"t_final": t_start})
    backward = evolve(initial, backward_config, [o.spawn() for o in observers])
    forward = evolve(initial, config, observers)
    return Trajectory.join(backward, forward)


def _odd_primitive(chi: Callable[[float], float], s: np.ndarray) -> np.ndarray:
    return np.array([quad(chi, 0.0, float(x), limit=200)[0] for x in np.ravel(s)]).reshape(
        np.shape(s)
    )


def dalembert_free_d3(
    u0: Profile,
    u1: Optional[Profile],
    r: np.ndarray,
    t: float,
    u0_prime: Optional[Profile] = None,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    Exact free radial wave in three dimensions, evaluated through
    ``w = r u`` and the odd extensions ``ψ(s) = s u0(|s|)``, ``χ(s) = s u1(|s|)``.
    Returns ``(u, u_r, u_t)``.
    """
    r = np.atleast_1d(np.asarray(r, dtype=float))

    def psi(s):
        return s * u0(np.abs(s))

    def dpsi(s):
        if u0_prime is not None:
            return u0(np.abs(s)) + np.abs(s) * u0_prime(np.abs(s))

        h = 1e-5
        return (psi(s + h) - psi(s - h)) / (2 * h)

    def ddpsi(s):
        h = 1e-4
        return (psi(s + h) - 2 * psi(s) + psi(s - h)) / h**2

    def chi(s):
        return np.zeros_like(s) if u1 is None else s * u1(np.abs(s))

    def dchi(s):
        h = 1e-5
        return (chi(s + h) - chi(s - h)) / (2 * h)

    def primitive(s):
        if u1 is None:
            return np.zeros_like(s)

        return _odd_primitive(lambda x: float(x * u1(np.abs(np.array(x)))), s)

    plus, minus = r + t, r - t
    w = (psi(plus) + psi(minus)) / 2 + (primitive(plus) - primitive(minus)) / 2
    w_t = (dpsi(plus) - dpsi(minus)) / 2 + (chi(plus) + chi(minus)) / 2
    w_r = (dpsi(plus) + dpsi(minus)) / 2 + (chi(plus) - chi(minus)) / 2

    near = r < 1e-8
    safe = np.where(near, 1.0, r)
    u = np.where(near, 0.0, w / safe)
    u_r = np.where(near, 0.0, w_r / safe - w / safe**2)
    u_t = np.where(near, 0.0, w_t / safe)
    if np.any(near):
        tt = np.array([t], dtype=float)
        u = np.where(near, (dpsi(tt) + chi(tt))[0], u)
        u_t = np.where(near, (ddpsi(tt) + dchi(tt))[0], u_t)

    return u, u_r, u_t


def radiation_oracle_d3(
    u0: Profile,
    u1: Optional[Profile],
    eta: np.ndarray,
    u0_prime: Optional[Profile] = None,
) -> np.ndarray:
    """
    Exact radiation profile ``-½ψ'(η) - ½χ(η)`` of the three-dimensional free wave.
    """
    eta = np.asarray(eta, dtype=float)
    if u0_prime is not None:
        dpsi = u0(np.abs(eta)) + np.abs(eta) * u0_prime(np.abs(eta))
    else:
        h = 1e-5
        dpsi = ((eta + h) * u0(np.abs(eta + h)) - (eta - h) * u0(np.abs(eta - h))) / (2 * h)

    chi = np.zeros_like(eta) if u1 is None else eta * u1(np.abs(eta))
    return -0.5 * dpsi - 0.5 * chi
