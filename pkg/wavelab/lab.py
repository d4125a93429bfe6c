"""
Experiment driver: a validated JSON configuration selects one experiment,
whose report, series and manifest are written to the output directory.
"""

import math
import time
from collections.abc import Callable, Sequence
from concurrent.futures import ProcessPoolExecutor
from importlib.metadata import PackageNotFoundError
from importlib.metadata import version as package_version
from pathlib import Path
from typing import Annotated, Any, Literal, Optional, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator
from scipy.integrate import trapezoid

from wavelab._logging import logger
from wavelab._models import CheckResult, FloatArray, WaveLabModel
from wavelab._utils import (
    canonical_json,
    dump_json,
    get_worker_count,
    observed_order,
    sha256_file,
    sha256_text,
    write_csv,
)
from wavelab.exceptions import (
    AcceptanceFailure,
    ConfigInvalid,
    ExperimentUnknown,
    InsufficientHorizon,
)
from wavelab.exponents import (
    ModelParams,
    derive,
    nonlinearity_triple,
    sigma_of,
    strichartz_admissible,
    validate,
    verdict,
)
from wavelab.functionals import (
    cone_flux,
    energy,
    hardy_local,
    integral_estimates,
    interior_energy_series,
    morawetz_check,
    pointwise_envelopes,
    retarded_energy_check,
    tail_decay_check,
)
from wavelab.mesh import (
    PhysicalState,
    RadialGrid,
    form_equivalence,
    norms,
    random_radial_field,
)
from wavelab.scattering import (
    MIN_CONE_DEPTH,
    Direction,
    cauchy_criterion,
    characteristic_variation,
    exterior_scattering_check,
    extract_radiation,
    free_comparator,
    free_decay_regions,
    horizon_stability,
    linear_split,
    radiation_residual,
)
from wavelab.solver import (
    CharacteristicSampler,
    ConeSampler,
    InitialData,
    Observer,
    SolverConfig,
    Trajectory,
    bump,
    dalembert_free_d3,
    evolve,
    evolve_two_sided,
    gaussian,
    polynomial_tail,
    radiation_oracle_d3,
    to_physical,
)


def _package_version() -> str:
    try:
        return package_version("wavelab")
    except PackageNotFoundError:
        return "0.0.0"


class ConfigModel(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class ParamsConfig(ConfigModel):
    d: int = 3
    p: float = 3.0
    a: float = 0.0

    def validated(self) -> ModelParams:
        return validate(self.d, self.p, self.a)


class GridConfig(ConfigModel):
    """
    Any two of ``n``, ``r_max`` and ``dr``.
    """

    n: Optional[int] = None
    r_max: Optional[float] = None
    dr: Optional[float] = None

    def build(self, d: int) -> RadialGrid:
        try:
            return self._build(d)
        except ValidationError as err:
            raise ConfigInvalid(err.errors()[0]["msg"], field_path="grid") from err

    def _build(self, d: int) -> RadialGrid:
        if self.n is not None and self.r_max is not None:
            return RadialGrid(d=d, n=self.n, r_max=self.r_max)

        elif self.n is not None and self.dr is not None:
            return RadialGrid.from_spacing(d, self.dr, self.n)

        elif self.r_max is not None and self.dr is not None:
            return RadialGrid(d=d, n=int(round(self.r_max / self.dr)), r_max=self.r_max)

        raise ConfigInvalid("Grid needs two of 'n', 'r_max' and 'dr'.", field_path="grid")


class GaussianSpec(ConfigModel):
    family: Literal["gaussian"] = "gaussian"
    amplitude: float = 1.0
    center: float = 0.0
    width: float = 1.0

    def build(self, params: ModelParams, grid: RadialGrid) -> InitialData:
        return gaussian(self.amplitude, self.center, self.width)


class BumpSpec(ConfigModel):
    family: Literal["bump"] = "bump"
    amplitude: float = 1.0
    center: float = 0.0
    width: float = 1.0

    def build(self, params: ModelParams, grid: RadialGrid) -> InitialData:
        return bump(self.amplitude, self.center, self.width)


class PolynomialTailSpec(ConfigModel):
    family: Literal["polynomial_tail"] = "polynomial_tail"
    epsilon: float = 0.1
    amplitude: float = 1.0

    @field_validator("epsilon")
    @classmethod
    def _check_epsilon(cls, value: float) -> float:
        if not value > 0:
            raise ValueError("epsilon must be positive.")

        return value

    def build(self, params: ModelParams, grid: RadialGrid) -> InitialData:
        return polynomial_tail(params.d, params.p, self.epsilon, grid.r_max, self.amplitude)


DataSpec = Annotated[
    Union[GaussianSpec, BumpSpec, PolynomialTailSpec], Field(discriminator="family")
]


class SolverSwitches(ConfigModel):
    cfl: float = 0.25
    potential_on: bool = True
    nonlinearity_on: bool = True
    record_every: int = 1

    t_start: Optional[float] = None
    """
    A negative start time runs a backward leg and joins it to the forward run.
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


class ExperimentOptions(ConfigModel):
    etas: list[float] = [0.5, 1.0, 2.0]
    radii: list[float] = [1.0, 2.0, 4.0]
    windows: list[tuple[float, float]] = [(2.0, 6.0)]
    kappa: Optional[float] = None
    c_values: list[float] = [0.5, 1.0, 2.0]
    t_match: Optional[float] = None
    t_from: float = 0.0
    cauchy_times: list[float] = [6.0, 12.0, 24.0]
    deltas: list[float] = [0.1, 0.2, 0.4]
    horizons: list[float] = []
    eta_range: Optional[tuple[float, float]] = None
    incoming: list[float] = []
    """
    Offsets ``s`` of the incoming lines ``r = s - t``.
    """

    band_radius: float = 1.0
    samples: int = 100
    seed: int = 0
    witness_a: Optional[list[float]] = None
    """
    Potentials at which the optimal Hardy witness is tested, the model's ``a`` by default.
    """

    strichartz: list[tuple[float, float, float]] = []
    levels: int = 3
    target: Literal["simulate", "flux-check"] = "simulate"
    snapshots: bool = True
    """
    Write ``series/snapshot_*.csv`` (``r, u, u_t``) for every recorded state of ``simulate``.
    """


class Tolerances(ConfigModel):
    drift: float = 1e-6
    oracle: float = 5e-4
    flux: float = 1e-4
    cone_hardy: float = 1e-8
    hardy_identity: float = 1e-8
    hardy_sign: float = 1e-10
    witness: float = 1e-6
    morawetz: float = 1e-4
    radiation: float = 1e-3
    order: float = 2.0
    order_band: float = 0.3
    tail_ratio: float = 10.0
    rate_band: float = 0.4
    band_factor: float = 2.0


class ExperimentConfig(ConfigModel):
    experiment: str = "simulate"
    params: ParamsConfig = ParamsConfig()
    grid: GridConfig = GridConfig(n=1024, r_max=32.0)
    data: DataSpec = GaussianSpec()
    solver: SolverSwitches = SolverSwitches()
    t_final: float = 8.0
    options: ExperimentOptions = ExperimentOptions()
    tolerances: Tolerances = Tolerances()
    output: Path = Path("out")

    @classmethod
    def from_file(cls, path: Path) -> "ExperimentConfig":
        try:
            text = Path(path).read_text(encoding="utf8")
        except OSError as err:
            raise ConfigInvalid(f"Cannot read config '{path}': {err}.") from err

        return cls.from_json(text)

    @classmethod
    def from_json(cls, text: str) -> "ExperimentConfig":
        try:
            return cls.model_validate_json(text)
        except ValidationError as err:
            first = err.errors()[0]
            field_path = ".".join(str(part) for part in first["loc"])
            raise ConfigInvalid(first["msg"], field_path=field_path) from err

    @property
    def config_hash(self) -> str:
        return sha256_text(canonical_json(self.model_dump(mode="json")))

    def validated_params(self) -> ModelParams:
        return self.params.validated()

    def radial_grid(self) -> RadialGrid:
        return self.grid.build(self.params.d)

    def solver_config(self, t_final: Optional[float] = None, **overrides) -> SolverConfig:
        switches = self.solver.model_copy(update=overrides)
        return SolverConfig(
            params=self.validated_params(),
            grid=self.radial_grid(),
            t_final=self.t_final if t_final is None else t_final,
            cfl=switches.cfl,
            potential_on=switches.potential_on,
            nonlinearity_on=switches.nonlinearity_on,
            record_every=switches.record_every,
        )

    def initial_data(self) -> InitialData:
        return self.data.build(self.validated_params(), self.radial_grid())

    def refined(self, level: int) -> "ExperimentConfig":
        """
        The same experiment with ``dr`` halved ``level`` times and the record
        stride doubled to keep the recorded times.
        """
        grid = self.radial_grid()
        factor = 2**level
        return self.model_copy(
            update={
                "grid": GridConfig(n=grid.n * factor, r_max=grid.r_max),
                "solver": self.solver.model_copy(
                    update={"record_every": self.solver.record_every * factor}
                ),
            }
        )


class Series(WaveLabModel):
    """
    Equal-length named columns written to one CSV file.
    """

    columns: dict[str, FloatArray]
    metadata: dict[str, Any] = {}

    @field_validator("columns", mode="before")
    @classmethod
    def _as_arrays(cls, value: dict) -> dict:
        return {name: np.asarray(column, dtype=float) for name, column in value.items()}


class ExperimentResult(WaveLabModel):
    report: dict[str, Any]
    series: dict[str, Series] = {}
    checks: list[CheckResult] = []


class ManifestEntry(WaveLabModel):
    path: str
    sha256: str


class RunManifest(WaveLabModel):
    experiment: str
    config_hash: str
    version: str
    wall_time: float
    files: list[ManifestEntry]
    passed: bool


Experiment = Callable[[ExperimentConfig], ExperimentResult]
EXPERIMENTS: dict[str, Experiment] = {}


def register(name: str) -> Callable[[Experiment], Experiment]:
    def decorator(func: Experiment) -> Experiment:
        EXPERIMENTS[name] = func
        return func

    return decorator


def _metadata(config: ExperimentConfig, **extra) -> dict[str, Any]:
    grid = config.radial_grid()
    return {
        "d": config.params.d,
        "p": config.params.p,
        "a": config.params.a,
        "dr": grid.dr,
        "n": grid.n,
        **extra,
    }


def _solve(
    config: ExperimentConfig,
    observers: Sequence[Observer] = (),
    t_start: Optional[float] = None,
    **overrides,
) -> tuple[Trajectory, InitialData]:
    solver = config.solver_config(**overrides)
    data = config.initial_data()
    t_start = config.solver.t_start if t_start is None else t_start
    span = max(abs(solver.t_final), abs(t_start or 0.0))
    solver.check_margin(data.support, span)
    initial = data.state(solver.grid)
    if t_start is not None and t_start < 0:
        return evolve_two_sided(initial, solver, t_start, observers), data

    return evolve(initial, solver, observers), data


def _oracle_errors(trajectory: Trajectory, data: InitialData) -> Optional[dict[str, float]]:
    """
    Sup errors in ``u`` and ``w`` against the exact three-dimensional free
    wave, when the run is one.
    """
    config = trajectory.config
    if config.d != 3 or config.nonlinearity_on or config.a_eff != 0:
        return None

    elif data.family == "polynomial_tail":
        return None

    grid = trajectory.grid
    final = trajectory.states[-1]
    r = grid.nodes[1:-1]
    exact, _, _ = dalembert_free_d3(data.u0, data.u1, r, final.t, data.u0_prime)
    phys = to_physical(final, grid)
    return {
        "u": float(np.max(np.abs(phys.u[1:-1] - exact))),
        "w": float(np.max(np.abs(final.w[1:-1] - r * exact))),
    }


@register("params")
def params_experiment(config: ExperimentConfig) -> ExperimentResult:
    p = config.params
    report: dict[str, Any] = {"verdict": verdict(p.d, p.p, p.a)}
    valid = report["verdict"]["valid"]
    if valid:
        lower, upper = form_equivalence(p.d, p.a)
        report["form_equivalence"] = {"lower": lower, "upper": upper}
        report["strichartz"] = [
            {
                "triple": {"q": q, "r": r, "gamma": g},
                **strichartz_admissible(p.d, q, r, g, p.a).model_dump(),
            }
            for q, r, g in config.options.strichartz
        ]

    checks = [CheckResult.at_least("parameters_valid", float(valid), 1.0)]
    return ExperimentResult(report=report, checks=checks)


@register("simulate")
def simulate(config: ExperimentConfig) -> ExperimentResult:
    trajectory, data = _solve(config)
    grid = trajectory.grid
    tolerances = config.tolerances
    final = trajectory.states[-1]
    phys = to_physical(final, grid)
    report: dict[str, Any] = {
        "t_final": final.t,
        "dt": trajectory.dt,
        "steps": len(trajectory.energies) - 1,
        "initial_energy": trajectory.initial_energy,
        "final_energy": energy(final, trajectory.config),
        "energy_drift": trajectory.energy_drift,
        "norms": norms(phys, grid, trajectory.config.p),
    }
    checks = [CheckResult.at_most("energy_drift", trajectory.energy_drift, tolerances.drift)]
    if (errors := _oracle_errors(trajectory, data)) is not None:
        report["oracle_error"] = errors
        checks.append(CheckResult.at_most("oracle_error", errors["u"], tolerances.oracle))

    if np.any(phys.u != 0):
        report["envelopes"] = pointwise_envelopes(phys, grid, trajectory.config.p)

    series = {
        "energy": Series(
            columns={"t": trajectory.energy_times, "energy": trajectory.energies},
            metadata=_metadata(config),
        )
    }
    if config.options.snapshots:
        for index, state in enumerate(trajectory.states):
            snapshot = to_physical(state, grid)
            series[f"snapshot_{index:05d}"] = Series(
                columns={"r": grid.nodes, "u": snapshot.u, "u_t": snapshot.u_t},
                metadata=_metadata(config, t=state.t),
            )

    return ExperimentResult(report=report, series=series, checks=checks)


@register("flux-check")
def flux_check(config: ExperimentConfig) -> ExperimentResult:
    options, tolerances = config.options, config.tolerances
    trajectory, _ = _solve(config, [ConeSampler(options.etas)])
    t_end = float(trajectory.times[-1])

    reports, checks = [], []
    for eta in options.etas:
        for t1, t2 in options.windows:
            t1 = max(t1, eta)
            if not t1 < t2 <= t_end:
                logger.warning(f"Skipping flux window [{t1!r}, {t2!r}] for eta={eta!r}.")
                continue

            flux = cone_flux(trajectory, eta, t1, t2)
            reports.append(flux)
            label = f"eta={eta!r},t=[{t1!r},{t2!r}]"
            checks.append(
                CheckResult.at_most(
                    f"flux_residual[{label}]", flux.relative_residual, tolerances.flux
                )
            )
            checks.append(
                CheckResult.at_least(
                    f"cone_hardy[{label}]",
                    flux.cone_hardy_slack_with_boundary,
                    -tolerances.cone_hardy * flux.energy,
                )
            )

    series = {}
    for samples in trajectory.cone_samples:
        series[f"cone_eta={samples.eta!r}"] = Series(
            columns={
                "t": samples.t,
                "r": samples.r,
                "u": samples.u,
                "u_r": samples.u_r,
                "u_t": samples.u_t,
            },
            metadata=_metadata(config, eta=samples.eta),
        )

    return ExperimentResult(report={"flux": reports}, series=series, checks=checks)


@register("morawetz-check")
def morawetz_experiment(config: ExperimentConfig) -> ExperimentResult:
    options, tolerances = config.options, config.tolerances
    t_start = config.solver.t_start
    if t_start is None:
        t_start = -max(options.radii)

    trajectory, _ = _solve(config, t_start=t_start)
    t_first, t_end = float(trajectory.times[0]), float(trajectory.times[-1])

    morawetz, retarded, checks = [], [], []
    for R in options.radii:
        for t1, t2 in options.windows:
            if not t_first <= t1 < t2 <= t_end:
                logger.warning(f"Skipping Morawetz window [{t1!r}, {t2!r}].")
                continue

            report = morawetz_check(trajectory, R, t1, t2, rel_tol=tolerances.morawetz)
            morawetz.append(report)
            checks.append(
                CheckResult.at_least(
                    f"morawetz[R={R!r},t=[{t1!r},{t2!r}]]", report.slack, -report.budget
                )
            )

        if t_first <= -R and R < t_end:
            report = retarded_energy_check(trajectory, R, t_end, rel_tol=tolerances.morawetz)
            retarded.append(report)
            checks.append(
                CheckResult.at_least(f"retarded[R={R!r}]", report.slack, -report.budget)
            )

    return ExperimentResult(
        report={"morawetz": morawetz, "retarded": retarded},
        series={
            "energy": Series(
                columns={"t": trajectory.energy_times, "energy": trajectory.energies},
                metadata=_metadata(config),
            )
        },
        checks=checks,
    )


def _power_witness(grid: RadialGrid, a: float) -> PhysicalState:
    # |x|^{-σ}, the field that makes the local Hardy form vanish.
    sigma = sigma_of(grid.d, a)
    r = grid.nodes
    u = grid.radial_weight(-sigma)
    u_r = -sigma * grid.radial_weight(-sigma - 1)
    u_r[0] = 0.0
    return PhysicalState(t=0.0, u=u, u_r=u_r, u_t=np.zeros_like(r))


@register("hardy-check")
def hardy_experiment(config: ExperimentConfig) -> ExperimentResult:
    options, tolerances = config.options, config.tolerances
    params = config.validated_params()
    grid = config.radial_grid()
    rng = np.random.default_rng(options.seed)
    fields = [random_radial_field(rng, grid) for _ in range(options.samples)]

    worst_identity, worst_sign, worst_strong = 0.0, math.inf, 0.0
    rows: dict[str, list[float]] = {"R": [], "f_R": [], "identity": [], "scale": []}
    for R in options.radii:
        for field in fields:
            report = hardy_local(field, grid, R, params.a, u_r=field.u_r)
            if report.scale <= 0:
                continue

            worst_identity = max(worst_identity, report.identity_residual / report.scale)
            worst_sign = min(worst_sign, report.f_R / report.scale)
            if report.strong_ratio is not None:
                worst_strong = max(worst_strong, report.strong_ratio)

            rows["R"].append(R)
            rows["f_R"].append(report.f_R)
            rows["identity"].append(report.identity_value)
            rows["scale"].append(report.scale)

    hardy_const = (grid.d - 2) ** 2 / 4
    sharp_gap = math.inf
    for field in fields:
        field_norms = norms(field, grid, params.p)
        if field_norms.h1_dot > 0:
            gap = (field_norms.h1_dot - hardy_const * field_norms.hardy_term) / field_norms.h1_dot
            sharp_gap = min(sharp_gap, gap)

    witnesses = []
    for a in options.witness_a if options.witness_a is not None else [params.a]:
        witness = _power_witness(grid, a)
        for R in options.radii:
            report = hardy_local(witness, grid, R, a, u_r=witness.u_r)
            witnesses.append({"a": a, "R": R, "ratio": abs(report.f_R) / report.scale})

    checks = [
        CheckResult.at_most("hardy_identity", worst_identity, tolerances.hardy_identity),
        CheckResult.at_least("hardy_sign", worst_sign, -tolerances.hardy_sign),
        CheckResult.at_least("sharp_hardy", sharp_gap, -tolerances.hardy_sign),
    ]
    checks.extend(
        CheckResult.at_most(f"witness[a={w['a']!r},R={w['R']!r}]", w["ratio"], tolerances.witness)
        for w in witnesses
    )
    lower, upper = form_equivalence(grid.d, params.a)
    report = {
        "samples": len(fields),
        "radii": options.radii,
        "worst_identity_residual": worst_identity,
        "worst_normalised_form": worst_sign,
        "worst_strong_ratio": worst_strong,
        "sharp_hardy_gap": sharp_gap,
        "form_equivalence": {"lower": lower, "upper": upper},
        "witnesses": witnesses,
    }
    return ExperimentResult(
        report=report,
        series={"hardy": Series(columns=rows, metadata=_metadata(config))},
        checks=checks,
    )


def _eta_grid(
    config: ExperimentConfig, t: float, support: float, direction: Direction = "+"
) -> np.ndarray:
    grid = config.radial_grid()
    if config.options.eta_range is not None:
        lo, hi = config.options.eta_range
    elif direction == "+":
        lo, hi = -support, t / 2
    else:
        lo, hi = t / 2, support

    if direction == "+":
        lo = max(lo, t - grid.r_max + grid.dr)
        hi = min(hi, t - MIN_CONE_DEPTH)
    else:
        lo = max(lo, t + MIN_CONE_DEPTH)
        hi = min(hi, t + grid.r_max - grid.dr)

    if hi <= lo:
        raise InsufficientHorizon(f"No room for a radiation profile at t={t!r}.")

    count = int(math.floor((hi - lo) / grid.dr)) + 1
    return lo + grid.dr * np.arange(count)


@register("radiation")
def radiation_experiment(config: ExperimentConfig) -> ExperimentResult:
    options, tolerances = config.options, config.tolerances
    taus = options.etas
    trajectory, data = _solve(
        config, [CharacteristicSampler(taus=taus, s_list=options.incoming)]
    )
    grid = trajectory.grid
    t_end = float(trajectory.times[-1])
    etas = _eta_grid(config, t_end, data.support)
    profile = extract_radiation(trajectory, etas, levels=options.levels)
    residual = radiation_residual(trajectory, profile)
    report: dict[str, Any] = {
        "outgoing": profile,
        "radiation_residual": residual,
        "profile_norm_squared": profile.norm_squared,
    }
    checks = []
    series = {
        "radiation_plus": Series(
            columns={"eta": profile.eta_grid, "g": profile.g},
            metadata=_metadata(config, t=profile.t_used),
        )
    }

    t_first = float(trajectory.times[0])
    if t_first < 0:
        incoming = extract_radiation(
            trajectory, _eta_grid(config, t_first, data.support, "-"), direction="-"
        )
        report["incoming"] = incoming
        series["radiation_minus"] = Series(
            columns={"eta": incoming.eta_grid, "g": incoming.g},
            metadata=_metadata(config, t=incoming.t_used),
        )

    stable_etas = etas[etas <= min(options.horizons, default=0.0) - 1.0]
    if len(options.horizons) > 1 and len(stable_etas) > 1:
        stability = horizon_stability(trajectory, stable_etas, options.horizons)
        report["horizon_stability"] = stability
        checks.append(
            CheckResult.at_least("horizon_decreasing", float(stability.decreasing), 1.0)
        )
        beta = derive(trajectory.config.params).beta
        if abs(stability.fitted_exponent - beta) > tolerances.rate_band:
            logger.warning(
                f"Horizon rate {stability.fitted_exponent!r} is outside {beta!r} "
                f"+/- {tolerances.rate_band!r}."
            )

    if grid.d == 3 and (errors := _oracle_errors(trajectory, data)) is not None:
        exact = radiation_oracle_d3(data.u0, data.u1, etas, data.u0_prime)
        l2_error = float(np.sqrt(trapezoid((profile.g - exact) ** 2, etas)))
        report["oracle"] = {"profile_l2_error": l2_error, "field_error": errors}
        checks.append(CheckResult.at_most("radiation_oracle", l2_error, tolerances.radiation))

    variations = [characteristic_variation(trajectory, "outgoing", tau) for tau in taus]
    variations += [characteristic_variation(trajectory, "incoming", s) for s in options.incoming]
    report["characteristic_variation"] = variations
    return ExperimentResult(report=report, series=series, checks=checks)


def _cauchy_pairs(trajectory: Trajectory, times: Sequence[float]) -> list[tuple[float, float]]:
    t_first, t_end = float(trajectory.times[0]), float(trajectory.times[-1])
    inside = [t for t in sorted(times) if t_first <= t <= t_end]
    return list(zip(inside[:-1], inside[1:]))


@register("scatter")
def scatter_experiment(config: ExperimentConfig) -> ExperimentResult:
    options = config.options
    trajectory, data = _solve(config)
    grid = trajectory.grid
    t_end = float(trajectory.times[-1])
    t_match = t_end if options.t_match is None else options.t_match

    profile = None
    if grid.d == 3:
        try:
            profile = extract_radiation(
                trajectory, _eta_grid(config, t_end, data.support), levels=0
            )
        except InsufficientHorizon as err:
            logger.warning(f"Falling back to the matched-data comparator: {err}")

    comparator = free_comparator(trajectory, t_match)
    scattering = exterior_scattering_check(
        trajectory,
        options.etas,
        t_match=t_match,
        profile=profile,
        comparator=comparator,
        c_values=options.c_values,
        band_radius=options.band_radius,
        t_from=options.t_from,
    )
    cauchy = [
        {"T1": t1, "T2": t2, "distance": cauchy_criterion(trajectory, t1, t2)}
        for t1, t2 in _cauchy_pairs(trajectory, options.cauchy_times)
    ]
    interior = [interior_energy_series(trajectory, c) for c in options.c_values]
    free_decay = free_decay_regions(comparator, options.etas, options.radii)

    checks = [
        CheckResult.at_least(f"exterior_decreasing[eta={s.eta!r}]", float(s.decreasing), 1.0)
        for s in scattering.exterior
        if s.eta == 1.0
    ]
    if len(cauchy) > 1:
        values = [row["distance"] for row in cauchy]
        checks.append(
            CheckResult.at_least(
                "cauchy_decreasing",
                float(all(b <= a for a, b in zip(values[:-1], values[1:]))),
                1.0,
            )
        )

    checks.extend(
        CheckResult.at_least(f"interior_decreasing[c={s.c!r}]", float(s.decreasing), 1.0)
        for s in interior
        if s.c == 1.0
    )
    if scattering.band_values and min(scattering.band_values) > 0:
        per_c = [v / c for v, c in zip(scattering.band_values, scattering.band_c)]
        checks.append(
            CheckResult.at_most(
                "band_proportional", max(per_c) / min(per_c), config.tolerances.band_factor
            )
        )

    series = {
        "scattering": Series(
            columns={"t": scattering.times, "distance": scattering.full_distance},
            metadata=_metadata(config, comparator=scattering.comparator),
        )
    }
    for exterior in scattering.exterior:
        series[f"exterior_eta={exterior.eta!r}"] = Series(
            columns={"t": exterior.times, "distance": exterior.distances},
            metadata=_metadata(config, eta=exterior.eta),
        )

    for s in interior:
        series[f"interior_c={s.c!r}"] = Series(
            columns={"t": s.times, "radius": s.radii, "energy": s.energy, "positive": s.positive},
            metadata=_metadata(config, c=s.c),
        )

    report = {
        "scattering": scattering,
        "cauchy": cauchy,
        "interior": interior,
        "free_decay": free_decay,
    }
    return ExperimentResult(report=report, series=series, checks=checks)


@register("linear-scatter")
def linear_scatter_experiment(config: ExperimentConfig) -> ExperimentResult:
    options = config.options
    trajectory, _ = _solve(config, nonlinearity_on=False)
    t_end = float(trajectory.times[-1])
    t_match = t_end if options.t_match is None else options.t_match
    comparator = free_comparator(trajectory, t_match)
    scattering = exterior_scattering_check(
        trajectory,
        options.etas,
        t_match=t_match,
        comparator=comparator,
        c_values=options.c_values,
        band_radius=options.band_radius,
        t_from=options.t_from,
    )
    cauchy = [
        {"T1": t1, "T2": t2, "distance": cauchy_criterion(trajectory, t1, t2)}
        for t1, t2 in _cauchy_pairs(trajectory, options.cauchy_times)
    ]
    split_time = t_end / (1 + max(options.deltas, default=0.0))
    split = linear_split(trajectory, comparator, split_time, options.deltas)

    checks = []
    if len(cauchy) > 1:
        values = [row["distance"] for row in cauchy]
        checks.append(
            CheckResult.at_least(
                "cauchy_decreasing",
                float(all(b <= a for a, b in zip(values[:-1], values[1:]))),
                1.0,
            )
        )

    report = {"scattering": scattering, "cauchy": cauchy, "split": split}
    series = {
        "scattering": Series(
            columns={"t": scattering.times, "distance": scattering.full_distance},
            metadata=_metadata(config, comparator=scattering.comparator),
        )
    }
    return ExperimentResult(report=report, series=series, checks=checks)


@register("decay-sweep")
def decay_sweep(config: ExperimentConfig) -> ExperimentResult:
    options, tolerances = config.options, config.tolerances
    params = config.validated_params()
    kappa = derive(params).kappa_0 if options.kappa is None else options.kappa
    t_start = config.solver.t_start
    trajectory, _ = _solve(config, t_start=t_start)

    tail = tail_decay_check(trajectory, kappa, options.radii)
    estimates = []
    if float(trajectory.times[0]) < 0:
        estimates = [integral_estimates(trajectory, R, kappa) for R in options.radii]

    interior = [interior_energy_series(trajectory, c) for c in options.c_values]
    checks = [
        CheckResult.at_most(f"tail_energy[r={r!r}]", ratio, tolerances.tail_ratio)
        for r, ratio in zip(tail.radii, tail.energy_ratio)
        if ratio is not None
    ]
    if tail.pointwise_ratio is not None:
        checks.append(
            CheckResult.at_most("tail_pointwise", tail.pointwise_ratio, tolerances.tail_ratio)
        )

    series = {}
    for item in estimates:
        series[f"integral_R={item.R!r}"] = Series(
            columns={"t": item.times, "ratio": item.ratios},
            metadata=_metadata(config, R=item.R, kappa=kappa),
        )

    report = {"kappa": kappa, "tail": tail, "integral": estimates, "interior": interior}
    return ExperimentResult(report=report, series=series, checks=checks)


def _converge_level(payload: str, level: int) -> dict[str, float]:
    config = ExperimentConfig.from_json(payload).refined(level)
    target = config.options.target
    if target == "flux-check":
        trajectory, _ = _solve(config, [ConeSampler(config.options.etas)])
        t1, t2 = config.options.windows[0]
        return {
            f"flux_residual[eta={eta!r}]": abs(
                cone_flux(trajectory, eta, max(t1, eta), t2).residual
            )
            for eta in config.options.etas
        }

    trajectory, data = _solve(config)
    quantities = {"energy_drift": trajectory.energy_drift}
    if (errors := _oracle_errors(trajectory, data)) is not None:
        quantities["oracle_error"] = errors["w"]

    return quantities


@register("converge")
def converge(config: ExperimentConfig) -> ExperimentResult:
    """
    Run the target experiment on ``levels`` successively halved grids and fit
    the observed order of every error quantity.
    """
    options, tolerances = config.options, config.tolerances
    levels = list(range(options.levels))
    payload = config.model_dump_json()
    workers = min(len(levels), get_worker_count())
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_converge_level, [payload] * len(levels), levels))
    else:
        results = [_converge_level(payload, level) for level in levels]

    spacings = [config.refined(level).radial_grid().dr for level in levels]
    columns: dict[str, list[float]] = {"dr": spacings}
    orders: dict[str, float] = {}
    checks = []
    for name in results[0]:
        errors = [row[name] for row in results]
        columns[name] = errors
        orders[name] = observed_order(spacings, errors)
        if name == "energy_drift":
            # Time-stepping error in the drift may converge faster than second order.
            check = CheckResult.at_least(
                f"order[{name}]", orders[name], tolerances.order - tolerances.order_band
            )
        else:
            check = CheckResult.at_most(
                f"order[{name}]", abs(orders[name] - tolerances.order), tolerances.order_band
            )

        if not check.passed:
            logger.warning(f"Observed order {orders[name]!r} of {name} is outside the band.")

        checks.append(check)

    report = {"target": options.target, "spacings": spacings, "orders": orders}
    series = {"convergence": Series(columns=columns, metadata=_metadata(config))}
    return ExperimentResult(report=report, series=series, checks=checks)


def _constants(config: ExperimentConfig) -> Optional[dict[str, Any]]:
    p = config.params
    result = verdict(p.d, p.p, p.a)
    if not result["valid"]:
        return None

    constants = derive(config.validated_params()).model_dump()
    try:
        constants["nonlinearity_triple"] = nonlinearity_triple(p.d, p.p).model_dump()
    except ValueError:
        constants["nonlinearity_triple"] = None

    return constants


def run(
    config: ExperimentConfig, out: Optional[Path] = None, assert_checks: bool = False
) -> RunManifest:
    """
    Run the configured experiment and write ``report.json``, ``series/*.csv``
    and ``manifest.json`` under ``out``.
    """
    if (experiment := EXPERIMENTS.get(config.experiment)) is None:
        raise ExperimentUnknown(config.experiment, sorted(EXPERIMENTS))

    started = time.perf_counter()
    out_dir = Path(out or config.output)
    config_hash = config.config_hash
    logger.info(f"Running '{config.experiment}' (config {config_hash[:12]}).")
    result = experiment(config)

    out_dir.mkdir(parents=True, exist_ok=True)
    report_path = out_dir / "report.json"
    report_path.write_text(
        dump_json(
            {
                "experiment": config.experiment,
                "config_hash": config_hash,
                "config": config.model_dump(mode="json"),
                "constants": _constants(config),
                "results": result.report,
                "checks": result.checks,
            }
        ),
        encoding="utf8",
    )
    written = [report_path]
    for name, series in sorted(result.series.items()):
        path = out_dir / "series" / f"{name}.csv"
        write_csv(path, series.columns, series.metadata)
        written.append(path)
        logger.debug(f"Wrote {path}.")

    failed = [check.name for check in result.checks if not check.passed]
    manifest = RunManifest(
        experiment=config.experiment,
        config_hash=config_hash,
        version=_package_version(),
        wall_time=time.perf_counter() - started,
        files=[
            ManifestEntry(path=path.relative_to(out_dir).as_posix(), sha256=sha256_file(path))
            for path in written
        ],
        passed=not failed,
    )
    (out_dir / "manifest.json").write_text(dump_json(manifest), encoding="utf8")
    logger.info(f"Wrote {len(written) + 1} files to {out_dir}.")

    if failed:
        logger.warning(f"{len(failed)} of {len(result.checks)} checks failed: {', '.join(failed)}.")
        if assert_checks:
            raise AcceptanceFailure(failed)

    else:
        logger.success(f"'{config.experiment}' finished; {len(result.checks)} checks passed.")

    return manifest
