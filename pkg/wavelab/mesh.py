"""
Uniform radial grid ``r_j = j·dr`` with a node at the origin, shell quadrature
with the ``d``-dimensional measure ``c_d r^{d-1} dr``, and off-grid interpolation.
"""

from functools import cached_property
from typing import Optional, Union

import numpy as np
from pydantic import model_validator
from scipy.integrate import cumulative_trapezoid

from wavelab._models import FloatArray, WaveLabModel
from wavelab.exceptions import RangeOutsideGrid
from wavelab.exponents import sphere_area

ArrayLike = Union[float, np.ndarray]


class RadialGrid(WaveLabModel):
    d: int
    """
    Space dimension the radial measure is taken in.
    """

    n: int
    """
    Number of cells. The grid has ``n + 1`` nodes, ``r_0 = 0`` and ``r_n = r_max``.
    """

    r_max: float
    """
    Outer radius.
    """

    @model_validator(mode="after")
    def _check_extent(self):
        if self.n < 2:
            raise ValueError("A radial grid needs at least two cells.")

        elif not (0 < self.r_max < np.inf):
            raise ValueError("r_max must be positive and finite.")

        return self

    @classmethod
    def from_spacing(cls, d: int, dr: float, n: int) -> "RadialGrid":
        return cls(d=d, n=n, r_max=n * dr)

    @property
    def dr(self) -> float:
        return self.r_max / self.n

    @cached_property
    def nodes(self) -> np.ndarray:
        return np.arange(self.n + 1) * self.dr

    @cached_property
    def c_d(self) -> float:
        return sphere_area(self.d)

    def refined(self, factor: int = 2) -> "RadialGrid":
        return RadialGrid(d=self.d, n=self.n * factor, r_max=self.r_max)

    def radial_weight(self, power: float) -> np.ndarray:
        """
        ``r_j^power`` on the nodes, with the origin value set to 0 for negative powers.
        """
        r = self.nodes
        if power >= 0:
            return r**power

        weight = np.zeros_like(r)
        weight[1:] = r[1:] ** power
        return weight

    def check_range(self, r_a: ArrayLike, r_b: ArrayLike):
        lo = np.asarray(r_a, dtype=float)
        hi = np.asarray(r_b, dtype=float)
        slack = 1e-12 * self.r_max
        if np.any(lo < -slack) or np.any(hi > self.r_max + slack) or np.any(lo > hi + slack):
            raise RangeOutsideGrid(float(np.min(lo)), float(np.max(hi)), self.r_max)


class ConeSection(WaveLabModel):
    """
    The truncated light cone ``|x| = t - eta`` for ``t1 <= t <= t2``.
    """

    eta: float
    t1: float
    t2: float

    @model_validator(mode="after")
    def _check_times(self):
        if self.t1 < self.eta:
            raise ValueError("Cone section must start at t1 >= eta.")

        elif not self.t2 > self.t1:
            raise ValueError("Cone section needs t2 > t1.")

        return self

    def radius(self, t: ArrayLike) -> ArrayLike:
        return np.asarray(t, dtype=float) - self.eta


class PhysicalState(WaveLabModel):
    """
    The physical field ``u`` with its radial and time derivatives on the grid nodes.
    """

    t: float
    u: FloatArray
    u_r: FloatArray
    u_t: FloatArray


class Norms(WaveLabModel):
    l2: float
    h1_dot: float
    lp1: float
    hardy_term: float


def _cumulative(samples: np.ndarray, grid: RadialGrid, power: float) -> tuple:
    g = grid.c_d * np.asarray(samples, dtype=float) * grid.radial_weight(power)
    return g, cumulative_trapezoid(g, dx=grid.dr, initial=0.0)


def _antiderivative(g: np.ndarray, cum: np.ndarray, grid: RadialGrid, x: np.ndarray):
    # Exact integral of the piecewise-linear interpolant of g from 0 to x.
    scaled = np.clip(x / grid.dr, 0.0, grid.n)
    j = np.minimum(np.floor(scaled).astype(int), grid.n - 1)
    s = scaled - j
    return cum[j] + grid.dr * s * (g[j] + 0.5 * s * (g[j + 1] - g[j]))


def shell_integral(
    samples: np.ndarray,
    grid: RadialGrid,
    r_a: ArrayLike = 0.0,
    r_b: Optional[ArrayLike] = None,
    power: Optional[float] = None,
) -> ArrayLike:
    """
    Trapezoidal value of ``c_d ∫_{r_a}^{r_b} f(r) r^power dr``, with partial cells
    at both ends. ``power`` defaults to ``d - 1``, the radial volume element.
    ``r_a`` and ``r_b`` may be arrays of equal shape.
    """
    r_b = grid.r_max if r_b is None else r_b
    grid.check_range(r_a, r_b)
    g, cum = _cumulative(samples, grid, grid.d - 1 if power is None else power)
    lo = _antiderivative(g, cum, grid, np.asarray(r_a, dtype=float))
    hi = _antiderivative(g, cum, grid, np.asarray(r_b, dtype=float))
    result = hi - lo
    return float(result) if np.ndim(result) == 0 else result


def interpolate_many(samples: np.ndarray, grid: RadialGrid, radii: ArrayLike) -> np.ndarray:
    """
    Four-point Lagrange interpolation at off-grid radii. Falls back to linear
    interpolation in the first and last cells, where the stencil leaves the grid.
    """
    f = np.asarray(samples, dtype=float)
    x = np.atleast_1d(np.asarray(radii, dtype=float))
    grid.check_range(x, x)

    scaled = np.clip(x / grid.dr, 0.0, grid.n)
    j = np.minimum(np.floor(scaled).astype(int), grid.n - 1)
    s = scaled - j

    linear = (1 - s) * f[j] + s * f[j + 1]

    jm = np.maximum(j - 1, 0)
    jp = np.minimum(j + 2, grid.n)
    cubic = (
        -s * (s - 1) * (s - 2) / 6 * f[jm]
        + (s + 1) * (s - 1) * (s - 2) / 2 * f[j]
        - (s + 1) * s * (s - 2) / 2 * f[j + 1]
        + (s + 1) * s * (s - 1) / 6 * f[jp]
    )
    full_stencil = (j - 1 >= 0) & (j + 2 <= grid.n)
    return np.where(full_stencil, cubic, linear)


def interpolate(samples: np.ndarray, grid: RadialGrid, r: float) -> float:
    return float(interpolate_many(samples, grid, r)[0])


def norms(state: PhysicalState, grid: RadialGrid, p: float) -> Norms:
    u = state.u
    return Norms(
        l2=shell_integral(u**2, grid),
        h1_dot=shell_integral(state.u_r**2, grid),
        lp1=shell_integral(np.abs(u) ** (p + 1), grid),
        hardy_term=shell_integral(u**2, grid, power=grid.d - 3),
    )


def form_equivalence(d: int, a: float) -> tuple[float, float]:
    """
    Constants ``(lower, upper)`` with
    ``lower·(‖∇u‖² + ‖u/r‖²) <= ‖∇u‖² + a‖u/r‖² <= upper·(‖∇u‖² + ‖u/r‖²)``,
    valid whenever ``a > -(d-2)²/4``.
    """
    c = (d - 2) ** 2 / 4
    return min(1.0, (c + a) / (c + 1)), max(1.0, a)


def random_radial_field(
    rng: np.random.Generator, grid: RadialGrid, terms: int = 3
) -> PhysicalState:
    """
    A smooth radial field made of a few random Gaussian shells, with its
    exact radial derivative and ``u_t = 0``.
    """
    r = grid.nodes
    u = np.zeros_like(r)
    u_r = np.zeros_like(r)
    reach = min(grid.r_max / 4, 4.0)
    for _ in range(terms):
        amplitude = rng.uniform(-1.0, 1.0)
        center = rng.uniform(0.0, reach)
        width = rng.uniform(0.3, 1.5)
        shell = amplitude * np.exp(-(((r - center) / width) ** 2))
        u += shell
        u_r += -2 * (r - center) / width**2 * shell

    return PhysicalState(t=0.0, u=u, u_r=u_r, u_t=np.zeros_like(r))
