"""Manufactured solutions and their closed-form forcing terms.

Each family is a frozen dataclass holding the sampled parameters. The
``solution``/``forcing`` methods accept scalars or broadcastable arrays;
``solution_field``/``forcing_field`` evaluate on a grid and return arrays
with a leading component axis (``(1, n)``, ``(2, nx, ny)`` or ``(1, nx, ny)``).
"""

from __future__ import annotations

from dataclasses import astuple, dataclass, fields

import numpy as np

from .grid import Grid, Grid1D, Grid2D

TWO_PI = 2.0 * np.pi
WAVENUMBERS = (2.0 * np.pi, 4.0 * np.pi)


def _wavenumber(rng: np.random.Generator) -> float:
    return WAVENUMBERS[int(rng.integers(2))]


@dataclass(frozen=True)
class Burgers1DSolution:
    """A sin(a x - delta t) e^{-ct} + B cos(b x - delta t) e^{-ct}."""

    A: float
    B: float
    a: float
    b: float
    c: float
    delta: float

    kind = "burgers1d"
    n_components = 1

    @classmethod
    def sample(cls, rng: np.random.Generator) -> Burgers1DSolution:
        A, B = rng.uniform(0.0, 1.0, size=2)
        a, b = _wavenumber(rng), _wavenumber(rng)
        c = rng.uniform(0.1, 2.0)
        delta = rng.uniform(-2.0, 2.0)
        return cls(float(A), float(B), a, b, float(c), float(delta))

    def solution(self, x, t):
        decay = np.exp(-self.c * t)
        return decay * (
            self.A * np.sin(self.a * x - self.delta * t)
            + self.B * np.cos(self.b * x - self.delta * t)
        )

    def forcing(self, x, t, nu):
        decay = np.exp(-self.c * t)
        sa, ca = np.sin(self.a * x - self.delta * t), np.cos(self.a * x - self.delta * t)
        sb, cb = np.sin(self.b * x - self.delta * t), np.cos(self.b * x - self.delta * t)
        psi = decay * (self.A * sa + self.B * cb)
        psi_t = -self.c * psi + decay * self.delta * (-self.A * ca + self.B * sb)
        psi_x = decay * (self.A * self.a * ca - self.B * self.b * sb)
        psi_xx = -decay * (self.A * self.a**2 * sa + self.B * self.b**2 * cb)
        return psi_t + psi * psi_x - nu * psi_xx

    def solution_field(self, grid: Grid1D, t: float) -> np.ndarray:
        (x,) = grid.coords()
        return self.solution(x, t)[None]

    def forcing_field(self, grid: Grid1D, t: float, nu: float) -> np.ndarray:
        (x,) = grid.coords()
        return self.forcing(x, t, nu)[None]


@dataclass(frozen=True)
class ToySolution:
    """psi = t cos(x); a fixed verification case, never sampled for training."""

    kind = "burgers1d"
    n_components = 1

    def solution(self, x, t):
        return t * np.cos(x)

    def forcing(self, x, t, nu):
        return np.cos(x) - t * t * np.cos(x) * np.sin(x) + nu * t * np.cos(x)

    def solution_field(self, grid: Grid1D, t: float) -> np.ndarray:
        (x,) = grid.coords()
        return self.solution(x, t)[None]

    def forcing_field(self, grid: Grid1D, t: float, nu: float) -> np.ndarray:
        (x,) = grid.coords()
        return self.forcing(x, t, nu)[None]


def _modes(x, y):
    sx, cx = np.sin(TWO_PI * x), np.cos(TWO_PI * x)
    sy, cy = np.sin(TWO_PI * y), np.cos(TWO_PI * y)
    return sx, cx, sy, cy


@dataclass(frozen=True)
class Burgers2DSolution:
    Au: float
    Bu: float
    Cu: float
    Du: float
    Av: float
    Bv: float
    Cv: float
    Dv: float
    z_diff_u: float
    z_diff_v: float

    kind = "burgers2d"
    n_components = 2

    @classmethod
    def sample(cls, rng: np.random.Generator) -> Burgers2DSolution:
        amps = rng.uniform(0.0, 1.0, size=8)
        z = rng.uniform(0.1, 3.0, size=2)
        return cls(*(float(v) for v in amps), float(z[0]), float(z[1]))

    def _component(self, amps, z, x, y, t):
        # value, d/dx, d/dy of one velocity component
        A, B, C, D = amps
        sx, cx, sy, cy = _modes(x, y)
        decay = np.exp(-z * t)
        val = decay * (A * sx * sy + B * cx * sy + C * sx * cy + D * cx * cy)
        dx = decay * TWO_PI * (A * cx * sy - B * sx * sy + C * cx * cy - D * sx * cy)
        dy = decay * TWO_PI * (A * sx * cy + B * cx * cy - C * sx * sy - D * cx * sy)
        return val, dx, dy

    def solution(self, x, y, t):
        u = self._component((self.Au, self.Bu, self.Cu, self.Du), self.z_diff_u, x, y, t)[0]
        v = self._component((self.Av, self.Bv, self.Cv, self.Dv), self.z_diff_v, x, y, t)[0]
        return u, v

    def forcing(self, x, y, t, nu):
        u, u_x, u_y = self._component((self.Au, self.Bu, self.Cu, self.Du), self.z_diff_u, x, y, t)
        v, v_x, v_y = self._component((self.Av, self.Bv, self.Cv, self.Dv), self.z_diff_v, x, y, t)
        # every mode is a Laplacian eigenfunction with eigenvalue -2 (2 pi)^2
        lap = -2.0 * TWO_PI**2
        fu = -self.z_diff_u * u + u * u_x + v * u_y - nu * lap * u
        fv = -self.z_diff_v * v + u * v_x + v * v_y - nu * lap * v
        return fu, fv

    def solution_field(self, grid: Grid2D, t: float) -> np.ndarray:
        return np.stack(self.solution(*grid.coords(), t))

    def forcing_field(self, grid: Grid2D, t: float, nu: float) -> np.ndarray:
        return np.stack(self.forcing(*grid.coords(), t, nu))


@dataclass(frozen=True)
class AdvectionSolution:
    """Time-independent four-mode field advected by u = x + alpha, v = y + beta."""

    A: float
    B: float
    C: float
    D: float
    a: float
    b: float
    c: float
    d: float
    e: float
    f: float
    g: float
    h: float
    alpha: float
    beta: float

    kind = "advection2d"
    n_components = 1

    @classmethod
    def sample(cls, rng: np.random.Generator) -> AdvectionSolution:
        amps = rng.uniform(0.0, 1.0, size=4)
        waves = [_wavenumber(rng) for _ in range(8)]
        alpha, beta = rng.uniform(-1.0, 1.0, size=2)
        return cls(*(float(v) for v in amps), *waves, float(alpha), float(beta))

    def velocity(self, x, y):
        return x + self.alpha, y + self.beta

    def solution(self, x, y, t=0.0):
        return (
            self.A * np.sin(self.a * x) * np.sin(self.b * y)
            + self.B * np.cos(self.c * x) * np.sin(self.d * y)
            + self.C * np.sin(self.e * x) * np.cos(self.f * y)
            + self.D * np.cos(self.g * x) * np.cos(self.h * y)
        )

    def forcing(self, x, y, t=0.0, nu=None):
        psi_x = (
            self.A * self.a * np.cos(self.a * x) * np.sin(self.b * y)
            - self.B * self.c * np.sin(self.c * x) * np.sin(self.d * y)
            + self.C * self.e * np.cos(self.e * x) * np.cos(self.f * y)
            - self.D * self.g * np.sin(self.g * x) * np.cos(self.h * y)
        )
        psi_y = (
            self.A * self.b * np.sin(self.a * x) * np.cos(self.b * y)
            + self.B * self.d * np.cos(self.c * x) * np.cos(self.d * y)
            - self.C * self.f * np.sin(self.e * x) * np.sin(self.f * y)
            - self.D * self.h * np.cos(self.g * x) * np.sin(self.h * y)
        )
        u, v = self.velocity(x, y)
        return u * psi_x + v * psi_y

    def velocity_field(self, grid: Grid2D) -> np.ndarray:
        return np.stack(self.velocity(*grid.coords()))

    def solution_field(self, grid: Grid2D, t: float) -> np.ndarray:
        return self.solution(*grid.coords(), t)[None]

    def forcing_field(self, grid: Grid2D, t: float, nu=None) -> np.ndarray:
        return self.forcing(*grid.coords(), t)[None]


FAMILIES = {
    "burgers1d": Burgers1DSolution,
    "burgers2d": Burgers2DSolution,
    "advection2d": AdvectionSolution,
}

MmsSpec = Burgers1DSolution | Burgers2DSolution | AdvectionSolution


def sample_spec(kind: str, rng: np.random.Generator) -> MmsSpec:
    return FAMILIES[kind].sample(rng)


def zero_spec(kind: str) -> MmsSpec:
    """All amplitudes zero; the remaining parameters are set to valid values."""
    cls = FAMILIES[kind]
    values = {}
    for f in fields(cls):
        if f.name in ("a", "b", "c", "d", "e", "f", "g", "h") and kind == "advection2d":
            values[f.name] = TWO_PI
        elif f.name in ("a", "b") and kind == "burgers1d":
            values[f.name] = TWO_PI
        elif f.name == "c" and kind == "burgers1d":
            values[f.name] = 1.0
        elif f.name.startswith("z_diff"):
            values[f.name] = 1.0
        else:
            values[f.name] = 0.0
    return cls(**values)


def spec_to_list(spec: MmsSpec) -> list[float]:
    return [float(v) for v in astuple(spec)]


def forcing_field(spec, grid: Grid, t: float, nu: float | None = None) -> np.ndarray:
    return spec.forcing_field(grid, t, nu)


def solution_field(spec, grid: Grid, t: float) -> np.ndarray:
    return spec.solution_field(grid, t)
