"""Finite-difference residual oracle for the manufactured solutions.

Only ``solution`` is ever called here, so the check is independent of the
hand-derived forcing terms it is compared against.
"""

from __future__ import annotations

import numpy as np

from .mms import AdvectionSolution, Burgers1DSolution, Burgers2DSolution, sample_spec

FD_STEP = 1e-4
TOLERANCE = 1e-5


def d1(f, z, h=FD_STEP):
    """Fourth-order central first derivative."""
    return (-f(z + 2 * h) + 8 * f(z + h) - 8 * f(z - h) + f(z - 2 * h)) / (12 * h)


def d2(f, z, h=FD_STEP):
    """Fourth-order central second derivative."""
    return (-f(z + 2 * h) + 16 * f(z + h) - 30 * f(z) + 16 * f(z - h) - f(z - 2 * h)) / (12 * h * h)


def fd_residual_1d(spec, x, t, nu):
    psi = spec.solution(x, t)
    psi_t = d1(lambda s: spec.solution(x, s), t)
    psi_x = d1(lambda s: spec.solution(s, t), x)
    psi_xx = d2(lambda s: spec.solution(s, t), x)
    return psi_t + psi * psi_x - nu * psi_xx


def fd_residual_2d_burgers(spec, x, y, t, nu):
    def comp(k):
        return lambda xx, yy, tt: spec.solution(xx, yy, tt)[k]

    u, v = spec.solution(x, y, t)
    out = []
    for k in range(2):
        w = comp(k)
        w_t = d1(lambda s: w(x, y, s), t)
        w_x = d1(lambda s: w(s, y, t), x)
        w_y = d1(lambda s: w(x, s, t), y)
        lap = d2(lambda s: w(s, y, t), x) + d2(lambda s: w(x, s, t), y)
        out.append(w_t + u * w_x + v * w_y - nu * lap)
    return tuple(out)


def fd_residual_2d_advection(spec, x, y, t):
    psi_t = d1(lambda s: spec.solution(x, y, s), t)
    psi_x = d1(lambda s: spec.solution(s, y, t), x)
    psi_y = d1(lambda s: spec.solution(x, s, t), y)
    u, v = spec.velocity(x, y)
    return psi_t + u * psi_x + v * psi_y


def max_forcing_residual(kind: str, rng: np.random.Generator, n_cases: int = 200, nu: float = 1e-2) -> float:
    """Largest |closed-form forcing - FD residual| over random (spec, point, time) tuples."""
    worst = 0.0
    for _ in range(n_cases):
        spec = sample_spec(kind, rng)
        x, y = rng.uniform(0.0, 1.0, size=2)
        t = rng.uniform(0.0, 1.0)
        if isinstance(spec, Burgers1DSolution):
            diff = abs(spec.forcing(x, t, nu) - fd_residual_1d(spec, x, t, nu))
        elif isinstance(spec, Burgers2DSolution):
            fu, fv = spec.forcing(x, y, t, nu)
            ru, rv = fd_residual_2d_burgers(spec, x, y, t, nu)
            diff = max(abs(fu - ru), abs(fv - rv))
        elif isinstance(spec, AdvectionSolution):
            diff = abs(spec.forcing(x, y, t) - fd_residual_2d_advection(spec, x, y, t))
        else:  # pragma: no cover
            raise TypeError(type(spec))
        worst = max(worst, float(diff))
    return worst
