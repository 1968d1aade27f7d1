import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from mms_closure import verify
from mms_closure.grid import Grid1D, Grid2D
from mms_closure.mms import (
    AdvectionSolution,
    Burgers1DSolution,
    Burgers2DSolution,
    ToySolution,
    sample_spec,
    zero_spec,
)

TWO_PI = 2 * math.pi
KINDS = ["burgers1d", "burgers2d", "advection2d"]


@pytest.mark.parametrize("kind", KINDS)
def test_closed_form_forcing_matches_fd_residual(kind):
    rng = np.random.default_rng(11)
    assert verify.max_forcing_residual(kind, rng, n_cases=150) < verify.TOLERANCE


@settings(max_examples=60, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), x=st.floats(0, 1), t=st.floats(0, 1), nu=st.floats(1e-4, 5e-2))
def test_fd_oracle_1d_pointwise(seed, x, t, nu):
    spec = Burgers1DSolution.sample(np.random.default_rng(seed))
    assert abs(spec.forcing(x, t, nu) - verify.fd_residual_1d(spec, x, t, nu)) < verify.TOLERANCE


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), x=st.floats(0, 1), y=st.floats(0, 1), t=st.floats(0, 1))
def test_fd_oracle_2d_pointwise(seed, x, y, t):
    rng = np.random.default_rng(seed)
    b = Burgers2DSolution.sample(rng)
    got = np.array(b.forcing(x, y, t, 5e-3))
    want = np.array(verify.fd_residual_2d_burgers(b, x, y, t, 5e-3))
    assert np.max(np.abs(got - want)) < verify.TOLERANCE
    a = AdvectionSolution.sample(rng)
    assert abs(a.forcing(x, y) - verify.fd_residual_2d_advection(a, x, y, t)) < verify.TOLERANCE


def test_sampling_is_deterministic():
    for kind in KINDS:
        a = sample_spec(kind, np.random.default_rng(5))
        b = sample_spec(kind, np.random.default_rng(5))
        assert a == b


def test_burgers1d_parameter_ranges():
    rng = np.random.default_rng(0)
    specs = [Burgers1DSolution.sample(rng) for _ in range(10_000)]
    A = np.array([s.A for s in specs])
    c = np.array([s.c for s in specs])
    assert A.min() >= 0 and A.max() <= 1
    assert c.min() >= 0.1 and c.max() <= 2
    assert {s.a for s in specs} == {TWO_PI, 2 * TWO_PI}
    assert all(-2 <= s.delta <= 2 for s in specs)


def test_burgers1d_solution_examples():
    peak = Burgers1DSolution(1, 0, TWO_PI, TWO_PI, 0, 0)
    assert peak.solution(0.25, 3.7) == pytest.approx(1.0, abs=1e-15)
    assert zero_spec("burgers1d").solution(0.3, 0.2) == 0
    spec = Burgers1DSolution(1, 1, TWO_PI, TWO_PI, 1, 0)
    assert spec.solution(0.0, 1.0) == pytest.approx(math.exp(-1), abs=1e-15)


def test_toy_solution_forcing():
    toy = ToySolution()
    assert toy.forcing(0.0, 1.0, 0.01) == pytest.approx(1.01, abs=1e-15)
    grid = Grid1D(16, 1e-3)
    np.testing.assert_allclose(toy.forcing_field(grid, 0.0, 0.01)[0], np.cos(grid.coords()[0]), atol=0)


@pytest.mark.parametrize("kind", KINDS)
def test_zero_amplitudes_give_zero_fields(kind):
    spec = zero_spec(kind)
    grid = Grid1D(16, 1e-3) if kind == "burgers1d" else Grid2D(8, 8, 1e-3)
    assert np.all(spec.solution_field(grid, 0.4) == 0)
    assert np.all(spec.forcing_field(grid, 0.4, 1e-2) == 0)


def test_burgers2d_first_mode_peak():
    spec = Burgers2DSolution(1, 0, 0, 0, 0, 0, 0, 0, 1, 1)
    u, v = spec.solution(0.25, 0.25, 0.0)
    assert u == pytest.approx(1.0, abs=1e-15)
    assert v == 0


def test_burgers2d_periodic_and_linear_in_nu():
    rng = np.random.default_rng(3)
    for _ in range(20):
        spec = Burgers2DSolution.sample(rng)
        x, y, t = rng.uniform(0, 1, 3)
        base = np.array(spec.solution(x, y, t))
        np.testing.assert_allclose(spec.solution(x + 1, y, t), base, atol=1e-12)
        np.testing.assert_allclose(spec.solution(x, y + 1, t), base, atol=1e-12)
        f0, f1, f2 = (np.array(spec.forcing(x, y, t, nu)) for nu in (0.0, 0.01, 0.02))
        np.testing.assert_allclose(f2 - f1, f1 - f0, atol=1e-12)


def test_advection_forcing_vanishes_at_quarter_point():
    spec = AdvectionSolution(1, 0, 0, 0, *([TWO_PI] * 8), 0, 0)
    assert spec.forcing(0.25, 0.25) == pytest.approx(0.0, abs=1e-14)


def test_field_matches_pointwise_evaluation():
    rng = np.random.default_rng(4)
    spec = Burgers1DSolution.sample(rng)
    grid = Grid1D(64, 5e-3)
    field = spec.forcing_field(grid, 0.2, 1e-2)
    i = 17
    assert field[0, i] == spec.forcing(i / 64, 0.2, 1e-2)
    adv = AdvectionSolution.sample(rng)
    g2 = Grid2D(32, 32, 5e-3)
    assert adv.solution_field(g2, 0.0)[0, 3, 9] == adv.solution(3 / 32, 9 / 32)


def test_burgers1d_solution_decays():
    rng = np.random.default_rng(6)
    grid = Grid1D(256, 1e-3)
    for _ in range(10):
        spec = Burgers1DSolution.sample(rng)
        for t in (0.0, 0.5, 1.0):
            bound = (spec.A + spec.B) * math.exp(-spec.c * t)
            assert np.max(np.abs(spec.solution_field(grid, t))) <= bound * (1 + 1e-12)
