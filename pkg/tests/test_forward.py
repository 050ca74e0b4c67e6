import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from gibbs_tess.forward import (
    HypothesisError,
    MarginalField,
    RateSignError,
    StabilityError,
    build_ell_box,
    solve_ell_t,
    solve_ell_x,
    xi_residual,
)
from gibbs_tess.harness import ExperimentConfig, prepare
from gibbs_tess.kinetic import solve_kinetic
from gibbs_tess.marks import Kernel, MarkSet

TWO = MarkSet([(0, 0), (1, 1)])
FIXA = MarkSet([(0, 0), (1, 0), (2, 1)])


def const(marks, c, nx=41, x0=-1.0, dx=0.05, times=(0.0,), V=1.0, box=None):
    return Kernel.constant(marks, c, x0, dx, nx, list(times), V, 2.0, box=box)


@pytest.mark.parametrize("n", [50, 200, 800])
def test_x_sweep_closed_form(n):
    c = 1.5
    xs, L = solve_ell_x(const(TWO, c), [1.0, 0.0], 0.0, (0.0, 1.0), n)
    exact = np.stack([np.exp(-c * xs), 1 - np.exp(-c * xs)], axis=1)
    assert np.abs(L - exact).max() <= 2.0 / n


@pytest.mark.parametrize("n", [50, 200, 800])
def test_t_evolution_closed_form(n):
    c = 1.5
    f = const(TWO, c, times=(0.0, 1.0))
    ts, L = solve_ell_t(f, [1.0, 0.0], 0.0, (0.0, 1.0), n)
    exact = np.stack([np.exp(-c * ts), 1 - np.exp(-c * ts)], axis=1)
    assert np.abs(L - exact).max() <= 2.0 / n


def test_zero_kernel_keeps_ell():
    f = const(FIXA, 0.0)
    l0 = [0.2, 0.3, 0.5]
    _, L = solve_ell_x(f, l0, 0.0, (0.0, 1.0), 20)
    np.testing.assert_allclose(L, np.broadcast_to(l0, L.shape))


@settings(max_examples=40, deadline=None)
@given(st.lists(st.floats(0.05, 1.0), min_size=3, max_size=3), st.floats(0.0, 2.0))
def test_mass_conserved_property(raw, c):
    l0 = np.asarray(raw) / sum(raw)
    _, L = solve_ell_x(const(FIXA, c), l0, 0.0, (0.0, 1.0), 40)
    assert np.abs(L.sum(-1) - 1).max() <= 1e-12
    _, L = solve_ell_t(const(FIXA, c, times=(0.0, 1.0)), l0, 0.0, (0.0, 0.5), 40, shift=1.0)
    assert np.abs(L.sum(-1) - 1).max() <= 1e-12


def test_stability_guard():
    with pytest.raises(StabilityError):
        solve_ell_x(const(FIXA, 2.0), [1 / 3] * 3, 0.0, (0.0, 1.0), 1)


def test_rate_sign_guard():
    ms = MarkSet([(0, 1), (1, 0)])
    f = const(ms, 1.0, times=(0.0, 1.0), V=2.0)
    with pytest.raises(RateSignError):
        solve_ell_t(f, [0.5, 0.5], 0.0, (0.0, 0.5), 10)
    solve_ell_t(f, [0.5, 0.5], 0.0, (0.0, 0.5), 10, shift=1.0)


def test_ell0_validation():
    with pytest.raises(ValueError):
        solve_ell_x(const(FIXA, 1.0), [0.5, 0.5, 0.5], 0.0, (0.0, 1.0), 10)


def test_build_box_uniform():
    h = const(FIXA, 2.0, box=(0, 1))
    f = solve_kinetic(h, 1 / 192, 40)
    ell = build_ell_box(f, np.full(3, 1 / 3), (0, 1, 1 / 192))
    assert ell.mass_defect() <= 1e-8
    assert ell.floor > 0
    if ell.declared_floor is not None:
        assert ell.floor >= ell.declared_floor


def test_build_box_zero_kernel():
    f = const(FIXA, 0.0, times=np.linspace(0, 0.01, 5), box=(0, 1))
    l0 = np.full(3, 1 / 3)
    ell = build_ell_box(f, l0, (0, 1, 0.01))
    np.testing.assert_allclose(ell.values, np.broadcast_to(l0, ell.values.shape), atol=1e-15)
    assert xi_residual(f, ell) == 0.0


def test_build_box_hypothesis():
    f = const(MarkSet([(0, 1), (1, 0)]), 1.0, times=(0.0, 0.01), V=2.0, box=(0, 1))
    with pytest.raises(HypothesisError):
        build_ell_box(f, [0.9, 0.1], (0, 1, 0.01))


def test_xi_halves_and_frozen_control():
    xi = [xi_residual(p.f, p.ell) for p in (prepare(ExperimentConfig(steps=s, cells=c)) for c, s in ((20, 100), (40, 200), (80, 400)))]
    for a, b in zip(xi, xi[1:]):
        assert 0.75 * 2 <= a / b <= 1.25 * 2
    frozen = prepare(ExperimentConfig(steps=400, cells=80, frozen=True))
    assert xi_residual(frozen.f, frozen.ell) >= 10 * xi[-1]


def test_marginal_json_roundtrip():
    h = const(FIXA, 2.0, box=(0, 1))
    f = solve_kinetic(h, 1 / 192, 10)
    ell = build_ell_box(f, np.full(3, 1 / 3), (0, 1, 1 / 192))
    back = MarginalField.from_json(ell.to_json())
    np.testing.assert_array_equal(back.values, ell.values)
    assert back.box == ell.box
