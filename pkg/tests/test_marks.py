import numpy as np
import pytest
from hypothesis import given, strategies as st

from gibbs_tess.marks import (
    DegeneratePairError,
    GridRangeError,
    Kernel,
    MarkSet,
    OrderError,
    alpha,
    kernel_eval,
    precedes,
    sigma_triple,
    tau,
)

coord = st.floats(-5, 5, allow_nan=False)


def test_precedes():
    assert precedes((0, 0), (1, 0))
    assert not precedes((1, 0), (0, 0))
    assert not precedes((0, 0), (0, 5))


def test_alpha_values():
    assert alpha((0, 0), (2, 1)) == pytest.approx(0.5)
    assert alpha((0, 0), (1, 0)) == 0.0
    assert alpha((0, 1), (1, 0)) == pytest.approx(-1.0)
    with pytest.raises(DegeneratePairError):
        alpha((0, 0), (0, 1))


def test_tau_values():
    np.testing.assert_allclose(tau((0, 0), (2, 1)), [-0.5, 1])
    np.testing.assert_allclose(tau((0, 0), (1, 0)), [0, 1])


@given(coord, coord, coord, coord)
def test_tau_orthogonal(a1, a2, b1, b2):
    if abs(a1 - b1) < 1e-3:
        return
    a, b = (a1, a2), (b1, b2)
    if not precedes(a, b):
        a, b = b, a
    d = np.subtract(b, a)
    assert abs(tau(a, b) @ d) <= 1e-12 * (1 + np.abs(d).max() ** 2 / abs(d[0]))
    assert tau(a, b)[1] == 1


def test_sigma_values():
    assert sigma_triple((0, 0), (1, 0), (2, 1)) == pytest.approx(1.0)
    assert sigma_triple((0, 0), (1, 1), (2, 1)) == pytest.approx(-1.0)
    assert sigma_triple((0, 0), (1, 0.5), (2, 1)) == pytest.approx(0.0)
    with pytest.raises(OrderError):
        sigma_triple((1, 0), (0, 0), (2, 1))


def test_beta_integrate(fixa_marks):
    one = lambda m: 1.0
    assert fixa_marks.beta_integrate(one, ("R", (0, 0))) == 2
    assert fixa_marks.beta_integrate(one, ("D", (0, 0), (2, 1))) == 1
    assert fixa_marks.beta_integrate(lambda m: alpha((0, 0), m), ("R", (0, 0))) == pytest.approx(0.5)


def test_markset_sorting_and_json():
    ms = MarkSet([(2, 1), (0, 0), (1, 0)], weights=[3, 1, 2])
    assert [a.rho1 for a in ms.atoms] == [0, 1, 2]
    np.testing.assert_array_equal(ms.weights, [1, 2, 3])
    back = MarkSet.from_json(ms.to_json())
    assert back.atoms == ms.atoms
    np.testing.assert_array_equal(back.weights, ms.weights)


def test_markset_rejects_duplicates():
    with pytest.raises(DegeneratePairError):
        MarkSet([(0, 0), (0, 1)])


def test_from_graph():
    ms = MarkSet.from_graph(lambda m: m * m, [0, 1, 2])
    assert ms.atoms[2].rho2 == 4
    assert np.all(ms.sigma_tensor >= 0)


def test_kernel_eval():
    ms = MarkSet([(0, 0), (1, 0), (2, 1)])
    k = Kernel.constant(ms, 2.0, 0.0, 0.5, 3, [0.0], 1.0, 2.0)
    assert kernel_eval(k, 0.3, 0.0, ((0, 0), (2, 1))) == 2.0
    vals = np.zeros((1, 2, 3, 3))
    vals[0, 0, 0, 1] = 1
    vals[0, 1, 0, 1] = 3
    k2 = Kernel(ms, 0.0, 1.0, 2, [0.0], vals, 1.0, 2.0)
    assert kernel_eval(k2, 0.5, 0.0, ((0, 0), (1, 0))) == pytest.approx(2.0)
    with pytest.raises(GridRangeError):
        k.at(5.0, 0.0)


def test_kernel_cone_restriction():
    ms = MarkSet([(0, 0), (1, 3)])
    k = Kernel.constant(ms, 2.0, 0.0, 0.5, 3, [0.0], 1.0, 2.0)
    assert kernel_eval(k, 0.5, 0.0, ((0, 0), (1, 3))) == 0.0


def test_kernel_json_roundtrip():
    ms = MarkSet([(0, 0), (1, 0), (2, 1)])
    k = Kernel.constant(ms, 2.0, 0.0, 0.5, 3, [0.0, 0.1], 1.0, 2.0, box=(0.0, 1.0))
    k2 = Kernel.from_json(k.to_json())
    np.testing.assert_array_equal(k2.values, k.values)
    assert k2.box == k.box
