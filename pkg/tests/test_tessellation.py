import math
import warnings
import xml.etree.ElementTree as ET

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from gibbs_tess.harness import constant_fields, fix_a, fix_geometry
from gibbs_tess.kinetic import HamiltonianSpec
from gibbs_tess.marks import Mark, MarkSet
from gibbs_tess.sampler import ParticleConfig, Trajectory, run_replicas, trajectory_from_jsonl
from gibbs_tess.tessellation import (
    Edge,
    InconclusiveDomainWarning,
    PLCFunction,
    Tessellation,
    build_tessellation,
    clip_halfplane,
    hausdorff,
    hopf_evolve,
    hopf_lax_spacing,
    hopf_lax_value,
    laguerre_cells,
    legendre_inverse,
    legendre_transform,
    polygon_area,
    reconstruct_g,
    render_svg,
    slice,
    validate_generic,
)

A, B, C, D = Mark(0, 0), Mark(1, 0), Mark(2, 1), Mark(1.5, 1.25)


def motif():
    """One coagulation followed by one fragmentation of the merged particle."""
    head = {
        "header": True,
        "box": [0, 1, 0, 0.4],
        "t": 0.0,
        "z": [0.4, 0.5],
        "labels": [[0, 0], [1, 0], [2, 1]],
        "atoms": [[0, 0, 1], [1, 0, 1], [1.5, 1.25, 1], [2, 1, 1]],
        "P": [0, 2],
    }
    ev = [
        {"t": 0.1, "kind": "coag", "z": 0.4, "marks": [[0, 0], [1, 0], [2, 1]], "index": 0},
        {"t": 0.2, "kind": "frag", "z": 0.35, "marks": [[0, 0], [1.5, 1.25], [2, 1]], "index": 0, "rho_star": [1.5, 1.25]},
    ]
    return trajectory_from_jsonl([head] + ev)


def quiet(marks, z, labels, box=(0, 1, 0, 1)):
    return Trajectory(marks, box, [ParticleConfig(box[2], z, labels)])


def test_clip_and_area():
    sq = np.array([[0, 0], [1, 0], [1, 1], [0, 1]], dtype=float)
    assert polygon_area(sq) == pytest.approx(1.0)
    half = clip_halfplane(sq, np.array([1.0, 0.0]), 0.5)
    assert abs(polygon_area(half)) == pytest.approx(0.5)


def test_no_event_trajectory():
    tr = quiet(MarkSet([A, B, C]), (0.3,), (0, 1))
    tess = build_tessellation(tr)
    assert len(tess.cells) == 2 and len(tess.edges) == 1
    assert not tess.interior_vertices
    assert validate_generic(tess).ok
    sl = slice(tr, "horizontal", 0.5)
    assert sl.breakpoints == (0.3,) and sl.labels == (0, 1)


def test_figure_motif():
    tess = build_tessellation(motif())
    inner = tess.interior_vertices
    assert len(inner) == 2
    assert all(v.degree == 3 for v in inner)
    assert sorted(v.kind for v in inner) == ["coag", "frag"]
    rep = validate_generic(tess)
    assert rep.ok, rep.to_json()
    coag = next(v for v in inner if v.kind == "coag")
    assert coag.point == pytest.approx((0.4, 0.1))


def test_non_orthogonal_edge_fails():
    win = (0, 1, 0, 1)
    left = np.array([[0, 0], [0.4, 0], [0.6, 1], [0, 1]], dtype=float)
    right = np.array([[0.4, 0], [1, 0], [1, 1], [0.6, 1]], dtype=float)
    tess = Tessellation([(A, left), (B, right)], [Edge((A, B), (0.4, 0.0), (0.6, 1.0))], [], win)
    rep = validate_generic(tess)
    assert not rep.checks["orthogonality"][0]


def test_degree_four_vertex_fails():
    g = PLCFunction([Mark(0, 0), Mark(1, 0), Mark(0, 1), Mark(1, 1)], [0, 0, 0, 0])
    tess = laguerre_cells(g, (-1, 1, -1, 1))
    rep = validate_generic(tess)
    assert not rep.checks["degree3"][0]


def test_reconstruct_two_cells():
    g0 = PLCFunction([A, B], [0.0, 0.0])
    tess = laguerre_cells(g0, (-1, 1, 0, 1))
    g, rep = reconstruct_g(tess, base_value=0.0)
    assert rep.max_discrepancy <= 1e-12
    for x in ([-0.5, 0.3], [0.7, 0.9], [0.0, 0.5]):
        assert g(np.array(x)) == pytest.approx(max(0.0, x[0]))


def test_reconstruct_motif_curl():
    g, rep = reconstruct_g(motif())
    assert rep.max_discrepancy <= 1e-9
    assert hausdorff(laguerre_cells(g, (0, 1, 0, 0.4)), build_tessellation(motif())) <= 1e-6


def test_legendre_example():
    g = PLCFunction([A, B], [0.0, 0.0])
    tab = legendre_transform(g)
    assert tab[A] == pytest.approx(0) and tab[B] == pytest.approx(0)
    out = legendre_transform(g, at=[(0.5, 0.0), (3.0, 0.0)])
    assert out[Mark(0.5, 0.0)] == pytest.approx(0.0)
    assert math.isinf(out[Mark(3.0, 0.0)])


@settings(max_examples=30, deadline=None)
@given(st.lists(st.floats(-2, 2), min_size=4, max_size=4), st.integers(0, 1000))
def test_legendre_roundtrip(cs, seed):
    ms = [Mark(0, 0), Mark(1, 0), Mark(0, 1), Mark(1, 1.5)]
    g = PLCFunction(ms, cs)
    back = legendre_inverse(legendre_transform(g))
    x = np.random.default_rng(seed).uniform(-3, 3, (20, 2))
    np.testing.assert_allclose(back(x), g(x), atol=1e-9)


def test_hopf_example():
    H = HamiltonianSpec.from_expression("rho1**2")
    g = PLCFunction([A, B], [0.0, 0.0])
    assert np.array_equal(hopf_evolve(g, H, 0.0).intercepts, g.intercepts)
    u = hopf_evolve(g, H, 0.3)
    for x1 in (-1.0, -0.3, 0.2):
        assert u(np.array([x1, 0.0])) == pytest.approx(max(0.0, x1 + 0.3))
    tess = laguerre_cells(u, (-1, 1, 0, 1))
    assert tess.edges[0].p[0] == pytest.approx(-0.3)


@given(st.integers(0, 64), st.integers(0, 64))
def test_hopf_semigroup_exact(a, b):
    H = HamiltonianSpec.from_expression("rho1**2 + rho2")
    g = PLCFunction([A, B, C, D], [0.0, 0.25, 0.5, -0.125])
    s, t = a / 64, b / 64
    two = hopf_evolve(hopf_evolve(g, H, s), H, t)
    one = hopf_evolve(g, H, s + t)
    assert np.array_equal(two.intercepts, one.intercepts)


def test_hopf_lax_linear_hamiltonian():
    H = HamiltonianSpec.from_expression("rho1 + 2*rho2")
    g = PLCFunction([A, B, C], [0.0, 0.1, 0.7])
    t = 0.2
    h = hopf_lax_spacing(g, H, t)
    rng = np.random.default_rng(0)
    for x in rng.uniform(-1, 1, (10, 2)):
        exact = g(x + t * np.array([1.0, 2.0]))
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", InconclusiveDomainWarning)
            assert abs(hopf_lax_value(g, H, x, t) - exact) <= 2 * h


def test_hopf_lax_matches_hopf():
    H = HamiltonianSpec.from_expression("rho1**2 + rho2")
    g = PLCFunction([A, B, C, D], [0.0, 0.25, 0.5, -0.125])
    t = 0.1
    h = hopf_lax_spacing(g, H, t)
    u = hopf_evolve(g, H, t)
    for x in np.random.default_rng(1).uniform(-1, 1, (10, 2)):
        assert abs(hopf_lax_value(g, H, x, t) - u(x)) <= 2 * h


def test_hopf_lax_small_time():
    H = HamiltonianSpec.from_expression("rho1**2 + rho2")
    g = PLCFunction([A, B, C], [0.0, 0.1, 0.7])
    x = np.array([0.3, 0.2])
    assert hopf_lax_value(g, H, x, 1e-6) == pytest.approx(g(x), abs=1e-4)


def test_laguerre_single_mark():
    tess = laguerre_cells(PLCFunction([A], [0.0]), (0, 2, 0, 1))
    assert len(tess.cells) == 1 and abs(polygon_area(tess.cells[0][1])) == pytest.approx(2.0)
    with pytest.raises(ValueError):
        laguerre_cells(PLCFunction([A], [0.0]), (0, 0, 0, 1))


def test_laguerre_three_marks():
    tess = laguerre_cells(PLCFunction([A, B, C], [0, 0, 1]), (-1, 1, 0, 3))
    e = next(e for e in tess.edges if e.pair == (A, C))
    d = np.subtract(e.q, e.p)
    assert abs(d @ np.array([2.0, 1.0])) <= 1e-12 * np.linalg.norm(d)
    assert len(tess.cells) == 3


def test_svg_empty_and_deterministic():
    empty = render_svg(Tessellation([], [], [], (0, 1, 0, 1)))
    assert ET.fromstring(empty).tag.endswith("svg")
    tess = build_tessellation(motif())
    s1, s2 = render_svg(tess, legend=True), render_svg(tess, legend=True)
    assert s1 == s2
    root = ET.fromstring(s1)
    classes = [el.get("class") for el in root]
    assert classes.count("coag") == 1 and classes.count("frag") == 1


def test_json_roundtrip():
    tess = build_tessellation(motif())
    back = Tessellation.from_json(tess.to_json())
    assert hausdorff(tess, back) == 0.0
    assert len(back.vertices) == len(tess.vertices)


def test_right_wall_slice_sees_creations():
    fx = fix_a()
    box = (0.0, 1.0, 0.0, 0.3)
    f, ell = constant_fields(fx, box)
    for tr in run_replicas(f, ell, fx.ell0, box, 30, seed=2):
        sl = slice(tr, "vertical", box[1])
        made = [e.t for e in tr.events if e.kind == "create+"]
        np.testing.assert_allclose(sl.breakpoints, made, atol=1e-12)


def test_simulated_runs_are_generic():
    fx = fix_geometry()
    box = (0.0, 1.0, 0.0, 1.0)
    f, ell = constant_fields(fx, box)
    for tr in run_replicas(f, ell, fx.ell0, box, 60, seed=4):
        tess = build_tessellation(tr)
        rep = validate_generic(tess)
        assert rep.ok, rep.to_json()
        g, curl = reconstruct_g(tess)
        assert curl.max_discrepancy <= 1e-9
        assert hausdorff(laguerre_cells(g, box), tess) <= 1e-6
