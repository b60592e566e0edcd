import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from numpy.testing import assert_allclose

from carnot_sf.norms import (
    L1,
    Euclidean,
    LInf,
    Lp,
    Polyhedral,
    dual_norm,
    flat_pair,
    legendre_feedback,
    load_norm,
    norm,
    probe_violation,
    strict_convexity_probe,
    subdiff_contains,
    subdiff_gap,
    validate_norm,
)

HEXAGON = [[np.cos(k * np.pi / 3), np.sin(k * np.pi / 3)] for k in range(6)]
METRIC = np.array([[2.0, 0.5], [0.5, 1.0]])

NORMS = [
    Euclidean(np.eye(2)),
    Euclidean(METRIC),
    Lp(1.5, 2),
    Lp(4.0, 3),
    LInf(2),
    LInf(3),
    L1(2),
    L1(3),
    Polyhedral(HEXAGON),
]

vec3 = st.lists(st.floats(-10, 10, allow_nan=False), min_size=3, max_size=3).map(np.array)


def _vec(dim):
    return st.lists(st.floats(-10, 10, allow_nan=False), min_size=dim, max_size=dim).map(np.array)


def test_closed_forms():
    a = np.array([3.0, -4.0])
    assert norm(Euclidean(np.eye(2)), a) == 5.0
    assert_allclose(dual_norm(Euclidean(METRIC), a), np.sqrt(a @ np.linalg.solve(METRIC, a)))
    assert_allclose(norm(Lp(4.0, 2), a), (81 + 256) ** 0.25)
    assert_allclose(dual_norm(Lp(4.0, 2), a), (3 ** (4 / 3) + 4 ** (4 / 3)) ** 0.75)
    assert norm(LInf(2), a) == 4.0 and dual_norm(LInf(2), a) == 7.0
    assert norm(L1(2), a) == 7.0 and dual_norm(L1(2), a) == 4.0
    P = Polyhedral(HEXAGON)
    assert_allclose(P(np.array(HEXAGON)), np.ones(6), atol=1e-12)
    assert_allclose(P.dual(a), max(np.array(HEXAGON) @ a))


def test_norms_satisfy_axioms():
    for N in NORMS:
        assert validate_norm(N) == (True, "ok")


def test_strict_convexity_probe_is_exact_for_builtins():
    for N in NORMS:
        assert strict_convexity_probe(N) == N.strictly_convex


def test_flat_pair_lies_on_a_face():
    for N in (LInf(2), L1(3), Polyhedral(HEXAGON)):
        u, v = flat_pair(N)
        assert_allclose(N(np.array([u, v, 0.5 * (u + v)])), 1.0, atol=1e-12)
    assert flat_pair(Lp(3.0, 2)) is None


@pytest.mark.parametrize("N", NORMS, ids=lambda N: f"{N.kind}{N.dim}")
def test_feedback_is_a_maximizer(N):
    rng = np.random.default_rng(7)
    for a in rng.standard_normal((50, N.dim)):
        fb = legendre_feedback(N, a)
        s = float(N.dual(a))
        for u in np.vstack([fb.points, fb.selected]):
            assert_allclose(N(u), s, rtol=1e-10)
            assert_allclose(a @ u, s * s, rtol=1e-10)
            assert subdiff_gap(N, u, a) <= 1e-10
            # independent route: the subgradient inequality on the probe grid
            assert subdiff_contains(N, u, a, tol=1e-10, method="probe")
        assert fb.contains(fb.selected)


@given(_vec(3), _vec(3))
@settings(max_examples=50)
def test_probe_violation_never_exceeds_gap(u, a):
    # the Fenchel-Young gap is the supremum of the violations the probes sample
    for N in (Euclidean(np.eye(3)), Lp(3.0, 3), LInf(3), L1(3)):
        assert probe_violation(N, u, a) <= subdiff_gap(N, u, a) + 1e-9 * (1 + np.abs(a).sum() ** 2)


@given(_vec(2))
def test_gap_is_nonnegative(a):
    for N in NORMS[:3]:
        u = np.array([a[1], -a[0]])
        assert subdiff_gap(N, u, a) >= -1e-9


def test_strictly_convex_feedback_is_unique():
    for N in (Euclidean(METRIC), Lp(1.5, 2), Lp(4.0, 3)):
        assert legendre_feedback(N, np.ones(N.dim)).unique


def test_linf_face_and_selection_rules():
    a = np.array([1.0, 0.0])
    fb = legendre_feedback(LInf(2), a)
    assert {tuple(v) for v in fb.points} == {(1.0, 1.0), (1.0, -1.0)}
    assert_allclose(fb.selected, [1.0, 0.0])
    assert_allclose(LInf(2, selection="lowest-index-vertex").select(a), [1.0, -1.0])
    fixed = LInf(2, selection="fixed-vector", fixed_vector=[0.0, 5.0])
    assert_allclose(fixed.select(a), [1.0, 1.0])
    # every point of the edge is a valid feedback
    for c in np.linspace(-1, 1, 9):
        assert subdiff_contains(LInf(2), [1.0, c], a)
    assert not subdiff_contains(LInf(2), [1.0, 0.0], [0.0, 1.0])


def test_l1_face_is_an_edge_at_ties():
    fb = legendre_feedback(L1(2), np.array([2.0, -2.0]))
    assert {tuple(v) for v in fb.points} == {(2.0, 0.0), (0.0, -2.0)}
    assert_allclose(fb.selected, [1.0, -1.0])


def test_polyhedral_selection_on_an_edge():
    P = Polyhedral(HEXAGON, selection="fixed-vector", fixed_vector=[10.0, 0.0])
    a = np.array([0.0, 1.0])  # exposes the top edge of the hexagon
    face = P.face(a)
    assert len(face) == 2
    u = P.select(a)
    assert_allclose(u, P.dual(a) * np.array([0.5, np.sqrt(3) / 2]), atol=1e-6)
    assert subdiff_gap(P, u, a) <= 1e-10


def test_zero_covector_gives_zero_feedback():
    for N in NORMS:
        fb = legendre_feedback(N, np.zeros(N.dim))
        assert fb.scale == 0.0
        assert not np.any(fb.selected)


def test_invalid_norms():
    with pytest.raises(ValueError):
        Lp(1.0, 2)
    with pytest.raises(ValueError):
        Euclidean([[1.0, 2.0], [2.0, 1.0]])
    with pytest.raises(ValueError):
        Polyhedral([[1.0, 0.0], [0.0, 1.0], [-1.0, 0.0]])
    with pytest.raises(ValueError):
        LInf(2, selection="nearest")
    with pytest.raises(ValueError):
        LInf(2, selection="fixed-vector")
    with pytest.raises(ValueError):
        norm(LInf(2), [1.0, 2.0, 3.0])
    with pytest.raises(ValueError):
        subdiff_contains(LInf(2), [1.0, 0.0], [1.0, 0.0], tol=-1.0)


def test_load_norm(tmp_path):
    assert isinstance(load_norm("euclidean", 3), Euclidean)
    assert load_norm("lp:4", 2).p == 4.0
    assert isinstance(load_norm("linf", 2), LInf)
    assert isinstance(load_norm("l1", 2), L1)
    path = tmp_path / "norm.json"
    path.write_text(json.dumps({"kind": "polyhedral", "vertices": HEXAGON,
                                "selection": "lowest-index-vertex"}))
    P = load_norm(str(path), 2)
    assert P.selection == "lowest-index-vertex" and len(P.vertices) == 6
    M = load_norm({"kind": "euclidean", "metric": METRIC.tolist()}, 2)
    assert_allclose(M.metric, METRIC)
    with pytest.raises(ValueError):
        load_norm("sup", 2)
    with pytest.raises(ValueError):
        load_norm(Lp(3.0, 2), 3)


def test_polyhedral_drops_interior_vertices():
    square = [[1, 1], [1, -1], [-1, 1], [-1, -1], [0.5, 0.0], [-0.5, 0.0]]
    P = Polyhedral(square)
    assert len(P.vertices) == 4
    assert_allclose(P(np.array([[0.3, -0.7], [2.0, 0.0]])), [0.7, 2.0])
