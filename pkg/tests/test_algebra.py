import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from numpy.testing import assert_allclose, assert_array_equal

from carnot_sf.algebra import (
    GroupPoint,
    StepTwoAlgebra,
    bracket,
    dilate,
    dilate_coords,
    exp_horizontal,
    free_step_two,
    heisenberg,
    inverse,
    inverse_coords,
    load_group,
    multiply,
    multiply_coords,
    validate_stratified,
)

coords = st.floats(-10, 10, allow_nan=False, allow_infinity=False)


def points(A):
    return st.builds(
        lambda x, z: A.point(np.array(x), np.array(z)),
        st.lists(coords, min_size=A.rank, max_size=A.rank),
        st.lists(coords, min_size=A.vdim, max_size=A.vdim),
    )


F4 = free_step_two(4)
H2 = heisenberg(2)


def test_heisenberg_structure():
    A = heisenberg(1)
    assert (A.rank, A.vdim, A.dim) == (2, 1, 3)
    assert_array_equal(A.structure[0], [[0, 1], [-1, 0]])
    # H^2: [X1, Y1] = [X2, Y2] = Z, all other brackets vanish
    assert bracket(H2, [1, 0, 0, 0], [0, 0, 1, 0])[0] == 1.0
    assert bracket(H2, [1, 0, 0, 0], [0, 1, 0, 0])[0] == 0.0


def test_free_bracket_example():
    A = free_step_two(3)
    assert A.vdim == 3
    assert_array_equal(bracket(A, [1, 1, 0], [0, 1, 1]), [1, 1, 1])


def test_multiply_example():
    A = heisenberg(1)
    g = multiply(A, A.point([1, 0]), A.point([0, 1]))
    assert_array_equal(g.as_array(), [1, 1, 0.5])


def test_identity_and_inverse():
    A = free_step_two(3)
    g = A.point([1, -2, 3], [0.5, 0.25, -1])
    e = A.identity()
    assert multiply(A, g, e) == g
    assert multiply(A, e, g) == g
    assert inverse(A, g) == A.point([-1, 2, -3], [-0.5, -0.25, 1])
    assert multiply(A, g, inverse(A, g)).allclose(e, atol=0)


def test_dilation():
    A = heisenberg(1)
    g = A.point([1, 2], [3])
    assert dilate(A, 2.0, g) == A.point([2, 4], [12])
    for lam in (0.0, -1.0):
        with pytest.raises(ValueError):
            dilate(A, lam, g)


def test_exp_horizontal_has_no_vertical_part():
    g = exp_horizontal(F4, [1, 2, 3, 4])
    assert_array_equal(g.z, np.zeros(6))


def test_points_are_validated():
    A = heisenberg(1)
    with pytest.raises(ValueError):
        A.point([1, 2, 3])
    with pytest.raises(ValueError):
        GroupPoint([np.nan, 0.0], [0.0])
    with pytest.raises(ValueError):
        multiply(A, A.identity(), H2.identity())
    with pytest.raises(ValueError):
        bracket(A, [1, 0, 0], [0, 1, 0])


def test_points_are_immutable():
    g = heisenberg(1).point([1, 2], [3])
    with pytest.raises(ValueError):
        g.x[0] = 5.0


@given(points(F4), points(F4), points(F4))
def test_associativity(g, h, k):
    lhs = multiply(F4, multiply(F4, g, h), k)
    rhs = multiply(F4, g, multiply(F4, h, k))
    assert_allclose(lhs.as_array(), rhs.as_array(), atol=1e-10)


@given(points(H2))
def test_inverse_law(g):
    e = H2.identity()
    assert multiply(H2, g, inverse(H2, g)).allclose(e, atol=1e-12)
    assert multiply(H2, inverse(H2, g), g).allclose(e, atol=1e-12)


@given(points(F4), points(F4), st.floats(0.1, 10), st.floats(0.1, 10))
def test_dilation_is_a_homomorphism(g, h, lam, mu):
    lhs = dilate(F4, lam, multiply(F4, g, h))
    rhs = multiply(F4, dilate(F4, lam, g), dilate(F4, lam, h))
    assert_allclose(lhs.as_array(), rhs.as_array(), rtol=1e-12, atol=1e-9)
    twice = dilate(F4, lam, dilate(F4, mu, g))
    assert_allclose(twice.as_array(), dilate(F4, lam * mu, g).as_array(), rtol=1e-12, atol=1e-12)


@given(st.lists(coords, min_size=4, max_size=4), st.lists(coords, min_size=4, max_size=4),
       st.lists(coords, min_size=4, max_size=4), st.floats(-5, 5))
def test_bracket_bilinear_and_antisymmetric(X, Y, W, s):
    X, Y, W = map(np.array, (X, Y, W))
    assert_array_equal(bracket(F4, X, Y), -bracket(F4, Y, X))
    assert_allclose(bracket(F4, X + s * W, Y),
                    bracket(F4, X, Y) + s * bracket(F4, W, Y), atol=1e-9)


def test_bracket_broadcasts():
    X = np.random.default_rng(0).standard_normal((5, 4))
    Y = np.random.default_rng(1).standard_normal((5, 4))
    batched = bracket(F4, X, Y)
    assert batched.shape == (5, 6)
    assert_allclose(batched[3], bracket(F4, X[3], Y[3]))


@given(points(F4), points(F4), st.floats(0.1, 10))
def test_batched_kernels_match_pointwise(g, h, lam):
    G, H = g.as_array(), h.as_array()
    assert_allclose(multiply_coords(F4, G, H), multiply(F4, g, h).as_array(), rtol=1e-15, atol=1e-12)
    assert_array_equal(inverse_coords(F4, G), inverse(F4, g).as_array())
    assert_array_equal(dilate_coords(F4, lam, G), dilate(F4, lam, g).as_array())


def test_batched_kernels_broadcast():
    rng = np.random.default_rng(4)
    G, H = rng.standard_normal((2, 7, F4.dim))
    lam = rng.uniform(0.5, 2.0, 7)
    out = dilate_coords(F4, lam, multiply_coords(F4, G, H))
    assert out.shape == (7, F4.dim)
    g, h = (F4.point(v[:4], v[4:]) for v in (G[2], H[2]))
    assert_allclose(out[2], dilate(F4, lam[2], multiply(F4, g, h)).as_array(), atol=1e-12)
    with pytest.raises(ValueError):
        multiply_coords(F4, G[:, :5], H)
    with pytest.raises(ValueError):
        dilate_coords(F4, -1.0, G)


def test_validate_builtins():
    for A in (heisenberg(1), heisenberg(3), free_step_two(2), free_step_two(5)):
        assert validate_stratified(A) == (True, "ok")


def test_validate_flags_non_skew():
    c = heisenberg(1).structure.copy()
    c[0, 1, 0] = 0.5
    ok, msg = validate_stratified(StepTwoAlgebra(c, check=False))
    assert not ok and "skew" in msg
    with pytest.raises(ValueError, match="skew"):
        StepTwoAlgebra(c)


def test_validate_flags_rank_deficiency():
    c = np.zeros((2, 3, 3))
    for k in range(2):  # both vertical directions receive the same bracket
        c[k, 0, 1], c[k, 1, 0] = 1.0, -1.0
    ok, msg = validate_stratified(StepTwoAlgebra(c, check=False))
    assert not ok and "spans only 1 of 2" in msg


def test_validate_flags_relative_rank_tolerance():
    c = free_step_two(3).structure.copy()
    c[2] *= 1e-11  # below 1e-10 of the largest singular value
    assert not validate_stratified(StepTwoAlgebra(c, check=False))[0]


def test_shape_errors():
    with pytest.raises(ValueError):
        StepTwoAlgebra(np.zeros((2, 2, 2)))  # vdim > r(r-1)/2
    with pytest.raises(ValueError):
        StepTwoAlgebra(np.zeros((1, 2, 3)))


def test_bracket_file_roundtrip(tmp_path):
    A = free_step_two(3)
    path = tmp_path / "group.json"
    path.write_text(json.dumps(A.to_dict()))
    B = load_group(str(path))
    assert_array_equal(A.structure, B.structure)
    spec = {"rank": 2, "vdim": 1, "brackets": [{"i": 1, "j": 2, "k": 1, "coeff": 1.0}]}
    assert_array_equal(load_group(spec).structure, heisenberg(1).structure)


def test_load_group_refs():
    assert load_group("heisenberg:2").rank == 4
    assert load_group("free2:4").vdim == 6
    with pytest.raises(ValueError):
        load_group("engel:1")
    with pytest.raises(ValueError):
        StepTwoAlgebra.from_brackets(2, 1, [{"i": 1, "j": 3, "k": 1}])
