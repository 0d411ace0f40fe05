import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.optimize import linprog

from tensorbody.convex_kernel import (
    CorruptBodyError,
    DimensionMismatchError,
    Ellipsoid,
    UnsupportedDimensionError,
    VPolytope,
    dist_to_hull,
    facet_normals,
    gauge,
    gauges,
    hausdorff,
    inradius,
    loewner,
    membership,
    minkowski_combo,
    outradius,
    polar_factor,
    support,
    supports,
)


def cross(d):
    return VPolytope(np.eye(d))


def cube(d):
    return VPolytope(np.array(list(itertools.product([-1.0, 1.0], repeat=d))))


def lp_gauge_oracle(V, x):
    """Independent gauge: min sum|c| with V^T c = x, written as a dense LP on +-V."""
    W = np.vstack([V, -V])
    res = linprog(np.ones(len(W)), A_eq=W.T, b_eq=x, bounds=(0, None), method="highs")
    return res.fun


vec4 = st.lists(st.floats(-5, 5, allow_nan=False), min_size=4, max_size=4).map(np.array)


# -- construction ----------------------------------------------------------


def test_vertices_are_sign_canonical_and_deduplicated():
    P = VPolytope([[1, 0], [-1, 0], [0, -1], [0.2, 0.1]])
    assert len(P.vertices) == 2
    for v in P.vertices:
        assert v[np.flatnonzero(v)[0]] > 0


def test_prune_removes_interior_points_and_ties():
    P = VPolytope([[1, 0], [0, 1], [0.5, 0.5], [0.3, -0.2]])
    assert len(P.vertices) == 2


def test_bodies_are_immutable():
    P = cross(2)
    with pytest.raises(AttributeError):
        P.vertices = np.eye(2)
    with pytest.raises(ValueError):
        P.vertices[0, 0] = 3.0


@pytest.mark.parametrize("bad", [
    [[1.0, np.nan], [0, 1]],
    [[1.0, 0.0], [2.0, 0.0]],
    np.zeros((0, 2)),
])
def test_corrupt_polytopes_rejected(bad):
    with pytest.raises(CorruptBodyError):
        VPolytope(bad)


@pytest.mark.parametrize("M", [[[1, 0], [0, -1]], [[1, 2], [0, 1]], [[1, 0, 0], [0, 1, 0]]])
def test_corrupt_ellipsoids_rejected(M):
    with pytest.raises(CorruptBodyError):
        Ellipsoid(M)


# -- gauge / support -------------------------------------------------------


@given(vec4)
@settings(max_examples=40, deadline=None)
def test_gauge_of_cross_polytope_is_l1(x):
    assert gauge(cross(4), x).value == pytest.approx(np.abs(x).sum(), abs=1e-9)


@given(vec4)
@settings(max_examples=40, deadline=None)
def test_gauge_of_cube_is_linf(x):
    assert gauge(cube(4), x).value == pytest.approx(np.abs(x).max(), abs=1e-9)


def test_gauge_matches_dense_lp_and_certificate():
    rng = np.random.default_rng(1)
    P = VPolytope(rng.standard_normal((7, 3)))
    X = rng.standard_normal((50, 3))
    g, Y = gauges(P, X, certificates=True)
    ref = np.array([lp_gauge_oracle(P.vertices, x) for x in X])
    assert np.allclose(g, ref, atol=1e-9)
    # certificate: <y, x> = g and |<y, v>| <= 1
    assert np.allclose(np.einsum("ij,ij->i", Y, X), g, atol=1e-8)
    assert np.abs(Y @ P.vertices.T).max() <= 1 + 1e-8


def test_gauge_of_zero_and_ellipsoid():
    assert gauge(cross(3), np.zeros(3)).value == 0.0
    E = Ellipsoid(np.diag([4.0, 1.0]))
    assert gauge(E, [2.0, 0.0]).value == pytest.approx(1.0)
    assert gauge(E, [0.0, 3.0]).value == pytest.approx(3.0)


def test_gauge_support_duality_on_random_factors():
    rng = np.random.default_rng(4)
    for d in (2, 3):
        P = VPolytope(rng.standard_normal((5, d)))
        Po = polar_factor(P)
        U = rng.standard_normal((30, d))
        assert np.allclose(supports(P, U), gauges(Po, U), atol=1e-8)


def test_support_examples():
    assert support(cube(2), [1.0, 1.0]) == pytest.approx(2.0)
    assert support(cross(2), [1.0, 1.0]) == pytest.approx(1.0)
    E = Ellipsoid(np.diag([4.0, 9.0]))
    assert support(E, [0.0, 1.0]) == pytest.approx(3.0)


def test_membership():
    assert membership(cross(2), [0.5, 0.5])
    assert not membership(cross(2), [0.6, 0.5])
    with pytest.raises(ValueError):
        membership(cross(2), [0, 0], tol=0)


def test_dimension_mismatch():
    with pytest.raises(DimensionMismatchError):
        gauge(cross(3), np.ones(2))
    with pytest.raises(DimensionMismatchError):
        hausdorff(cross(2), cross(3))


# -- polar / facets --------------------------------------------------------


def test_polar_of_cube_is_cross_polytope():
    for d in (2, 3):
        assert hausdorff(polar_factor(cube(d)), cross(d)) < 1e-12
        assert hausdorff(polar_factor(cross(d)), cube(d)) < 1e-12


def test_polar_is_involutive():
    rng = np.random.default_rng(2)
    P = VPolytope(rng.standard_normal((6, 3)))
    assert hausdorff(polar_factor(polar_factor(P)), P) < 1e-9


def test_polar_of_ellipsoid_inverts_shape():
    M = np.array([[2.0, 0.5], [0.5, 1.0]])
    assert np.allclose(polar_factor(Ellipsoid(M)).shape, np.linalg.inv(M))


def test_polar_refuses_high_dimension():
    with pytest.raises(UnsupportedDimensionError):
        polar_factor(cross(4))


def test_facet_normals_describe_the_body():
    rng = np.random.default_rng(3)
    P = VPolytope(rng.standard_normal((5, 3)))
    A = facet_normals(P)
    assert np.abs(P.vertices @ A.T).max() <= 1 + 1e-9
    X = rng.standard_normal((100, 3))
    assert np.allclose(np.abs(X @ A.T).max(axis=1), gauges(P, X), atol=1e-8)


# -- distance / Hausdorff --------------------------------------------------


def test_dist_to_hull_against_closed_forms():
    Q = cube(2)
    assert dist_to_hull([3.0, 0.5], Q) == pytest.approx(2.0, abs=1e-9)
    assert dist_to_hull([2.0, 2.0], Q) == pytest.approx(np.sqrt(2), abs=1e-9)
    assert dist_to_hull([0.2, 0.3], Q) == 0.0
    assert dist_to_hull([1.0, 1.0], cross(2)) == pytest.approx(np.sqrt(2) / 2, abs=1e-9)


def test_hausdorff_examples():
    assert hausdorff(cube(2), cross(2)) == pytest.approx(np.sqrt(2) / 2, abs=1e-9)
    assert hausdorff(cube(2), Ellipsoid(np.eye(2))) == pytest.approx(np.sqrt(2) - 1, abs=1e-7)
    assert hausdorff(cross(3), cross(3)) == 0.0


def test_hausdorff_routes_agree():
    rng = np.random.default_rng(5)
    for _ in range(5):
        P = VPolytope(rng.standard_normal((4, 3)))
        Q = VPolytope(rng.standard_normal((4, 3)))
        a = hausdorff(P, Q, method="vertex")
        b = hausdorff(P, Q, method="sphere")
        assert a == pytest.approx(b, abs=1e-6)


def test_hausdorff_of_scaled_bodies():
    # h_{sP} - h_P = (s - 1) h_P, maximised at the outradius
    rng = np.random.default_rng(6)
    P = VPolytope(rng.standard_normal((5, 3)))
    Q = VPolytope(1.3 * P.vertices)
    assert hausdorff(P, Q) == pytest.approx(0.3 * outradius(P), abs=1e-9)


def test_hausdorff_with_tol_reports_route():
    h = hausdorff(cube(2), cross(2), with_tol=True)
    assert h.exact and float(h) == pytest.approx(np.sqrt(0.5))
    h = hausdorff(Ellipsoid(np.eye(2)), Ellipsoid(np.diag([4.0, 1.0])), with_tol=True)
    assert not h.exact and h.value == pytest.approx(1.0, abs=1e-7)


# -- radii, Loewner, Minkowski ---------------------------------------------


def test_radii():
    assert inradius(cross(4)) == pytest.approx(0.5, abs=1e-9)
    assert inradius(cube(3)) == pytest.approx(1.0, abs=1e-9)
    assert outradius(cube(3)) == pytest.approx(np.sqrt(3))
    E = Ellipsoid(np.diag([4.0, 0.25]))
    assert inradius(E) == pytest.approx(0.5) and outradius(E) == pytest.approx(2.0)


@pytest.mark.parametrize("d", [2, 3, 4])
def test_loewner_closed_forms(d):
    # cross-polytope: unit ball; cube: ball of radius sqrt(d)
    assert np.allclose(loewner(cross(d)).shape, np.eye(d), atol=1e-7)
    assert np.allclose(loewner(cube(d)).shape, d * np.eye(d), atol=1e-6)


def test_loewner_is_linear_equivariant_and_contains_body():
    rng = np.random.default_rng(7)
    P = VPolytope(rng.standard_normal((6, 3)))
    A = rng.standard_normal((3, 3))
    E = loewner(P)
    EA = loewner(VPolytope(P.vertices @ A.T))
    assert np.allclose(EA.shape, A @ E.shape @ A.T, atol=1e-6 * np.abs(EA.shape).max())
    assert gauges(E, P.vertices).max() <= 1 + 1e-12


def test_minkowski_combo_of_squares_and_diamonds():
    # t B_inf + (1 - t) B_1 has support t h_inf + (1 - t) h_1
    rng = np.random.default_rng(8)
    t = 0.3
    C = minkowski_combo(cube(2), cross(2), t)
    U = rng.standard_normal((40, 2))
    ref = t * supports(cube(2), U) + (1 - t) * supports(cross(2), U)
    assert np.allclose(supports(C, U), ref, atol=1e-12)
    assert minkowski_combo(cube(2), cross(2), 1.0) is not None
    with pytest.raises(ValueError):
        minkowski_combo(cube(2), cross(2), 1.5)
