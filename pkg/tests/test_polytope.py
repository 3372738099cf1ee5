import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from lpvtube.polytope import (HPolytope, PolytopeError, VPolytope, affine_image,
                              halfspace_conversion, minkowski_sum, remove_redundant, support,
                              support_many, vertex_enumeration)


def _sorted_rows(M):
    M = np.asarray(M)
    return M[np.lexsort(np.round(M, 9).T[::-1])]


def unit_box(n=2):
    return HPolytope.from_box(-np.ones(n), np.ones(n))


def random_hpoly(rng, dim, extra=6):
    """Bounded full-dimensional polytope containing the unit ball scaled by 0.5."""
    G = rng.standard_normal((2 * dim + extra, dim))
    G /= np.linalg.norm(G, axis=1, keepdims=True)
    G = np.vstack([G, np.eye(dim), -np.eye(dim)])
    h = rng.uniform(0.5, 2.0, size=G.shape[0])
    return HPolytope(G, h)


def hull_contains(P: HPolytope, pts, tol=1e-8):
    return P.contains(pts, tol=tol)


# --- vertex enumeration -----------------------------------------------------

def test_unit_box_vertices():
    V = vertex_enumeration(unit_box())
    expected = np.array([[-1, -1], [-1, 1], [1, -1], [1, 1]], dtype=float)
    np.testing.assert_allclose(_sorted_rows(V.vertices), expected, atol=1e-12)


def test_simplex_vertices():
    G = np.vstack([-np.eye(3), np.ones((1, 3))])
    h = np.array([0, 0, 0, 1.0])
    V = vertex_enumeration(HPolytope(G, h))
    expected = np.vstack([np.zeros(3), np.eye(3)])
    np.testing.assert_allclose(_sorted_rows(V.vertices), _sorted_rows(expected), atol=1e-12)


def test_vertices_satisfy_halfspaces():
    rng = np.random.default_rng(1)
    P = random_hpoly(rng, 3)
    V = vertex_enumeration(P)
    assert np.all(P.G @ V.vertices.T <= P.h[:, None] + 1e-9)


def test_unbounded_and_empty_errors():
    with pytest.raises(PolytopeError, match="unbounded polytope"):
        vertex_enumeration(HPolytope(np.array([[1.0, 0.0], [-1.0, 0.0]]), np.ones(2)))
    with pytest.raises(PolytopeError, match="empty polytope"):
        vertex_enumeration(HPolytope(np.array([[1.0, 0.0], [-1.0, 0.0], [0, 1.0], [0, -1.0]]),
                                     np.array([0.0, -1.0, 1.0, 1.0])))


def test_vertex_order_is_deterministic():
    rng = np.random.default_rng(5)
    P = random_hpoly(rng, 3)
    a = vertex_enumeration(P).vertices
    b = vertex_enumeration(P).vertices
    assert np.array_equal(a, b)


# --- halfspace conversion ---------------------------------------------------

def test_triangle_halfspaces():
    H = halfspace_conversion(VPolytope(np.array([[0, 0], [1, 0], [0, 1.0]])))
    assert H.n_rows == 3
    inside = np.array([[0.2, 0.2], [0.0, 0.0], [0.5, 0.5]])
    outside = np.array([[0.6, 0.6], [-0.01, 0.2], [0.2, -0.01]])
    assert np.all(H.contains(inside))
    assert not np.any(H.contains(outside))


def test_box_halfspaces():
    V = VPolytope(np.array([[-1, -1], [-1, 1], [1, -1], [1, 1.0]]))
    assert halfspace_conversion(V).n_rows == 4


def test_point_cloud_round_trip():
    # oracle: a point lies in conv(cloud) iff it is a convex combination (LP)
    from lpvtube.opt import solve_lp
    rng = np.random.default_rng(3)
    cloud = rng.standard_normal((10, 3))
    H = halfspace_conversion(VPolytope(cloud))
    assert np.all(H.contains(cloud, tol=1e-9))
    pts = rng.uniform(cloud.min(0), cloud.max(0), size=(1000, 3))
    member = H.contains(pts, tol=1e-9)
    # check a subsample with the LP oracle (feasibility of lambda >= 0, sum 1)
    for x, m in zip(pts[:150], member[:150]):
        A = np.vstack([cloud.T, np.ones((1, 10))])
        sol = solve_lp(np.zeros(10), -np.eye(10), np.zeros(10), A, np.r_[x, 1.0])
        assert (sol.status == "optimal") == bool(m)
    # and the V-rep of the H-rep recovers exactly the extreme points
    V2 = vertex_enumeration(H)
    assert np.all(np.min(np.linalg.norm(V2.vertices[:, None] - cloud[None], axis=2), axis=1) < 1e-8)


def test_degenerate_hull_error():
    with pytest.raises(PolytopeError, match="affine dimension 1"):
        halfspace_conversion(VPolytope(np.array([[0, 0], [1, 1], [2, 2.0]])))


# --- affine image, Minkowski sum, support ------------------------------------

BOX_V = VPolytope(np.array([[-1, -1], [-1, 1], [1, -1], [1, 1.0]]))


def test_affine_image_identity_zero_rotation():
    img = affine_image(BOX_V, np.eye(2))
    np.testing.assert_allclose(_sorted_rows(img.vertices), _sorted_rows(BOX_V.vertices))
    t = np.array([0.3, -2.0])
    z = affine_image(BOX_V, np.zeros((2, 2)), t)
    assert z.n_vertices == 1
    np.testing.assert_allclose(z.vertices[0], t)
    rot = affine_image(BOX_V, np.array([[0, -1], [1, 0.0]]))
    np.testing.assert_allclose(_sorted_rows(rot.vertices), _sorted_rows(BOX_V.vertices), atol=1e-12)


def test_affine_image_dimension_mismatch():
    with pytest.raises(ValueError, match="dimension mismatch"):
        affine_image(BOX_V, np.eye(3))


def test_minkowski_boxes_and_identity():
    small = VPolytope(0.5 * BOX_V.vertices)
    s = minkowski_sum(BOX_V, small)
    np.testing.assert_allclose(_sorted_rows(s.vertices), _sorted_rows(1.5 * BOX_V.vertices))
    z = minkowski_sum(BOX_V, VPolytope(np.zeros((1, 2))))
    np.testing.assert_allclose(_sorted_rows(z.vertices), _sorted_rows(BOX_V.vertices))
    with pytest.raises(ValueError, match="dimension mismatch"):
        minkowski_sum(BOX_V, VPolytope(np.zeros((1, 3))))


def test_triangle_plus_segment_support_oracle():
    tri = VPolytope(np.array([[0, 0], [1, 0], [0, 1.0]]))
    seg = VPolytope(np.array([[0, 0], [0.5, 0.5]]))
    zono = minkowski_sum(tri, seg)
    ang = np.deg2rad(np.arange(360))
    D = np.column_stack([np.cos(ang), np.sin(ang)])
    np.testing.assert_allclose(support_many(zono, D),
                               support_many(tri, D) + support_many(seg, D), atol=1e-12)


def test_support_values():
    box = unit_box()
    assert support(box, [1, 0]) == pytest.approx(1.0, abs=1e-9)
    assert support(box, [1, 1]) == pytest.approx(2.0, abs=1e-9)
    assert support(BOX_V, [1, 1]) == 2.0


def test_support_h_equals_v():
    rng = np.random.default_rng(7)
    P = random_hpoly(rng, 3)
    V = vertex_enumeration(P)
    D = rng.standard_normal((20, 3))
    np.testing.assert_allclose(support_many(P, D), support_many(V, D), atol=1e-8)


def test_support_unbounded_direction():
    half = HPolytope(np.array([[1.0, 0.0]]), np.array([1.0]))
    with pytest.raises(PolytopeError, match="unbounded"):
        support(half, [-1, 0])


# --- redundancy removal -----------------------------------------------------

def test_remove_redundant_1d():
    P = remove_redundant(HPolytope(np.array([[1.0], [1.0], [-1.0]]), np.array([1.0, 2.0, 5.0])))
    assert P.n_rows == 2
    assert P.contains(np.array([[1.0]]))[0] and not P.contains(np.array([[1.01]]))[0]


def test_remove_redundant_minimal_box_unchanged():
    P = remove_redundant(unit_box(3))
    assert P.n_rows == 6


def test_remove_redundant_duplicated_rows():
    rng = np.random.default_rng(11)
    P = random_hpoly(rng, 3)
    dup = HPolytope(np.vstack([P.G, 2 * P.G[:4], P.G[:3]]), np.concatenate([P.h, 2 * P.h[:4], P.h[:3] + 0.5]))
    R = remove_redundant(dup)
    assert R.n_rows < dup.n_rows
    pts = rng.uniform(-2.5, 2.5, size=(1000, 3))
    assert np.array_equal(R.contains(pts, tol=0.0), P.contains(pts, tol=0.0))


def test_remove_redundant_empty():
    with pytest.raises(PolytopeError, match="empty polytope"):
        remove_redundant(HPolytope(np.array([[1.0], [-1.0]]), np.array([-1.0, -1.0])))


# --- properties -------------------------------------------------------------

seeds = st.integers(min_value=0, max_value=10_000)


@settings(max_examples=25, deadline=None)
@given(seed=seeds, dim=st.integers(2, 4))
def test_round_trip_property(seed, dim):
    rng = np.random.default_rng(seed)
    P = random_hpoly(rng, dim)
    V = vertex_enumeration(P)
    H2 = halfspace_conversion(V)
    V2 = vertex_enumeration(H2)
    assert np.all(P.contains(V2.vertices, tol=1e-8))
    assert np.all(H2.contains(V.vertices, tol=1e-8))


@settings(max_examples=25, deadline=None)
@given(seed=seeds, dim=st.integers(2, 4))
def test_minkowski_support_property(seed, dim):
    rng = np.random.default_rng(seed)
    P = VPolytope(rng.standard_normal((dim + 3, dim)))
    Q = VPolytope(rng.standard_normal((dim + 2, dim)))
    D = rng.standard_normal((30, dim))
    np.testing.assert_allclose(support_many(minkowski_sum(P, Q), D),
                               support_many(P, D) + support_many(Q, D), atol=1e-8)


@settings(max_examples=25, deadline=None)
@given(seed=seeds)
def test_affine_image_vertex_count_property(seed):
    rng = np.random.default_rng(seed)
    P = VPolytope(rng.standard_normal((8, 3)))
    img = affine_image(P, rng.standard_normal((3, 3)) * rng.integers(0, 2), rng.standard_normal(3))
    assert img.n_vertices <= P.n_vertices


@settings(max_examples=15, deadline=None)
@given(seed=seeds)
def test_remove_redundant_idempotent(seed):
    rng = np.random.default_rng(seed)
    P = random_hpoly(rng, 3)
    R1 = remove_redundant(P)
    R2 = remove_redundant(R1)
    assert R1.n_rows == R2.n_rows
    np.testing.assert_allclose(R1.G, R2.G)


def test_many_points_per_facet():
    # corners, edge midpoints and face centres of a cube: many coplanar points
    g = np.array(np.meshgrid(*[[-1.0, 0.0, 1.0]] * 3)).reshape(3, -1).T
    pts = g[np.abs(g).max(axis=1) == 1.0]
    H = halfspace_conversion(VPolytope(pts))
    assert H.n_rows == 6
    from lpvtube.polytope import extreme_points
    assert extreme_points(pts).shape[0] == 8


def test_round_trip_facet_count_4d():
    rng = np.random.default_rng(77)
    for _ in range(30):
        P = random_hpoly(rng, 4)
        V = vertex_enumeration(P)
        assert halfspace_conversion(V).n_rows == remove_redundant(P).n_rows


def test_pickle_round_trip():
    import pickle
    P = unit_box(3)
    Q = pickle.loads(pickle.dumps(P))
    np.testing.assert_array_equal(Q.G, P.G)
    V = vertex_enumeration(P)
    np.testing.assert_array_equal(pickle.loads(pickle.dumps(V)).vertices, V.vertices)
