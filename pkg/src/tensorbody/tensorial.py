"""Tensorial bodies: sections, the decision procedure, conv_(x), l_(x), the slice and r."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import ConvexHull

from .convex_kernel import (
    DimensionMismatchError,
    Ellipsoid,
    UnsupportedDimensionError,
    VPolytope,
    gauges,
    hausdorff,
    inradius,
    loewner,
    minkowski_combo,
    polar_vertices,
)
from .gl_tensor import NotTensorialError, act_on_body, inverse, kronecker_factors_pd, xi
from .tensor_ops import (
    as_shape,
    hilbert_product,
    injective_gauges,
    kron_rows,
    kron_vec,
    projective_product,
)

TENSORIAL_TOL = 1e-6
MARGINAL_TOL = 1e-4
SECTION_TOL = 1e-9


class PreconditionError(ValueError):
    """An input violates the hypotheses of the check being run."""


@dataclass(frozen=True)
class SectionFamily:
    """Section bodies ``Q^i`` of ``Q`` through a decomposable boundary anchor."""

    anchor: tuple
    bodies: tuple
    note: str = "canonical"

    @property
    def anchor_vector(self):
        return kron_vec(self.anchor)


@dataclass(frozen=True)
class TensorialVerdict:
    """Outcome of :func:`is_tensorial`.

    ``side`` names the violated inclusion for a negative verdict: ``"pi"`` (a
    product of section vertices escapes ``Q``), ``"eps"`` (a vertex of ``Q``
    escapes the injective product) or ``"kronecker"`` for ellipsoids.
    ``violation`` is the largest relative excess found on either side.
    """

    tensorial: bool
    sections: SectionFamily | None
    violation: float
    side: str | None = None
    witness: np.ndarray | None = None
    marginal: bool = False
    witnesses: dict = field(default_factory=dict)

    def __bool__(self):
        return self.tensorial


def _check_shape(Q, shape):
    shape = as_shape(shape)
    if Q.dim != shape.total:
        raise DimensionMismatchError(f"body of dimension {Q.dim} does not match shape {shape}")
    return shape


def lift_matrix(anchor, i) -> np.ndarray:
    """Columns ``a^1 x ... x e_k x ... x a^l`` for ``k < d_i``."""
    d_i = len(anchor[i])
    cols = []
    for k in range(d_i):
        xs = list(anchor)
        xs[i] = np.eye(d_i)[k]
        cols.append(kron_vec(xs))
    return np.array(cols).T


def canonical_anchor(Q, shape, cond_max: float = 1e6):
    """Anchor ``e_1 x ... x e_1 x (lam e_1)`` with ``lam = 1 / g_Q(e_1 x ... x e_1)``.

    When that direction is badly conditioned (``g * outradius`` huge) the
    basis decomposable of smallest gauge is used instead and recorded in the
    returned note.
    """
    shape = _check_shape(Q, shape)
    basis = [np.eye(d)[0] for d in shape.dims]
    g = float(gauges(Q, kron_vec(basis)[None, :])[0])
    note = "canonical"
    R = np.linalg.norm(Q.vertices, axis=1).max() if isinstance(Q, VPolytope) else \
        np.sqrt(np.linalg.eigvalsh(Q.shape)[-1])
    if g * R > cond_max:
        idx = np.array(np.unravel_index(np.arange(shape.total), shape.dims)).T
        E = np.eye(shape.total)
        gs = gauges(Q, E)
        k = int(np.argmin(gs))
        basis = [np.eye(d)[j] for d, j in zip(shape.dims, idx[k])]
        g = float(gs[k])
        note = f"basis anchor {tuple(int(j) for j in idx[k])}"
    basis[-1] = basis[-1] / g
    return tuple(basis), note


def _ellipsoid_section(E, L):
    G = L.T @ np.linalg.solve(E.shape, L)
    return Ellipsoid(np.linalg.inv(0.5 * (G + G.T)))


def _start_directions(d, seed=0):
    rng = np.random.default_rng(seed)
    dirs = [np.eye(d)]
    for a in range(d):
        for b in range(a + 1, d):
            v = np.zeros(d)
            v[[a, b]] = 1.0
            w = v.copy()
            w[b] = -1.0
            dirs.append(np.array([v, w]))
    dirs.append(rng.standard_normal((2 * d, d)))
    return np.vstack(dirs)


def _polytope_section(Q, L, tol, max_rays):
    # Facets of the section are certified by gauge LP duals: each dual y gives
    # the valid inequality <L^T y, x> <= g(Lx). The polar of the normals found
    # so far is an outer approximation; its vertices are checked against the
    # oracle and every violated one contributes a new facet.
    d_i = L.shape[1]
    X = _start_directions(d_i)
    _, Y = gauges(Q, X @ L.T, certificates=True)
    W = Y @ L
    rays = len(X)
    while np.linalg.matrix_rank(W) < d_i:
        X = np.random.default_rng(rays).standard_normal((d_i, d_i))
        _, Y = gauges(Q, X @ L.T, certificates=True)
        W = np.vstack([W, Y @ L])
        rays += d_i
        if rays > max_rays:
            raise RuntimeError("section normals do not span")
    while True:
        P = polar_vertices(W)
        g, Y = gauges(Q, P @ L.T, certificates=True)
        rays += len(P)
        bad = g > 1 + tol
        if not bad.any():
            break
        if rays > max_rays:
            raise RuntimeError(f"section reconstruction exceeded {max_rays} rays")
        W = np.vstack([W, Y[bad] @ L])
    return VPolytope(P, prune=True)


def section_body(Q, anchor, i: int, tol: float = SECTION_TOL, max_rays: int = 10_000):
    """Section ``{x : a^1 x ... x x x ... x a^l in Q}`` through the anchor.

    Ellipsoids have the closed form ``(L^T M^{-1} L)^{-1}``. Polytope sections
    (factor dimension <= 3) are rebuilt exactly from gauge-LP certificates:
    every returned vertex satisfies ``g_Q(lift(v)) <= 1 + tol`` and every
    facet is a supporting hyperplane certified by a dual solution.
    """
    anchor = tuple(np.asarray(a, dtype=float) for a in anchor)
    if any(not np.any(a) for a in anchor):
        raise ValueError("anchor factors must be nonzero")
    if int(np.prod([len(a) for a in anchor])) != Q.dim:
        raise DimensionMismatchError("anchor does not match the body dimension")
    L = lift_matrix(anchor, i)
    if isinstance(Q, Ellipsoid):
        return _ellipsoid_section(Q, L)
    if L.shape[1] > 3:
        raise UnsupportedDimensionError("polytope sections are reconstructed for factor dimension <= 3")
    return _polytope_section(Q, L, tol, max_rays)


def sections(Q, shape, anchor=None) -> SectionFamily:
    shape = _check_shape(Q, shape)
    note = "custom"
    if anchor is None:
        anchor, note = canonical_anchor(Q, shape)
    anchor = tuple(np.asarray(a, dtype=float) for a in anchor)
    bodies = tuple(section_body(Q, anchor, i) for i in range(shape.order))
    return SectionFamily(anchor, bodies, note)


def is_tensorial(Q, shape, tol: float = TENSORIAL_TOL, anchor=None) -> TensorialVerdict:
    """Decide whether ``Q`` is tensorial for ``shape``.

    Polytopes: with sections ``Q^i`` through the (canonical) anchor, check
    ``Q^1 (x)_pi ... (x)_pi Q^l ⊆ Q`` on the product vertices and
    ``Q ⊆ Q^1 (x)_eps ... (x)_eps Q^l`` on the vertices of ``Q``, both with
    relative slack ``tol``. Ellipsoids: Kronecker residual of the shape matrix.
    Excess in ``(tol, 1e-4]`` is flagged ``marginal``.
    """
    shape = _check_shape(Q, shape)
    if isinstance(Q, Ellipsoid):
        try:
            _, rel = kronecker_factors_pd(Q.shape, shape, tol)
        except NotTensorialError as exc:
            return TensorialVerdict(False, None, float(exc.witness), "kronecker",
                                    np.array([exc.witness]),
                                    marginal=bool(exc.witness <= MARGINAL_TOL))
        return TensorialVerdict(True, sections(Q, shape, anchor), float(rel))
    fam = sections(Q, shape, anchor)
    K = kron_rows([B.vertices for B in fam.bodies])
    g_pi = gauges(Q, K)
    g_eps = injective_gauges(fam.bodies, Q.vertices)
    viol_pi = float(g_pi.max() - 1.0)
    viol_eps = float(g_eps.max() - 1.0)
    witnesses = {"pi": K[int(np.argmax(g_pi))], "eps": Q.vertices[int(np.argmax(g_eps))]}
    violation = max(viol_pi, viol_eps)
    if violation <= tol:
        return TensorialVerdict(True, fam, violation, witnesses=witnesses)
    side = "pi" if viol_pi >= viol_eps else "eps"
    return TensorialVerdict(False, fam, violation, side, witnesses[side],
                            marginal=violation <= MARGINAL_TOL, witnesses=witnesses)


def multi_anchor_stress(Q, shape, n_anchors: int = 8, seed: int = 0, tol: float = TENSORIAL_TOL):
    """Rerun the decision procedure at random decomposable boundary anchors.

    Diagnostic only; the verdict of :func:`is_tensorial` uses the canonical
    anchor. Returns the list of verdicts.
    """
    shape = _check_shape(Q, shape)
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(n_anchors):
        xs = [rng.standard_normal(d) for d in shape.dims]
        g = float(gauges(Q, kron_vec(xs)[None, :])[0])
        xs[-1] = xs[-1] / g
        out.append(is_tensorial(Q, shape, tol, anchor=xs))
    return out


def _require_tensorial(Q, shape, tol=TENSORIAL_TOL):
    verdict = is_tensorial(Q, shape, tol)
    if not verdict.tensorial:
        raise NotTensorialError(f"body is not tensorial (violation {verdict.violation:.3g} "
                                f"on the {verdict.side} side)", witness=verdict)
    return verdict.sections


def ball_polytope(d: int, resolution: int | None = None) -> VPolytope:
    """Inscribed polytope approximation of the unit ball in dimension 2 or 3.

    2D: regular ``resolution``-gon (default 64). 3D: icosphere with
    ``20 * 4**resolution`` faces (default ``resolution=2``, 320 faces).
    """
    if d == 2:
        n = resolution or 64
        t = np.pi * np.arange(n // 2) / (n // 2)
        return VPolytope(np.c_[np.cos(t), np.sin(t)], prune=False)
    if d == 3:
        return VPolytope(_icosphere(2 if resolution is None else resolution), prune=False)
    raise UnsupportedDimensionError("ball approximations are provided for dimension 2 and 3")


def ball_error(B: VPolytope) -> float:
    """Hausdorff distance from an inscribed ball approximation to the unit ball (1 - inradius)."""
    pts = np.vstack([B.vertices, -B.vertices])
    eq = ConvexHull(pts).equations
    return float(1.0 - np.min(-eq[:, -1]))


def _icosphere(level):
    p = (1 + 5 ** 0.5) / 2
    V = [[-1, p, 0], [1, p, 0], [-1, -p, 0], [1, -p, 0], [0, -1, p], [0, 1, p],
         [0, -1, -p], [0, 1, -p], [p, 0, -1], [p, 0, 1], [-p, 0, -1], [-p, 0, 1]]
    F = [[0, 11, 5], [0, 5, 1], [0, 1, 7], [0, 7, 10], [0, 10, 11], [1, 5, 9], [5, 11, 4],
         [11, 10, 2], [10, 7, 6], [7, 1, 8], [3, 9, 4], [3, 4, 2], [3, 2, 6], [3, 6, 8],
         [3, 8, 9], [4, 9, 5], [2, 4, 11], [6, 2, 10], [8, 6, 7], [9, 8, 1]]
    V = [np.array(v, float) / np.linalg.norm(v) for v in V]
    for _ in range(level):
        cache = {}

        def mid(a, b):
            key = (min(a, b), max(a, b))
            if key not in cache:
                m = V[a] + V[b]
                V.append(m / np.linalg.norm(m))
                cache[key] = len(V) - 1
            return cache[key]

        newF = []
        for a, b, c in F:
            ab, bc, ca = mid(a, b), mid(b, c), mid(c, a)
            newF += [[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]
        F = newF
    return np.array(V)


def conv_otimes(Q, shape, resolution: int | None = None):
    """Projective product of the canonical sections of a tensorial body.

    For an ellipsoid the sections are ellipsoids, whose projective product is
    not a polytope; each section is then replaced by an inscribed polytope
    (``S * ball_polytope``) at the given resolution.
    """
    fam = _require_tensorial(Q, shape)
    bodies = fam.bodies
    if isinstance(Q, Ellipsoid):
        bodies = []
        for E in fam.bodies:
            w, U = np.linalg.eigh(E.shape)
            S = (U * np.sqrt(w)) @ U.T
            bodies.append(VPolytope(ball_polytope(E.dim, resolution).vertices @ S.T, prune=False))
    return projective_product(bodies)


def l_otimes(Q, shape) -> Ellipsoid:
    """``Löw(Q^1) (x)_2 ... (x)_2 Löw(Q^l)``, the Löwner ellipsoid of ``conv_(x)(Q)``."""
    fam = _require_tensorial(Q, shape)
    return hilbert_product([loewner(B) for B in fam.bodies])


def in_slice(Q, shape, tol: float = 1e-6) -> bool:
    E = l_otimes(Q, shape)
    return bool(np.linalg.norm(E.shape - np.eye(E.dim)) <= tol)


def retract_r(Q, shape):
    """``r(Q) = xi(l_(x)(Q))^{-1} Q``, the slice representative of the orbit of ``Q``."""
    shape = as_shape(shape)
    return act_on_body(inverse(xi(l_otimes(Q, shape), shape)), Q)


def phi(Q, shape):
    """``(r(Q), l_(x)(Q))``."""
    shape = as_shape(shape)
    E = l_otimes(Q, shape)
    return act_on_body(inverse(xi(E, shape)), Q), E


def phi_inv(L, E, shape, tol: float = 1e-6):
    """``xi(E) L`` for ``L`` in the slice and a tensorial ellipsoid ``E``."""
    shape = as_shape(shape)
    if not in_slice(L, shape, tol):
        raise PreconditionError("first argument is not in the slice")
    return act_on_body(xi(E, shape), L)


def homotopy(Q, t: float, shape, resolution: int | None = None):
    """Contracting homotopy of the tensorial bodies onto the projective unit ball.

    ``t <= 1/2``: ``(1 - 2t) Q + 2t conv_(x)(Q)``. ``t >= 1/2``: projective
    product of ``(2 - 2t) Q^i + (2t - 1) B_2``, with each Euclidean ball
    replaced by :func:`ball_polytope` at ``resolution``.
    """
    if not 0.0 <= t <= 1.0:
        raise ValueError("t must lie in [0, 1]")
    shape = _check_shape(Q, shape)
    if not isinstance(Q, VPolytope):
        raise TypeError("the homotopy is computed for polytopes")
    if t == 0.0:
        return Q
    fam = _require_tensorial(Q, shape)
    if t <= 0.5:
        return minkowski_combo(Q, projective_product(fam.bodies), 1.0 - 2.0 * t)
    facs = [minkowski_combo(B, ball_polytope(B.dim, resolution), 2.0 - 2.0 * t)
            for B in fam.bodies]
    return projective_product(facs)


# ---------------------------------------------------------------------------
# random generator


def random_factor(rng, d: int, n_vertices: int | None = None) -> VPolytope:
    """Random symmetric polytope in dimension ``d`` with well-spread vertices."""
    m = n_vertices or (3 if d == 2 else 4)
    m = max(m, d)
    while True:
        U = rng.standard_normal((m, d))
        U /= np.linalg.norm(U, axis=1, keepdims=True)
        V = U * rng.uniform(0.6, 1.4, size=(m, 1))
        if np.linalg.svd(V, compute_uv=False)[-1] < 0.2:
            continue
        P = VPolytope(V, prune=True)
        if len(P.vertices) == m:
            return P


def random_tensorial_with_factors(seed, shape, n_vertices=None, t: float = 0.5,
                                  n_extra: int | None = None):
    """Like :func:`random_tensorial` but also returns the factor polytopes."""
    shape = as_shape(shape)
    if any(d > 3 for d in shape.dims):
        raise UnsupportedDimensionError("factor dimensions must be <= 3")
    if not 0.0 <= t <= 1.0:
        raise ValueError("t must lie in [0, 1]")
    rng = np.random.default_rng(seed)
    if n_vertices is None or np.isscalar(n_vertices):
        n_vertices = [n_vertices] * shape.order
    factors = [random_factor(rng, d, m) for d, m in zip(shape.dims, n_vertices)]
    P = projective_product(factors)
    if t == 0.0:
        return P, factors
    k = n_extra if n_extra is not None else 2 * shape.order
    U = rng.standard_normal((k, shape.total))
    e = injective_gauges(factors, U)
    p = gauges(P, U)
    lo = e / p
    s = lo + t * (1.0 - lo) * rng.uniform(0.0, 1.0, size=k)
    pts = U * (s / e)[:, None]
    return VPolytope(np.vstack([P.vertices, pts]), prune=True), factors


def random_tensorial(seed, shape, n_vertices=None, t: float = 0.5, n_extra: int | None = None):
    """Random tensorial polytope squeezed between the projective and injective products.

    Factor polytopes are drawn at random; extra points ``s u / eps(u)`` are
    added for Gaussian ``u`` with ``s`` uniform in ``[eps(u)/pi(u),
    eps(u)/pi(u) + t (1 - eps(u)/pi(u))]``. Every extra point has injective
    gauge ``s <= 1`` so the hull stays inside the injective product. ``t = 0``
    returns exactly the projective product.
    """
    return random_tensorial_with_factors(seed, shape, n_vertices, t, n_extra)[0]


# ---------------------------------------------------------------------------
# continuity


def natalia_margin(P, Q, eps: float, n_starts: int = 64, seed: int = 0,
                   tol: float = 1e-9) -> bool:
    """Check one instance of the inner-ball stability lemma.

    With ``2 eps B_2 ⊆ P`` (checked, :class:`PreconditionError` otherwise) and
    ``hausdorff(P, Q) < eps``, the conclusion is ``eps B_2 ⊆ Q``. Returns
    whether the conclusion holds; when the Hausdorff hypothesis fails the
    implication holds vacuously and True is returned.
    """
    if P.dim != Q.dim:
        raise DimensionMismatchError("bodies live in different dimensions")
    if inradius(P, n_starts, seed) < 2 * eps - tol:
        raise PreconditionError(f"2*eps*B_2 is not contained in P (eps={eps})")
    if hausdorff(P, Q) >= eps:
        return True
    return bool(inradius(Q, n_starts, seed) >= eps - tol)
