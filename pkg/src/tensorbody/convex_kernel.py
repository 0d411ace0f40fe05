"""Primitives on 0-symmetric convex bodies.

A body is either a :class:`VPolytope`, stored through representative vertices
(the body is ``conv(+-v_1, ..., +-v_m)``), or an :class:`Ellipsoid`
``{x : x^T M^{-1} x <= 1}``. Everything here is a pure function of immutable
inputs.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import linalg, optimize, sparse
from scipy.spatial import ConvexHull, QhullError, cKDTree

LP_TOL = 1e-9
MVEE_TOL = 1e-9
GEOM_TOL = 1e-6

_LP_OPTIONS = {
    "primal_feasibility_tolerance": 1e-10,
    "dual_feasibility_tolerance": 1e-10,
}
_LP_CHUNK = 32


class CorruptBodyError(ValueError):
    """Raised for bodies that violate their invariants (degenerate, non-finite, ...)."""


class DimensionMismatchError(ValueError):
    pass


class UnsupportedDimensionError(ValueError):
    pass


class VPolytope:
    """Symmetric polytope ``conv(+-v_1, ..., +-v_m)``.

    Parameters
    ----------
    vertices : array_like, shape (m, d)
        Representative vertices. Sign duplicates and exact repeats are merged.
    prune : bool
        Drop representatives lying in the hull of the others (membership LP).
        Ties resolve to removal.
    """

    kind = "vpoly"
    __slots__ = ("vertices",)

    def __init__(self, vertices, prune: bool = True, tol: float = LP_TOL):
        V = np.array(vertices, dtype=float, ndmin=2)
        if V.ndim != 2 or V.shape[0] == 0:
            raise CorruptBodyError("vertex array must be a nonempty (m, d) array")
        if not np.all(np.isfinite(V)):
            raise CorruptBodyError("non-finite vertex coordinates")
        V = _dedupe(_canonical_signs(V))
        if np.linalg.matrix_rank(V) < V.shape[1]:
            raise CorruptBodyError("vertices do not span the ambient space")
        if prune:
            V = _prune(V, tol)
        V.setflags(write=False)
        object.__setattr__(self, "vertices", V)

    def __setattr__(self, name, value):
        raise AttributeError("VPolytope is immutable")

    @property
    def dim(self) -> int:
        return self.vertices.shape[1]

    def __repr__(self):
        return f"VPolytope(dim={self.dim}, n_vertices={len(self.vertices)})"


class Ellipsoid:
    """Centered ellipsoid ``{x : x^T M^{-1} x <= 1}`` with SPD shape ``M``."""

    kind = "ellipsoid"
    __slots__ = ("shape",)

    def __init__(self, shape, tol: float = 1e-12):
        M = np.array(shape, dtype=float, ndmin=2)
        if M.ndim != 2 or M.shape[0] != M.shape[1]:
            raise CorruptBodyError("shape matrix must be square")
        if not np.all(np.isfinite(M)):
            raise CorruptBodyError("non-finite shape matrix")
        if not np.allclose(M, M.T, rtol=1e-10, atol=1e-12 * max(1.0, np.abs(M).max())):
            raise CorruptBodyError("shape matrix is not symmetric")
        M = 0.5 * (M + M.T)
        w = np.linalg.eigvalsh(M)
        if w[0] <= tol * max(1.0, w[-1]):
            raise CorruptBodyError("shape matrix is not positive definite")
        M.setflags(write=False)
        object.__setattr__(self, "shape", M)

    def __setattr__(self, name, value):
        raise AttributeError("Ellipsoid is immutable")

    @property
    def dim(self) -> int:
        return self.shape.shape[0]

    def __repr__(self):
        return f"Ellipsoid(dim={self.dim})"


SymBody = VPolytope | Ellipsoid


@dataclass(frozen=True)
class GaugeValue:
    """Gauge value with an optional dual certificate ``y`` (``<y, x> = value``)."""

    value: float
    certificate: np.ndarray | None = None

    def __float__(self):
        return float(self.value)


@dataclass(frozen=True)
class HausdorffValue:
    """Hausdorff distance together with the tolerance it was computed to."""

    value: float
    tol: float
    exact: bool

    def __float__(self):
        return float(self.value)


# ---------------------------------------------------------------------------
# vertex bookkeeping


def _canonical_signs(V):
    # first nonzero coordinate of each representative made positive
    V = V.copy()
    scale = np.abs(V).max(axis=1, keepdims=True)
    mask = np.abs(V) > 1e-14 * np.maximum(scale, 1e-300)
    first = np.argmax(mask, axis=1)
    signs = np.sign(V[np.arange(len(V)), first])
    signs[signs == 0] = 1.0
    V *= signs[:, None]
    keep = scale[:, 0] > 0
    return V[keep]


def _dedupe(V, rtol=1e-12):
    if len(V) < 2:
        return V
    scale = max(np.abs(V).max(), 1e-300)
    if len(V) <= 3000:
        D = np.abs(V[:, None, :] - V[None, :, :]).max(axis=2)
        close = np.triu(D <= rtol * scale, k=1)
        drop = close.any(axis=0)
        return V[~drop]
    key = np.round(V / (scale * 1e-11))
    _, idx = np.unique(key, axis=0, return_index=True)
    return V[np.sort(idx)]


def _random_directions(n, d, seed=0):
    rng = np.random.default_rng(seed)
    U = rng.standard_normal((n, d))
    return U / np.linalg.norm(U, axis=1, keepdims=True)


def _prune(V, tol):
    m, d = V.shape
    if m <= d:
        return V
    # vertices that are the unique maximiser of |<v,u>| for some direction are extreme
    U = _random_directions(max(64, 8 * d * d), d, seed=m * 131 + d)
    S = np.abs(V @ U.T)
    order = np.argsort(-S, axis=0)
    top, second = order[0], order[1]
    cols = np.arange(S.shape[1])
    gap = S[top, cols] - S[second, cols]
    confirmed = np.zeros(m, dtype=bool)
    confirmed[top[gap > 1e-9 * S[top, cols].max()]] = True

    keep = np.ones(m, dtype=bool)
    rest = np.flatnonzero(~confirmed)
    if rest.size and confirmed.sum() >= d and np.linalg.matrix_rank(V[confirmed]) == d:
        g = gauges(VPolytope._trusted(V[confirmed]), V[rest])
        keep[rest[g <= 1 + tol]] = False
        rest = rest[g > 1 + tol]
    for k in rest:
        others = keep.copy()
        others[k] = False
        W = V[others]
        if np.linalg.matrix_rank(W) < d:
            continue
        g = _lp_gauge_block([W], [V[k]])[0][0]
        if g <= 1 + tol:
            keep[k] = False
    return V[keep]


def _trusted_vpoly(V):
    P = object.__new__(VPolytope)
    V = np.array(V, dtype=float)
    V.setflags(write=False)
    object.__setattr__(P, "vertices", V)
    return P


VPolytope._trusted = staticmethod(_trusted_vpoly)


# ---------------------------------------------------------------------------
# gauge LPs


def _lp_gauge_block(blocks, points):
    """Solve one block-diagonal LP for several gauges at once.

    Block ``k`` is ``min sum(c+ + c-)`` s.t. ``W_k^T (c+ - c-) = x_k``. Returns
    values and dual certificates (``inf``/None where a block is infeasible).
    """
    n = len(blocks)
    rows, cols, vals, r0, c0 = [], [], [], 0, 0
    for W in blocks:
        m, d = W.shape
        ii, jj = np.nonzero(W.T)
        v = W.T[ii, jj]
        rows += [ii + r0, ii + r0]
        cols += [jj + c0, jj + c0 + m]
        vals += [v, -v]
        r0 += d
        c0 += 2 * m
    A = sparse.csc_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                          shape=(r0, c0))
    b = np.concatenate(points)
    c = np.ones(A.shape[1])
    res = optimize.linprog(c, A_eq=A, b_eq=b, bounds=(0, None), method="highs",
                           options=_LP_OPTIONS)
    if res.status == 0:
        y = res.eqlin.marginals
        vals, duals, off, coff = [], [], 0, 0
        for W, x in zip(blocks, points):
            d, m = len(x), 2 * len(W)
            cx = res.x[coff:coff + m]
            vals.append(float(cx.sum()))
            duals.append(np.array(y[off:off + d]))
            off += d
            coff += m
        return vals, duals
    if n == 1:
        if res.status == 2:
            return [np.inf], [None]
        raise CorruptBodyError(f"gauge LP failed: {res.message}")
    vals, duals = [], []
    for W, x in zip(blocks, points):
        v, y = _lp_gauge_block([W], [x])
        vals += v
        duals += y
    return vals, duals


def _check_dim(B, x):
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != B.dim:
        raise DimensionMismatchError(f"point of dimension {x.shape[-1]} for body of dimension {B.dim}")
    return x


def gauges(B: SymBody, X, certificates: bool = False):
    """Gauge of ``B`` at each row of ``X``.

    Polytope gauges are solved in batches of block-diagonal LPs. With
    ``certificates=True`` also returns an array of dual functionals.
    """
    X = np.atleast_2d(_check_dim(B, X))
    if isinstance(B, Ellipsoid):
        Y = linalg.solve(B.shape, X.T, assume_a="pos").T
        g = np.sqrt(np.maximum(np.einsum("ij,ij->i", X, Y), 0.0))
        if certificates:
            with np.errstate(invalid="ignore", divide="ignore"):
                C = np.where(g[:, None] > 0, Y / g[:, None], 0.0)
            return g, C
        return g
    V = B.vertices
    g = np.zeros(len(X))
    C = np.zeros_like(X)
    nz = np.flatnonzero(np.abs(X).max(axis=1) > 0)
    for s in range(0, len(nz), _LP_CHUNK):
        idx = nz[s:s + _LP_CHUNK]
        vals, duals = _lp_gauge_block([V] * len(idx), list(X[idx]))
        if not np.all(np.isfinite(vals)):
            raise CorruptBodyError("gauge LP infeasible: vertices do not span")
        g[idx] = vals
        C[idx] = duals
    if certificates:
        return g, C
    return g


def gauge(B: SymBody, x) -> GaugeValue:
    """Minkowski functional ``g_B(x) = inf{s > 0 : x / s in B}`` with certificate."""
    x = _check_dim(B, x)
    if x.ndim != 1:
        raise DimensionMismatchError("gauge expects a single point; use gauges for batches")
    g, C = gauges(B, x[None, :], certificates=True)
    return GaugeValue(float(g[0]), C[0])


def supports(B: SymBody, U):
    U = np.atleast_2d(_check_dim(B, U))
    if isinstance(B, Ellipsoid):
        return np.sqrt(np.maximum(np.einsum("ij,jk,ik->i", U, B.shape, U), 0.0))
    return np.abs(U @ B.vertices.T).max(axis=1)


def support(B: SymBody, u) -> float:
    """Support function ``h_B(u) = max_{x in B} <x, u>``."""
    u = _check_dim(B, u)
    return float(supports(B, u[None, :])[0])


def membership(B: SymBody, x, tol: float = GEOM_TOL) -> bool:
    if tol <= 0:
        raise ValueError("tol must be positive")
    return bool(gauge(B, x).value <= 1 + tol)


# ---------------------------------------------------------------------------
# polar


def polar_vertices(W, tol=1e-10):
    """Vertices of ``{y : |<w, y>| <= 1 for all rows w}`` for ``dim <= 3``.

    Interior or repeated rows of ``W`` are harmless. Representatives only.
    """
    W = np.asarray(W, dtype=float)
    d = W.shape[1]
    if d > 3:
        raise UnsupportedDimensionError("polar vertex enumeration is implemented for dim <= 3")
    pts = np.vstack([W, -W])
    if d == 1:
        return np.array([[1.0 / np.abs(W).max()]])
    hull = ConvexHull(pts)
    eq = hull.equations
    # facet n.x + b <= 0 with b < 0 gives polar vertex n / (-b)
    Y = eq[:, :d] / (-eq[:, d:])
    return _dedupe(_canonical_signs(Y), rtol=tol)


def polar_factor(B: SymBody, max_dim: int = 3) -> SymBody:
    """Polar body ``B° = {y : |<x, y>| <= 1 for x in B}``."""
    if isinstance(B, Ellipsoid):
        return Ellipsoid(np.linalg.inv(B.shape))
    if B.dim > max_dim:
        raise UnsupportedDimensionError(
            f"polar of a polytope is only computed for dim <= {max_dim}, got {B.dim}")
    return VPolytope(polar_vertices(B.vertices), prune=True)


def facet_normals(P: VPolytope):
    """Rows ``a`` with ``P = {x : |<a, x>| <= 1}`` (full list, both signs), via Qhull."""
    pts = np.vstack([P.vertices, -P.vertices])
    hull = ConvexHull(pts)
    eq = hull.equations
    return eq[:, :-1] / (-eq[:, -1:])


# ---------------------------------------------------------------------------
# distances


def _min_norm_point(Z, tol=1e-12, max_iter=2000):
    """Wolfe's minimum-norm-point algorithm over ``conv(Z)``.

    Returns ``(point, lower_bound)``; the distance from the origin to the hull
    lies in ``[lower_bound, ||point||]``.
    """
    scale = max(float(np.max(np.einsum("ij,ij->i", Z, Z))), 1e-300)
    j0 = int(np.argmin(np.einsum("ij,ij->i", Z, Z)))
    S = [j0]
    w = np.array([1.0])
    x = Z[j0].copy()
    lower = 0.0
    for _ in range(max_iter):
        dots = Z @ x
        j = int(np.argmin(dots))
        nx2 = float(x @ x)
        nx = np.sqrt(nx2)
        if nx > 0:
            lower = max(lower, float(dots[j]) / nx)
        if nx2 - dots[j] <= tol * max(nx, 1e-300) or nx2 <= 1e-30 * scale:
            break
        if j in S:
            break
        S.append(j)
        w = np.append(w, 0.0)
        while True:
            ZS = Z[S]
            G = ZS @ ZS.T
            k = len(S)
            K = np.zeros((k + 1, k + 1))
            K[:k, :k] = G
            K[:k, k] = 1.0
            K[k, :k] = 1.0
            rhs = np.zeros(k + 1)
            rhs[k] = 1.0
            alpha = np.linalg.lstsq(K, rhs, rcond=None)[0][:k]
            if np.all(alpha > 1e-14):
                w = alpha
                break
            neg = alpha <= 1e-14
            denom = w[neg] - alpha[neg]
            with np.errstate(divide="ignore", invalid="ignore"):
                ratios = np.where(denom > 0, w[neg] / denom, np.inf)
            theta = min(1.0, float(ratios.min()))
            w = theta * alpha + (1 - theta) * w
            w[w < 1e-14] = 0.0
            keep = w > 0
            S = [s for s, kk in zip(S, keep) if kk]
            w = w[keep]
            w /= w.sum()
            if len(S) == 1:
                break
        x = w @ Z[S]
    return x, lower


def dist_to_hull(x, B: VPolytope, tol: float = 1e-10) -> float:
    """Euclidean distance from ``x`` to the polytope ``B``.

    Uses a membership LP first (inside means exactly 0) and Wolfe's
    minimum-norm-point iteration otherwise, run until the distance is
    bracketed to ``tol``.
    """
    if not isinstance(B, VPolytope):
        raise TypeError("dist_to_hull needs a VPolytope")
    x = _check_dim(B, x)
    if gauges(B, x[None, :])[0] <= 1.0:
        return 0.0
    return _dist_outside(x, B.vertices, tol)


def _dist_outside(x, V, tol):
    Z = np.vstack([V, -V]) - x
    p, lower = _min_norm_point(Z, tol=tol)
    return float(np.linalg.norm(p))


def _vertex_hausdorff(P, Q, tol=1e-10):
    def one_side(A, B, best):
        # dist(a, B) <= distance to the nearest vertex of B, so vertices whose
        # nearest-vertex distance cannot beat the running maximum are skipped
        near, _ = cKDTree(np.vstack([B.vertices, -B.vertices])).query(A.vertices)
        order = np.argsort(-near)
        for s in range(0, len(order), _LP_CHUNK):
            idx = order[s:s + _LP_CHUNK]
            idx = idx[near[idx] > best]
            if len(idx) == 0:
                break
            g = gauges(B, A.vertices[idx])
            for k, gk in zip(idx, g):
                if gk <= 1.0 or near[k] <= best:
                    continue
                # a / g lies in B, so (g - 1)|a| bounds the distance from above
                ub = (gk - 1.0) * np.linalg.norm(A.vertices[k])
                if ub <= max(best, tol):
                    best = max(best, ub)
                    continue
                best = max(best, _dist_outside(A.vertices[k], B.vertices, tol))
        return best
    return one_side(Q, P, one_side(P, Q, 0.0))


def _support_gap(P, Q):
    def f(U):
        U = np.atleast_2d(U)
        U = U / np.linalg.norm(U, axis=1, keepdims=True)
        return np.abs(supports(P, U) - supports(Q, U))
    return f


def _sphere_hausdorff(P, Q, tol=1e-9, seed=0, max_rounds=6):
    d = P.dim
    f = _support_gap(P, Q)
    n = 256 * d
    best, prev = -np.inf, -np.inf
    U_all = np.empty((0, d))
    for rnd in range(max_rounds):
        U = _random_directions(n, d, seed=seed + rnd)
        U_all = np.vstack([U_all, U])
        vals = f(U_all)
        starts = U_all[np.argsort(-vals)[:8]]
        for u0 in starts:
            r = optimize.minimize(lambda u: -f(u)[0], u0, method="Nelder-Mead",
                                  options={"xatol": 1e-12, "fatol": 1e-14, "maxiter": 4000})
            best = max(best, -r.fun, float(vals.max()))
        if rnd > 0 and abs(best - prev) <= tol:
            break
        prev = best
        n *= 2
    return float(best), max(tol, abs(best - prev))


def hausdorff(P: SymBody, Q: SymBody, method: str = "auto", tol: float = 1e-9,
              with_tol: bool = False):
    """Hausdorff distance between two symmetric bodies.

    ``method="vertex"`` (default for two polytopes) is exact: the largest
    distance from a vertex of one body to the other. ``method="sphere"``
    maximises ``|h_P(u) - h_Q(u)|`` over unit directions by sampling with local
    refinement; this is the only route when an ellipsoid is involved and the
    result is accurate to the reported tolerance.

    Returns a float, or a :class:`HausdorffValue` when ``with_tol`` is true.
    """
    if P.dim != Q.dim:
        raise DimensionMismatchError("bodies live in different dimensions")
    if method == "auto":
        method = "vertex" if isinstance(P, VPolytope) and isinstance(Q, VPolytope) else "sphere"
    if method == "vertex":
        if not (isinstance(P, VPolytope) and isinstance(Q, VPolytope)):
            raise TypeError("vertex route needs two polytopes")
        out = HausdorffValue(_vertex_hausdorff(P, Q), 1e-9, True)
    elif method == "sphere":
        if isinstance(P, Ellipsoid) and isinstance(Q, Ellipsoid):
            # certified bound: |sqrt(a) - sqrt(b)| <= |a - b| / (sqrt(a) + sqrt(b))
            up = np.linalg.norm(P.shape - Q.shape, 2) / (
                np.sqrt(np.linalg.eigvalsh(P.shape)[0]) + np.sqrt(np.linalg.eigvalsh(Q.shape)[0]))
            if up <= tol:
                out = HausdorffValue(float(up), tol, False)
                return out if with_tol else out.value
        val, err = _sphere_hausdorff(P, Q, tol=tol)
        out = HausdorffValue(val, err, False)
    else:
        raise ValueError(f"unknown method {method!r}")
    return out if with_tol else out.value


def outradius(B: SymBody) -> float:
    if isinstance(B, Ellipsoid):
        return float(np.sqrt(np.linalg.eigvalsh(B.shape)[-1]))
    return float(np.linalg.norm(B.vertices, axis=1).max())


def inradius(B: SymBody, n_starts: int = 64, seed: int = 0, iters: int = 8) -> float:
    """Estimate of the largest ``r`` with ``r B_2 ⊆ B``.

    Exact for ellipsoids and, through the Qhull facet list, for polytopes of
    dimension <= 9 with at most 48 representatives. Otherwise gauge certificates are followed from random
    starting directions (each certificate is a supporting hyperplane at
    distance ``1/|y|``); the minimum found is an upper bound that is exact once
    the nearest facet has been hit.
    """
    if isinstance(B, Ellipsoid):
        return float(np.sqrt(np.linalg.eigvalsh(B.shape)[0]))
    if B.dim <= 9 and len(B.vertices) <= 48:
        try:
            A = facet_normals(B)
            return float(1.0 / np.linalg.norm(A, axis=1).max())
        except QhullError:
            pass
    U = np.vstack([np.eye(B.dim), _random_directions(n_starts, B.dim, seed)])
    best = np.inf
    for _ in range(iters):
        _, Y = gauges(B, U, certificates=True)
        ny = np.linalg.norm(Y, axis=1)
        best = min(best, float((1.0 / ny).min()))
        U_new = Y / ny[:, None]
        if np.allclose(U_new, U, atol=1e-12):
            break
        U = U_new
    return best


# ---------------------------------------------------------------------------
# Loewner ellipsoid


def _khachiyan(V, tol):
    m, d = V.shape
    u = np.full(m, 1.0 / m)
    for _ in range(200000):
        X = (V * u[:, None]).T @ V
        K = np.einsum("ij,ij->i", V, linalg.solve(X, V.T, assume_a="pos").T)
        jp = int(np.argmax(K))
        kp = K[jp]
        act = np.flatnonzero(u > 0)
        jm = act[int(np.argmin(K[act]))]
        km = K[jm]
        eps_plus = kp / d - 1.0
        eps_minus = 1.0 - km / d
        if max(eps_plus, eps_minus) <= tol:
            break
        if eps_plus >= eps_minus:
            beta = (kp - d) / (d * (kp - 1.0))
            u *= 1 - beta
            u[jp] += beta
        else:
            beta = (km - d) / (d * (km - 1.0))
            beta = max(beta, -u[jm] / (1.0 - u[jm]))
            u *= 1 - beta
            u[jm] += beta
            if u[jm] < 1e-300:
                u[jm] = 0.0
    X = (V * u[:, None]).T @ V
    return d * X, u


def loewner(B: SymBody, tol: float = MVEE_TOL) -> Ellipsoid:
    """Centered minimum-volume ellipsoid containing ``B``.

    Khachiyan weight ascent with Todd-Yildirim away steps on the representative
    vertices, stopped at relative optimality ``tol`` and scaled so that every
    vertex lies inside.
    """
    if isinstance(B, Ellipsoid):
        return B
    V = B.vertices
    if np.linalg.matrix_rank(V) < V.shape[1]:
        raise CorruptBodyError("vertex set does not span")
    M, _ = _khachiyan(V, tol)
    K = np.einsum("ij,ij->i", V, linalg.solve(M, V.T, assume_a="pos").T)
    M = M * max(1.0, float(K.max()))
    return Ellipsoid(0.5 * (M + M.T))


# ---------------------------------------------------------------------------
# Minkowski combinations


def minkowski_combo(P: SymBody, Q: SymBody, t: float) -> VPolytope:
    """``t P + (1 - t) Q`` for two polytopes."""
    if not (isinstance(P, VPolytope) and isinstance(Q, VPolytope)):
        raise TypeError("Minkowski combinations are only formed for polytopes")
    if P.dim != Q.dim:
        raise DimensionMismatchError("bodies live in different dimensions")
    if not 0.0 <= t <= 1.0:
        raise ValueError("t must lie in [0, 1]")
    if t == 1.0:
        return P
    if t == 0.0:
        return Q
    A = t * P.vertices
    B = (1 - t) * Q.vertices
    cand = np.vstack([(A[:, None, :] + B[None, :, :]).reshape(-1, P.dim),
                      (A[:, None, :] - B[None, :, :]).reshape(-1, P.dim)])
    return VPolytope(cand, prune=True)
