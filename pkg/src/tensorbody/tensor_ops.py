"""Projective, injective and Hilbertian tensor products of symmetric bodies.

Tensors are flattened row-major: the coordinate of ``e_{k1} x ... x e_{kl}``
sits at the row-major multi-index ``(k1, ..., kl)``, so ``np.kron`` of factor
vectors gives the flattened decomposable vector.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import reduce

import numpy as np

from .convex_kernel import (
    DimensionMismatchError,
    Ellipsoid,
    UnsupportedDimensionError,
    VPolytope,
    gauges,
    polar_vertices,
)


@dataclass(frozen=True)
class TensorShape:
    """Factor dimensions ``(d_1, ..., d_l)`` with ``l >= 2`` and every ``d_i >= 2``."""

    dims: tuple

    def __post_init__(self):
        dims = tuple(int(d) for d in self.dims)
        if len(dims) < 2:
            raise ValueError("a tensor shape needs at least two factors")
        if any(d < 2 for d in dims):
            raise ValueError("every factor dimension must be at least 2")
        object.__setattr__(self, "dims", dims)

    @property
    def order(self) -> int:
        return len(self.dims)

    @property
    def total(self) -> int:
        return int(np.prod(self.dims))

    def __iter__(self):
        return iter(self.dims)

    def __len__(self):
        return len(self.dims)

    def __getitem__(self, i):
        return self.dims[i]

    def __str__(self):
        return ",".join(map(str, self.dims))

    @classmethod
    def parse(cls, text: str) -> "TensorShape":
        return cls(tuple(int(t) for t in text.replace("x", ",").split(",") if t.strip()))


def as_shape(shape) -> TensorShape:
    if isinstance(shape, TensorShape):
        return shape
    if isinstance(shape, str):
        return TensorShape.parse(shape)
    return TensorShape(tuple(shape))


def shape_of(factors) -> TensorShape:
    return TensorShape(tuple(B.dim for B in factors))


def kron_vec(xs, shape=None) -> np.ndarray:
    """Flattened decomposable vector ``x^1 x ... x x^l``."""
    xs = [np.asarray(x, dtype=float) for x in xs]
    if shape is not None:
        shape = as_shape(shape)
        if tuple(len(x) for x in xs) != shape.dims:
            raise DimensionMismatchError(f"factor lengths {[len(x) for x in xs]} do not match {shape}")
    return reduce(np.kron, xs)


def kron_rows(mats) -> np.ndarray:
    """All row-wise Kronecker products, ordered by the row-major tuple index."""
    out = np.asarray(mats[0], dtype=float)
    for V in mats[1:]:
        V = np.asarray(V, dtype=float)
        out = (out[:, None, :, None] * V[None, :, None, :]).reshape(
            out.shape[0] * V.shape[0], out.shape[1] * V.shape[1])
    return out


def _require_polytopes(factors, what):
    if any(isinstance(B, Ellipsoid) for B in factors):
        raise TypeError(f"{what} needs polytope factors; use hilbert_product for ellipsoids")


def projective_product(factors, prune: bool = False) -> VPolytope:
    """``Q_1 (x)_pi ... (x)_pi Q_l``: hull of all products of factor vertices.

    Products of extreme points of the factors are extreme points of the
    projective product, so after sign canonicalization and deduplication no
    representative lies in the hull of the others and the membership-LP pass
    can be skipped. ``prune=True`` runs it anyway.
    """
    if len(factors) < 2:
        raise ValueError("need at least two factors")
    _require_polytopes(factors, "projective_product")
    return VPolytope(kron_rows([B.vertices for B in factors]), prune=prune)


def _factor_polar_vertices(factors):
    out = []
    for B in factors:
        if isinstance(B, Ellipsoid):
            raise TypeError("ellipsoid factors have closed forms; mixing kinds is not supported")
        if B.dim > 3:
            raise UnsupportedDimensionError("injective products need factor dimensions <= 3")
        out.append(polar_vertices(B.vertices))
    return out


def _contract(u, mats, dims):
    # |<a^1 x ... x a^l, u>| for all tuples of rows, as an array
    T = np.asarray(u, dtype=float).reshape(dims)
    for i, A in enumerate(mats):
        T = np.moveaxis(np.tensordot(A, T, axes=([1], [i])), 0, i)
    return T


def _ellipsoid_core(factors, u, power):
    # matrix S1^p U S2^p with S_i = M_i^{1/2}
    if len(factors) != 2:
        return None
    roots = []
    for E in factors:
        w, Q = np.linalg.eigh(E.shape)
        roots.append((Q * w ** (power / 2.0)) @ Q.T)
    U = np.asarray(u, dtype=float).reshape(factors[0].dim, factors[1].dim)
    return roots[0] @ U @ roots[1]


def _check_tensor(factors, u):
    u = np.asarray(u, dtype=float)
    d = int(np.prod([B.dim for B in factors]))
    if u.shape != (d,):
        raise DimensionMismatchError(f"vector of shape {u.shape} for tensor dimension {d}")
    return u


def _spectral_norm_tensor(T, n_starts=16, seed=0, iters=500):
    # higher-order power method from several starts; a lower bound that is tight in practice
    rng = np.random.default_rng(seed)
    best = 0.0
    l = T.ndim
    for s in range(n_starts):
        xs = [rng.standard_normal(n) for n in T.shape]
        if s == 0:
            xs = [np.linalg.svd(np.moveaxis(T, i, 0).reshape(T.shape[i], -1))[0][:, 0]
                  for i in range(l)]
        xs = [x / np.linalg.norm(x) for x in xs]
        val = 0.0
        for _ in range(iters):
            for i in range(l):
                R = T
                for j in reversed(range(l)):
                    if j != i:
                        R = np.tensordot(R, xs[j], axes=([j], [0]))
                n = np.linalg.norm(R)
                if n == 0:
                    break
                xs[i] = R / n
            new = n
            if abs(new - val) <= 1e-15 * max(1.0, new):
                val = new
                break
            val = new
        best = max(best, val)
    return best


def projective_gauge(factors, u) -> float:
    """Gauge of ``Q_1 (x)_pi ... (x)_pi Q_l`` at ``u``.

    Polytopes: LP over the vertex products. Two ellipsoid factors: nuclear norm
    of ``M_1^{-1/2} U M_2^{-1/2}``.
    """
    u = _check_tensor(factors, u)
    if all(isinstance(B, Ellipsoid) for B in factors):
        C = _ellipsoid_core(factors, u, -1)
        if C is None:
            raise UnsupportedDimensionError("projective gauge of ellipsoids is implemented for l = 2")
        return float(np.linalg.svd(C, compute_uv=False).sum())
    _require_polytopes(factors, "projective_gauge")
    return float(gauges(projective_product(factors), u[None, :])[0])


def injective_gauge(factors, u) -> float:
    """Gauge of ``Q_1 (x)_eps ... (x)_eps Q_l`` at ``u``.

    The injective product is the polar of the projective product of polars,
    so its gauge is the largest ``|<a^1 x ... x a^l, u>|`` over polar-factor
    vertices. Ellipsoid factors use the spectral norm of the whitened tensor
    (exact for ``l = 2``; power-method lower bound otherwise).
    """
    u = _check_tensor(factors, u)
    if all(isinstance(B, Ellipsoid) for B in factors):
        C = _ellipsoid_core(factors, u, -1)
        if C is not None:
            return float(np.linalg.norm(C, 2))
        mats = []
        for E in factors:
            w, Q = np.linalg.eigh(E.shape)
            mats.append((Q / np.sqrt(w)) @ Q.T)
        T = _contract(u, mats, [B.dim for B in factors])
        return float(_spectral_norm_tensor(T))
    A = _factor_polar_vertices(factors)
    return float(np.abs(_contract(u, A, [B.dim for B in factors])).max())


def injective_gauges(factors, U) -> np.ndarray:
    """Row-wise :func:`injective_gauge` for polytope factors."""
    A = _factor_polar_vertices(factors)
    K = kron_rows(A)
    return np.abs(np.atleast_2d(U) @ K.T).max(axis=1)


def injective_support(factors, u) -> float:
    """Support function of the injective product, i.e. the projective gauge of the polars."""
    u = _check_tensor(factors, u)
    if not np.any(u):
        return 0.0
    if all(isinstance(B, Ellipsoid) for B in factors):
        C = _ellipsoid_core(factors, u, 1)
        if C is None:
            raise UnsupportedDimensionError("implemented for l = 2 ellipsoids")
        return float(np.linalg.svd(C, compute_uv=False).sum())
    A = _factor_polar_vertices(factors)
    P = VPolytope(kron_rows(A), prune=False)
    return float(gauges(P, u[None, :])[0])


def hilbert_product(ellipsoids) -> Ellipsoid:
    """``E_1 (x)_2 ... (x)_2 E_l``: the ellipsoid with shape ``M_1 kron ... kron M_l``."""
    if not all(isinstance(E, Ellipsoid) for E in ellipsoids):
        raise TypeError("hilbert_product needs ellipsoid factors")
    return Ellipsoid(reduce(np.kron, [E.shape for E in ellipsoids]))


def unit_ball(shape) -> Ellipsoid:
    """Euclidean unit ball of the tensor space (the Hilbertian product of unit balls)."""
    return Ellipsoid(np.eye(as_shape(shape).total))
