"""The group GL_(x) of tensor-structure preserving maps.

An element acts on decomposables by

    T(x^1 x ... x x^l) = T_1 x^{sigma(1)} x ... x T_l x^{sigma(l)},

i.e. ``T = (T_1 kron ... kron T_l) U_sigma``. Permutations are 0-based tuples
with ``sigma[i]`` the factor that lands in slot ``i``; they may only exchange
slots of equal dimension.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import reduce

import numpy as np

from .convex_kernel import DimensionMismatchError, Ellipsoid, VPolytope
from .tensor_ops import TensorShape, as_shape

KRON_TOL = 1e-6


class SingularFactorError(ValueError):
    pass


class NotTensorialError(ValueError):
    """The object is not tensorial; ``witness`` carries the evidence."""

    def __init__(self, message, witness=None):
        super().__init__(message)
        self.witness = witness


def _canonical_factors(factors):
    out = [np.array(F, dtype=float) for F in factors]
    scalar = 1.0
    for i in range(len(out) - 1):
        F = out[i]
        d = F.shape[0]
        c = np.sqrt(d) / np.linalg.norm(F)
        flat = F.ravel()
        lead = flat[np.flatnonzero(np.abs(flat) > 0)[0]]
        if lead < 0:
            c = -c
        out[i] = F * c
        scalar /= c
    out[-1] = out[-1] * scalar
    for F in out:
        F.setflags(write=False)
    return tuple(out)


@dataclass(frozen=True, eq=False)
class GlTensorElement:
    """Element of GL_(x) in canonical normalization (see :func:`make_element`)."""

    shape: TensorShape
    sigma: tuple
    factors: tuple

    def __eq__(self, other):
        if not isinstance(other, GlTensorElement):
            return NotImplemented
        return (self.shape == other.shape and self.sigma == other.sigma
                and all(np.array_equal(a, b) for a, b in zip(self.factors, other.factors)))

    def __hash__(self):
        return hash((self.shape, self.sigma, tuple(F.tobytes() for F in self.factors)))

    def matrix(self) -> np.ndarray:
        """The induced ``d x d`` matrix (diagnostics only)."""
        return apply(self, np.eye(self.shape.total)).T


def _check_sigma(shape, sigma):
    sigma = tuple(int(s) for s in sigma)
    l = shape.order
    if sorted(sigma) != list(range(l)):
        raise ValueError(f"{sigma} is not a permutation of 0..{l - 1}")
    for i, s in enumerate(sigma):
        if shape.dims[i] != shape.dims[s]:
            raise ValueError(f"permutation {sigma} moves a factor of dimension {shape.dims[s]} "
                             f"into a slot of dimension {shape.dims[i]}")
    return sigma


def make_element(shape, sigma, raw_factors, cond_max: float = 1e12) -> GlTensorElement:
    """Build an element from raw factors, storing the canonical representative.

    For ``i < l`` each factor is scaled to Frobenius norm ``sqrt(d_i)`` with its
    first nonzero entry (row-major) positive; the last factor absorbs the
    leftover scalar. Inputs that differ by ``(c_1 I, ..., c_l I)`` with
    ``prod c_i = 1`` give the same stored element (bit-identical when the
    ``c_i`` are powers of two).
    """
    shape = as_shape(shape)
    if sigma is None:
        sigma = tuple(range(shape.order))
    sigma = _check_sigma(shape, sigma)
    if len(raw_factors) != shape.order:
        raise DimensionMismatchError("one factor per tensor slot is required")
    facs = []
    for F, d in zip(raw_factors, shape.dims):
        F = np.asarray(F, dtype=float)
        if F.shape != (d, d):
            raise DimensionMismatchError(f"factor of shape {F.shape}, expected {(d, d)}")
        if not np.all(np.isfinite(F)):
            raise SingularFactorError("non-finite factor")
        if np.linalg.cond(F) > cond_max:
            raise SingularFactorError("factor is singular or too ill-conditioned")
        facs.append(F)
    return GlTensorElement(shape, sigma, _canonical_factors(facs))


def identity(shape) -> GlTensorElement:
    shape = as_shape(shape)
    return make_element(shape, None, [np.eye(d) for d in shape.dims])


def permutation(shape, sigma) -> GlTensorElement:
    shape = as_shape(shape)
    return make_element(shape, sigma, [np.eye(d) for d in shape.dims])


def kron_element(factors) -> GlTensorElement:
    """``T_1 kron ... kron T_l`` with the identity permutation."""
    return make_element(TensorShape(tuple(len(F) for F in factors)), None, factors)


def apply(T: GlTensorElement, u) -> np.ndarray:
    """Apply ``T`` to a vector or to each row of a 2D array."""
    u = np.asarray(u, dtype=float)
    dims = T.shape.dims
    single = u.ndim == 1
    U = u[None, :] if single else u
    if U.shape[1] != T.shape.total:
        raise DimensionMismatchError(f"vector of dimension {U.shape[1]} for shape {T.shape}")
    n = U.shape[0]
    X = U.reshape((n,) + dims)
    X = np.transpose(X, (0,) + tuple(1 + s for s in T.sigma))
    for i, F in enumerate(T.factors):
        X = np.moveaxis(np.tensordot(F, X, axes=([1], [i + 1])), 0, i + 1)
    out = X.reshape(n, -1)
    return out[0] if single else out


def compose(S: GlTensorElement, T: GlTensorElement) -> GlTensorElement:
    """The element ``S o T`` (apply ``T`` first)."""
    if S.shape != T.shape:
        raise DimensionMismatchError("elements act on different shapes")
    # S T = (S_1..S_l) U_s (T_1..T_l) U_t = (S_i T_{s(i)})_i U_{t o s}
    facs = [S.factors[i] @ T.factors[S.sigma[i]] for i in range(S.shape.order)]
    sigma = tuple(T.sigma[S.sigma[i]] for i in range(S.shape.order))
    return make_element(S.shape, sigma, facs)


def inverse(T: GlTensorElement) -> GlTensorElement:
    l = T.shape.order
    inv = [0] * l
    for i, s in enumerate(T.sigma):
        inv[s] = i
    facs = [np.linalg.inv(T.factors[inv[i]]) for i in range(l)]
    return make_element(T.shape, tuple(inv), facs)


def scaled(T: GlTensorElement, c: float) -> GlTensorElement:
    facs = list(T.factors)
    facs[-1] = facs[-1] * c
    return make_element(T.shape, T.sigma, facs)


def act_on_body(T: GlTensorElement, Q):
    """Image ``TQ``. Vertices map to vertices; ellipsoid shapes map to ``A M A^T``."""
    if Q.dim != T.shape.total:
        raise DimensionMismatchError(f"body of dimension {Q.dim} for shape {T.shape}")
    if isinstance(Q, Ellipsoid):
        MA = apply(T, Q.shape)               # rows: A m_j, i.e. M A^T
        AMA = apply(T, MA.T)                 # A M A^T
        return Ellipsoid(0.5 * (AMA + AMA.T))
    return VPolytope(apply(T, Q.vertices), prune=False)


def _sym_sqrt(A, power=0.5):
    w, Q = np.linalg.eigh(0.5 * (A + A.T))
    return (Q * w ** power) @ Q.T


@dataclass(frozen=True)
class PolarDecomposition:
    """``T = S o U`` with ``S`` positive Kronecker-structured and ``U`` in O_(x)."""

    positive: GlTensorElement
    orthogonal: GlTensorElement

    @property
    def positive_part(self):
        return list(self.positive.factors)

    @property
    def orthogonal_part(self):
        return self.orthogonal

    def recompose(self) -> GlTensorElement:
        return compose(self.positive, self.orthogonal)


def polar_decompose(T: GlTensorElement) -> PolarDecomposition:
    """Factor-wise polar decomposition ``T_i = S_i U_i``, ``S_i = (T_i T_i^T)^{1/2}``."""
    S, U = [], []
    for F in T.factors:
        Si = _sym_sqrt(F @ F.T)
        S.append(Si)
        U.append(np.linalg.solve(Si, F))
    return PolarDecomposition(make_element(T.shape, None, S), make_element(T.shape, T.sigma, U))


def is_orthogonal(T: GlTensorElement, tol: float = 1e-8) -> bool:
    """Whether every canonical factor is orthogonal (``U_sigma`` always is)."""
    return all(np.linalg.norm(F.T @ F - np.eye(len(F))) <= tol for F in T.factors)


def _rank1_kron(M, d1, d2):
    R = M.reshape(d1, d2, d1, d2).transpose(0, 2, 1, 3).reshape(d1 * d1, d2 * d2)
    u, s, vt = np.linalg.svd(R, full_matrices=False)
    A = np.sqrt(s[0]) * u[:, 0].reshape(d1, d1)
    B = np.sqrt(s[0]) * vt[0].reshape(d2, d2)
    if np.trace(A) < 0:
        A, B = -A, -B
    return A, B


def nearest_kronecker(M, shape):
    """Best Kronecker approximation ``M ~ M_1 kron ... kron M_l`` in Frobenius norm.

    Two factors: rank-1 truncation of the Van Loan-Pitsianis rearrangement
    (optimal). More factors: split recursively as ``d_1 | d_2...d_l``.
    Factors are symmetrized when ``M`` is symmetric.

    Returns
    -------
    factors : list of ndarray
    residual : float
        ``||M - M_1 kron ... kron M_l||_F``.
    """
    shape = as_shape(shape)
    M = np.asarray(M, dtype=float)
    d = shape.total
    if M.shape != (d, d):
        raise DimensionMismatchError(f"matrix of shape {M.shape} does not factor as {shape}")
    sym = np.allclose(M, M.T, rtol=0, atol=1e-12 * max(1.0, np.abs(M).max()))
    factors = []
    rest = M
    dims = list(shape.dims)
    while len(dims) > 1:
        d1, d2 = dims[0], int(np.prod(dims[1:]))
        A, rest = _rank1_kron(rest, d1, d2)
        factors.append(A)
        dims = dims[1:]
    factors.append(rest)
    if sym:
        factors = [0.5 * (F + F.T) for F in factors]
    # balance the reciprocal scaling so factors have comparable size
    norms = [np.linalg.norm(F) for F in factors]
    if all(n > 0 for n in norms):
        g = np.prod(norms) ** (1.0 / len(norms))
        factors = [F * (g / n) for F, n in zip(factors, norms)]
    residual = float(np.linalg.norm(M - reduce(np.kron, factors)))
    return factors, residual


def kronecker_factors_pd(M, shape, tol: float = KRON_TOL):
    """Positive definite Kronecker factors of an SPD matrix, or NotTensorialError."""
    factors, residual = nearest_kronecker(M, shape)
    rel = residual / np.linalg.norm(M)
    if rel > tol:
        raise NotTensorialError(f"shape matrix is not a Kronecker product (relative residual {rel:.3g})",
                                witness=rel)
    # factor signs can be flipped in pairs; make each one positive definite
    signs = [1.0 if np.trace(F) > 0 else -1.0 for F in factors]
    if np.prod(signs) < 0:
        raise NotTensorialError("Kronecker factors are not definite", witness=rel)
    factors = [s * F for s, F in zip(signs, factors)]
    for F in factors:
        if np.linalg.eigvalsh(F)[0] <= 0:
            raise NotTensorialError("Kronecker factors are not positive definite", witness=rel)
    return factors, rel


def xi(E: Ellipsoid, shape, tol: float = KRON_TOL) -> GlTensorElement:
    """The positive element ``(M_1^{1/2}, ..., M_l^{1/2})`` carrying the unit ball onto ``E``."""
    if not isinstance(E, Ellipsoid):
        raise TypeError("xi is defined on ellipsoids")
    shape = as_shape(shape)
    if E.dim != shape.total:
        raise DimensionMismatchError("ellipsoid dimension does not match the shape")
    factors, _ = kronecker_factors_pd(E.shape, shape, tol)
    return make_element(shape, None, [_sym_sqrt(F) for F in factors])


def chart_dimension(shape) -> int:
    """Chart exponent ``p = sum d_i (d_i + 1) / 2`` for the tensorial ellipsoids.

    The map ``(M_1, ..., M_l) -> M_1 kron ... kron M_l`` is constant along
    ``(c_1 M_1, ..., c_l M_l)`` with ``prod c_i = 1``, so its image has
    dimension ``p - (l - 1)``; ``p`` counts the factor tuples.
    """
    return int(sum(d * (d + 1) // 2 for d in as_shape(shape).dims))


def random_element(rng, shape, orthogonal: bool = False, spread: float = 0.5,
                   permute: bool = True) -> GlTensorElement:
    """Random element; ``orthogonal=True`` draws from O_(x)."""
    shape = as_shape(shape)
    facs = []
    for d in shape.dims:
        Q, R = np.linalg.qr(rng.standard_normal((d, d)))
        Q = Q * np.sign(np.diag(R))
        if orthogonal:
            facs.append(Q)
        else:
            G = rng.standard_normal((d, d))
            facs.append(Q @ _sym_sqrt(np.eye(d) * 1.0 + spread * (G @ G.T) / d))
    sigma = list(range(shape.order))
    if permute:
        for dim in set(shape.dims):
            idx = [i for i, d in enumerate(shape.dims) if d == dim]
            perm = rng.permutation(idx)
            for i, p in zip(idx, perm):
                sigma[i] = int(p)
    if not orthogonal:
        facs[-1] = facs[-1] * float(rng.uniform(0.5, 2.0))
    return make_element(shape, tuple(sigma), facs)

