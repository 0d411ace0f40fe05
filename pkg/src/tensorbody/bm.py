"""Upper bounds for the tensorial Banach-Mazur distance.

Both bodies are first moved to the slice by ``r``; there the search runs over
the orthogonal group O_(x) (factor rotations and reflections, slot
permutations). For a candidate ``U`` the best scalar is folded in through

    lam(U) = c(Q', U P') * c(U P', Q'),   c(A, B) = min{s : A ⊆ s B}.

Every returned certificate is re-verified in the original coordinates.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import expm
from scipy.spatial.transform import Rotation

from .convex_kernel import (
    Ellipsoid,
    VPolytope,
    facet_normals,
    gauges,
    hausdorff,
    inradius,
    outradius,
)
from .gl_tensor import (
    GlTensorElement,
    act_on_body,
    compose,
    inverse,
    make_element,
    scaled,
    xi,
)
from .tensor_ops import as_shape
from .tensorial import PreconditionError, l_otimes

VERIFY_TOL = 1e-6
STOP_TOL = 1e-9


@dataclass(frozen=True)
class Budget:
    restarts: int = 32
    steps: int = 200
    screen: int = 2048


@dataclass(frozen=True)
class BmCertificate:
    """``Q ⊆ T P ⊆ lam Q`` with the measured containment factors in ``slack``.

    ``slack = (s1, s2)`` where ``s1 = max_{w in Q} g_{TP}(w)`` and
    ``s2 = max_{v in TP} g_Q(v)``; ``lam = s1 * s2`` (at least 1).
    """

    lam: float
    element: GlTensorElement
    slack: tuple
    budget: Budget = field(default_factory=Budget)
    seed: int = 0

    @property
    def valid(self) -> bool:
        s1, s2 = self.slack
        return s1 <= 1 + VERIFY_TOL and s2 <= self.lam * (1 + VERIFY_TOL)


@dataclass(frozen=True)
class OrbitResult:
    same: bool
    best_lambda: float
    certificate: BmCertificate

    def __bool__(self):
        return self.same


class _Geom:
    """Vertices, facet normals or shape matrix of a body, for closed-form containment."""

    def __init__(self, V=None, F=None, M=None):
        self.V, self.F, self.M = V, F, M

    @classmethod
    def of(cls, B):
        if isinstance(B, Ellipsoid):
            return cls(M=np.array(B.shape))
        return cls(V=np.array(B.vertices), F=facet_normals(B))

    def moved(self, A, A_inv=None):
        if A_inv is None:
            A_inv = np.linalg.inv(A)
        if self.M is not None:
            return _Geom(M=A @ self.M @ A.T)
        return _Geom(V=self.V @ A.T, F=self.F @ A_inv)


def _containment(A: _Geom, B: _Geom) -> float:
    """Smallest ``s`` with ``A ⊆ s B``."""
    if A.M is None and B.M is None:
        return float(np.abs(A.V @ B.F.T).max())
    if A.M is None:
        Y = np.linalg.solve(B.M, A.V.T)
        return float(np.sqrt(np.max(np.einsum("ij,ji->i", A.V, Y))))
    if B.M is None:
        return float(np.sqrt(np.max(np.einsum("ij,jk,ik->i", B.F, A.M, B.F))))
    w = np.linalg.eigvals(np.linalg.solve(B.M, A.M)).real
    return float(np.sqrt(w.max()))


def _quad_max(X, Ms):
    # sqrt(max_r x_r^T M x_r) for each matrix of a batch
    return np.sqrt(np.einsum("ri,nij,rj->nr", X, Ms, X).max(axis=1))


def _bilinear_absmax(X, U, Y):
    # max_{r,s} |x_r^T U_n y_s| for each n, as two large matrix products
    n, d, _ = U.shape
    A = X @ U.transpose(1, 0, 2).reshape(d, n * d)
    B = A.reshape(len(X) * n, d) @ Y.T
    return np.abs(B).reshape(len(X), n, len(Y)).max(axis=(0, 2))


def _lambda_batch(Qg, Pg, U):
    """``lam`` for a batch of orthogonal matrices ``U`` of shape (n, d, d)."""
    Ut = np.transpose(U, (0, 2, 1))
    if Qg.M is None and Pg.M is None:
        c1 = _bilinear_absmax(Qg.V, U, Pg.F)
        c2 = _bilinear_absmax(Pg.V, Ut, Qg.F)
    elif Pg.M is None:
        Minv = np.linalg.inv(Qg.M)
        c1 = _quad_max(Pg.F, Ut @ Qg.M @ U)
        c2 = _quad_max(Pg.V, Ut @ Minv @ U)
    elif Qg.M is None:
        Minv = np.linalg.inv(Pg.M)
        c1 = _quad_max(Qg.V, U @ Minv @ Ut)
        c2 = _quad_max(Qg.F, U @ Pg.M @ Ut)
    else:
        out = []
        for Ui in U:
            UP = Pg.moved(Ui, Ui.T)
            out.append(_containment(Qg, UP) * _containment(UP, Qg))
        return np.array(out)
    return c1 * c2


def _lambda_chunked(Qg, Pg, U, max_elems=4_000_000):
    sizes = [len(g.V) * len(g.F) if g.M is None else g.M.shape[0] ** 2 for g in (Qg, Pg)]
    chunk = max(1, int(max_elems // max(sizes)))
    return np.concatenate([_lambda_batch(Qg, Pg, U[i:i + chunk]) for i in range(0, len(U), chunk)])


def _components(shape):
    """Slot permutations times reflection patterns on even-dimensional factors.

    Odd-dimensional reflections are absorbed by the sign ``-I``, which does not
    change a symmetric body.
    """
    groups = {}
    for i, d in enumerate(shape.dims):
        groups.setdefault(d, []).append(i)
    perms = [tuple(range(shape.order))]
    for idx in groups.values():
        new = []
        for base in perms:
            for p in itertools.permutations(idx):
                s = list(base)
                for i, j in zip(idx, p):
                    s[i] = j
                new.append(tuple(s))
        perms = new
    even = [i for i, d in enumerate(shape.dims) if d % 2 == 0]
    refl = list(itertools.product([False, True], repeat=len(even)))
    out = []
    for sigma in sorted(set(perms)):
        for r in refl:
            flags = [False] * shape.order
            for i, f in zip(even, r):
                flags[i] = f
            out.append((sigma, tuple(flags)))
    return out


def _n_params(d):
    return d * (d - 1) // 2


def _rotations(d, TH):
    n = len(TH)
    if d == 2:
        c, s = np.cos(TH[:, 0]), np.sin(TH[:, 0])
        return np.stack([np.stack([c, -s], axis=1), np.stack([s, c], axis=1)], axis=1)
    if d == 3:
        return Rotation.from_rotvec(TH).as_matrix().reshape(n, 3, 3)
    out = np.empty((n, d, d))
    iu = np.triu_indices(d, 1)
    for k in range(n):
        S = np.zeros((d, d))
        S[iu] = TH[k]
        out[k] = expm(S - S.T)
    return out


def _factor_batches(shape, comp, TH):
    _, flags = comp
    facs, k = [], 0
    for d, f in zip(shape.dims, flags):
        p = _n_params(d)
        R = _rotations(d, TH[:, k:k + p])
        if f:
            R[:, :, 0] *= -1.0
        facs.append(R)
        k += p
    return facs


def _perm_matrix(shape, sigma):
    d = shape.total
    idx = np.arange(d).reshape(shape.dims)
    # (U_sigma u) reshaped is transpose(u reshaped, sigma)
    return np.eye(d)[np.transpose(idx, sigma).ravel()]


def _matrices(shape, comp, TH, perm):
    K = None
    for R in _factor_batches(shape, comp, TH):
        if K is None:
            K = R
        else:
            n, a, _ = K.shape
            d = R.shape[1]
            K = np.einsum("nij,nkl->nikjl", K, R).reshape(n, a * d, a * d)
    return K @ perm


def _random_thetas(rng, shape, n):
    out = []
    for d in shape.dims:
        if d == 2:
            out.append(rng.uniform(-np.pi, np.pi, (n, 1)))
        elif d == 3:
            out.append(Rotation.random(n, random_state=rng).as_rotvec().reshape(n, 3))
        else:
            out.append(rng.uniform(-np.pi, np.pi, (n, _n_params(d))))
    return np.hstack(out)


def _parallel_search(f, TH, steps, rng, step0=0.3, min_step=1e-10, max_step=1.0):
    """Compass search run in lockstep from every row of ``TH``.

    Each round tries coordinate and random directions at the current step;
    the best improving move is taken and the step doubled, otherwise halved.
    """
    TH = TH.copy()
    n, p = TH.shape
    best = f(TH)
    step = np.full(n, step0)
    basis = np.vstack([np.eye(p), -np.eye(p)])
    for _ in range(steps):
        idx = np.flatnonzero((step >= min_step) & (best > 1 + STOP_TOL))
        if idx.size == 0:
            break
        R = rng.standard_normal((2 * p + 2, p))
        D = np.vstack([basis, R / np.linalg.norm(R, axis=1, keepdims=True)])
        cand = TH[idx, None, :] + step[idx, None, None] * D[None, :, :]
        vals = f(cand.reshape(-1, p)).reshape(len(idx), len(D))
        j = np.argmin(vals, axis=1)
        v = vals[np.arange(len(idx)), j]
        imp = v < best[idx]
        moved = idx[imp]
        TH[moved] = cand[imp, j[imp]]
        best[moved] = v[imp]
        step[moved] = np.minimum(2.0 * step[moved], max_step)
        step[idx[~imp]] *= 0.5
    return best, TH


def _normalizer(B, shape):
    E = l_otimes(B, shape)
    return xi(E, shape)


def verify(P, Q, T: GlTensorElement):
    """Recompute the containment factors of ``Q ⊆ TP`` and ``TP ⊆ lam Q`` from scratch.

    Polytopes use LP gauges on vertices; ellipsoid pieces use closed forms.
    """
    TP = act_on_body(T, P)
    if isinstance(Q, VPolytope) and isinstance(TP, VPolytope):
        s1 = float(gauges(TP, Q.vertices).max())
        s2 = float(gauges(Q, TP.vertices).max())
        return s1, s2
    A = T.matrix()
    Pg = _Geom.of(P).moved(A)
    Qg = _Geom.of(Q)
    return _containment(Qg, Pg), _containment(Pg, Qg)


def bm_upper(P, Q, shape, budget: Budget | None = None, seed: int = 0) -> BmCertificate:
    """Best certificate ``Q ⊆ TP ⊆ lam Q`` found by searching O_(x) on the slice.

    The returned ``lam`` is an upper bound for the tensorial Banach-Mazur
    distance, never the distance itself.
    """
    shape = as_shape(shape)
    budget = budget or Budget()
    rng = np.random.default_rng(seed)
    A_P = _normalizer(P, shape)
    A_Q = _normalizer(Q, shape)
    Pn = act_on_body(inverse(A_P), P)
    Qn = act_on_body(inverse(A_Q), Q)
    Pg, Qg = _Geom.of(Pn), _Geom.of(Qn)
    comps = _components(shape)
    p = sum(_n_params(d) for d in shape.dims)
    screened = []
    for ci, comp in enumerate(comps):
        perm = _perm_matrix(shape, comp[0])

        def f(TH, comp=comp, perm=perm):
            return _lambda_chunked(Qg, Pg, _matrices(shape, comp, TH, perm))

        TH = _random_thetas(rng, shape, budget.screen)
        if ci == 0:
            TH[0] = 0.0
        vals = f(TH)
        top = np.argsort(vals, kind="stable")[:budget.restarts]
        screened.append((float(vals[top[0]]), ci, f, TH[top]))
    # most promising components first; stop once nothing is left to gain
    best = (np.inf, 0, np.zeros(p))
    for _, ci, f, TH in sorted(screened, key=lambda s: (s[0], s[1])):
        lams, TH = _parallel_search(f, TH, budget.steps, rng)
        k = int(np.argmin(lams))
        if lams[k] < best[0]:
            best = (float(lams[k]), ci, TH[k])
        if best[0] <= 1 + STOP_TOL:
            break
    _, ci, th = best
    sigma = comps[ci][0]
    U = make_element(shape, sigma, [F[0] for F in _factor_batches(shape, comps[ci], th[None, :])])
    T = compose(A_Q, compose(U, inverse(A_P)))
    s1, _ = verify(P, Q, T)
    T = scaled(T, s1)
    s1, s2 = verify(P, Q, T)
    lam = max(1.0, s1 * s2)
    return BmCertificate(lam, T, (s1, s2), budget, seed)


def same_orbit(P, Q, shape, tol: float = 1e-6, budget: Budget | None = None,
               seed: int = 0) -> OrbitResult:
    """One-sided orbit test: True when a certificate with ``lam <= 1 + tol`` is found."""
    cert = bm_upper(P, Q, shape, budget, seed)
    return OrbitResult(cert.lam <= 1 + tol, cert.lam, cert)


# ---------------------------------------------------------------------------
# transporter diagnostic


@dataclass(frozen=True)
class TransporterReport:
    norms: tuple
    bound: float
    attempted: int
    accepted: int
    flagged: tuple

    @property
    def max_norm(self) -> float:
        return max(self.norms) if self.norms else 0.0

    @property
    def ok(self) -> bool:
        return not self.flagged


def _near_identity(rng, shape, eta):
    facs = []
    for d in shape.dims:
        G = rng.standard_normal((d, d))
        facs.append(np.eye(d) + eta * G / np.linalg.norm(G, 2))
    return make_element(shape, None, facs)


def transporter_diagnostic(P, C, eps: float, lam: float, trials: int = 100, seed: int = 0,
                           shape=None, sampler=None, max_tries: int = 20) -> TransporterReport:
    """Sample transporters ``T`` with ``TQ`` near ``C`` for ``Q`` near ``P``.

    For ``Q`` with ``hausdorff(P, Q) < eps`` and ``hausdorff(TQ, C) < lam`` the
    operator norm of ``T`` is at most ``(outradius(C) + lam) / eps``. Each
    accepted sample's norm is recorded; any exceeding the bound is flagged.
    ``sampler(rng)`` may supply ``(T, Q)`` candidates instead of the default
    perturbation sampler.
    """
    if inradius(P) < 2 * eps - 1e-9:
        raise PreconditionError(f"2*eps*B_2 is not contained in P (eps={eps})")
    if inradius(C) < lam - 1e-9:
        raise PreconditionError(f"lam*B_2 is not contained in C (lam={lam})")
    if shape is None:
        d = int(round(np.sqrt(P.dim)))
        shape = (d, d)
    shape = as_shape(shape)
    rng = np.random.default_rng(seed)
    bound = (outradius(C) + lam) / eps

    def default_sampler(rng):
        Tq = _near_identity(rng, shape, rng.uniform(0.0, 0.5) * eps / max(outradius(P), 1e-12))
        Q = act_on_body(Tq, P)
        T = scaled(_near_identity(rng, shape, rng.uniform(0.0, 0.3)), rng.uniform(0.7, 1.5))
        return T, Q

    sample = sampler or default_sampler
    norms, flagged = [], []
    attempted = 0
    for _ in range(trials):
        for _ in range(max_tries):
            attempted += 1
            T, Q = sample(rng)
            if hausdorff(P, Q) >= eps:
                continue
            if hausdorff(act_on_body(T, Q), C) >= lam:
                continue
            n = float(np.linalg.norm(T.matrix(), 2))
            norms.append(n)
            if n > bound * (1 + 1e-9):
                flagged.append(n)
            break
    return TransporterReport(tuple(norms), bound, attempted, len(norms), tuple(flagged))

