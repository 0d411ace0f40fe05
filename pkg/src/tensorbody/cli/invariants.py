"""Property suite run by ``tensorbody invariants``.

Each trial draws a generated tensorial body and random group elements from
its own seed and measures a list of quantities against their tolerances.
"""
from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from ..convex_kernel import (
    VPolytope,
    gauge,
    gauges,
    hausdorff,
    inradius,
    outradius,
    polar_factor,
    support,
)
from ..gl_tensor import (
    act_on_body,
    apply,
    compose,
    polar_decompose,
    random_element,
)
from ..tensor_ops import (
    as_shape,
    injective_gauges,
    kron_vec,
    projective_product,
)
from ..tensorial import (
    PreconditionError,
    conv_otimes,
    is_tensorial,
    l_otimes,
    natalia_margin,
    phi,
    phi_inv,
    random_factor,
    random_tensorial_with_factors,
    retract_r,
)


@dataclass
class ExperimentConfig:
    shape: tuple = (2, 2)
    seed: int = 0
    trials: int = 5
    tol: float = 1e-6
    budget: dict = field(default_factory=dict)
    out: str | None = None

    def to_dict(self):
        return asdict(self)


def _row(trial, seed, quantity, value, tolerance, ok=None):
    value = float(value)
    if ok is None:
        ok = value <= tolerance
    return {"trial": trial, "seed": seed, "quantity": quantity, "value": value,
            "tolerance": float(tolerance), "pass": bool(ok)}


def run_trial(shape, trial: int, seed: int, tol: float = 1e-6):
    shape = as_shape(shape)
    rng = np.random.default_rng(seed)
    rows = []
    add = rows.append

    # factor-space duality
    B = random_factor(rng, shape.dims[0])
    u = rng.standard_normal(B.dim)
    add(_row(trial, seed, "gauge_support_duality",
             abs(support(B, u) - gauge(polar_factor(B), u).value), 1e-8))

    Q, factors = random_tensorial_with_factors(seed, shape)
    d = shape.total

    xs = [rng.standard_normal(k) for k in shape.dims]
    ys = [rng.standard_normal(k) for k in shape.dims]
    lhs = kron_vec(xs) @ kron_vec(ys)
    rhs = np.prod([x @ y for x, y in zip(xs, ys)])
    add(_row(trial, seed, "kron_inner_product", abs(lhs - rhs) / max(1.0, abs(rhs)), 1e-12))

    U = rng.standard_normal((20, d))
    gq = gauges(Q, U)
    ge = injective_gauges(factors, U)
    gp = gauges(projective_product(factors), U)
    add(_row(trial, seed, "crossnorm_sandwich", max(np.max(ge - gq), np.max(gq - gp)), 1e-7))

    P = projective_product(factors)
    g = gauges(P, kron_vec(xs)[None, :])[0]
    prod = np.prod([gauges(F, x[None, :])[0] for F, x in zip(factors, xs)])
    add(_row(trial, seed, "multiplicativity", abs(g - prod) / prod, 1e-7))

    verdict = is_tensorial(Q, shape, tol)
    add(_row(trial, seed, "is_tensorial_violation", verdict.violation, tol))

    C = conv_otimes(Q, shape)
    add(_row(trial, seed, "conv_retraction", hausdorff(conv_otimes(C, shape), C), 1e-7))

    T = random_element(rng, shape)
    TQ = act_on_body(T, Q)
    add(_row(trial, seed, "conv_equivariance",
             hausdorff(conv_otimes(TQ, shape), act_on_body(T, C)), tol))
    E1, E2 = l_otimes(TQ, shape), act_on_body(T, l_otimes(Q, shape))
    add(_row(trial, seed, "l_equivariance", hausdorff(E1, E2), tol))

    R = retract_r(Q, shape)
    add(_row(trial, seed, "r_in_slice", np.linalg.norm(l_otimes(R, shape).shape - np.eye(d)), tol))

    L, E = phi(Q, shape)
    add(_row(trial, seed, "phi_roundtrip", hausdorff(phi_inv(L, E, shape), Q), tol))

    S, V = random_element(rng, shape), random_element(rng, shape)
    x = rng.standard_normal(d)
    a = apply(compose(compose(S, T), V), x)
    b = apply(compose(S, compose(T, V)), x)
    add(_row(trial, seed, "group_associativity", np.abs(a - b).max() / np.abs(a).max(), 1e-10))

    pd = polar_decompose(T)
    add(_row(trial, seed, "polar_recomposition",
             np.abs(pd.recompose().matrix() - T.matrix()).max(), 1e-8))

    # lemma instances on normalized bodies
    Pn = act_on_body(T, Q)
    r0 = inradius(Pn)
    eps = float(rng.uniform(0.2, 0.45)) * r0
    Q2 = act_on_body(random_element(rng, shape, spread=0.02, permute=False), Pn)
    try:
        ok = natalia_margin(Pn, Q2, eps)
    except PreconditionError:
        ok = True
    add(_row(trial, seed, "natalia_implication", 0.0 if ok else 1.0, 0.0, ok))

    i = int(rng.integers(shape.order))
    Fi = factors[i]
    pert = Fi.vertices + 0.05 * rng.standard_normal(Fi.vertices.shape)
    Pi = VPolytope(pert)
    others = list(factors)
    others[i] = Pi
    lhs = hausdorff(projective_product(factors), projective_product(others))
    bound = hausdorff(Fi, Pi) * np.prod([outradius(F) for j, F in enumerate(factors) if j != i])
    add(_row(trial, seed, "lipschitz_slack", bound - lhs, -1e-6, bound - lhs >= -1e-6))
    return rows


def run_suite(cfg: ExperimentConfig):
    """Run ``cfg.trials`` trials (optionally threaded) and return rows in trial order."""
    threads = max(1, int(os.environ.get("TENSORBODY_THREADS", "1")))
    seeds = [cfg.seed + t for t in range(cfg.trials)]

    def job(t):
        return run_trial(cfg.shape, t, seeds[t], cfg.tol)

    if threads == 1:
        chunks = [job(t) for t in range(cfg.trials)]
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            chunks = list(pool.map(job, range(cfg.trials)))
    return [r for chunk in chunks for r in chunk]
