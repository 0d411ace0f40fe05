"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Every test measures the quantity at the stated tolerance and asserts it, so a
failing criterion fails the run.
"""
import itertools
import time
from functools import reduce

import numpy as np
import pytest

from tensorbody.bm import bm_upper, transporter_diagnostic, verify
from tensorbody.convex_kernel import (
    Ellipsoid,
    VPolytope,
    hausdorff,
    inradius,
    loewner,
    outradius,
)
from tensorbody.gl_tensor import (
    act_on_body,
    chart_dimension,
    compose,
    is_orthogonal,
    make_element,
    random_element,
)
from tensorbody.tensor_ops import (
    hilbert_product,
    injective_gauges,
    projective_product,
    unit_ball,
)
from tensorbody.tensorial import (
    ball_error,
    ball_polytope,
    conv_otimes,
    homotopy,
    in_slice,
    is_tensorial,
    l_otimes,
    natalia_margin,
    phi,
    phi_inv,
    random_factor,
    random_tensorial,
    retract_r,
)

pytestmark = pytest.mark.acceptance

SHAPES = [(2, 2), (2, 3), (3, 3), (2, 2, 2)]
B1_4 = VPolytope(np.eye(4))


def test_loewner_kronecker_identity(criterion):
    t0 = time.time()
    worst = 0.0
    rng = np.random.default_rng(100)
    for shape in [(2, 2), (2, 3)]:
        for _ in range(50):
            facs = [random_factor(rng, d, int(rng.integers(d, d + 3))) for d in shape]
            M = loewner(projective_product(facs)).shape
            K = reduce(np.kron, [loewner(F).shape for F in facs])
            worst = max(worst, float(np.linalg.norm(M - K)))
    ok = worst <= 1e-5
    criterion(1, "Loewner-Kronecker identity", ok,
              f"worst Frobenius error {worst:.3g} <= 1e-5 over 100 pairs ({time.time() - t0:.1f}s)")
    assert ok


def test_euclidean_ball_identity(criterion):
    exact = []
    for shape in SHAPES:
        E = hilbert_product([Ellipsoid(np.eye(d)) for d in shape])
        exact.append(np.array_equal(E.shape, np.eye(E.dim))
                     and np.array_equal(unit_ball(shape).shape, E.shape))
    ok = all(exact)
    criterion(2, "Euclidean-ball identity", ok, f"M == I exactly at shapes {SHAPES}")
    assert ok


def test_classical_product_identities(criterion):
    # brute-force oracle 1: every signed product of cross-polytope vertices
    e = np.eye(2)
    signed = [s * v for v in e for s in (1, -1)]
    brute = VPolytope([np.kron(a, b) for a, b in itertools.product(signed, signed)])
    P = projective_product([VPolytope(np.eye(2)), VPolytope(np.eye(2))])
    h1 = max(hausdorff(P, B1_4), hausdorff(P, brute))
    # brute-force oracle 2: the polar of the square is the diamond, so the
    # injective gauge is the largest |<a kron b, u>| over its signed vertices
    cube = VPolytope(list(itertools.product([-1.0, 1.0], repeat=2)))
    rng = np.random.default_rng(3)
    U = rng.standard_normal((1000, 4))
    g = injective_gauges([cube, cube], U)
    enum = np.max([np.abs(U @ np.kron(a, b)) for a, b in itertools.product(signed, signed)], axis=0)
    h2 = max(float(np.abs(g - np.abs(U).max(axis=1)).max()), float(np.abs(g - enum).max()))
    ok = h1 <= 1e-9 and h2 <= 1e-9
    criterion(3, "classical product identities", ok,
              f"pi: Hausdorff {h1:.3g}; eps: max gauge error {h2:.3g} on 1000 u (tol 1e-9)")
    assert ok


def test_decision_procedure(criterion):
    t0 = time.time()
    worst, failures = 0.0, 0
    for shape in SHAPES:
        for seed in range(100):
            v = is_tensorial(random_tensorial(seed, shape), shape)
            worst = max(worst, v.violation)
            failures += not v.tensorial
    rng = np.random.default_rng(4)
    planted = [np.diag([2.0, 1, 1, 1])]
    while len(planted) < 21:
        G = rng.standard_normal((4, 4))
        M = planted[0] + 0.05 * (G + G.T)
        if np.linalg.eigvalsh(M)[0] > 0.1:
            planted.append(M)
    caught, residuals = 0, []
    for M in planted:
        v = is_tensorial(Ellipsoid(M), (2, 2))
        if not v.tensorial and v.witness is not None:
            caught += 1
            residuals.append(v.violation)
    ok = failures == 0 and caught == len(planted)
    criterion(4, "decision procedure", ok,
              f"400 generated bodies, {failures} rejected (worst violation {worst:.2g}); "
              f"{caught}/21 planted ellipsoids rejected, min residual {min(residuals):.3f} "
              f"({time.time() - t0:.1f}s)")
    assert ok


def test_equivariance_suite(criterion):
    t0 = time.time()
    rng = np.random.default_rng(5)
    worst_c, worst_l, worst_r = 0.0, 0.0, 0.0
    cache = {}
    for k in range(100):
        shape = SHAPES[k % 4]
        if k % 20 < 4:
            Q = random_tensorial(k, shape)
            cache[shape] = Q, conv_otimes(Q, shape), l_otimes(Q, shape), retract_r(Q, shape)
        Q, C, E, R = cache[shape]
        T = random_element(rng, shape)
        TQ = act_on_body(T, Q)
        worst_c = max(worst_c, hausdorff(conv_otimes(TQ, shape), act_on_body(T, C)))
        worst_l = max(worst_l, hausdorff(l_otimes(TQ, shape), act_on_body(T, E), tol=1e-8))
        U = random_element(rng, shape, orthogonal=True)
        worst_r = max(worst_r, hausdorff(retract_r(act_on_body(U, Q), shape), act_on_body(U, R)))
    ok = max(worst_c, worst_l, worst_r) <= 1e-6
    criterion(5, "equivariance suite", ok,
              f"conv {worst_c:.2g}, l {worst_l:.2g} (100 GL elements); r {worst_r:.2g} "
              f"(100 orthogonal elements); tol 1e-6 ({time.time() - t0:.1f}s)")
    assert ok


def test_slice_suite(criterion):
    t0 = time.time()
    rng = np.random.default_rng(6)
    misses, slices = 0, []
    for k in range(100):
        shape = SHAPES[k % 4]
        R = retract_r(random_tensorial(1000 + k, shape), shape)
        misses += not in_slice(R, shape, 1e-6)
        if k < 8:
            slices.append((shape, R))
    # candidate transporters far from the identity: orthogonal elements with
    # large rotations, reflections and slot swaps, plus non-orthogonal ones
    sampled, mapped, bad = 0, 0, 0
    for j in range(200):
        shape, L = slices[j % len(slices)]
        if j % 2 == 0:
            T = random_element(rng, shape, orthogonal=True)
            refl = [np.diag(rng.choice([-1.0, 1.0], size=d)) for d in shape]
            T = compose(T, make_element(shape, None, refl))
        else:
            T = random_element(rng, shape, spread=float(rng.uniform(0.05, 2.0)))
        sampled += 1
        if in_slice(act_on_body(T, L), shape, 1e-6):
            mapped += 1
            bad += not is_orthogonal(T, 1e-8)
    ok = misses == 0 and bad == 0 and mapped > 0
    criterion(6, "slice suite", ok,
              f"r in slice for 100/100 bodies with {misses} misses; {mapped}/{sampled} sampled T "
              f"map slice to slice, {bad} not orthogonal at 1e-8 ({time.time() - t0:.1f}s)")
    assert ok


def test_phi_round_trips(criterion):
    t0 = time.time()
    rng = np.random.default_rng(7)
    worst_a, worst_b = 0.0, 0.0
    for k in range(100):
        shape = SHAPES[k % 4]
        Q = random_tensorial(2000 + k, shape)
        L, E = phi(Q, shape)
        worst_a = max(worst_a, hausdorff(phi_inv(L, E, shape), Q))
        # a fresh tensorial ellipsoid for the other direction
        Ms = []
        for d in shape:
            G = rng.standard_normal((d, d))
            Ms.append(G @ G.T + 0.5 * np.eye(d))
        E2 = hilbert_product([Ellipsoid(M) for M in Ms])
        L2, E3 = phi(phi_inv(L, E2, shape), shape)
        worst_b = max(worst_b, hausdorff(L2, L), hausdorff(E3, E2, tol=1e-8))
    ok = max(worst_a, worst_b) <= 1e-6
    criterion(7, "phi round trips", ok,
              f"phi_inv o phi {worst_a:.2g}, phi o phi_inv {worst_b:.2g} on 100 bodies; "
              f"tol 1e-6 ({time.time() - t0:.1f}s)")
    assert ok


def test_chart_dimension(criterion):
    rng = np.random.default_rng(8)
    mismatches = 0
    for _ in range(20):
        dims = tuple(int(d) for d in rng.integers(2, 7, size=rng.integers(2, 5)))
        expected = sum(d * (d + 1) // 2 for d in dims)
        mismatches += chart_dimension(dims) != expected
    ok = mismatches == 0
    criterion(8, "chart dimension", ok, f"{20 - mismatches}/20 random shapes match")
    assert ok


def test_bm_suite(criterion):
    t0 = time.time()
    identical = [bm_upper(B, B, (2, 2)).lam for B in
                 [B1_4] + [random_tensorial(s, (2, 2)) for s in range(3)]]
    rng = np.random.default_rng(9)
    planted = []
    for k in range(50):
        P = random_tensorial(3000 + k, (2, 2))
        Q = act_on_body(random_element(rng, (2, 2)), P)
        c = bm_upper(P, Q, (2, 2), seed=k)
        s1, s2 = verify(P, Q, c.element)
        planted.append(max(c.lam, s1 * s2))
    ball = bm_upper(B1_4, Ellipsoid(np.eye(4)), (2, 2), seed=7)
    ok = (max(abs(x - 1.0) for x in identical) <= 1e-9 and max(planted) <= 1 + 1e-6
          and ball.lam <= 2 + 1e-6 and ball.valid)
    criterion(9, "Banach-Mazur suite", ok,
              f"identical pairs max lam-1 {max(identical) - 1:.2g}; planted worst lam-1 "
              f"{max(planted) - 1:.2g} over 50; (B1^4, B2) lam {ball.lam:.9f} "
              f"({time.time() - t0:.1f}s)")
    assert ok


def _nuclear_gap(H, n=4000, seed=0):
    # sup over unit u of h_{B2 (x)_pi B2}(u) - h_H(u); the first support is the
    # spectral norm of u as a d1 x d2 matrix
    d1 = 2
    rng = np.random.default_rng(seed)
    U = rng.standard_normal((n, H.dim))
    U /= np.linalg.norm(U, axis=1, keepdims=True)
    opnorm = np.linalg.norm(U.reshape(n, d1, -1), ord=2, axis=(1, 2))
    hH = np.abs(U @ H.vertices.T).max(axis=1)
    return float(np.max(np.abs(opnorm - hH)))


def test_homotopy_endpoints(criterion):
    t0 = time.time()
    worst0 = worst_half = worst1 = 0.0
    gaps, budgets = {}, {}
    for shape in [(2, 2), (2, 3)]:
        for seed in range(3):
            Q = random_tensorial(4000 + seed, shape)
            worst0 = max(worst0, hausdorff(homotopy(Q, 0.0, shape), Q))
            worst_half = max(worst_half, hausdorff(homotopy(Q, 0.5, shape), conv_otimes(Q, shape)))
            H1 = homotopy(Q, 1.0, shape)
            balls = [ball_polytope(d) for d in shape]
            worst1 = max(worst1, hausdorff(H1, projective_product(balls)))
            # against the exact projective product of Euclidean balls; the
            # recorded error propagates as 1 - prod(1 - ball_error)
            err = 1.0 - np.prod([1.0 - ball_error(B) for B in balls])
            gaps[shape] = max(gaps.get(shape, 0.0), _nuclear_gap(H1, seed=seed))
            budgets[shape] = 1e-6 + err
    ok = (worst0 <= 1e-6 and worst_half <= 1e-6 and worst1 <= 1e-6
          and all(gaps[s] <= budgets[s] for s in gaps))
    criterion(10, "homotopy endpoints", ok,
              f"t=0 {worst0:.2g}, t=1/2 {worst_half:.2g}, t=1 vs ball-polytope product "
              f"{worst1:.2g}; vs exact ball product "
              + ", ".join(f"{s}: gap {gaps[s]:.3g} <= {budgets[s]:.3g}" for s in gaps)
              + f" ({time.time() - t0:.1f}s)")
    assert ok


def test_lemma_suites(criterion):
    t0 = time.time()
    rng = np.random.default_rng(11)
    holds, nonvacuous = 0, 0
    bodies = []
    for k in range(20):
        shape = SHAPES[k % 2]
        P = retract_r(random_tensorial(5000 + k, shape), shape)
        bodies.append((shape, P, inradius(P)))
    for j in range(200):
        shape, P, r = bodies[j % 20]
        eps = float(rng.uniform(0.1, 0.999)) * r / 2
        if j % 2:
            T = random_element(rng, shape, spread=float(rng.uniform(0.0, 0.05)), permute=False)
            Q = act_on_body(T, P)
        else:
            noise = rng.standard_normal(P.vertices.shape)
            Q = VPolytope(P.vertices + float(rng.uniform(0.0, 1.5)) * eps * noise / 3)
        nonvacuous += hausdorff(P, Q) < eps
        holds += natalia_margin(P, Q, eps)
    lip_worst = np.inf
    for j in range(200):
        shape = SHAPES[j % 4]
        facs = [random_factor(rng, d) for d in shape]
        i = int(rng.integers(len(shape)))
        Pi = VPolytope(facs[i].vertices + float(rng.uniform(0.001, 0.2))
                       * rng.standard_normal(facs[i].vertices.shape))
        other = list(facs)
        other[i] = Pi
        lhs = hausdorff(projective_product(facs), projective_product(other))
        bound = hausdorff(facs[i], Pi) * np.prod([outradius(F) for k, F in enumerate(facs) if k != i])
        lip_worst = min(lip_worst, bound - lhs)
    ok = holds == 200 and lip_worst >= -1e-6
    criterion(11, "lemma suites", ok,
              f"inner-ball implication {holds}/200 ({nonvacuous} with the Hausdorff hypothesis "
              f"met); Lipschitz min slack {lip_worst:.3g} >= -1e-6 over 200 "
              f"({time.time() - t0:.1f}s)")
    assert ok


def _near_identity(rng, shape, eta):
    facs = []
    for d in shape:
        G = rng.standard_normal((d, d))
        facs.append(np.eye(d) + eta * G / np.linalg.norm(G, 2))
    return make_element(shape, None, facs)


def test_transporter_diagnostic(criterion):
    t0 = time.time()
    configs = []
    configs.append(("B1^4, eps 0.25, lam 0.4",
                    transporter_diagnostic(B1_4, B1_4, eps=0.25, lam=0.4, trials=100, shape=(2, 2))))
    P = retract_r(random_tensorial(6000, (2, 3)), (2, 3))
    rP = inradius(P)
    configs.append(("slice body (2,3), P = C",
                    transporter_diagnostic(P, P, eps=0.45 * rP, lam=0.9 * rP, trials=100, seed=1,
                                           shape=(2, 3))))
    # planted: C = T0 P with T0 far from the identity; sampled T are T0 times
    # near-identity maps, Q are near-identity images of P
    rng0 = np.random.default_rng(12)
    T0 = random_element(rng0, (2, 3), spread=1.0)
    C = act_on_body(T0, P)
    rC = inradius(C)

    def planted(rng):
        Q = act_on_body(_near_identity(rng, (2, 3), rng.uniform(0.0, 0.2) * rP / outradius(P)), P)
        T = compose(T0, _near_identity(rng, (2, 3), rng.uniform(0.0, 0.2) * rC / outradius(C)))
        return T, Q

    configs.append(("planted T0 P, (2,3)",
                    transporter_diagnostic(P, C, eps=0.45 * rP, lam=0.9 * rC, trials=100, seed=2,
                                           shape=(2, 3), sampler=planted)))
    ok = all(r.ok and r.accepted == 100 for _, r in configs)
    detail = "; ".join(f"{name}: {r.accepted}/100 accepted, max norm {r.max_norm:.3f} <= "
                       f"bound {r.bound:.3f}" for name, r in configs)
    criterion(12, "transporter diagnostic", ok, f"{detail} ({time.time() - t0:.1f}s)")
    assert ok
