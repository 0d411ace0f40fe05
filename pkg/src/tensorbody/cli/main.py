"""``tensorbody`` command-line driver.

Every subcommand reads JSON bodies, calls one library operation and writes
JSON (or CSV for ``invariants``) to ``--out`` or standard output. Failures
exit with status 2 and a JSON error object on standard error.
"""
from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from .. import bm, convex_kernel as ck, gl_tensor as gl, tensor_ops as to, tensorial as tz
from . import io
from .invariants import ExperimentConfig, run_suite


class CliError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise CliError(message)


def _budget(text):
    if text is None:
        return None
    parts = [int(p) for p in text.replace("x", ",").split(",")]
    if not 1 <= len(parts) <= 3:
        raise CliError("--budget takes RESTARTS[,STEPS[,SCREEN]]")
    return bm.Budget(*parts)


def cmd_gen(a):
    B = tz.random_tensorial(a.seed, a.shape, n_vertices=a.vertices, t=a.t, n_extra=a.extra)
    io.save_body(B, a.out)


def cmd_check(a):
    io.dump_json(io.verdict_to_dict(tz.is_tensorial(io.load_body(a.input), a.shape, a.tol)), a.out)


def cmd_product(a):
    factors = [io.load_body(f) for f in a.factors]
    B = to.hilbert_product(factors) if a.hilbert else to.projective_product(factors)
    io.save_body(B, a.out)


def cmd_loewner(a):
    io.save_body(ck.loewner(io.load_body(a.input)), a.out)


def cmd_conv(a):
    io.save_body(tz.conv_otimes(io.load_body(a.input), a.shape, a.resolution), a.out)


def cmd_l(a):
    io.save_body(tz.l_otimes(io.load_body(a.input), a.shape), a.out)


def cmd_retract(a):
    io.save_body(tz.retract_r(io.load_body(a.input), a.shape), a.out)


def cmd_slice(a):
    Q = io.load_body(a.input)
    E = tz.l_otimes(Q, a.shape)
    dist = float(np.linalg.norm(E.shape - np.eye(E.dim)))
    io.dump_json({"in_slice": dist <= a.tol, "distance": dist, "tol": a.tol}, a.out)


def cmd_phi(a):
    if a.inverse:
        if not (a.slice and a.ellipsoid):
            raise CliError("--inverse needs --slice and --ellipsoid")
        io.save_body(tz.phi_inv(io.load_body(a.slice), io.load_body(a.ellipsoid), a.shape), a.out)
        return
    if a.input is None:
        raise CliError("phi needs --in (or --inverse)")
    L, E = tz.phi(io.load_body(a.input), a.shape)
    io.dump_json({"slice": io.body_to_dict(L), "ellipsoid": io.body_to_dict(E)}, a.out)


def cmd_bm(a):
    cert = bm.bm_upper(io.load_body(a.p), io.load_body(a.q), a.shape, _budget(a.budget), a.seed)
    io.dump_json(io.certificate_to_dict(cert), a.out)


def cmd_homotopy(a):
    Q = io.load_body(a.input)
    H = tz.homotopy(Q, a.t, a.shape, a.resolution)
    balls = [tz.ball_polytope(d, a.resolution) for d in a.shape.dims]
    io.dump_json({"t": a.t, "body": io.body_to_dict(H), "ball_resolution": a.resolution,
                  "ball_vertices": [2 * len(b.vertices) for b in balls],
                  "ball_error": [tz.ball_error(b) for b in balls]}, a.out)


def cmd_act(a):
    T = io.element_from_dict(io.load_json(a.element))
    io.save_body(gl.act_on_body(T, io.load_body(a.input)), a.out)


def cmd_invariants(a):
    cfg = ExperimentConfig(shape=a.shape.dims, seed=a.seed, trials=a.trials, tol=a.tol, out=a.out)
    rows = run_suite(cfg)
    io.write_csv(rows, a.out)
    return 0 if all(r["pass"] for r in rows) else 1


def build_parser():
    p = _Parser(prog="tensorbody", description="Tensorial convex bodies toolkit")
    sub = p.add_subparsers(dest="command", required=True)

    def add(name, fn, help_):
        sp = sub.add_parser(name, help=help_)
        sp.set_defaults(fn=fn)
        sp.add_argument("--out", default=None, help="output path (default: stdout)")
        return sp

    def shape_arg(sp, required=True):
        sp.add_argument("--shape", type=to.TensorShape.parse, required=required,
                        help="factor dimensions, e.g. 2,2")

    sp = add("gen", cmd_gen, "generate a random tensorial polytope")
    shape_arg(sp)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--vertices", type=int, default=None, help="representatives per factor")
    sp.add_argument("--t", type=float, default=0.5, help="interpolation toward the injective product")
    sp.add_argument("--extra", type=int, default=None, help="number of added points")

    sp = add("check", cmd_check, "decide whether a body is tensorial")
    sp.add_argument("--in", dest="input", required=True)
    shape_arg(sp)
    sp.add_argument("--tol", type=float, default=tz.TENSORIAL_TOL)

    sp = add("product", cmd_product, "tensor product of factor bodies")
    g = sp.add_mutually_exclusive_group(required=True)
    g.add_argument("--pi", action="store_true", help="projective product of polytopes")
    g.add_argument("--hilbert", action="store_true", help="Hilbertian product of ellipsoids")
    sp.add_argument("--factors", nargs="+", required=True)

    sp = add("loewner", cmd_loewner, "minimum-volume centered ellipsoid")
    sp.add_argument("--in", dest="input", required=True)

    for name, fn, help_ in [("conv-otimes", cmd_conv, "projective product of canonical sections"),
                            ("l-otimes", cmd_l, "Löwner ellipsoid of conv-otimes"),
                            ("retract", cmd_retract, "slice representative r(Q)")]:
        sp = add(name, fn, help_)
        sp.add_argument("--in", dest="input", required=True)
        shape_arg(sp)
        if name == "conv-otimes":
            sp.add_argument("--resolution", type=int, default=None)

    sp = add("slice-test", cmd_slice, "test membership in the slice")
    sp.add_argument("--in", dest="input", required=True)
    shape_arg(sp)
    sp.add_argument("--tol", type=float, default=1e-6)

    sp = add("phi", cmd_phi, "split into (slice body, ellipsoid) or recombine")
    sp.add_argument("--in", dest="input")
    sp.add_argument("--inverse", action="store_true")
    sp.add_argument("--slice")
    sp.add_argument("--ellipsoid")
    shape_arg(sp)

    sp = add("bm", cmd_bm, "tensorial Banach-Mazur upper bound")
    sp.add_argument("--p", required=True)
    sp.add_argument("--q", required=True)
    shape_arg(sp)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--budget", default=None, help="RESTARTS[,STEPS[,SCREEN]]")

    sp = add("homotopy", cmd_homotopy, "contracting homotopy H(Q, t)")
    sp.add_argument("--in", dest="input", required=True)
    shape_arg(sp)
    sp.add_argument("--t", type=float, required=True)
    sp.add_argument("--resolution", type=int, default=None)

    sp = add("act", cmd_act, "apply a group element to a body")
    sp.add_argument("--element", required=True)
    sp.add_argument("--in", dest="input", required=True)

    sp = add("invariants", cmd_invariants, "run the property suite and write CSV")
    shape_arg(sp)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--trials", type=int, default=5)
    sp.add_argument("--tol", type=float, default=1e-6)
    return p


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        code = args.fn(args)
        return int(code or 0)
    except Exception as exc:  # noqa: BLE001 - every failure becomes a JSON error
        err = {"error": type(exc).__name__, "message": str(exc)}
        witness = getattr(exc, "witness", None)
        if isinstance(witness, tz.TensorialVerdict):
            err["verdict"] = io.verdict_to_dict(witness)
        elif isinstance(witness, float):
            err["witness"] = witness
        sys.stderr.write(json.dumps(err) + "\n")
        return 2


if __name__ == "__main__":
    sys.exit(main())
