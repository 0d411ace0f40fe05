"""JSON and CSV serialization for bodies, group elements and certificates.

Floats are written with ``repr`` (shortest round-trip form), so loading and
saving a file reproduces it bit for bit.
"""
from __future__ import annotations

import csv
import json
import sys

import numpy as np

from ..bm import BmCertificate, Budget
from ..convex_kernel import CorruptBodyError, Ellipsoid, VPolytope
from ..gl_tensor import GlTensorElement, _check_sigma, make_element
from ..tensor_ops import TensorShape
from ..tensorial import SectionFamily, TensorialVerdict

CSV_COLUMNS = ("trial", "seed", "quantity", "value", "tolerance", "pass")


def body_to_dict(B) -> dict:
    if isinstance(B, Ellipsoid):
        return {"kind": "ellipsoid", "dim": B.dim, "shape": B.shape.tolist()}
    return {"kind": "vpoly", "dim": B.dim, "vertices": B.vertices.tolist()}


def body_from_dict(d: dict, prune: bool = True):
    try:
        kind = d["kind"]
        dim = int(d["dim"])
    except (KeyError, TypeError, ValueError) as exc:
        raise CorruptBodyError(f"body JSON needs 'kind' and 'dim': {exc}") from None
    if kind == "vpoly":
        B = VPolytope(d["vertices"], prune=prune)
    elif kind == "ellipsoid":
        B = Ellipsoid(d["shape"])
    else:
        raise CorruptBodyError(f"unknown body kind {kind!r}")
    if B.dim != dim:
        raise CorruptBodyError(f"declared dim {dim} but data has dimension {B.dim}")
    return B


def element_to_dict(T: GlTensorElement) -> dict:
    return {"shape": list(T.shape.dims), "sigma": list(T.sigma),
            "factors": [F.tolist() for F in T.factors]}


def element_from_dict(d: dict) -> GlTensorElement:
    shape = TensorShape(tuple(d["shape"]))
    factors = [np.array(F, dtype=float) for F in d["factors"]]
    T = make_element(shape, d.get("sigma"), factors)
    # already-canonical input is kept verbatim so that files round-trip exactly
    if all(np.allclose(a, b, rtol=1e-13, atol=0) for a, b in zip(T.factors, factors)):
        for F in factors:
            F.setflags(write=False)
        return GlTensorElement(shape, _check_sigma(shape, d.get("sigma")), tuple(factors))
    return T


def certificate_to_dict(c: BmCertificate) -> dict:
    return {"lambda": c.lam, "element": element_to_dict(c.element), "slack": list(c.slack),
            "budget": {"restarts": c.budget.restarts, "steps": c.budget.steps,
                       "screen": c.budget.screen},
            "seed": c.seed}


def certificate_from_dict(d: dict) -> BmCertificate:
    b = d.get("budget", {})
    return BmCertificate(float(d["lambda"]), element_from_dict(d["element"]),
                         tuple(float(s) for s in d["slack"]), Budget(**b), int(d.get("seed", 0)))


def sections_to_dict(f: SectionFamily) -> dict:
    return {"anchor": [a.tolist() for a in f.anchor], "anchor_note": f.note,
            "bodies": [body_to_dict(B) for B in f.bodies]}


def verdict_to_dict(v: TensorialVerdict) -> dict:
    out = {"verdict": "tensorial" if v.tensorial else "not_tensorial",
           "violation": v.violation, "marginal": v.marginal}
    if not v.tensorial:
        out["side"] = v.side
        out["witness"] = None if v.witness is None else np.asarray(v.witness).tolist()
    if v.marginal:
        out["witnesses"] = {k: np.asarray(w).tolist() for k, w in v.witnesses.items()}
    if v.sections is not None:
        out["sections"] = sections_to_dict(v.sections)
    return out


def load_json(path):
    if path == "-":
        return json.load(sys.stdin)
    with open(path) as fh:
        return json.load(fh)


def dump_json(obj, path=None):
    text = json.dumps(obj, indent=1) + "\n"
    if path is None or path == "-":
        sys.stdout.write(text)
    else:
        with open(path, "w") as fh:
            fh.write(text)


def load_body(path, prune: bool = True):
    return body_from_dict(load_json(path), prune=prune)


def save_body(B, path=None):
    dump_json(body_to_dict(B), path)


def write_csv(rows, path=None):
    """Rows are dicts keyed by :data:`CSV_COLUMNS`; floats use 17 significant digits."""
    def fmt(v):
        if isinstance(v, bool):
            return "true" if v else "false"
        if isinstance(v, float):
            return format(v, ".17g")
        return str(v)

    fh = sys.stdout if path is None or path == "-" else open(path, "w", newline="")
    try:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for r in rows:
            w.writerow([fmt(r[c]) for c in CSV_COLUMNS])
    finally:
        if fh is not sys.stdout:
            fh.close()
