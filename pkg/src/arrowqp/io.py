"""Problem and result files.

A problem file is a single JSON document:

    {
      "meta": {...},                      # optional, free-form config echo
      "n": int, "p": int, "m": int,
      "P": {"rows": r, "cols": c, "nnz": k, "triplets": [[i, j, v], ...]},
      "c": [...], "A": {...}, "b": [...], "G": {...}, "h": [...],
      "multistage": {...}                 # optional stage-wise mirror
    }

All indices are zero-based; P carries its lower triangle.  The multistage
section, when present, mirrors the stage-wise fields and lets the reader
recover the exact block partition instead of re-detecting it.
"""

from __future__ import annotations

import json

import numpy as np
import scipy.sparse as sp

from .model import GeneralQP, MultistageProblem, Solution, Status, make_general_qp
from .structure import BlockStructure


def _encode_sparse(mat: sp.spmatrix) -> dict:
    coo = sp.coo_matrix(mat)
    trip = [[int(i), int(j), float(v)]
            for i, j, v in zip(coo.row, coo.col, coo.data)]
    trip.sort()
    return {"rows": int(mat.shape[0]), "cols": int(mat.shape[1]),
            "nnz": len(trip), "triplets": trip}


def _decode_sparse(obj: dict) -> sp.csc_matrix:
    rows, cols = int(obj["rows"]), int(obj["cols"])
    trip = obj.get("triplets", [])
    if len(trip) != int(obj.get("nnz", len(trip))):
        raise ValueError("nnz disagrees with triplet count")
    if trip:
        i, j, v = zip(*trip)
    else:
        i, j, v = (), (), ()
    return sp.csc_matrix((np.asarray(v, dtype=float),
                          (np.asarray(i, dtype=int), np.asarray(j, dtype=int))),
                         shape=(rows, cols))


def _enc_mat(a: np.ndarray) -> dict:
    a = np.asarray(a, dtype=float)
    return {"shape": [int(d) for d in a.shape], "data": a.ravel().tolist()}


def _dec_mat(obj: dict) -> np.ndarray:
    return np.asarray(obj["data"], dtype=float).reshape(tuple(obj["shape"]))


def _encode_multistage(ms: MultistageProblem) -> dict:
    def mats(seq):
        return [_enc_mat(m) for m in seq]
    return {
        "N": ms.N, "n_g": ms.n_g,
        "Q": mats(ms.Q), "S": mats(ms.S), "T": mats(ms.T), "c": mats(ms.c),
        "A": mats(ms.A), "B": mats(ms.B), "E": mats(ms.E), "b": mats(ms.b),
        "C": mats(ms.C), "D": mats(ms.D), "F": mats(ms.F), "h": mats(ms.h),
        "Q_g": _enc_mat(ms.Q_g), "c_g": _enc_mat(ms.c_g),
    }


def _decode_multistage(obj: dict) -> MultistageProblem:
    def arrs(key):
        return tuple(_dec_mat(item) for item in obj[key])

    return MultistageProblem(
        N=int(obj["N"]), n_g=int(obj["n_g"]),
        Q=arrs("Q"), S=arrs("S"), T=arrs("T"), c=arrs("c"),
        A=arrs("A"), B=arrs("B"), E=arrs("E"), b=arrs("b"),
        C=arrs("C"), D=arrs("D"), F=arrs("F"), h=arrs("h"),
        Q_g=_dec_mat(obj["Q_g"]), c_g=_dec_mat(obj["c_g"]),
    )


def dump_problem(path, qp: GeneralQP, multistage: MultistageProblem | None = None,
                 meta: dict | None = None):
    doc = {
        "meta": meta or {},
        "n": qp.n, "p": qp.p, "m": qp.m,
        "P": _encode_sparse(qp.P), "c": qp.c.tolist(),
        "A": _encode_sparse(qp.A), "b": qp.b.tolist(),
        "G": _encode_sparse(qp.G), "h": qp.h.tolist(),
    }
    if multistage is not None:
        doc["multistage"] = _encode_multistage(multistage)
    with open(path, "w") as fh:
        json.dump(doc, fh, sort_keys=True, separators=(",", ":"))
        fh.write("\n")


def load_problem(path):
    """Returns (qp, structure_or_None, meta)."""
    with open(path) as fh:
        doc = json.load(fh)
    for key in ("n", "p", "m", "P", "c", "A", "b", "G", "h"):
        if key not in doc:
            raise ValueError(f"problem file is missing field {key!r}")
    qp = make_general_qp(
        _decode_sparse(doc["P"]), np.asarray(doc["c"], dtype=float),
        _decode_sparse(doc["A"]), np.asarray(doc["b"], dtype=float),
        _decode_sparse(doc["G"]), np.asarray(doc["h"], dtype=float))
    if qp.n != int(doc["n"]) or qp.p != int(doc["p"]) or qp.m != int(doc["m"]):
        raise ValueError("declared dimensions disagree with matrix data")
    structure = None
    if "multistage" in doc:
        ms = _decode_multistage(doc["multistage"])
        structure = BlockStructure(ms.stage_dims, ms.n_g)
    return qp, structure, doc.get("meta", {})


def dump_result(path, solution: Solution, include_timings: bool = False):
    doc = {
        "status": solution.status.value,
        "iterations": solution.iterations,
        "objective": solution.objective,
        "primal_res": solution.primal_res,
        "dual_res": solution.dual_res,
        "x": solution.x.tolist(), "s": solution.s.tolist(),
        "y": solution.y.tolist(), "z": solution.z.tolist(),
    }
    if include_timings:
        doc["timings"] = solution.info.get("timings", {})
    with open(path, "w") as fh:
        json.dump(doc, fh, sort_keys=True, separators=(",", ":"))
        fh.write("\n")


def load_result(path) -> Solution:
    with open(path) as fh:
        doc = json.load(fh)
    return Solution(
        x=np.asarray(doc["x"], dtype=float), s=np.asarray(doc["s"], dtype=float),
        y=np.asarray(doc["y"], dtype=float), z=np.asarray(doc["z"], dtype=float),
        status=Status(doc["status"]), iterations=int(doc["iterations"]),
        primal_res=float(doc["primal_res"]), dual_res=float(doc["dual_res"]),
        objective=float(doc["objective"]),
        info={"timings": doc.get("timings", {})},
    )
