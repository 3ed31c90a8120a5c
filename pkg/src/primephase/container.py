"""JSON container for ensembles, ground truths and solver states.

Complex arrays are stored as base64 of row-major little-endian float64
(real, imag) pairs, which round-trips bit-exactly. Partial-DFT ensembles
store their row indices instead of a matrix.
"""

import base64
import csv
import json
from pathlib import Path

import numpy as np

from ._validation import ConfigError
from .measurements import EnsembleKind, GroundTruth, MeasurementEnsemble

FORMAT = "primephase-container"
VERSION = 1


def encode_complex(a):
    a = np.ascontiguousarray(a, dtype="<c16")
    return {"shape": list(a.shape), "data": base64.b64encode(a.tobytes()).decode("ascii")}


def decode_complex(obj):
    raw = base64.b64decode(obj["data"])
    return np.frombuffer(raw, dtype="<c16").reshape(obj["shape"]).copy()


def ensemble_to_dict(ens):
    out = {"kind": ens.kind.value, "m": ens.m, "n": ens.n,
           "spectral_bound": ens.spectral_bound, "seed": ens.seed}
    if ens.kind is EnsembleKind.PARTIAL_DFT:
        out["rows"] = [int(r) for r in ens.rows]
    else:
        out["matrix"] = encode_complex(ens.matrix)
    return out


def ensemble_from_dict(d):
    kind = EnsembleKind(d["kind"])
    if kind is EnsembleKind.PARTIAL_DFT:
        rows = np.array(d["rows"], dtype=np.int64)
        return MeasurementEnsemble(kind, d["m"], d["n"], d["spectral_bound"], rows=rows, seed=d.get("seed"))
    matrix = decode_complex(d["matrix"])
    if matrix.shape != (d["m"], d["n"]):
        raise ConfigError("stored matrix does not match the stored dimensions")
    return MeasurementEnsemble(kind, d["m"], d["n"], d["spectral_bound"], matrix=matrix, seed=d.get("seed"))


def truth_to_dict(gt):
    return {"x_true": encode_complex(gt.x_true), "sparsity": gt.sparsity,
            "support": None if gt.support is None else [int(i) for i in gt.support]}


def truth_from_dict(d):
    support = None if d["support"] is None else np.array(d["support"], dtype=np.int64)
    return GroundTruth(decode_complex(d["x_true"]), d["sparsity"], support)


def scprime_state_to_dict(state):
    return {"X": encode_complex(state.X), "D": encode_complex(state.D), "Z": encode_complex(state.Z),
            "rho": state.rho, "mu": state.mu,
            "objective_trace": [float(v) for v in state.objective_trace]}


def scprime_state_from_dict(d):
    from .scprime import ScprimeState

    return ScprimeState(decode_complex(d["X"]), decode_complex(d["D"]), decode_complex(d["Z"]),
                        d["rho"], d["mu"], np.array(d["objective_trace"], dtype=np.float64))


def cprime_state_to_dict(state):
    return {"x": encode_complex(state.x), "rho": state.rho,
            "objective_trace": [float(v) for v in state.objective_trace],
            "backtrack_counts": [int(v) for v in state.backtrack_counts]}


def save(path, **items):
    """Write a container; values must already be JSON-ready dicts."""
    doc = {"format": FORMAT, "version": VERSION, **items}
    Path(path).write_text(json.dumps(doc, indent=1, sort_keys=True) + "\n")


def load(path):
    doc = json.loads(Path(path).read_text())
    if doc.get("format") != FORMAT:
        raise ConfigError(f"{path} is not a {FORMAT} file")
    return doc


def write_trace_csv(path, objective_trace, backtrack_counts=None):
    """One row per iteration; row 0 is the starting point (no backtracks)."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["iteration", "objective", "backtracks"])
        for k, f in enumerate(objective_trace):
            bt = "" if backtrack_counts is None or k == 0 else int(backtrack_counts[k - 1])
            w.writerow([k, repr(float(f)), bt])
