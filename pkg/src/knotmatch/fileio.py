"""File formats: board JSON-lines, model JSON, posterior dumps, CSV reports.

Board files are JSON-lines, one object per board:
``{"id", "dims": [L, W, H], "faces": [{"p","x","y","z","a","b","alpha","label"?}]}``
with ``label`` present iff the board is annotated.

Model files are a single JSON object:
``{"theta": [...], "lambda": x, "standardization": {"shift": [...],
"scale": [...]}, "layout_version": 1}``.

Posterior dumps are JSON-lines with one row per (board, matching):
``{"id", "edges": [[...], ...], "weight", "is_map"}`` where edges are sorted
within and across, and ``is_map`` marks the board's MAP matching row.
"""
from __future__ import annotations

import csv
import json
from typing import Optional, Sequence

import numpy as np

from .errors import DataError
from .geometry import Board, KnotFace, N_COVARIATES, Standardization
from .graph import canonical_matching
from .model import ModelParams

LAYOUT_VERSION = 1


# ---------------------------------------------------------------------------
# boards
# ---------------------------------------------------------------------------

def board_to_dict(board: Board) -> dict:
    faces = []
    for f in board.faces:
        d = {"p": f.partition, "x": f.x, "y": f.y, "z": f.z,
             "a": f.a, "b": f.b, "alpha": f.alpha}
        if f.label is not None:
            d["label"] = f.label
        faces.append(d)
    return {"id": board.id, "dims": [board.length, board.width, board.height],
            "faces": faces}


def board_from_dict(obj: dict) -> Board:
    try:
        dims = obj["dims"]
        faces = [KnotFace(partition=int(fd["p"]), x=float(fd["x"]),
                          y=float(fd["y"]), z=float(fd["z"]), a=float(fd["a"]),
                          b=float(fd["b"]), alpha=float(fd.get("alpha", 0.0)),
                          label=fd.get("label"))
                 for fd in obj["faces"]]
        return Board(id=str(obj["id"]), length=float(dims[0]),
                     width=float(dims[1]), height=float(dims[2]), faces=faces)
    except (KeyError, IndexError, TypeError, ValueError) as exc:
        raise DataError(f"malformed board record: {exc}")


def write_boards(path, boards: Sequence[Board]) -> None:
    with open(path, "w") as fh:
        for b in boards:
            fh.write(json.dumps(board_to_dict(b)) + "\n")


def read_boards(path) -> list:
    boards = []
    with open(path) as fh:
        for line_no, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DataError(f"{path}:{line_no}: invalid JSON ({exc})")
            boards.append(board_from_dict(obj))
    return boards


# ---------------------------------------------------------------------------
# model
# ---------------------------------------------------------------------------

def write_model(path, params: ModelParams) -> None:
    obj = {"theta": [float(t) for t in params.theta],
           "lambda": float(params.lam),
           "standardization": {
               "shift": [float(v) for v in params.standardization.shift],
               "scale": [float(v) for v in params.standardization.scale]},
           "layout_version": LAYOUT_VERSION}
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2)
        fh.write("\n")


def read_model(path) -> ModelParams:
    with open(path) as fh:
        try:
            obj = json.load(fh)
        except json.JSONDecodeError as exc:
            raise DataError(f"{path}: invalid JSON ({exc})")
    try:
        if int(obj.get("layout_version", -1)) != LAYOUT_VERSION:
            raise DataError(f"{path}: unsupported covariate layout version")
        theta = np.asarray(obj["theta"], dtype=float)
        std = Standardization(np.asarray(obj["standardization"]["shift"], dtype=float),
                              np.asarray(obj["standardization"]["scale"], dtype=float))
        if theta.shape != (N_COVARIATES,) or std.shift.shape != (N_COVARIATES,) \
                or std.scale.shape != (N_COVARIATES,):
            raise DataError(f"{path}: wrong parameter dimensions")
        return ModelParams(theta, float(obj["lambda"]), std)
    except (KeyError, TypeError, ValueError) as exc:
        raise DataError(f"{path}: malformed model file ({exc})")


# ---------------------------------------------------------------------------
# posterior dump
# ---------------------------------------------------------------------------

def write_posteriors(path, predictions) -> None:
    """predictions: iterable of smc.BoardPrediction."""
    with open(path, "w") as fh:
        for pred in predictions:
            map_key = canonical_matching(pred.map_matching)
            fh.write(json.dumps({
                "id": pred.board_id,
                "edges": [list(e) for e in map_key],
                "weight": pred.posterior.probability(pred.map_matching),
                "is_map": True}) + "\n")
            for m, w in pred.posterior.entries:
                key = canonical_matching(m)
                if key == map_key:
                    continue
                fh.write(json.dumps({"id": pred.board_id,
                                     "edges": [list(e) for e in key],
                                     "weight": w, "is_map": False}) + "\n")


def read_posteriors(path) -> dict:
    """{board_id: {"map": matching, "entries": [(matching, weight)]}}."""
    out: dict = {}
    with open(path) as fh:
        for line_no, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
                matching = frozenset(frozenset(int(v) for v in e)
                                     for e in obj["edges"])
                rec = out.setdefault(str(obj["id"]), {"map": None, "entries": []})
                rec["entries"].append((matching, float(obj["weight"])))
                if obj.get("is_map"):
                    rec["map"] = matching
            except (KeyError, TypeError, ValueError, json.JSONDecodeError) as exc:
                raise DataError(f"{path}:{line_no}: malformed posterior row ({exc})")
    return out


# ---------------------------------------------------------------------------
# CSV reports
# ---------------------------------------------------------------------------

def write_timings(path, rows) -> None:
    """rows: iterable of (board_id, n_faces, seconds)."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["board_id", "n_faces", "seconds"])
        for board_id, n_faces, seconds in rows:
            w.writerow([board_id, n_faces, f"{seconds:.6f}"])


def write_trace(path, trace) -> None:
    """MC-EM trace CSV: one row per iteration with Q~, its SE, and theta."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        dim = len(trace.thetas[0]) if trace.thetas else 0
        w.writerow(["iteration", "q", "q_se"] + [f"theta_{j}" for j in range(dim)])
        for t in range(len(trace.q)):
            w.writerow([t, repr(trace.q[t]), repr(trace.q_se[t])]
                       + [repr(float(v)) for v in trace.thetas[t]])


def write_eval(path, reports, aggregate: Optional[float] = None) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["board_id", "accuracy", "n_true_edges", "n_correct_edges",
                    "jaccard_mean", "jaccard_weighted", "jaccard_min",
                    "jaccard_max"])
        fmt = lambda v: "" if v is None else f"{v:.6f}"
        for r in reports:
            w.writerow([r.board_id, f"{r.accuracy:.6f}", r.n_true_edges,
                        r.n_correct_edges, fmt(r.jaccard_mean),
                        fmt(r.jaccard_weighted), fmt(r.jaccard_min),
                        fmt(r.jaccard_max)])
        if aggregate is not None:
            w.writerow(["AGGREGATE", f"{aggregate:.6f}", "", "", "", "", "", ""])
