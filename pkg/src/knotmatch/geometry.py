"""Knot-face geometry and edge covariates.

Each knot face is an ellipse on one of the four board surfaces, recorded as
``(p, x, y, z, a, b, alpha)`` with p the surface index. Surfaces 0 and 2 are
the wide faces (parallel to the x-y plane, z fixed), 1 and 3 the narrow faces
(parallel to the x-z plane, y fixed).

A candidate edge maps to a 6-slot covariate vector:

====  =====================================================================
slot  meaning
====  =====================================================================
0     pair distance, both faces on wide surfaces
1     pair distance, at least one face on a narrow surface
2     pair absolute ellipse-area difference
3     triplet maximum pairwise distance
4     triplet minimum pairwise distance
5     triplet |area sum of the two closest faces - area of the third|
====  =====================================================================

Singleton candidates map to the zero vector (the reference category, linear
predictor 0). Slots are standardized over the structurally active population
only, so inactive slots stay exactly zero after standardization.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import ContractError

N_COVARIATES = 6
WIDE_SURFACES = (0, 2)

SLOT_PAIR_DIST_WIDE = 0
SLOT_PAIR_DIST_NARROW = 1
SLOT_PAIR_AREA_DIFF = 2
SLOT_TRI_MAX_DIST = 3
SLOT_TRI_MIN_DIST = 4
SLOT_TRI_AREA_DIFF = 5

DEFAULT_LENGTH = 5000.0
DEFAULT_WIDTH = 300.0
DEFAULT_HEIGHT = 150.0


@dataclass
class KnotFace:
    """One detected elliptical knot face on a board surface.

    ``a`` and ``b`` are the semi-axis lengths; ``alpha`` is the in-plane
    rotation angle in radians; ``label`` is an optional ground-truth branch
    identifier.
    """

    partition: int
    x: float
    y: float
    z: float
    a: float
    b: float
    alpha: float = 0.0
    label: Optional[int] = None

    @property
    def center(self) -> np.ndarray:
        return np.array([self.x, self.y, self.z], dtype=float)

    @property
    def area(self) -> float:
        return math.pi * self.a * self.b

    @property
    def is_wide(self) -> bool:
        return self.partition in WIDE_SURFACES


@dataclass
class Board:
    """A piece of lumber: dimensions plus its detected knot faces."""

    id: str
    length: float = DEFAULT_LENGTH
    width: float = DEFAULT_WIDTH
    height: float = DEFAULT_HEIGHT
    faces: list = field(default_factory=list)

    @property
    def dims(self) -> tuple:
        return (self.length, self.width, self.height)

    def surface_plane(self, partition: int) -> tuple:
        """(axis, value) of the plane holding the given surface."""
        if partition == 0:
            return ("z", 0.0)
        if partition == 1:
            return ("y", 0.0)
        if partition == 2:
            return ("z", self.height)
        if partition == 3:
            return ("y", self.width)
        raise ContractError(f"surface index {partition} out of range")


def validate_board(board: Board, atol: float = 1e-6) -> None:
    """Check that every face sits on its surface plane inside the bounds."""
    for i, f in enumerate(board.faces):
        if f.a <= 0 or f.b <= 0:
            raise ContractError(f"face {i}: non-positive ellipse axes")
        axis, value = board.surface_plane(f.partition)
        coord = f.z if axis == "z" else f.y
        if abs(coord - value) > atol:
            raise ContractError(f"face {i}: off its surface plane ({axis}={coord})")
        if not (0 <= f.x <= board.length and 0 <= f.y <= board.width
                and 0 <= f.z <= board.height):
            raise ContractError(f"face {i}: outside the board bounding box")


def pair_covariates(u: KnotFace, v: KnotFace) -> np.ndarray:
    """Covariates of the pair {u, v}: distance (slot 0 or 1) and area gap."""
    if u.partition == v.partition:
        raise ContractError("pair covariates need faces on distinct surfaces")
    phi = np.zeros(N_COVARIATES)
    dist = float(np.linalg.norm(u.center - v.center))
    if u.is_wide and v.is_wide:
        phi[SLOT_PAIR_DIST_WIDE] = dist
    else:
        phi[SLOT_PAIR_DIST_NARROW] = dist
    phi[SLOT_PAIR_AREA_DIFF] = abs(u.area - v.area)
    return phi


def triplet_covariates(u: KnotFace, v: KnotFace, w: KnotFace) -> np.ndarray:
    """Covariates of the triple {u, v, w}.

    Max/min pairwise distance, plus the absolute difference between the
    summed area of the two closest faces and the area of the remaining one.
    """
    faces = (u, v, w)
    parts = {f.partition for f in faces}
    if len(parts) != 3:
        raise ContractError("triplet covariates need three distinct surfaces")
    pairs = ((0, 1), (0, 2), (1, 2))
    dists = [float(np.linalg.norm(faces[i].center - faces[j].center)) for i, j in pairs]
    phi = np.zeros(N_COVARIATES)
    phi[SLOT_TRI_MAX_DIST] = max(dists)
    phi[SLOT_TRI_MIN_DIST] = min(dists)
    i, j = pairs[int(np.argmin(dists))]
    k = 3 - i - j
    phi[SLOT_TRI_AREA_DIFF] = abs(faces[i].area + faces[j].area - faces[k].area)
    return phi


def edge_covariates(faces: Sequence[KnotFace]) -> np.ndarray:
    """Dispatch on edge size: singleton -> zero vector, pair, triple."""
    if len(faces) == 1:
        return np.zeros(N_COVARIATES)
    if len(faces) == 2:
        return pair_covariates(faces[0], faces[1])
    if len(faces) == 3:
        return triplet_covariates(faces[0], faces[1], faces[2])
    raise ContractError(f"edges have at most 3 faces, got {len(faces)}")


def active_slots(faces: Sequence[KnotFace]) -> tuple:
    """Structurally active covariate slots for an edge of the given faces."""
    if len(faces) == 1:
        return ()
    if len(faces) == 2:
        both_wide = faces[0].is_wide and faces[1].is_wide
        return (SLOT_PAIR_DIST_WIDE if both_wide else SLOT_PAIR_DIST_NARROW,
                SLOT_PAIR_AREA_DIFF)
    return (SLOT_TRI_MAX_DIST, SLOT_TRI_MIN_DIST, SLOT_TRI_AREA_DIFF)


@dataclass
class Standardization:
    """Per-slot shift/scale learned from training edges.

    Uses the population (divide-by-n) standard deviation; slots with zero
    spread keep scale 1 so constant covariates pass through unchanged.
    """

    shift: np.ndarray
    scale: np.ndarray

    @classmethod
    def identity(cls) -> "Standardization":
        return cls(np.zeros(N_COVARIATES), np.ones(N_COVARIATES))

    @classmethod
    def fit(cls, edges: Sequence[Sequence[KnotFace]]) -> "Standardization":
        """Fit from a collection of edges (each a sequence of 2-3 faces)."""
        values: list = [[] for _ in range(N_COVARIATES)]
        for faces in edges:
            phi = edge_covariates(faces)
            for s in active_slots(faces):
                values[s].append(phi[s])
        shift = np.zeros(N_COVARIATES)
        scale = np.ones(N_COVARIATES)
        for s, vals in enumerate(values):
            if vals:
                arr = np.asarray(vals, dtype=float)
                shift[s] = arr.mean()
                sd = arr.std()  # population sd
                if sd > 0:
                    scale[s] = sd
        return cls(shift, scale)

    def transform(self, phi: np.ndarray, active: Sequence[int]) -> np.ndarray:
        out = np.zeros_like(phi)
        for s in active:
            out[s] = (phi[s] - self.shift[s]) / self.scale[s]
        return out

    def inverse(self, phi_std: np.ndarray, active: Sequence[int]) -> np.ndarray:
        out = np.zeros_like(phi_std)
        for s in active:
            out[s] = phi_std[s] * self.scale[s] + self.shift[s]
        return out


class BoardFeatures:
    """Standardized edge covariates for a set of faces, keyed by node index.

    The edge-features provider used by the decision model: ``phi(edge)``
    returns the standardized covariate vector of the edge's faces (node
    indices refer to positions in ``faces``).
    """

    def __init__(self, faces: Sequence[KnotFace],
                 standardization: Optional[Standardization] = None):
        self.faces = list(faces)
        self.std = standardization or Standardization.identity()
        self.n_covariates = N_COVARIATES

    def phi(self, edge) -> np.ndarray:
        faces = [self.faces[v] for v in sorted(edge)]
        if len(faces) <= 1:
            return np.zeros(N_COVARIATES)
        return self.std.transform(edge_covariates(faces), active_slots(faces))


# ---------------------------------------------------------------------------
# Vectorized views used by the compiled kernels
# ---------------------------------------------------------------------------

@dataclass
class FaceArrays:
    """Array-of-struct view of a face list for kernel consumption."""

    partition: np.ndarray   # (n,) int8
    coords: np.ndarray      # (n, 3) float64
    area: np.ndarray        # (n,) float64
    wide: np.ndarray        # (n,) uint8

    @classmethod
    def from_faces(cls, faces: Sequence[KnotFace]) -> "FaceArrays":
        n = len(faces)
        partition = np.array([f.partition for f in faces], dtype=np.int8)
        coords = np.array([[f.x, f.y, f.z] for f in faces], dtype=float).reshape(n, 3)
        area = np.array([f.area for f in faces], dtype=float)
        wide = np.array([1 if f.is_wide else 0 for f in faces], dtype=np.uint8)
        return cls(partition, coords, area, wide)

    @property
    def n(self) -> int:
        return int(self.partition.size)

    def distances(self) -> np.ndarray:
        diff = self.coords[:, None, :] - self.coords[None, :, :]
        return np.sqrt((diff * diff).sum(axis=2))


def pair_linear_predictors(arrays: FaceArrays, theta: np.ndarray,
                           std: Standardization) -> np.ndarray:
    """theta . phi_std for every face pair, as an (n, n) matrix.

    Entries for same-partition pairs are computed but never read by the
    decision process.
    """
    D = arrays.distances()
    ww = (arrays.wide[:, None] & arrays.wide[None, :]).astype(bool)
    dA = np.abs(arrays.area[:, None] - arrays.area[None, :])
    sh, sc = std.shift, std.scale
    lp = np.where(ww,
                  theta[0] * (D - sh[0]) / sc[0],
                  theta[1] * (D - sh[1]) / sc[1])
    lp = lp + theta[2] * (dA - sh[2]) / sc[2]
    return np.ascontiguousarray(lp)


def triplet_linear_predictors(arrays: FaceArrays, theta: np.ndarray,
                              std: Standardization) -> np.ndarray:
    """theta . phi_std for every face triple, as an (n, n, n) tensor."""
    D = arrays.distances()
    A = arrays.area
    n = arrays.n
    d01 = D[:, :, None] * np.ones((1, 1, n))
    d02 = D[:, None, :] * np.ones((1, n, 1))
    d12 = D[None, :, :] * np.ones((n, 1, 1))
    stacked = np.stack([d01, d02, d12])
    dmax = stacked.max(axis=0)
    dmin = stacked.min(axis=0)
    closest = stacked.argmin(axis=0)
    # area split |A_i + A_j - A_k| where (i, j) is the closest pair
    s01 = np.abs(A[:, None, None] + A[None, :, None] - A[None, None, :])
    s02 = np.abs(A[:, None, None] + A[None, None, :] - A[None, :, None])
    s12 = np.abs(A[None, :, None] + A[None, None, :] - A[:, None, None])
    split = np.choose(closest, [s01, s02, s12])
    sh, sc = std.shift, std.scale
    lp = (theta[3] * (dmax - sh[3]) / sc[3]
          + theta[4] * (dmin - sh[4]) / sc[4]
          + theta[5] * (split - sh[5]) / sc[5])
    return np.ascontiguousarray(lp)
