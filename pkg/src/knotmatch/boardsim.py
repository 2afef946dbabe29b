"""Synthetic board generator.

Tree branches are modelled as narrow circular cones intersecting the board;
the elliptical conic sections with the four surface planes are the knot
faces, and faces cut by the same cone share a ground-truth label.

Per branch: slope c0 ~ U[0.025, 0.05]; orientation s ~ Bern(1/2) (s=1
reflects the upward base cone over the plane z = 75, so it opens downward
from an apex above the board); tilts theta_x, theta_y ~ U[-pi/6, pi/6];
center (x_t, y_t) uniform on the board; z translation (2s-1) U[0, 500]
pushing the apex away from the board so the sections have realistic sizes.
The point transform is translation . R_y . R_x . reflection applied to the
base cone x^2 + y^2 = c0^2 z^2.

Branches are rejection-sampled until the minimum distance between their axis
segments (between the two farthest face centers) is at least the separation
floor; branches with no face, and 4-face branches when rejection is on, are
resampled.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import ContractError, GenerationError
from .geometry import (DEFAULT_HEIGHT, DEFAULT_LENGTH, DEFAULT_WIDTH, Board,
                       KnotFace)

REFLECTION_PLANE_Z = 75.0


@dataclass
class SimConfig:
    rho: float = 25.0                  # knot-count rate (Poisson)
    separation: float = 50.0           # branch separation floor (board units)
    length: float = DEFAULT_LENGTH
    width: float = DEFAULT_WIDTH
    height: float = DEFAULT_HEIGHT
    reject_four_faces: bool = True
    max_attempts: int = 10_000
    slope_range: tuple = (0.025, 0.05)
    tilt_limit: float = math.pi / 6
    z_translation_max: float = 500.0

    def __post_init__(self):
        if self.rho <= 0:
            raise ContractError("knot rate rho must be positive")


@dataclass
class ConeSpec:
    """Sampled cone parameters; s=1 is the reflected (downward) orientation."""

    c0: float
    s: int
    theta_x: float
    theta_y: float
    x_t: float
    y_t: float
    z_t: float

    def point_transform(self) -> np.ndarray:
        """4x4 affine map from base-cone coordinates to world coordinates."""
        cx, sx = math.cos(self.theta_x), math.sin(self.theta_x)
        cy, sy = math.cos(self.theta_y), math.sin(self.theta_y)
        rx = np.array([[1, 0, 0], [0, cx, -sx], [0, sx, cx]])
        ry = np.array([[cy, 0, sy], [0, 1, 0], [-sy, 0, cy]])
        m = np.eye(4)
        m[:3, :3] = ry @ rx
        if self.s == 1:
            refl = np.eye(4)
            refl[2, 2] = -1.0
            refl[2, 3] = 2 * REFLECTION_PLANE_Z
            m = m @ refl
        m[:3, 3] += np.array([self.x_t, self.y_t, self.z_t])
        return m

    def world_quadric(self) -> np.ndarray:
        """The cone x^2 + y^2 - c0^2 z^2 = 0 pushed through the transform."""
        base = np.diag([1.0, 1.0, -self.c0 ** 2, 0.0])
        inv = np.linalg.inv(self.point_transform())
        return inv.T @ base @ inv

    def axis_direction(self) -> np.ndarray:
        """World direction of the physical nappe's axis."""
        return self.point_transform()[:3, :3] @ np.array([0.0, 0.0, 1.0])


def sample_cone(rng, config: SimConfig) -> ConeSpec:
    c0 = rng.uniform(*config.slope_range)
    s = int(rng.random() < 0.5)
    theta_x = rng.uniform(-config.tilt_limit, config.tilt_limit)
    theta_y = rng.uniform(-config.tilt_limit, config.tilt_limit)
    x_t = rng.uniform(0.0, config.length)
    y_t = rng.uniform(0.0, config.width)
    z_t = (2 * s - 1) * rng.uniform(0.0, config.z_translation_max)
    return ConeSpec(c0, s, theta_x, theta_y, x_t, y_t, z_t)


def _plane_embedding(surface: int, dims) -> np.ndarray:
    """4x3 map from in-plane (u, v, 1) to homogeneous world coordinates.

    The first in-plane coordinate is always x; the second is y on wide
    surfaces and z on narrow ones.
    """
    length, width, height = dims
    if surface == 0:
        rows = [[1, 0, 0], [0, 1, 0], [0, 0, 0.0], [0, 0, 1]]
    elif surface == 2:
        rows = [[1, 0, 0], [0, 1, 0], [0, 0, height], [0, 0, 1]]
    elif surface == 1:
        rows = [[1, 0, 0], [0, 0, 0.0], [0, 1, 0], [0, 0, 1]]
    elif surface == 3:
        rows = [[1, 0, 0], [0, 0, width], [0, 1, 0], [0, 0, 1]]
    else:
        raise ContractError(f"surface index {surface} out of range")
    return np.array(rows, dtype=float)


def conic_section(cone: ConeSpec, surface: int, dims=None) -> Optional[KnotFace]:
    """Elliptical section of the cone with one surface plane, if any.

    The world quadric is restricted to the plane and the 2-D conic classified
    analytically: only real, non-degenerate ellipses whose center lies inside
    the surface rectangle produce a face; hyperbolic, parabolic and degenerate
    sections count as no intersection.
    """
    dims = dims or (DEFAULT_LENGTH, DEFAULT_WIDTH, DEFAULT_HEIGHT)
    emb = _plane_embedding(surface, dims)
    conic = emb.T @ cone.world_quadric() @ emb
    if not np.all(np.isfinite(conic)):
        return None
    a2 = conic[:2, :2]
    block_norm = float(np.linalg.norm(a2))
    if block_norm <= 0:
        return None
    det2 = float(np.linalg.det(a2))
    if det2 <= 1e-12 * block_norm * block_norm:
        return None  # hyperbola, parabola, or numerically degenerate
    if a2[0, 0] + a2[1, 1] < 0:
        conic = -conic
        a2 = -a2
    b = conic[:2, 2]
    center = np.linalg.solve(a2, -b)
    val = float(conic[2, 2] + b @ center)
    if val >= 0:
        return None  # imaginary or point ellipse
    evals, evecs = np.linalg.eigh(a2)
    semi = np.sqrt(-val / evals)  # descending: evals ascending
    if semi[1] < 1e-9 or not np.all(np.isfinite(semi)):
        return None
    major_vec = evecs[:, 0]
    alpha = math.atan2(major_vec[1], major_vec[0])
    if alpha <= -math.pi / 2:
        alpha += math.pi
    elif alpha > math.pi / 2:
        alpha -= math.pi
    world = emb @ np.array([center[0], center[1], 1.0])
    x, y, z = world[:3]
    length, width, height = dims
    if not (0 <= x <= length):
        return None
    if surface in (0, 2):
        if not (0 <= y <= width):
            return None
    else:
        if not (0 <= z <= height):
            return None
    return KnotFace(partition=surface, x=float(x), y=float(y), z=float(z),
                    a=float(semi[0]), b=float(semi[1]), alpha=float(alpha))


def segment_distance(p1, q1, p2, q2) -> float:
    """Minimum distance between 3-D segments [p1,q1] and [p2,q2].

    Clamped closest-point algorithm; degenerate (point) segments are fine.
    """
    p1, q1, p2, q2 = (np.asarray(v, dtype=float) for v in (p1, q1, p2, q2))
    d1 = q1 - p1
    d2 = q2 - p2
    r = p1 - p2
    a = float(d1 @ d1)
    e = float(d2 @ d2)
    f = float(d2 @ r)
    eps = 1e-12
    if a <= eps and e <= eps:
        return float(np.linalg.norm(r))
    if a <= eps:
        t = min(max(f / e, 0.0), 1.0)
        s = 0.0
    else:
        c = float(d1 @ r)
        if e <= eps:
            t = 0.0
            s = min(max(-c / a, 0.0), 1.0)
        else:
            bb = float(d1 @ d2)
            denom = a * e - bb * bb
            s = min(max((bb * f - c * e) / denom, 0.0), 1.0) if denom > eps else 0.0
            t = (bb * s + f) / e
            if t < 0.0:
                t = 0.0
                s = min(max(-c / a, 0.0), 1.0)
            elif t > 1.0:
                t = 1.0
                s = min(max((bb - c) / a, 0.0), 1.0)
    closest1 = p1 + s * d1
    closest2 = p2 + t * d2
    return float(np.linalg.norm(closest1 - closest2))


@dataclass
class BranchRecord:
    cone: ConeSpec
    faces: list                     # [(surface, KnotFace)]
    axis_segment: tuple             # (p, q) endpoints, np arrays

    @classmethod
    def from_cone(cls, cone: ConeSpec, dims) -> "BranchRecord":
        faces = []
        for j in range(4):
            face = conic_section(cone, j, dims)
            if face is not None:
                faces.append((j, face))
        if not faces:
            return cls(cone, [], (np.zeros(3), np.zeros(3)))
        centers = [f.center for _, f in faces]
        if len(centers) == 1:
            seg = (centers[0], centers[0])
        else:
            best = (0, 0)
            best_d = -1.0
            for i in range(len(centers)):
                for j in range(i + 1, len(centers)):
                    d = float(np.linalg.norm(centers[i] - centers[j]))
                    if d > best_d:
                        best_d = d
                        best = (i, j)
            seg = (centers[best[0]], centers[best[1]])
        return cls(cone, faces, seg)


def generate_board(config: SimConfig, rng, board_id: str = "sim") -> Board:
    """Draw one synthetic board; faces carry ground-truth branch labels."""
    dims = (config.length, config.width, config.height)
    n_k = int(rng.poisson(config.rho))
    accepted: list = []
    for _ in range(n_k):
        for attempt in range(config.max_attempts):
            branch = BranchRecord.from_cone(sample_cone(rng, config), dims)
            if not branch.faces:
                continue
            if config.reject_four_faces and len(branch.faces) == 4:
                continue
            p, q = branch.axis_segment
            if any(segment_distance(p, q, *b.axis_segment) < config.separation
                   for b in accepted):
                continue
            accepted.append(branch)
            break
        else:
            raise GenerationError(
                f"board {board_id}: could not place branch after "
                f"{config.max_attempts} attempts (rho too high for the floor?)")
    faces = []
    for label, branch in enumerate(accepted):
        for _j, face in sorted(branch.faces, key=lambda jf: jf[0]):
            face.label = label
            faces.append(face)
    return Board(id=board_id, length=config.length, width=config.width,
                 height=config.height, faces=faces)


def true_matching(board: Board) -> frozenset:
    """Ground-truth matching of a labelled board (face indices grouped by label)."""
    groups: dict = {}
    for i, f in enumerate(board.faces):
        if f.label is None:
            raise ContractError(f"board {board.id}: face {i} has no label")
        groups.setdefault(f.label, set()).add(i)
    return frozenset(frozenset(g) for g in groups.values())


def generate_boards(config: SimConfig, n_boards: int, seed=None) -> list:
    """Deterministic batch generation with one spawned stream per board."""
    ss = np.random.SeedSequence(seed)
    boards = []
    for k, child in enumerate(ss.spawn(max(n_boards, 1))[:n_boards]):
        rng = np.random.default_rng(child)
        boards.append(generate_board(config, rng, board_id=f"sim-{k:04d}"))
    return boards
