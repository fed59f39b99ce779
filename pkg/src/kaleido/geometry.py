"""Reflections across vertical planes and uniform sampling in balls.

A :class:`Reflection` mirrors points across the ``xoz`` plane after that
plane has been rotated by ``theta_z`` about the vertical axis.  In 2D the
same construction gives a mirror line through the origin at angle
``theta_z``.  The map is the Householder transform ``p - 2 (p . n) n`` with
unit normal ``n = (-sin theta_z, cos theta_z[, 0])``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

SUPPORTED_DIMS = (2, 3)


@dataclass(frozen=True)
class Reflection:
    theta_z: float
    dim: int = 3

    def __post_init__(self):
        if self.dim not in SUPPORTED_DIMS:
            raise ValueError(f"unsupported reflection dimension {self.dim}")
        if not (0.0 <= self.theta_z < math.pi):
            raise ValueError(f"theta_z must lie in [0, pi), got {self.theta_z}")

    @property
    def normal(self) -> np.ndarray:
        n = np.zeros(self.dim)
        n[0] = -math.sin(self.theta_z)
        n[1] = math.cos(self.theta_z)
        return n

    def matrix(self) -> np.ndarray:
        n = self.normal
        return np.eye(self.dim) - 2.0 * np.outer(n, n)


def _householder(normal: np.ndarray, x: np.ndarray) -> np.ndarray:
    return x - 2.0 * (x @ normal)[..., None] * normal


def reflect_point(r: Reflection, p) -> np.ndarray:
    """Mirror image of ``p`` across the plane of ``r``.

    ``p`` may be a single point of shape ``(dim,)`` or a stack ``(..., dim)``.
    """
    p = np.asarray(p, dtype=np.float64)
    if p.shape[-1:] != (r.dim,):
        raise ValueError(f"expected trailing dimension {r.dim}, got shape {p.shape}")
    return _householder(r.normal, p)


def reflect_vector(r: Reflection, v) -> np.ndarray:
    # The map is linear, so displacements transform exactly like positions.
    return reflect_point(r, v)


def random_reflection(dim: int, rng: np.random.Generator) -> Reflection:
    if dim not in SUPPORTED_DIMS:
        raise ValueError(f"unsupported reflection dimension {dim}")
    return Reflection(float(rng.uniform(0.0, math.pi)), dim)


def reflection_normals(thetas, dim: int) -> np.ndarray:
    """Unit normals, shape ``(len(thetas), dim)``, for a batch of plane angles."""
    thetas = np.asarray(thetas, dtype=np.float64)
    normals = np.zeros(thetas.shape + (dim,))
    normals[..., 0] = -np.sin(thetas)
    normals[..., 1] = np.cos(thetas)
    return normals


def reflect_rows(normals: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Reflect row ``i`` of ``x`` across the plane with normal ``normals[i]``."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] != normals.shape[-1]:
        raise ValueError(f"dimension mismatch: {x.shape} vs normals {normals.shape}")
    return x - 2.0 * np.sum(x * normals, axis=-1, keepdims=True) * normals


@dataclass(frozen=True)
class BallSampler:
    center: np.ndarray
    radius: float

    def __post_init__(self):
        if self.radius < 0:
            raise ValueError(f"radius must be nonnegative, got {self.radius}")

    @property
    def dim(self) -> int:
        return int(np.asarray(self.center).shape[-1])


def sample_in_ball(s: BallSampler, rng: np.random.Generator) -> np.ndarray:
    """Uniform sample from the closed ball around ``s.center``.

    A zero radius returns the center unchanged and consumes no randomness,
    which keeps zero-threshold relabeling identical to plain hindsight
    relabeling on a shared RNG stream.
    """
    center = np.array(s.center, dtype=np.float64)
    if s.radius == 0:
        return center
    return sample_in_balls(rng, center[None, :], s.radius)[0]


def sample_in_balls(rng: np.random.Generator, centers: np.ndarray, radius) -> np.ndarray:
    """One uniform sample per row of ``centers``; ``radius`` scalar or per-row.

    Direction is a normalized Gaussian and length is ``radius * u**(1/dim)``.
    """
    centers = np.asarray(centers, dtype=np.float64)
    count, dim = centers.shape
    radius = np.broadcast_to(np.asarray(radius, dtype=np.float64), (count,))
    direction = rng.standard_normal((count, dim))
    norms = np.linalg.norm(direction, axis=1, keepdims=True)
    norms[norms == 0] = 1.0
    direction /= norms
    u = rng.random(count)
    offsets = direction * (radius * u ** (1.0 / dim))[:, None]
    points = centers + offsets
    # Rounding in the addition can leave a point an ulp outside the ball.
    over = np.linalg.norm(points - centers, axis=1) > radius
    while np.any(over):
        offsets[over] *= 1.0 - 4.0 * np.finfo(np.float64).eps
        points[over] = centers[over] + offsets[over]
        over = np.linalg.norm(points - centers, axis=1) > radius
    return points
