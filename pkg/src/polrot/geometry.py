"""Rectified camera/projector rig and planar surfaces (millimetres, pixels)."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class RigCalibration:
    """Camera at the origin and projector at ``(baseline, 0, 0)``, both looking down +z.

    The two share one focal length (pixels) and are rectified, so a scene
    point at depth ``z`` appears ``focal * baseline / z`` columns apart after
    removing the principal points.
    """

    focal: float = 2000.0
    baseline: float = 125.0
    cx: float = 0.0
    cy: float = 0.0
    cx_proj: float = 0.0
    cy_proj: float = 0.0

    def __post_init__(self):
        if not self.focal > 0:
            raise ValueError("focal length must be positive")
        if not self.baseline > 0:
            raise ValueError("baseline must be positive")

    def camera_rays(self, height: int, width: int) -> np.ndarray:
        """Un-normalized view directions ``(H, W, 3)`` with unit z component."""
        r, c = np.mgrid[0:height, 0:width].astype(np.float64)
        return np.stack([(c - self.cx) / self.focal, (r - self.cy) / self.focal, np.ones_like(c)], axis=-1)

    def project_to_projector(self, points) -> np.ndarray:
        """Continuous projector (row, col) of 3D points ``(..., 3)``."""
        p = np.asarray(points, dtype=np.float64)
        x, y, z = p[..., 0], p[..., 1], p[..., 2]
        col = self.focal * (x - self.baseline) / z + self.cx_proj
        row = self.focal * y / z + self.cy_proj
        return np.stack([row, col], axis=-1)

    @property
    def projector_center(self) -> np.ndarray:
        return np.array([self.baseline, 0.0, 0.0])

    def to_json(self) -> dict:
        return {k: float(v) for k, v in self.__dict__.items()}


@dataclass(frozen=True)
class Plane:
    """Points ``p`` with ``normal . p = offset``; the normal is stored unit length."""

    normal: tuple
    offset: float

    def __post_init__(self):
        n = np.asarray(self.normal, dtype=np.float64)
        norm = np.linalg.norm(n)
        if norm == 0:
            raise ValueError("plane normal must be non-zero")
        object.__setattr__(self, "normal", tuple(float(v) for v in n / norm))
        object.__setattr__(self, "offset", float(self.offset) / norm)

    @classmethod
    def through(cls, point, normal) -> "Plane":
        n = np.asarray(normal, dtype=np.float64)
        n = n / np.linalg.norm(n)
        return cls(tuple(n), float(n @ np.asarray(point, dtype=np.float64)))

    def distance(self, points) -> np.ndarray:
        return np.abs(np.asarray(points) @ np.asarray(self.normal) - self.offset)

    def intersect(self, origin, direction) -> np.ndarray:
        """Ray parameter ``t`` with ``origin + t * direction`` on the plane (inf if parallel)."""
        n = np.asarray(self.normal)
        denom = np.asarray(direction) @ n
        num = self.offset - np.asarray(origin) @ n
        with np.errstate(divide="ignore", invalid="ignore"):
            t = np.where(np.abs(denom) > 1e-15, num / denom, np.inf)
        return t

    def reflect_point(self, point) -> np.ndarray:
        p = np.asarray(point, dtype=np.float64)
        n = np.asarray(self.normal)
        return p - 2.0 * (p @ n - self.offset)[..., None] * n


def reflect_direction(direction, normal) -> np.ndarray:
    d = np.asarray(direction, dtype=np.float64)
    n = np.asarray(normal, dtype=np.float64)
    return d - 2.0 * np.sum(d * n, axis=-1, keepdims=True) * n


def fit_plane(points) -> Plane:
    """Total-least-squares plane through ``(M, 3)`` points."""
    p = np.asarray(points, dtype=np.float64)
    if p.shape[0] < 3:
        raise ValueError("need at least three points to fit a plane")
    centroid = p.mean(axis=0)
    _, _, vt = np.linalg.svd(p - centroid, full_matrices=False)
    return Plane.through(centroid, vt[-1])
