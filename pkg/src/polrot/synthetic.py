"""Analytic ground-truth scenes and rendered observation stacks.

A scene assigns each camera pixel the five component parameters plus the
projector pixels its light came from: ``direct_map`` for the first bounce,
``source_map`` for the second-bounce (reverse) light and ``third_map`` for an
optional third bounce, which rotates forward like the first. Projector maps
hold integer ``(row, col)`` with ``-1`` where no light arrives.

Unpolarized light comes in two flavours: ``i_u`` is local (it follows the
projector pixel that lights the point) and ``i_g`` is global diffuse
inter-reflection that only sees the mean of the projected pattern.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .decompose import AngleSet
from .geometry import Plane, RigCalibration, reflect_direction
from .imaging import ImageStack
from .model import ComponentParams, canonical_angle, mixture_intensity

EPS = 1e-9


class UnknownRecipe(ValueError):
    pass


@dataclass(frozen=True)
class NoiseSpec:
    sigma: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if not self.sigma >= 0:
            raise ValueError("noise sigma must be non-negative")

    def rng(self, index=0) -> np.random.Generator:
        return np.random.default_rng([int(self.seed) & 0xFFFFFFFFFFFFFFFF, index])


@dataclass
class GroundTruthScene:
    width: int
    height: int
    i_u: np.ndarray
    i_f: np.ndarray
    phi_f: np.ndarray
    i_r: np.ndarray
    phi_r: np.ndarray
    direct_map: np.ndarray
    source_map: np.ndarray
    calib: RigCalibration
    projector_shape: tuple[int, int]
    i_g: Optional[np.ndarray] = None
    i_t: Optional[np.ndarray] = None
    phi_t: Optional[np.ndarray] = None
    third_map: Optional[np.ndarray] = None
    points: Optional[np.ndarray] = None
    planes: list = field(default_factory=list)
    plane_labels: Optional[np.ndarray] = None
    recipe: dict = field(default_factory=dict)

    def __post_init__(self):
        shape = (self.height, self.width)
        zeros = np.zeros(shape)
        if self.i_g is None:
            self.i_g = zeros.copy()
        if self.i_t is None:
            self.i_t = zeros.copy()
        if self.phi_t is None:
            self.phi_t = zeros.copy()
        if self.third_map is None:
            self.third_map = np.full(shape + (2,), -1, dtype=np.int64)
        for name in ("i_u", "i_g", "i_f", "phi_f", "i_r", "phi_r", "i_t", "phi_t"):
            if getattr(self, name).shape != shape:
                raise ValueError(f"{name} has shape {getattr(self, name).shape}, expected {shape}")
        for name in ("direct_map", "source_map", "third_map"):
            if getattr(self, name).shape != shape + (2,):
                raise ValueError(f"{name} must have shape {shape + (2,)}")
        if np.any((self.i_r > 0) & (self.source_map[..., 0] < 0)):
            raise ValueError("source_map must be defined wherever i_r > 0")

    @property
    def shape(self):
        return (self.height, self.width)

    def component_params(self, pattern=None) -> ComponentParams:
        """Per-pixel parameters under full illumination, or under a projected pattern."""
        lit_d = _sample(pattern, self.direct_map)
        lit_s = _sample(pattern, self.source_map)
        lit_t = _sample(pattern, self.third_map)
        mean = 1.0 if pattern is None else float(np.mean(pattern))
        fwd = self.i_f * lit_d * np.exp(2j * self.phi_f) + self.i_t * lit_t * np.exp(2j * self.phi_t)
        i_f = np.abs(fwd)
        phi_f = np.where(i_f > 0, canonical_angle(0.5 * np.angle(fwd)), 0.0)
        return ComponentParams(
            i_u=self.i_u * lit_d + self.i_g * mean,
            i_f=i_f,
            phi_f=phi_f,
            i_r=self.i_r * lit_s,
            phi_r=self.phi_r,
        )

    def without(self, *components: str) -> "GroundTruthScene":
        """Copy with the named intensity maps (``i_u``, ``i_g``, ``i_f``, ``i_r``, ``i_t``) zeroed."""
        kw = dict(self.__dict__)
        for name in components:
            kw[name] = np.zeros_like(kw[name])
        return GroundTruthScene(**kw)


def _sample(pattern, pmap):
    """Pattern value at each pixel's projector coordinate; 0 where unlit."""
    valid = pmap[..., 0] >= 0
    if pattern is None:
        return valid.astype(np.float64)
    pattern = np.asarray(pattern, dtype=np.float64)
    rows = np.where(valid, pmap[..., 0], 0)
    cols = np.where(valid, pmap[..., 1], 0)
    return np.where(valid, pattern[rows, cols], 0.0)


# ---------------------------------------------------------------------------
# Rendering


def render_observations(scene: GroundTruthScene, angles: AngleSet, noise: NoiseSpec = NoiseSpec()) -> ImageStack:
    """Frames ``k`` = mixture intensity at ``angles[k]`` for every pixel, plus Gaussian noise."""
    return _render(scene, angles, scene.component_params(), noise.sigma, noise.rng(0), None)


def render_patterned(scene: GroundTruthScene, angles: AngleSet, patterns, noise: NoiseSpec = NoiseSpec(), ids=None):
    """One stack per projector pattern.

    Forward light is scaled by the pattern at ``direct_map``, reverse light by
    the pattern at ``source_map`` and local unpolarized light by the pattern
    at ``direct_map`` (a desk-scale stand-in for the pattern average over the
    pixel footprint). Reverse light therefore carries the code of the wrong
    projector pixel.
    """
    ph, pw = scene.projector_shape
    stacks = []
    for k, pattern in enumerate(patterns):
        pattern = np.asarray(pattern, dtype=np.float64)
        if pattern.shape != (ph, pw):
            raise ValueError(f"pattern {k} has shape {pattern.shape}, projector is {(ph, pw)}")
        pid = None if ids is None else ids[k]
        stacks.append(_render(scene, angles, scene.component_params(pattern), noise.sigma, noise.rng(k), pid))
    return stacks


def _render(scene, angles, params, sigma, rng, pattern_id):
    tc = angles.theta_c[:, None, None]
    tl = angles.theta_l[:, None, None]
    frames = mixture_intensity(params, tc, tl)
    if sigma > 0:
        frames = frames + rng.normal(0.0, sigma, frames.shape)
    return ImageStack(frames, angles, pattern_id)


# ---------------------------------------------------------------------------
# Geometry helpers


@dataclass
class _Piece:
    plane: Plane
    region: Callable[[np.ndarray], np.ndarray]
    name: str


def _trace(origin, direction, pieces, exclude=None):
    """Nearest piece hit by each ray; returns (index, point) with index -1 on a miss."""
    best_t = np.full(direction.shape[:-1], np.inf)
    best_k = np.full(direction.shape[:-1], -1, dtype=np.int64)
    for k, piece in enumerate(pieces):
        t = piece.plane.intersect(origin, direction)
        with np.errstate(invalid="ignore"):
            pts = origin + np.where(np.isfinite(t), t, 0.0)[..., None] * direction
            ok = np.isfinite(t) & (t > EPS) & piece.region(pts) & (t < best_t)
        if exclude is not None:
            ok &= exclude != k
        best_t = np.where(ok, t, best_t)
        best_k = np.where(ok, k, best_k)
    with np.errstate(invalid="ignore"):
        pts = origin + np.where(np.isfinite(best_t), best_t, np.nan)[..., None] * direction
    return best_k, pts


def _shadowed(points, piece_idx, pieces, calib):
    """True where the projector's ray to a point is blocked by another piece."""
    origin = np.broadcast_to(calib.projector_center, points.shape)
    direction = points - origin
    blocked = np.zeros(points.shape[:-1], dtype=bool)
    for k, piece in enumerate(pieces):
        t = piece.plane.intersect(origin, direction)
        with np.errstate(invalid="ignore"):
            pts = origin + np.where(np.isfinite(t), t, 0.0)[..., None] * direction
            hit = np.isfinite(t) & (t > EPS) & (t < 1.0 - 1e-7) & piece.region(pts) & (piece_idx != k)
        blocked |= hit
    return blocked


def _projector_pixels(points, calib, projector_shape, lit):
    ph, pw = projector_shape
    with np.errstate(invalid="ignore"):
        rc = np.rint(calib.project_to_projector(points))
    rc = np.where(np.isfinite(rc), rc, -1)
    ok = lit & (rc[..., 0] >= 0) & (rc[..., 0] < ph) & (rc[..., 1] >= 0) & (rc[..., 1] < pw)
    return np.where(ok[..., None], rc, -1).astype(np.int64)


def _smooth_texture(rng, shape, amplitude):
    if amplitude == 0:
        return np.ones(shape)
    h, w = shape
    y, x = np.mgrid[0:h, 0:w] / max(h, w)
    field_ = np.zeros(shape)
    for _ in range(4):
        fx, fy = rng.uniform(0.5, 2.5, size=2)
        ph = rng.uniform(0, 2 * np.pi)
        field_ += np.cos(2 * np.pi * (fx * x + fy * y) + ph)
    return 1.0 + amplitude * field_ / 4.0


def default_rig(width, height, z_ref, params) -> tuple[RigCalibration, tuple[int, int]]:
    focal = float(params.get("focal", 2000.0))
    baseline = float(params.get("baseline", 125.0))
    pw = int(params.get("projector_width", 1024))
    margin = int(params.get("projector_margin", 16))
    ph = height + 2 * margin
    cx, cy = (width - 1) / 2.0, (height - 1) / 2.0
    calib = RigCalibration(
        focal=focal,
        baseline=baseline,
        cx=cx,
        cy=cy,
        cx_proj=(pw - 1) / 2.0 + focal * baseline / z_ref,
        cy_proj=cy + margin,
    )
    return calib, (ph, pw)


# ---------------------------------------------------------------------------
# Recipes


def _scene_from_pieces(width, height, pieces, calib, projector_shape, levels, rng, params, recipe):
    """Intersect camera rays with the pieces and fill per-pixel maps.

    ``levels[k]`` maps component names to constants for piece ``k``:
    ``i_u, i_g, i_f, phi_f, i_r, phi_r, i_t, phi_t``.
    """
    shape = (height, width)
    rays = calib.camera_rays(height, width)
    label, points = _trace(np.zeros(3), rays, pieces)
    seen = label >= 0
    lit = seen & ~_shadowed(points, label, pieces, calib)
    direct_map = _projector_pixels(points, calib, projector_shape, lit)

    # second bounce: the view ray mirrored at the first surface
    normals = np.array([p.plane.normal for p in pieces])[np.where(seen, label, 0)]
    mirrored = reflect_direction(rays / np.linalg.norm(rays, axis=-1, keepdims=True), normals)
    label2, points2 = _trace(np.where(seen[..., None], points, 0.0), mirrored, pieces, exclude=label)
    hit2 = seen & (label2 >= 0)
    lit2 = hit2 & ~_shadowed(np.where(hit2[..., None], points2, 0.0), label2, pieces, calib)
    source_map = _projector_pixels(np.where(lit2[..., None], points2, np.nan), calib, projector_shape, lit2)

    normals2 = np.array([p.plane.normal for p in pieces])[np.where(hit2, label2, 0)]
    mirrored2 = reflect_direction(mirrored, normals2)
    label3, points3 = _trace(np.where(hit2[..., None], points2, 0.0), mirrored2, pieces, exclude=label2)
    hit3 = hit2 & (label3 >= 0)
    lit3 = hit3 & ~_shadowed(np.where(hit3[..., None], points3, 0.0), label3, pieces, calib)
    third_map = _projector_pixels(np.where(lit3[..., None], points3, np.nan), calib, projector_shape, lit3)

    maps = {name: np.zeros(shape) for name in ("i_u", "i_g", "i_f", "phi_f", "i_r", "phi_r", "i_t", "phi_t")}
    for k, lv in enumerate(levels):
        on = label == k
        for name, value in lv.items():
            maps[name][on] = value
    texture = _smooth_texture(rng, shape, float(params.get("texture", 0.1)))
    for name in ("i_u", "i_g", "i_f", "i_r", "i_t"):
        maps[name] *= texture
    maps["i_u"] = np.where(direct_map[..., 0] >= 0, maps["i_u"], 0.0)
    maps["i_f"] = np.where(direct_map[..., 0] >= 0, maps["i_f"], 0.0)
    maps["i_r"] = np.where(source_map[..., 0] >= 0, maps["i_r"], 0.0)
    maps["i_t"] = np.where(third_map[..., 0] >= 0, maps["i_t"], 0.0)
    for name in ("phi_f", "phi_r", "phi_t"):
        intensity = maps["i" + name[3:]]
        maps[name] = np.where(intensity > 0, canonical_angle(maps[name]), 0.0)

    return GroundTruthScene(
        width=width,
        height=height,
        direct_map=direct_map,
        source_map=source_map,
        third_map=third_map,
        calib=calib,
        projector_shape=projector_shape,
        points=np.where(seen[..., None], points, np.nan),
        planes=[p.plane for p in pieces],
        plane_labels=label,
        recipe=recipe,
        **maps,
    )


def _plate(z_ref):
    return _Piece(Plane((0.0, 0.0, -1.0), -z_ref), lambda p: np.ones(p.shape[:-1], dtype=bool), "plate")


def _flat(width, height, rng, params, recipe, specular):
    z_ref = float(params.get("z_ref", 500.0))
    calib, pshape = default_rig(width, height, z_ref, params)
    lv = {"i_u": float(params.get("i_u", 1.0 if not specular else 0.3))}
    if specular:
        lv["i_f"] = float(params.get("i_f", 0.6))
        lv["phi_f"] = float(params.get("phi_f", rng.uniform(0.0, 0.2)))
    params = {"texture": 0.0, **params}
    return _scene_from_pieces(width, height, [_plate(z_ref)], calib, pshape, [lv], rng, params, recipe)


def flat_diffuse(width, height, rng, params, recipe):
    return _flat(width, height, rng, params, recipe, specular=False)


def flat_specular(width, height, rng, params, recipe):
    return _flat(width, height, rng, params, recipe, specular=True)


def groove_pieces(width, z_ref, calib, params, rng):
    """Flat plate at ``z_ref`` with a V-shaped channel cut into it along the image columns."""
    fov = width / calib.focal * z_ref
    half_width = float(params.get("half_width", 0.3 * fov))
    opening = np.deg2rad(float(params.get("opening_deg", 90.0)))
    depth = half_width / np.tan(opening / 2.0)
    edge_x = float(params.get("edge_x", rng.uniform(-0.05, 0.05) * fov))
    left_lo, right_hi = edge_x - half_width, edge_x + half_width

    def on_plate(p):
        x = p[..., 0]
        return (x <= left_lo) | (x >= right_hi)

    def on_left(p):
        x = p[..., 0]
        return (x > left_lo) & (x < edge_x + 1e-9)

    def on_right(p):
        x = p[..., 0]
        return (x >= edge_x - 1e-9) & (x < right_hi)

    bottom = np.array([edge_x, 0.0, z_ref + depth])
    left = Plane.through(bottom, (depth, 0.0, -half_width))
    right = Plane.through(bottom, (-depth, 0.0, -half_width))
    geometry = {"half_width": half_width, "depth": depth, "edge_x": edge_x, "opening_deg": float(np.rad2deg(opening))}
    return [_Piece(Plane((0.0, 0.0, -1.0), -z_ref), on_plate, "plate"), _Piece(left, on_left, "left"), _Piece(right, on_right, "right")], geometry


def v_groove(width, height, rng, params, recipe):
    z_ref = float(params.get("z_ref", 500.0))
    calib, pshape = default_rig(width, height, z_ref, params)
    pieces, geometry = groove_pieces(width, z_ref, calib, params, rng)
    recipe["geometry"] = geometry
    plate = {
        "i_u": float(params.get("plate_i_u", rng.uniform(0.05, 0.15))),
        "i_f": float(params.get("plate_i_f", rng.uniform(0.2, 0.4))),
        "phi_f": rng.uniform(0.0, 0.2),
    }
    faces = []
    for _ in range(2):
        faces.append(
            {
                "i_u": float(params.get("face_i_u", rng.uniform(0.03, 0.08))),
                "i_f": float(params.get("face_i_f", rng.uniform(0.2, 0.35))),
                "phi_f": rng.uniform(0.0, 0.2),
                "i_r": float(params.get("face_i_r", rng.uniform(0.45, 0.7))),
                "phi_r": rng.uniform(0.0, np.pi),
                "i_t": float(params.get("third_bounce", 0.0)),
                "phi_t": rng.uniform(0.0, 0.2),
                "i_g": float(params.get("face_i_g", 0.0)),
            }
        )
    return _scene_from_pieces(width, height, pieces, calib, pshape, [plate] + faces, rng, params, recipe)


def _hexagon_mask(height, width, center, radius):
    r, c = np.mgrid[0:height, 0:width].astype(np.float64)
    dy, dx = np.abs(r - center[0]), np.abs(c - center[1])
    # flat-topped hexagon
    return (dy <= radius * np.sqrt(3) / 2) & (np.sqrt(3) * dx + dy <= np.sqrt(3) * radius)


def hexagon_mirror(width, height, rng, params, recipe):
    """Flat plate with a mirror patch and a diffuse inter-reflection band.

    Inside the hexagon a mirror relays projector light from ``mirror_shift``
    columns away, a whole number of checker periods so the relayed light
    toggles in step with the direct light under checker patterns. In the
    right-hand band, diffuse inter-reflection adds unpolarized light that
    only sees the pattern mean.
    """
    z_ref = float(params.get("z_ref", 500.0))
    calib, pshape = default_rig(width, height, z_ref, params)
    base = {"i_u": float(params.get("i_u", 0.15)), "i_f": float(params.get("i_f", 0.4)), "phi_f": rng.uniform(0.0, 0.2)}
    params = {"texture": 0.05, **params}
    scene = _scene_from_pieces(width, height, [_plate(z_ref)], calib, pshape, [base], rng, params, recipe)

    period = int(params.get("checker_period", 8))
    shift = int(params.get("mirror_shift", 4 * period))
    hexagon = _hexagon_mask(height, width, (height / 2.0, 0.35 * width), 0.2 * min(width, height))
    src = scene.direct_map.copy()
    src[..., 1] += shift
    ok = hexagon & (scene.direct_map[..., 0] >= 0) & (src[..., 1] < pshape[1])
    scene.source_map = np.where(ok[..., None], src, -1)
    scene.i_r = np.where(ok, float(params.get("mirror_i_r", 0.5)), 0.0)
    scene.phi_r = np.where(ok, canonical_angle(float(params.get("mirror_phi_r", rng.uniform(0, np.pi)))), 0.0)

    band = np.zeros((height, width), dtype=bool)
    band[:, int(0.7 * width) :] = True
    scene.i_g = np.where(band, float(params.get("band_i_g", 0.4)), 0.0)
    recipe["regions"] = {"hexagon_pixels": int(ok.sum()), "band_from_col": int(0.7 * width)}
    return scene


RECIPES = {
    "flat-diffuse": flat_diffuse,
    "flat-specular": flat_specular,
    "v-groove": v_groove,
    "hexagon-mirror": hexagon_mirror,
}


def generate_scene(recipe, width=64, height=None, seed=0, **params) -> GroundTruthScene:
    """Build a ground-truth scene from a named recipe.

    ``recipe`` is a recipe name or a dict ``{"name", "width", "height", "seed",
    "params"}`` as stored in simulator manifests. Identical arguments give an
    identical scene.
    """
    if isinstance(recipe, dict):
        cfg = dict(recipe)
        name = cfg["name"]
        width = int(cfg.get("width", width))
        height = cfg.get("height", height)
        seed = int(cfg.get("seed", seed))
        params = {**cfg.get("params", {}), **params}
    else:
        name = recipe
    if name not in RECIPES:
        raise UnknownRecipe(f"unknown recipe {name!r}; choose from {sorted(RECIPES)}")
    height = int(height if height is not None else width)
    if width <= 0 or height <= 0:
        raise ValueError("scene dimensions must be positive")
    rng = np.random.default_rng(seed)
    info = {"name": name, "width": width, "height": height, "seed": seed, "params": dict(params)}
    return RECIPES[name](width, height, rng, dict(params), info)
