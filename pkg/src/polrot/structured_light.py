"""Column Gray-code structured light: patterns, decoding, triangulation, plane-fit score."""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .geometry import Plane, RigCalibration, fit_plane

DEFAULT_THRESHOLD_FRACTION = 0.02


def gray_encode(n):
    n = np.asarray(n)
    if np.any(n < 0):
        raise ValueError("Gray code input must be non-negative")
    out = n ^ (n >> 1)
    return int(out) if out.ndim == 0 else out


def gray_decode(g):
    g = np.asarray(g)
    if np.any(g < 0):
        raise ValueError("Gray code input must be non-negative")
    n = g.copy()
    shift = g >> 1
    while np.any(shift):
        n ^= shift
        shift >>= 1
    return int(n) if n.ndim == 0 else n


@dataclass(frozen=True)
class GrayCodeSet:
    """Bit-plane patterns, most significant bit first, each followed by its inverse."""

    n_bits: int
    patterns: np.ndarray  # (2 * n_bits, H, W), values 0/1
    ids: tuple[str, ...]

    @property
    def positive(self) -> np.ndarray:
        return self.patterns[0::2]

    @property
    def negative(self) -> np.ndarray:
        return self.patterns[1::2]


def generate_patterns(n_bits: int, projector_width: int, projector_height: int = 1) -> GrayCodeSet:
    if n_bits < 1:
        raise ValueError("n_bits must be at least 1")
    if 2**n_bits < projector_width:
        raise ValueError(f"{n_bits} bits cover {2**n_bits} columns, projector has {projector_width}")
    codes = gray_encode(np.arange(projector_width))
    patterns, ids = [], []
    for b in reversed(range(n_bits)):
        row = ((codes >> b) & 1).astype(np.float64)
        plane = np.broadcast_to(row, (projector_height, projector_width))
        patterns += [plane, 1.0 - plane]
        ids += [f"gc{b:02d}p", f"gc{b:02d}n"]
    return GrayCodeSet(n_bits, np.stack(patterns), tuple(ids))


@dataclass
class CorrespondenceMap:
    column: np.ndarray  # decoded projector column, -1 where invalid
    valid: np.ndarray
    confidence: np.ndarray  # min over bits of |pattern - inverse|


def decode(positive: Sequence[np.ndarray], negative: Sequence[np.ndarray], threshold=None) -> CorrespondenceMap:
    """Decode per-pixel projector columns from bit images, most significant bit first.

    A bit is 1 where the pattern image is brighter than its inverse. Pixels
    where any bit's difference falls below ``threshold`` are invalid; the
    default threshold is 2% of the brightest input value.
    """
    pos = np.asarray(positive, dtype=np.float64)
    neg = np.asarray(negative, dtype=np.float64)
    if pos.shape != neg.shape or pos.ndim < 2:
        raise ValueError("pattern and inverse images must pair up one to one")
    if threshold is None:
        with np.errstate(invalid="ignore"):
            threshold = DEFAULT_THRESHOLD_FRACTION * np.nanmax(np.concatenate([pos, neg]))
    diff = pos - neg
    with np.errstate(invalid="ignore"):
        bits = (diff > 0).astype(np.int64)
        conf = np.min(np.abs(diff), axis=0)
        valid = np.isfinite(conf) & (conf >= threshold) & (conf > 0)
    gray = np.zeros(pos.shape[1:], dtype=np.int64)
    for b in bits:
        gray = (gray << 1) | b
    column = np.where(valid, gray_decode(gray), -1)
    return CorrespondenceMap(column=column, valid=valid, confidence=np.where(np.isfinite(conf), conf, 0.0))


@dataclass
class PointCloud:
    xyz: np.ndarray  # (M, 3) millimetres
    pixels: np.ndarray  # (M, 2) camera (row, col)

    def __len__(self):
        return self.xyz.shape[0]

    def to_xyz(self) -> str:
        return "".join(f"{x:.6f} {y:.6f} {z:.6f}\n" for x, y, z in self.xyz)


def triangulate(cmap: CorrespondenceMap, calib: RigCalibration) -> PointCloud:
    """Rectified-stereo depth ``z = focal * baseline / disparity`` for each valid pixel.

    Pixels with invalid codes or non-positive disparity are dropped.
    """
    h, w = cmap.column.shape
    r, c = np.mgrid[0:h, 0:w].astype(np.float64)
    disparity = (c - calib.cx) - (cmap.column - calib.cx_proj)
    keep = cmap.valid & (disparity > 0)
    z = calib.focal * calib.baseline / disparity[keep]
    x = (c[keep] - calib.cx) * z / calib.focal
    y = (r[keep] - calib.cy) * z / calib.focal
    pixels = np.stack([r[keep], c[keep]], axis=-1).astype(np.int64)
    return PointCloud(np.stack([x, y, z], axis=-1), pixels)


def plane_fit_metric(
    cloud: PointCloud,
    planes: Optional[Sequence[Plane]] = None,
    tol_mm: float = 1.0,
    labels: Optional[np.ndarray] = None,
    fit: bool = False,
) -> float:
    """Fraction of points within ``tol_mm`` of the nearest reference plane.

    With ``fit=True`` the reference planes are fitted by least squares to the
    cloud itself, one per region of the per-pixel ``labels`` image, instead of
    being taken from ``planes``.
    """
    if len(cloud) == 0:
        warnings.warn("empty point cloud; plane-fit proportion defined as 0", RuntimeWarning, stacklevel=2)
        return 0.0
    if fit:
        if labels is None:
            raise ValueError("fitting reference planes needs per-pixel region labels")
        point_labels = labels[cloud.pixels[:, 0], cloud.pixels[:, 1]]
        planes = [
            fit_plane(cloud.xyz[point_labels == k])
            for k in np.unique(point_labels)
            if k >= 0 and np.sum(point_labels == k) >= 3
        ]
    if not planes:
        raise ValueError("no reference planes")
    dist = np.min(np.stack([p.distance(cloud.xyz) for p in planes]), axis=0)
    return float(np.mean(dist <= tol_mm))


COMPONENTS = ("forward", "reverse", "unpolarized", "raw")


@dataclass
class GraycodeResult:
    component: str
    cmap: CorrespondenceMap
    cloud: PointCloud
    proportion: float


def decode_stacks(stacks, component="forward", threshold=None) -> CorrespondenceMap:
    """Decode a Gray-code capture, one polarimetric stack per pattern (pattern, inverse, ...).

    ``component`` selects the image each pattern contributes: the decomposed
    forward, reverse or unpolarized intensity, or ``raw``, the mean over all
    polarizer frames (what a camera without polarization analysis records).
    """
    from .decompose import decompose_stack

    if component not in COMPONENTS:
        raise ValueError(f"component must be one of {COMPONENTS}")
    images = []
    for stack in stacks:
        if component == "raw":
            images.append(np.mean(stack.frames, axis=0))
        else:
            d = decompose_stack(stack)
            images.append({"forward": d.i_f, "reverse": d.i_r, "unpolarized": d.i_u}[component])
    return decode(images[0::2], images[1::2], threshold)


def graycode_experiment(scene, angles, n_bits=10, noise=None, threshold=None, components=("raw", "forward"), tol_mm=1.0):
    """Render Gray-code patterns on a synthetic scene and score each decoding route."""
    from .synthetic import NoiseSpec, render_patterned

    ph, pw = scene.projector_shape
    codes = generate_patterns(n_bits, pw, ph)
    stacks = render_patterned(scene, angles, codes.patterns, noise or NoiseSpec(), ids=codes.ids)
    results = {}
    for comp in components:
        cmap = decode_stacks(stacks, comp, threshold)
        cloud = triangulate(cmap, scene.calib)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            proportion = plane_fit_metric(cloud, scene.planes, tol_mm)
        results[comp] = GraycodeResult(comp, cmap, cloud, proportion)
    return results
