"""Closed-form per-pixel decomposition into unpolarized, forward and reverse parts.

The mixture model is linear in five coefficients ``X`` once the doubled-angle
cosines are expanded::

    I(theta_c, theta_l) = w(theta_c, theta_l) . X
    w = [1, cc*cl, sc*sl, cc*sl, sc*cl]      (cc = cos 2theta_c, sl = sin 2theta_l, ...)

Expanding the forward and reverse terms against this ordering gives::

    x1 = (I_U + I_F + I_R) / 2
    x2 + x3 = I_F cos 2phi_F        x5 - x4 = I_F sin 2phi_F
    x2 - x3 = I_R cos 2phi_R        x4 + x5 = I_R sin 2phi_R

so the forward component lives in ``(x2 + x3, x5 - x4)`` and the reverse one in
``(x2 - x3, x4 + x5)``. The label assignment is pinned by round-trip tests on
pure-forward and pure-reverse signals.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .model import PolarizerPair, canonical_angle

RANK_RTOL = 1e-10
N_UNKNOWNS = 5
POLCAM_CAMERA_DEG = (0.0, 45.0, 90.0, 135.0)


class DegenerateAngleSet(ValueError):
    """The polarizer angle combinations cannot determine all five unknowns."""

    def __init__(self, message, rank=None, cond=np.inf):
        super().__init__(message)
        self.rank = rank
        self.cond = cond


@dataclass(frozen=True)
class AngleSet:
    """Ordered measurement sequence of polarizer pairs.

    Duplicate pairs (after canonicalization) are rejected unless
    ``allow_repeats`` is set, e.g. for repeated captures averaged against noise.
    """

    pairs: tuple[PolarizerPair, ...]
    allow_repeats: bool = False

    def __post_init__(self):
        pairs = tuple(p if isinstance(p, PolarizerPair) else PolarizerPair(*p) for p in self.pairs)
        object.__setattr__(self, "pairs", pairs)
        if not pairs:
            raise ValueError("angle set is empty")
        if not self.allow_repeats:
            keys = [_pair_key(p) for p in pairs]
            if len(set(keys)) != len(keys):
                raise ValueError("angle set contains duplicate polarizer pairs")

    @classmethod
    def from_degrees(cls, pairs_deg: Iterable[Sequence[float]], allow_repeats=False) -> "AngleSet":
        return cls(tuple(PolarizerPair.from_degrees(c, l) for c, l in pairs_deg), allow_repeats)

    @classmethod
    def polarization_camera(cls, light_deg: Iterable[float], camera_deg=POLCAM_CAMERA_DEG) -> "AngleSet":
        """One polarization-camera shot (all mosaic angles) per light polarizer angle."""
        return cls.from_degrees([(c, l) for l in light_deg for c in camera_deg])

    def __len__(self):
        return len(self.pairs)

    def __iter__(self):
        return iter(self.pairs)

    @property
    def theta_c(self) -> np.ndarray:
        return np.array([p.theta_c for p in self.pairs])

    @property
    def theta_l(self) -> np.ndarray:
        return np.array([p.theta_l for p in self.pairs])

    def degrees(self) -> list[tuple[float, float]]:
        return [p.degrees() for p in self.pairs]


def _pair_key(pair: PolarizerPair):
    return (round(pair.theta_c, 12) % round(np.pi, 12), round(pair.theta_l, 12) % round(np.pi, 12))


ANGLE_PRESETS = {
    "min-5": [(0, 0), (45, 45), (0, 45), (45, 0), (90, 0)],
    "pol-cam-2": [(c, l) for l in (0, 45) for c in POLCAM_CAMERA_DEG],
    "pol-cam-4": [(c, l) for l in (0, 45, 90, 135) for c in POLCAM_CAMERA_DEG],
}


def angle_preset(name: str) -> AngleSet:
    try:
        return AngleSet.from_degrees(ANGLE_PRESETS[name])
    except KeyError:
        raise ValueError(f"unknown angle preset {name!r}; choose from {sorted(ANGLE_PRESETS)}") from None


def design_vector(theta_c, theta_l) -> np.ndarray:
    """Coefficients linking the five linear unknowns to one observation.

    Broadcasts over array inputs; the coefficient axis is last.
    """
    c2c, s2c = np.cos(2.0 * np.asarray(theta_c)), np.sin(2.0 * np.asarray(theta_c))
    c2l, s2l = np.cos(2.0 * np.asarray(theta_l)), np.sin(2.0 * np.asarray(theta_l))
    c2c, s2c, c2l, s2l = np.broadcast_arrays(c2c, s2c, c2l, s2l)
    return np.stack([np.ones_like(c2c), c2c * c2l, s2c * s2l, c2c * s2l, s2c * c2l], axis=-1)


def _rows(angles) -> np.ndarray:
    if isinstance(angles, AngleSet):
        return design_vector(angles.theta_c, angles.theta_l)
    return np.atleast_2d(np.asarray(angles, dtype=np.float64))


def _svd_stats(rows: np.ndarray):
    sv = np.linalg.svd(rows, compute_uv=False)
    if sv.size == 0 or sv[0] == 0:
        return sv, 0, np.inf
    rank = int(np.sum(sv > RANK_RTOL * sv[0]))
    full = rank == min(rows.shape) and rank > 0
    cond = float(sv[0] / sv[-1]) if full else np.inf
    return sv, rank, cond


@dataclass(frozen=True)
class DesignMatrix:
    """Row-stacked design vectors (N x 5) with their pseudo-inverse and conditioning."""

    rows: np.ndarray
    pinv: np.ndarray
    cond: float
    rank: int
    singular_values: np.ndarray = field(repr=False)

    @property
    def n(self) -> int:
        return self.rows.shape[0]


def build_design_matrix(angles: AngleSet) -> DesignMatrix:
    """Stack design vectors in measurement order and precompute the pseudo-inverse.

    Raises
    ------
    DegenerateAngleSet
        If the stacked matrix has rank below 5 (rank counts singular values
        above ``1e-10 * sigma_max``).
    """
    rows = _rows(angles)
    sv, rank, _ = _svd_stats(rows)
    if rank < N_UNKNOWNS:
        raise DegenerateAngleSet(
            f"design matrix has rank {rank} < {N_UNKNOWNS}; the angle set cannot separate the components",
            rank=rank,
        )
    pinv = np.linalg.pinv(rows, rcond=RANK_RTOL)
    rows.setflags(write=False)
    pinv.setflags(write=False)
    return DesignMatrix(rows=rows, pinv=pinv, cond=float(sv[0] / sv[-1]), rank=rank, singular_values=sv)


def condition_number(W) -> float:
    """sigma_max / sigma_min of the row-stacked matrix; ``inf`` when rank-deficient.

    Accepts a :class:`DesignMatrix`, an :class:`AngleSet` or a raw matrix. A
    matrix with fewer than five rows is rank-deficient for this problem.
    """
    rows = W.rows if isinstance(W, DesignMatrix) else _rows(W)
    _, rank, cond = _svd_stats(rows)
    if rows.shape[1] == N_UNKNOWNS and rank < N_UNKNOWNS:
        return np.inf
    return cond


@dataclass(frozen=True)
class AngleSetReport:
    n: int
    rank: int
    cond: float
    minimal: bool
    n_light_angles: int
    polarization_camera: bool

    def as_dict(self) -> dict:
        return {
            "n": self.n,
            "rank": self.rank,
            "cond": None if not np.isfinite(self.cond) else round(self.cond, 6),
            "minimal": self.minimal,
            "n_light_angles": self.n_light_angles,
            "polarization_camera": self.polarization_camera,
        }

    def summary(self) -> str:
        mode = "polarization camera" if self.polarization_camera else "conventional"
        cond = f"{self.cond:.2f}" if np.isfinite(self.cond) else "inf"
        if self.minimal:
            status = "sufficient"
        else:
            status = f"insufficient (rank {self.rank} < {N_UNKNOWNS})"
        return (
            f"measurements: {self.n} ({mode}, {self.n_light_angles} light angle{'' if self.n_light_angles == 1 else 's'})\n"
            f"rank: {self.rank}\ncondition number: {cond}\nstatus: {status}"
        )


def validate_angle_set(angles: AngleSet) -> AngleSetReport:
    """Report rank, conditioning and whether the set meets the minimum; never raises.

    ``minimal`` is true when the set determines all five unknowns, which takes
    five well-chosen pairs with a conventional camera or two light angles with a
    polarization camera.
    """
    rows = _rows(angles)
    _, rank, _ = _svd_stats(rows)
    cond = condition_number(rows)
    if isinstance(angles, AngleSet):
        lights = {round(float(np.rad2deg(p.theta_l)), 9) for p in angles}
        cams_per_light = {}
        for p in angles:
            c, l = p.degrees()
            cams_per_light.setdefault(round(l, 9), set()).add(round(c, 9))
        polcam = all(v == set(POLCAM_CAMERA_DEG) for v in cams_per_light.values()) and len(angles) == 4 * len(lights)
    else:
        lights, polcam = set(), False
    return AngleSetReport(
        n=rows.shape[0],
        rank=rank,
        cond=cond,
        minimal=rank == N_UNKNOWNS,
        n_light_angles=len(lights),
        polarization_camera=polcam,
    )


def solve_linear(W: DesignMatrix, intensities) -> np.ndarray:
    """Least-squares coefficients ``X = W+ I`` for one pixel or a whole stack.

    ``intensities`` has the measurement axis first, shape ``(N, ...)``; the
    result has shape ``(5, ...)``. Pixels with any non-finite sample get NaN
    coefficients instead of aborting the solve.
    """
    I = np.asarray(intensities, dtype=np.float64)
    if I.shape[0] != W.n:
        raise ValueError(f"expected {W.n} intensities along axis 0, got {I.shape[0]}")
    bad = ~np.all(np.isfinite(I), axis=0)
    if np.any(bad):
        I = np.where(bad, 0.0, I)
    X = np.tensordot(W.pinv, I, axes=(1, 0))
    return np.where(bad, np.nan, X)


@dataclass(frozen=True)
class Components:
    """Recovered parameters, scalar or per pixel.

    ``i_u_raw = 2 x1 - i_f - i_r`` can go negative under noise; ``i_u`` is its
    clamp at zero and ``physical`` flags where no clamping was needed.
    """

    i_u: np.ndarray
    i_u_raw: np.ndarray
    i_f: np.ndarray
    phi_f: np.ndarray
    i_r: np.ndarray
    phi_r: np.ndarray
    physical: np.ndarray

    def as_tuple(self):
        return self.i_u_raw, self.i_f, self.phi_f, self.i_r, self.phi_r


def _magnitude_phase(cos_part, sin_part):
    mag = np.hypot(cos_part, sin_part)
    phase = canonical_angle(0.5 * np.arctan2(sin_part, cos_part))
    phase = np.where(mag == 0, 0.0, phase)
    return mag, phase


def extract_components(X, atol=1e-12) -> Components:
    """Convert linear coefficients ``(5, ...)`` into intensities and phases.

    ``atol`` (relative to ``2 x1``) is the slack allowed before a negative
    ``i_u_raw`` counts as unphysical.
    """
    x1, x2, x3, x4, x5 = np.asarray(X, dtype=np.float64)
    i_f, phi_f = _magnitude_phase(x2 + x3, x5 - x4)
    i_r, phi_r = _magnitude_phase(x2 - x3, x4 + x5)
    i_u_raw = 2.0 * x1 - i_f - i_r
    with np.errstate(invalid="ignore"):
        physical = i_u_raw >= -atol * np.maximum(np.abs(2.0 * x1), 1.0)
    out = Components(
        i_u=np.maximum(i_u_raw, 0.0),
        i_u_raw=i_u_raw,
        i_f=i_f,
        phi_f=phi_f,
        i_r=i_r,
        phi_r=phi_r,
        physical=physical,
    )
    if np.ndim(x1) == 0:
        out = Components(*(v.item() if isinstance(v, np.ndarray) else v for v in out.__dict__.values()))
    return out


def linearize(i_u, i_f, phi_f, i_r, phi_r) -> np.ndarray:
    """Coefficients ``X`` generated by known component parameters (inverse of extraction)."""
    cf, sf = i_f * np.cos(2 * phi_f), i_f * np.sin(2 * phi_f)
    cr, sr = i_r * np.cos(2 * phi_r), i_r * np.sin(2 * phi_r)
    return 0.5 * np.stack(
        np.broadcast_arrays(i_u + i_f + i_r, cf + cr, cf - cr, sr - sf, sf + sr)
    )


@dataclass
class Decomposition:
    """Per-pixel decomposition of an image stack.

    Component and phase images hold NaN where ``valid`` is false.
    """

    i_u: np.ndarray
    i_u_raw: np.ndarray
    i_f: np.ndarray
    phi_f: np.ndarray
    i_r: np.ndarray
    phi_r: np.ndarray
    residual_rms: np.ndarray
    valid: np.ndarray
    physical: np.ndarray
    design: DesignMatrix

    def images(self) -> dict[str, np.ndarray]:
        return {
            "i_u": self.i_u,
            "i_f": self.i_f,
            "i_r": self.i_r,
            "phi_f": self.phi_f,
            "phi_r": self.phi_r,
            "residual": self.residual_rms,
            "mask": self.valid.astype(np.float32),
        }


def decompose_frames(frames, angles: AngleSet, saturation=None) -> Decomposition:
    """Decompose an ``(N, H, W[, C])`` array captured at ``angles``.

    Pixels with a non-finite sample, or a sample at or above ``saturation``,
    are masked; all other pixels are solved independently.
    """
    frames = np.asarray(frames, dtype=np.float64)
    if frames.shape[0] != len(angles):
        raise ValueError(f"{frames.shape[0]} frames but {len(angles)} angle pairs")
    W = build_design_matrix(angles)
    if saturation is not None:
        frames = np.where(frames >= saturation, np.nan, frames)
    valid = np.all(np.isfinite(frames), axis=0)
    X = solve_linear(W, frames)
    comp = extract_components(X)
    model = np.tensordot(W.rows, np.where(valid, X, 0.0), axes=(1, 0))
    with np.errstate(invalid="ignore"):
        resid = np.sqrt(np.mean((model - frames) ** 2, axis=0))
    nan = np.float64(np.nan)
    return Decomposition(
        i_u=np.where(valid, comp.i_u, nan),
        i_u_raw=np.where(valid, comp.i_u_raw, nan),
        i_f=np.where(valid, comp.i_f, nan),
        phi_f=np.where(valid, comp.phi_f, nan),
        i_r=np.where(valid, comp.i_r, nan),
        phi_r=np.where(valid, comp.phi_r, nan),
        residual_rms=np.where(valid, resid, nan),
        valid=valid,
        physical=valid & comp.physical,
        design=W,
    )


def decompose_stack(stack, saturation=None) -> Decomposition:
    """Decompose an :class:`~polrot.imaging.ImageStack` (frames plus angle manifest)."""
    return decompose_frames(stack.frames, stack.angles, saturation=saturation)
