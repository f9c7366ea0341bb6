"""Forward observation model for a scene lit and viewed through linear polarizers.

Every intensity here is a closed-form function of the camera-side angle
``theta_c`` and the light-side angle ``theta_l`` (radians). Functions accept
scalars or numpy arrays and broadcast like ufuncs.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

PI = np.pi


def canonical_angle(angle):
    """Wrap an angle (radians) into ``[0, pi)``; a linear polarizer has period pi."""
    a = np.mod(np.asarray(angle, dtype=np.float64), PI)
    # np.mod can return exactly pi for tiny negative inputs
    a = np.where(a >= PI, 0.0, a)
    return float(a) if a.ndim == 0 else a


def _check_finite(name, value):
    if not np.all(np.isfinite(value)):
        raise ValueError(f"{name} must be finite")


def _check_angles(*angles):
    for a in angles:
        _check_finite("angle", a)


def _check_nonnegative(name, value):
    _check_finite(name, value)
    if np.any(np.asarray(value) < 0):
        raise ValueError(f"{name} must be non-negative")


@dataclass(frozen=True)
class PolarizerPair:
    """Camera-side and light-side polarizer angles, stored canonically in [0, pi)."""

    theta_c: float
    theta_l: float

    def __post_init__(self):
        _check_finite("theta_c", self.theta_c)
        _check_finite("theta_l", self.theta_l)
        object.__setattr__(self, "theta_c", canonical_angle(self.theta_c))
        object.__setattr__(self, "theta_l", canonical_angle(self.theta_l))

    @classmethod
    def from_degrees(cls, theta_c_deg: float, theta_l_deg: float) -> "PolarizerPair":
        return cls(np.deg2rad(theta_c_deg), np.deg2rad(theta_l_deg))

    def degrees(self) -> tuple[float, float]:
        return float(np.rad2deg(self.theta_c)), float(np.rad2deg(self.theta_l))


@dataclass(frozen=True)
class PolarizedRay:
    i_amp: float
    rho: float
    phi: float

    def __post_init__(self):
        _check_nonnegative("i_amp", self.i_amp)
        _check_finite("rho", self.rho)
        _check_finite("phi", self.phi)
        if not 0.0 <= self.rho <= 1.0:
            raise ValueError("rho must lie in [0, 1]")
        object.__setattr__(self, "phi", canonical_angle(self.phi))


@dataclass(frozen=True)
class ComponentParams:
    """The five per-pixel unknowns: unpolarized, forward and reverse components.

    Fields may be scalars or equally shaped arrays (one value per pixel).
    Phases are canonicalized to [0, pi) and forced to 0 wherever the matching
    intensity is exactly 0.
    """

    i_u: float
    i_f: float
    phi_f: float
    i_r: float
    phi_r: float

    def __post_init__(self):
        for name in ("i_u", "i_f", "i_r"):
            _check_nonnegative(name, getattr(self, name))
        _check_finite("phi_f", self.phi_f)
        _check_finite("phi_r", self.phi_r)
        object.__setattr__(self, "phi_f", _phase_convention(self.i_f, self.phi_f))
        object.__setattr__(self, "phi_r", _phase_convention(self.i_r, self.phi_r))

    def total(self):
        """Total intensity without polarizers, ``i_u + i_f + i_r``."""
        return self.i_u + self.i_f + self.i_r


def _phase_convention(intensity, phase):
    phase = np.where(np.asarray(intensity) == 0, 0.0, canonical_angle(phase))
    return float(phase) if phase.ndim == 0 else phase


def intensity_single_polarizer(ray: PolarizedRay, theta_c):
    """Intensity seen through one camera-side polarizer at ``theta_c``.

    ``(i_amp / 2) * (rho * cos(2 (theta_c - phi)) + 1)``; the halving is the
    polarizer's attenuation of unpolarized light.
    """
    _check_finite("theta_c", theta_c)
    return 0.5 * ray.i_amp * (ray.rho * np.cos(2.0 * (np.asarray(theta_c) - ray.phi)) + 1.0)


def unpolarized_intensity(i_u):
    _check_nonnegative("i_u", i_u)
    return 0.5 * np.asarray(i_u, dtype=np.float64)


def forward_intensity(i_f, phi_f, theta_c, theta_l):
    """Component whose polarization plane follows the light polarizer (``phi = theta_l + phi_f``)."""
    _check_nonnegative("i_f", i_f)
    _check_angles(phi_f, theta_c, theta_l)
    return 0.5 * np.asarray(i_f) * (np.cos(2.0 * (np.asarray(theta_c) - theta_l - phi_f)) + 1.0)


def reverse_intensity(i_r, phi_r, theta_c, theta_l):
    """Component whose polarization plane counter-rotates (``phi = -theta_l + phi_r``)."""
    _check_nonnegative("i_r", i_r)
    _check_angles(phi_r, theta_c, theta_l)
    return 0.5 * np.asarray(i_r) * (np.cos(2.0 * (np.asarray(theta_c) + theta_l - phi_r)) + 1.0)


def mixture_intensity(params: ComponentParams, theta_c, theta_l):
    """Observed intensity: sum of the unpolarized, forward and reverse terms."""
    return (
        unpolarized_intensity(params.i_u)
        + forward_intensity(params.i_f, params.phi_f, theta_c, theta_l)
        + reverse_intensity(params.i_r, params.phi_r, theta_c, theta_l)
    )
