"""Brute-force least-squares fit used to cross-check the closed-form solver.

Works directly on the nonlinear mixture model and never builds the linear
design matrix. For fixed phases the model is linear in the three intensities,
so those are profiled out exactly; the two phases are searched exhaustively
on a grid, refined by coordinate descent, and the full five-parameter fit is
polished with Gauss-Newton steps.
"""

from __future__ import annotations

import numpy as np

from .decompose import Components
from .model import canonical_angle

_GOLDEN = (np.sqrt(5.0) - 1.0) / 2.0


def _basis(theta_c, theta_l, phi_f, phi_r):
    """Model columns for (i_u, i_f, i_r); phases broadcast over leading axes."""
    phi_f = np.asarray(phi_f)[..., None]
    phi_r = np.asarray(phi_r)[..., None]
    a_u = np.full(np.broadcast_shapes(phi_f.shape, theta_c.shape), 0.5)
    a_f = 0.5 * (np.cos(2.0 * (theta_c - theta_l - phi_f)) + 1.0)
    a_r = 0.5 * (np.cos(2.0 * (theta_c + theta_l - phi_r)) + 1.0)
    a_f, a_r = np.broadcast_arrays(a_f, a_r)
    return np.stack([a_u, a_f, a_r], axis=-1)


def _profile(I, theta_c, theta_l, phi_f, phi_r):
    """Best intensities and residual for each phase pair (broadcast)."""
    A = _basis(theta_c, theta_l, phi_f, phi_r)
    G = np.einsum("...ni,...nj->...ij", A, A)
    b = np.einsum("...ni,n->...i", A, I)
    try:
        v = np.linalg.solve(G, b[..., None])[..., 0]
    except np.linalg.LinAlgError:
        v = np.einsum("...ij,j->...i", np.linalg.pinv(A), I)
    r = I - np.einsum("...ij,...j->...i", A, v)
    return v, np.sum(r * r, axis=-1)


def _model(p, theta_c, theta_l):
    i_u, i_f, phi_f, i_r, phi_r = p
    return (
        0.5 * i_u
        + 0.5 * i_f * (np.cos(2.0 * (theta_c - theta_l - phi_f)) + 1.0)
        + 0.5 * i_r * (np.cos(2.0 * (theta_c + theta_l - phi_r)) + 1.0)
    )


def _jacobian(p, theta_c, theta_l):
    _, i_f, phi_f, i_r, phi_r = p
    af = 2.0 * (theta_c - theta_l - phi_f)
    ar = 2.0 * (theta_c + theta_l - phi_r)
    return np.stack(
        [
            np.full_like(theta_c, 0.5),
            0.5 * (np.cos(af) + 1.0),
            i_f * np.sin(af),
            0.5 * (np.cos(ar) + 1.0),
            i_r * np.sin(ar),
        ],
        axis=-1,
    )


def _golden_min(f, lo, hi, tol):
    a, b = lo, hi
    c = b - _GOLDEN * (b - a)
    d = a + _GOLDEN * (b - a)
    fc, fd = f(c), f(d)
    while b - a > tol:
        if fc <= fd:
            b, d, fd = d, c, fc
            c = b - _GOLDEN * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + _GOLDEN * (b - a)
            fd = f(d)
    x = 0.5 * (a + b)
    return x, f(x)


def residual(params, intensities, theta_c, theta_l) -> float:
    """Sum of squared differences between observations and the mixture model."""
    r = np.asarray(intensities) - _model(params, np.asarray(theta_c), np.asarray(theta_l))
    return float(np.sum(r * r))


def brute_force_fit(intensities, angles, n_phases=180, sweeps=30, tol=1e-12, max_polish=100) -> Components:
    """Minimize the squared observation residual by search, not by linear algebra on ``W``.

    Parameters
    ----------
    intensities : array_like, shape (N,)
        One pixel's observations.
    angles : AngleSet
        Polarizer pairs matching ``intensities``.
    n_phases : int
        Grid levels per phase over [0, pi).
    sweeps : int
        Maximum coordinate-descent sweeps over the two phases.
    tol : float
        Phase tolerance of the line searches and step tolerance of the polish.

    Returns
    -------
    Components
        Same layout as the closed-form extraction, with ``i_u`` left unclamped
        in ``i_u_raw`` so both minimize the identical objective.
    """
    I = np.asarray(intensities, dtype=np.float64)
    tc, tl = angles.theta_c, angles.theta_l
    if I.shape != tc.shape:
        raise ValueError("intensities must match the angle set length")

    grid = np.arange(n_phases) * (np.pi / n_phases)
    gf, gr = np.meshgrid(grid, grid, indexing="ij")
    _, res = _profile(I, tc, tl, gf, gr)
    k = np.unravel_index(np.argmin(res), res.shape)
    phi_f, phi_r, best = grid[k[0]], grid[k[1]], res[k]

    step = np.pi / n_phases
    for _ in range(sweeps):
        prev = best
        phi_f, best = _golden_min(lambda a: _profile(I, tc, tl, a, phi_r)[1], phi_f - step, phi_f + step, tol)
        phi_r, best = _golden_min(lambda a: _profile(I, tc, tl, phi_f, a)[1], phi_r - step, phi_r + step, tol)
        if prev - best <= tol * max(prev, 1e-300):
            break

    v, best = _profile(I, tc, tl, phi_f, phi_r)
    p = np.array([v[0], v[1], phi_f, v[2], phi_r])
    for _ in range(max_polish):
        r = I - _model(p, tc, tl)
        delta = np.linalg.lstsq(_jacobian(p, tc, tl), r, rcond=None)[0]
        trial = p + delta
        trial_res = residual(trial, I, tc, tl)
        if trial_res > best:
            break
        p, best = trial, trial_res
        if np.max(np.abs(delta)) < tol:
            break

    # A negative amplitude equals a positive one a quarter turn away, minus its
    # constant offset, which moves into the unpolarized term.
    i_u, i_f, phi_f, i_r, phi_r = p
    if i_f < 0:
        i_u, i_f, phi_f = i_u + 2.0 * i_f, -i_f, phi_f + np.pi / 2
    if i_r < 0:
        i_u, i_r, phi_r = i_u + 2.0 * i_r, -i_r, phi_r + np.pi / 2
    phi_f = canonical_angle(phi_f) if i_f > 0 else 0.0
    phi_r = canonical_angle(phi_r) if i_r > 0 else 0.0
    return Components(
        i_u=max(i_u, 0.0),
        i_u_raw=float(i_u),
        i_f=float(i_f),
        phi_f=float(phi_f),
        i_r=float(i_r),
        phi_r=float(phi_r),
        physical=bool(i_u >= 0),
    )
