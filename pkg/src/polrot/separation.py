"""Direct/global separation with shifted checker patterns, and its pairing with the
polarimetric decomposition.

With half of the projector pixels lit, a scene point sees its direct light in
some pattern shifts and not in others, while light that reached it through
low-frequency global paths stays at half strength. Per pixel::

    direct = L_max - L_min        global = 2 * L_min

over the pattern shifts. Ambient light is assumed absent.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .decompose import Decomposition, decompose_frames
from .imaging import ImageStack


def checker_patterns(projector_shape, period=8, shifts=None) -> list[np.ndarray]:
    """Binary checkerboards with ``period``-pixel cells, one per ``(dy, dx)`` shift.

    The default is two complementary phases, ``(0, 0)`` and ``(0, period)``.
    """
    h, w = projector_shape
    if period < 1:
        raise ValueError("checker period must be at least one pixel")
    if shifts is None:
        shifts = [(0, 0), (0, period)]
    r, c = np.mgrid[0:h, 0:w]
    return [(((r + dy) // period + (c + dx) // period) % 2).astype(np.float64) for dy, dx in shifts]


def nayar_separate(images):
    """Split per-shift images ``(P, ...)`` into direct and global parts (lit fraction 1/2)."""
    images = np.asarray(images, dtype=np.float64)
    if images.ndim < 1 or images.shape[0] < 2:
        raise ValueError("direct/global separation needs at least two pattern shifts")
    l_max = images.max(axis=0)
    l_min = images.min(axis=0)
    return l_max - l_min, 2.0 * l_min


@dataclass
class PatternedStack:
    """One polarimetric stack per checker shift, all with the same angles and size."""

    stacks: list[ImageStack]
    period: int = 8
    shifts: tuple = ((0, 0), (0, 8))

    def __post_init__(self):
        if len(self.stacks) < 2:
            raise ValueError("need stacks for at least two checker shifts")
        ref = self.stacks[0]
        for s in self.stacks[1:]:
            if s.frames.shape != ref.frames.shape:
                raise ValueError("checker stacks differ in shape")
            if s.angles.degrees() != ref.angles.degrees():
                raise ValueError("checker stacks use different polarizer angles")


@dataclass
class CombinedGrid:
    """Direct and global parts, each decomposed into unpolarized/forward/reverse."""

    direct: Decomposition
    global_: Decomposition

    def cells(self) -> dict[str, np.ndarray]:
        out = {}
        for part, d in (("direct", self.direct), ("global", self.global_)):
            for name in ("i_u", "i_f", "i_r", "phi_f", "phi_r"):
                out[f"{part}_{name}"] = getattr(d, name)
        return out

    def energy(self) -> dict[tuple[str, str], float]:
        return {
            (part, name): float(np.nansum(getattr(d, name)))
            for part, d in (("direct", self.direct), ("global", self.global_))
            for name in ("i_u", "i_f", "i_r")
        }


def separate_stacks(patterned: PatternedStack) -> tuple[ImageStack, ImageStack]:
    """Direct and global stacks, separating each polarizer frame across the shifts."""
    frames = np.stack([s.frames for s in patterned.stacks])  # (P, N, ...)
    direct, global_ = nayar_separate(frames)
    angles = patterned.stacks[0].angles
    return ImageStack(direct, angles, "direct"), ImageStack(global_, angles, "global")


def combined_decompose(patterned: PatternedStack) -> CombinedGrid:
    """Separate first, then decompose the direct and global stacks independently."""
    direct, global_ = separate_stacks(patterned)
    return CombinedGrid(decompose_frames(direct.frames, direct.angles), decompose_frames(global_.frames, global_.angles))
