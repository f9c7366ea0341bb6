"""Image I/O and preprocessing between raw captures and the solver.

Images are plain numpy arrays: ``(H, W)`` for one channel, ``(H, W, 3)`` for
three. Stacks carry their polarizer angles in an :class:`ImageStack`.

Capture manifest (UTF-8 JSON)::

    {
      "format": "polrot-manifest",
      "version": 1,
      "frames": [
        {"file": "frame_000.pfm", "theta_c_deg": 0.0, "theta_l_deg": 0.0,
         "exposure_s": 1.0, "pattern_id": null, "role": "regular"},
        ...
      ],
      "scene": {...}            # optional, written by the simulator
    }

``file`` paths are relative to the manifest's directory. ``role`` is one of
``regular``, ``graycode`` or ``checker``.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .decompose import AngleSet
from .model import PolarizerPair

ROLES = ("regular", "graycode", "checker")
MANIFEST_FORMAT = "polrot-manifest"


class PFMError(ValueError):
    pass


class ManifestError(ValueError):
    pass


# ---------------------------------------------------------------------------
# Portable float map


def _read_token(buf: bytes, pos: int) -> tuple[bytes, int]:
    while pos < len(buf) and buf[pos : pos + 1].isspace():
        pos += 1
    start = pos
    while pos < len(buf) and not buf[pos : pos + 1].isspace():
        pos += 1
    if start == pos:
        raise PFMError("truncated PFM header")
    return buf[start:pos], pos


def parse_pfm(buf: bytes) -> np.ndarray:
    magic, pos = _read_token(buf, 0)
    if magic == b"Pf":
        channels = 1
    elif magic == b"PF":
        channels = 3
    else:
        raise PFMError(f"unsupported PFM identifier {magic!r}")
    try:
        w_tok, pos = _read_token(buf, pos)
        h_tok, pos = _read_token(buf, pos)
        s_tok, pos = _read_token(buf, pos)
        width, height, scale = int(w_tok), int(h_tok), float(s_tok)
    except ValueError as exc:
        raise PFMError(f"malformed PFM header: {exc}") from None
    if width <= 0 or height <= 0:
        raise PFMError("PFM dimensions must be positive")
    if scale == 0 or not np.isfinite(scale):
        raise PFMError("PFM scale must be a finite non-zero number")
    # exactly one whitespace byte separates the header from the raster
    pos += 1
    dtype = np.dtype("<f4") if scale < 0 else np.dtype(">f4")
    count = width * height * channels
    payload = buf[pos : pos + 4 * count]
    if len(payload) < 4 * count:
        raise PFMError(f"truncated PFM payload: expected {4 * count} bytes, got {len(payload)}")
    data = np.frombuffer(payload, dtype=dtype).astype(np.float32)
    shape = (height, width) if channels == 1 else (height, width, 3)
    # rows are stored bottom to top
    return np.ascontiguousarray(data.reshape(shape)[::-1])


def read_pfm(path) -> np.ndarray:
    """Read a portable float map into a float32 array, top row first."""
    with open(path, "rb") as f:
        return parse_pfm(f.read())


def encode_pfm(image, little_endian=True) -> bytes:
    img = np.asarray(image)
    if img.ndim == 3 and img.shape[2] == 1:
        img = img[..., 0]
    if img.ndim == 2:
        magic = b"Pf"
    elif img.ndim == 3 and img.shape[2] == 3:
        magic = b"PF"
    else:
        raise PFMError(f"cannot store an image of shape {img.shape} as PFM")
    height, width = img.shape[:2]
    dtype = "<f4" if little_endian else ">f4"
    scale = b"-1.0" if little_endian else b"1.0"
    raster = np.ascontiguousarray(img[::-1], dtype=dtype)
    return magic + b"\n" + f"{width} {height}".encode() + b"\n" + scale + b"\n" + raster.tobytes()


def write_pfm(path, image, little_endian=True) -> None:
    """Write a 1- or 3-channel image as PFM (float32, bottom row first)."""
    with open(path, "wb") as f:
        f.write(encode_pfm(image, little_endian))


# ---------------------------------------------------------------------------
# Manifest and stacks


@dataclass(frozen=True)
class FrameRecord:
    file: str
    theta_c_deg: float
    theta_l_deg: float
    exposure_s: float = 1.0
    pattern_id: Optional[str] = None
    role: str = "regular"

    def __post_init__(self):
        if not self.exposure_s > 0:
            raise ManifestError(f"{self.file}: exposure_s must be positive")
        if self.role not in ROLES:
            raise ManifestError(f"{self.file}: unknown role {self.role!r}")
        for v in (self.theta_c_deg, self.theta_l_deg, self.exposure_s):
            if not np.isfinite(v):
                raise ManifestError(f"{self.file}: angles and exposure must be finite")

    def to_json(self) -> dict:
        return {
            "file": self.file,
            "theta_c_deg": self.theta_c_deg,
            "theta_l_deg": self.theta_l_deg,
            "exposure_s": self.exposure_s,
            "pattern_id": self.pattern_id,
            "role": self.role,
        }


@dataclass
class CaptureManifest:
    frames: list[FrameRecord]
    scene: Optional[dict] = None
    root: Path = field(default_factory=Path)

    def __post_init__(self):
        if not self.frames:
            raise ManifestError("manifest lists no frames")

    def to_json(self) -> dict:
        doc = {"format": MANIFEST_FORMAT, "version": 1, "frames": [f.to_json() for f in self.frames]}
        if self.scene is not None:
            doc["scene"] = self.scene
        return doc


def load_manifest(path) -> CaptureManifest:
    path = Path(path)
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ManifestError(f"{path}: invalid JSON ({exc})") from None
    if not isinstance(doc, dict) or "frames" not in doc:
        raise ManifestError(f"{path}: missing 'frames'")
    frames = []
    for i, rec in enumerate(doc["frames"]):
        try:
            frames.append(
                FrameRecord(
                    file=str(rec["file"]),
                    theta_c_deg=float(rec["theta_c_deg"]),
                    theta_l_deg=float(rec["theta_l_deg"]),
                    exposure_s=float(rec.get("exposure_s", 1.0)),
                    pattern_id=rec.get("pattern_id"),
                    role=rec.get("role", "regular"),
                )
            )
        except (KeyError, TypeError) as exc:
            raise ManifestError(f"{path}: frame {i} is missing or has a bad field ({exc})") from None
    return CaptureManifest(frames=frames, scene=doc.get("scene"), root=path.parent)


def save_manifest(manifest: CaptureManifest, path) -> None:
    text = json.dumps(manifest.to_json(), indent=2, sort_keys=True)
    Path(path).write_text(text + "\n", encoding="utf-8")


@dataclass
class ImageStack:
    """Co-registered frames ``(N, H, W[, C])`` in linear radiance, one per polarizer pair."""

    frames: np.ndarray
    angles: AngleSet
    pattern_id: Optional[str] = None

    def __post_init__(self):
        self.frames = np.asarray(self.frames)
        if self.frames.shape[0] != len(self.angles):
            raise ValueError(f"{self.frames.shape[0]} frames but {len(self.angles)} angle pairs")

    @property
    def shape(self):
        return self.frames.shape[1:]


def save_stack(stack: ImageStack, directory, prefix="frame", role="regular", start=0) -> list[FrameRecord]:
    """Write each frame as PFM and return the matching manifest records."""
    directory = Path(directory)
    records = []
    for k, (frame, pair) in enumerate(zip(stack.frames, stack.angles)):
        name = f"{prefix}_{start + k:03d}.pfm"
        write_pfm(directory / name, frame)
        c, l = pair.degrees()
        records.append(FrameRecord(name, round(c, 9), round(l, 9), 1.0, stack.pattern_id, role))
    return records


def load_stacks(manifest: CaptureManifest, role=None, saturation_level=None) -> dict:
    """Group manifest frames into stacks keyed by ``pattern_id``.

    Frames sharing angles and pattern but differing in exposure are merged
    with :func:`merge_hdr`; single exposures are divided by their exposure
    time. Frame groups keep first-appearance order.
    """
    groups: dict = {}
    for rec in manifest.frames:
        if role is not None and rec.role != role:
            continue
        key = (rec.pattern_id, round(rec.theta_c_deg % 180.0, 9), round(rec.theta_l_deg % 180.0, 9))
        groups.setdefault(key, []).append(rec)
    if not groups:
        raise ManifestError(f"no frames with role {role!r}")
    by_pattern: dict = {}
    for (pid, _, _), recs in groups.items():
        images = []
        for rec in recs:
            path = manifest.root / rec.file
            images.append(read_pfm(path).astype(np.float64))
        if len(recs) == 1:
            radiance = images[0] / recs[0].exposure_s
        else:
            sat = saturation_level if saturation_level is not None else max(float(np.max(i)) for i in images)
            radiance = merge_hdr(images, [r.exposure_s for r in recs], sat)
        pair = PolarizerPair.from_degrees(recs[0].theta_c_deg, recs[0].theta_l_deg)
        by_pattern.setdefault(pid, ([], []))
        by_pattern[pid][0].append(radiance)
        by_pattern[pid][1].append(pair)
    stacks = {}
    for pid, (images, pairs) in by_pattern.items():
        if len({im.shape for im in images}) != 1:
            raise ManifestError(f"frames of pattern {pid!r} differ in size")
        stacks[pid] = ImageStack(np.stack(images), AngleSet(tuple(pairs)), pid)
    return stacks


def load_stack(manifest_path, role="regular", saturation_level=None) -> ImageStack:
    manifest = load_manifest(manifest_path)
    stacks = load_stacks(manifest, role=role, saturation_level=saturation_level)
    if len(stacks) != 1:
        raise ManifestError(f"expected one {role} stack, found patterns {sorted(map(str, stacks))}")
    return next(iter(stacks.values()))


# ---------------------------------------------------------------------------
# HDR


def hat_weight(z, saturation_level):
    return np.clip(np.minimum(z, saturation_level - z), 0.0, None)


def merge_hdr(frames: Sequence[np.ndarray], exposures: Sequence[float], saturation_level: float) -> np.ndarray:
    """Merge an exposure bracket into linear radiance with hat weighting.

    Samples at or above ``saturation_level`` are ignored. Pixels saturated in
    every frame are returned as NaN. Where every unsaturated sample has zero
    weight (black pixels) the plain mean of ``z / t`` is used.
    """
    if not frames:
        raise ValueError("merge_hdr needs at least one frame")
    if len(frames) != len(exposures):
        raise ValueError("one exposure time per frame is required")
    t = np.asarray(exposures, dtype=np.float64)
    if np.any(~(t > 0)):
        raise ValueError("exposure times must be positive")
    if len(set(t.tolist())) != len(t):
        raise ValueError("exposure times must be distinct")
    z = [np.asarray(f, dtype=np.float64) for f in frames]
    if len({f.shape for f in z}) != 1:
        raise ValueError("frames differ in dimensions")
    order = np.argsort(t, kind="stable")
    z = np.stack([z[i] for i in order])
    t = t[order].reshape((-1,) + (1,) * (z.ndim - 1))

    ok = z < saturation_level
    w = np.where(ok, hat_weight(z, saturation_level), 0.0)
    wsum = w.sum(axis=0)
    with np.errstate(invalid="ignore", divide="ignore"):
        weighted = np.sum((w / wsum) * (z / t), axis=0)
        count = ok.sum(axis=0)
        plain = np.sum(np.where(ok, z / t, 0.0), axis=0) / count
    out = np.where(wsum > 0, weighted, plain)
    return np.where(count > 0, out, np.nan)


# ---------------------------------------------------------------------------
# Polarization mosaic

DEFAULT_MOSAIC = ((90.0, 45.0), (135.0, 0.0))


def _check_pattern(pattern):
    flat = [float(a) % 180.0 for row in pattern for a in row]
    if len(flat) != 4 or len(pattern) != 2:
        raise ValueError("mosaic pattern must be a 2x2 grid of angles")
    if len(set(flat)) != 4:
        raise ValueError("mosaic angles must be distinct modulo 180 degrees")
    return flat


def demosaic_polarization(raw, pattern=DEFAULT_MOSAIC) -> dict[float, np.ndarray]:
    """Split a micro-polarizer mosaic into four half-resolution images.

    Returns ``{angle_deg: image}`` in superpixel order (row-major). No
    interpolation is done, so the four channels stay independent.
    """
    raw = np.asarray(raw)
    flat = _check_pattern(pattern)
    h, w = raw.shape[:2]
    if h % 2 or w % 2:
        raise ValueError(f"mosaic dimensions must be even, got {w}x{h}")
    out = {}
    for idx, angle in enumerate(flat):
        dy, dx = divmod(idx, 2)
        out[angle] = raw[dy::2, dx::2].copy()
    return out


def remosaic_polarization(channels: dict, pattern=DEFAULT_MOSAIC) -> np.ndarray:
    """Interleave four polarizer channels back into a full-resolution mosaic."""
    flat = _check_pattern(pattern)
    first = channels[flat[0]]
    h, w = first.shape[:2]
    raw = np.empty((2 * h, 2 * w) + first.shape[2:], dtype=first.dtype)
    for idx, angle in enumerate(flat):
        dy, dx = divmod(idx, 2)
        raw[dy::2, dx::2] = channels[angle]
    return raw


def stack_from_mosaics(raws, light_deg, pattern=DEFAULT_MOSAIC) -> ImageStack:
    """Build a stack from polarization-camera shots, one per light polarizer angle."""
    frames, pairs = [], []
    for raw, l in zip(raws, light_deg, strict=True):
        for c, img in demosaic_polarization(raw, pattern).items():
            frames.append(img)
            pairs.append(PolarizerPair.from_degrees(c, l))
    return ImageStack(np.stack(frames), AngleSet(tuple(pairs)))


def output_dir(path=None) -> Path:
    """Resolve an output directory, falling back to ``$POLROT_OUT`` then ``./polrot-out``."""
    return Path(path or os.environ.get("POLROT_OUT") or "polrot-out")
