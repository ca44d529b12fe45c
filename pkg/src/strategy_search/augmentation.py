"""
Probability-gated intensity augmentation for 3D volumes.

Five transforms are applied in a fixed order, each one independently gated
by a Bernoulli draw with the searched probability. Only the probabilities
are searched; magnitudes are the module constants below.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy.ndimage import convolve1d

TRANSFORM_NAMES = ("sharpen", "smooth", "gaussian_noise", "contrast", "intensity_shift")

SMOOTH_KERNEL = np.array([0.25, 0.5, 0.25])
SHARPEN_AMOUNT = 1.0
NOISE_STD = 0.05
CONTRAST_RANGE = (0.7, 1.3)
SHIFT_RANGE = (-0.1, 0.1)

VOLUME_MAGIC = b"SSV3"
VOLUME_VERSION = 1
_HEADER = struct.Struct("<4sIIII")


class VolumeFormatError(ValueError):
    pass


def as_volume(vol) -> np.ndarray:
    v = np.asarray(vol, dtype=float)
    if v.ndim != 3 or min(v.shape) < 1:
        raise ValueError(f"expected a non-empty 3-D volume, got shape {v.shape}")
    if not np.all(np.isfinite(v)):
        raise ValueError("volume contains non-finite voxels")
    return v


def _finish(v: np.ndarray, clip: bool) -> np.ndarray:
    return np.clip(v, 0.0, 1.0) if clip else v


def smooth(vol, *, clip: bool = True) -> np.ndarray:
    """Separable [1/4, 1/2, 1/4] blur along every axis, edges replicated."""
    v = as_volume(vol)
    for axis in range(3):
        v = convolve1d(v, SMOOTH_KERNEL, axis=axis, mode="nearest")
    return _finish(v, clip)


def sharpen(vol, amount: float = SHARPEN_AMOUNT, *, clip: bool = True) -> np.ndarray:
    v = as_volume(vol)
    return _finish(v + amount * (v - smooth(v, clip=False)), clip)


def gaussian_noise(vol, rng=None, std: float = NOISE_STD, *, clip: bool = True) -> np.ndarray:
    v = as_volume(vol)
    rng = np.random.default_rng(rng)
    return _finish(v + rng.normal(0.0, std, size=v.shape), clip)


def contrast(vol, rng=None, factor_range=CONTRAST_RANGE, *, clip: bool = True) -> np.ndarray:
    v = as_volume(vol)
    c = np.random.default_rng(rng).uniform(*factor_range)
    return _finish((v - 0.5) * c + 0.5, clip)


def intensity_shift(vol, rng=None, shift_range=SHIFT_RANGE, *, clip: bool = True) -> np.ndarray:
    v = as_volume(vol)
    s = np.random.default_rng(rng).uniform(*shift_range)
    return _finish(v + s, clip)


@dataclass(frozen=True)
class AugmentationPolicy:
    """Per-transform application probabilities, in TRANSFORM_NAMES order."""

    probs: tuple[float, ...]

    def __post_init__(self):
        probs = tuple(float(p) for p in self.probs)
        if len(probs) != len(TRANSFORM_NAMES):
            raise ValueError(f"need {len(TRANSFORM_NAMES)} probabilities, got {len(probs)}")
        if any(not 0.0 <= p <= 1.0 for p in probs):
            raise ValueError(f"probabilities must lie in [0, 1]: {probs}")
        object.__setattr__(self, "probs", probs)

    @classmethod
    def from_mapping(cls, probs: dict, default: float = 0.0) -> "AugmentationPolicy":
        return cls(tuple(probs.get(name, default) for name in TRANSFORM_NAMES))


def draw_gates(policy: AugmentationPolicy, rng: np.random.Generator) -> list[bool]:
    r = rng.random(len(TRANSFORM_NAMES))
    return [bool(ri < p) for ri, p in zip(r, policy.probs)]


def apply_policy(vol, policy: AugmentationPolicy, rng_seed: int) -> tuple[np.ndarray, list[bool]]:
    """
    Run the gated pipeline once.

    Transform i fires iff its uniform draw r_i is below probs[i], so a
    probability of 0 never fires and 1 always does.

    Returns:
        The augmented volume (clamped to [0, 1]) and the five gate outcomes.
    """
    v = as_volume(vol)
    gate_seq, noise_seq, contrast_seq, shift_seq = np.random.SeedSequence(rng_seed).spawn(4)
    applied = draw_gates(policy, np.random.default_rng(gate_seq))
    if not any(applied):
        return np.clip(v, 0.0, 1.0), applied

    out = v
    if applied[0]:
        out = sharpen(out)
    if applied[1]:
        out = smooth(out)
    if applied[2]:
        out = gaussian_noise(out, np.random.default_rng(noise_seq))
    if applied[3]:
        out = contrast(out, np.random.default_rng(contrast_seq))
    if applied[4]:
        out = intensity_shift(out, np.random.default_rng(shift_seq))
    return np.clip(out, 0.0, 1.0), applied


def write_volume(path, vol) -> None:
    """Little-endian float32 voxels after a (magic, version, nx, ny, nz) header."""
    v = as_volume(vol)
    nx, ny, nz = v.shape
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(VOLUME_MAGIC, VOLUME_VERSION, nx, ny, nz))
        fh.write(np.ascontiguousarray(v, dtype="<f4").tobytes())


def read_volume(path) -> np.ndarray:
    path = Path(path)
    try:
        raw = path.read_bytes()
    except OSError as exc:
        raise VolumeFormatError(f"{path}: {exc}") from exc
    if len(raw) < _HEADER.size:
        raise VolumeFormatError(f"{path}: truncated header")
    magic, version, nx, ny, nz = _HEADER.unpack_from(raw)
    if magic != VOLUME_MAGIC:
        raise VolumeFormatError(f"{path}: bad magic {magic!r}")
    if version != VOLUME_VERSION:
        raise VolumeFormatError(f"{path}: unsupported version {version}")
    n = nx * ny * nz
    body = raw[_HEADER.size :]
    if n == 0 or len(body) != 4 * n:
        raise VolumeFormatError(f"{path}: expected {4 * n} data bytes, found {len(body)}")
    return np.frombuffer(body, dtype="<f4").reshape(nx, ny, nz).astype(float)


def policy_from_strategy(names: Sequence[str], values: Sequence[float]) -> AugmentationPolicy:
    """Pick the transform probabilities out of a named strategy; absent ones are 0."""
    lookup = dict(zip(names, values))
    return AugmentationPolicy.from_mapping(lookup)
