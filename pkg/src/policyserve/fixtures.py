"""Deterministic synthetic camera images for benchmarks and tests.

Three content classes with very different compressibility:

* ``noise``    - uniform random pixels; adversarial for JPEG.
* ``gradient`` - smooth horizontal ramp; compresses near-maximally.
* ``natural``  - low-pass filtered noise with an illumination ramp,
  statistically close to a defocused camera frame.
"""

from __future__ import annotations

import numpy as np

from .errors import ConfigError
from .protocol.messages import Obs

try:
    import cv2
except ImportError:  # pragma: no cover
    cv2 = None


def make_noise(size: int = 224, seed: int = 0) -> np.ndarray:
    rng = np.random.default_rng(seed)
    return rng.integers(0, 256, size=(size, size, 3), dtype=np.uint8)


def make_gradient(size: int = 224) -> np.ndarray:
    ramp = np.linspace(0.0, 255.0, size)
    img = np.empty((size, size, 3), dtype=np.uint8)
    img[:, :, 0] = np.tile(ramp, (size, 1)).astype(np.uint8)
    img[:, :, 1] = np.tile(ramp[::-1], (size, 1)).astype(np.uint8)
    img[:, :, 2] = np.tile(ramp, (size, 1)).T.astype(np.uint8)
    return img


def make_natural(size: int = 224, seed: int = 7) -> np.ndarray:
    rng = np.random.default_rng(seed)
    base = rng.integers(0, 256, size=(size, size, 3), dtype=np.uint8).astype(np.float32)
    blurred = cv2.GaussianBlur(base, (0, 0), sigmaX=3.0)
    ramp = np.linspace(0.0, 80.0, size, dtype=np.float32)
    out = blurred * 0.7 + ramp[None, :, None] + 20.0
    return np.clip(out, 0, 255).astype(np.uint8)


FIXTURE_KINDS = ("natural", "noise", "gradient")


def make_image(kind: str, size: int = 224, seed: int = 0) -> np.ndarray:
    if kind == "noise":
        return make_noise(size, seed)
    if kind == "gradient":
        return make_gradient(size)
    if kind == "natural":
        return make_natural(size, seed + 7)
    raise ConfigError(f"unknown fixture kind {kind!r}; choose from {FIXTURE_KINDS}")


def make_bench_obs(n_cameras: int, image_size: int, fixture: str = "gradient",
                   batch: int = 1) -> Obs:
    """The benchmark observation: ``n_cameras`` seeded fixture images."""
    cameras = {}
    for i in range(n_cameras):
        img = make_image(fixture, image_size, seed=i)
        if batch > 1:
            img = np.broadcast_to(img, (batch, *img.shape)).copy()
        cameras[f"cam{i}"] = img
    return Obs(cameras=cameras, batched=batch > 1)
