"""Observation and action records and their value-map encodings.

An observation carries named camera images, an optional gripper scalar and a
free-form info map; an action carries a dense action vector, a done flag and
an info map. Batched records stack a leading B dimension onto cameras,
gripper and action. Camera entries may travel as compressed images on the
wire; decoding transparently restores raw u8 arrays.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import DecodingError, EncodingError
from .image import compress_image, decompress_image
from .value import CompressedImage, Value, values_equal


@dataclass(frozen=True)
class CompressionPolicy:
    """When and how camera images are compressed for transport."""

    enabled: bool = True
    quality: int = 90
    min_pixels: int = 1024  # below this pixel count images stay raw
    codec: str = "jpeg"

    def __post_init__(self):
        from ..errors import ConfigError

        if not 1 <= self.quality <= 100:
            raise ConfigError(f"jpeg quality must be 1-100, got {self.quality}")
        if self.min_pixels < 0:
            raise ConfigError("min_pixels must be >= 0")
        if self.codec != "jpeg":
            raise ConfigError(f"unsupported compression codec {self.codec!r}")


#: Policy that never compresses, used on the shared-memory path.
NO_COMPRESSION = CompressionPolicy(enabled=False)


@dataclass(eq=False)
class Obs:
    """One observation: named cameras, optional gripper width and info map."""

    cameras: dict[str, np.ndarray] = field(default_factory=dict)
    gripper: float | np.ndarray | None = None
    info: dict = field(default_factory=dict)
    batched: bool = False

    def validate(self):
        rank = 4 if self.batched else 3
        batch = None
        for name, cam in self.cameras.items():
            if not isinstance(cam, np.ndarray) or cam.dtype != np.uint8:
                raise EncodingError(f"camera {name!r} must be a u8 array")
            if cam.ndim != rank or cam.shape[-1] != 3 or cam.shape[-3] < 1 or cam.shape[-2] < 1:
                kind = "BxHxWx3" if self.batched else "HxWx3"
                raise EncodingError(f"camera {name!r} must be {kind}, got shape {cam.shape}")
            if self.batched:
                if batch is None:
                    batch = cam.shape[0]
                elif cam.shape[0] != batch:
                    raise EncodingError(f"camera {name!r} batch {cam.shape[0]} != {batch}")
        if self.batched:
            if isinstance(self.gripper, np.ndarray):
                if self.gripper.ndim != 1:
                    raise EncodingError("batched gripper must be a 1-D f64 array")
                if batch is not None and self.gripper.shape[0] != batch:
                    raise EncodingError(f"gripper batch {self.gripper.shape[0]} != {batch}")
                if batch is None:
                    batch = self.gripper.shape[0]
            elif self.gripper is not None:
                raise EncodingError("batched gripper must be an array or None")
            if batch is not None and batch < 1:
                raise EncodingError("batch size must be >= 1")
        elif isinstance(self.gripper, np.ndarray):
            raise EncodingError("unbatched gripper must be a scalar or None")

    @property
    def batch_size(self) -> int | None:
        if not self.batched:
            return None
        for cam in self.cameras.values():
            return cam.shape[0]
        if isinstance(self.gripper, np.ndarray):
            return self.gripper.shape[0]
        return None


@dataclass(eq=False)
class Act:
    """One action: dense action vector, done flag and info map."""

    action: np.ndarray
    done: bool = False
    info: dict = field(default_factory=dict)

    def validate(self, batched: bool = False):
        if not isinstance(self.action, np.ndarray):
            raise EncodingError("action must be an array")
        if self.action.dtype not in (np.float32, np.float64):
            raise EncodingError(f"action dtype must be f32 or f64, got {self.action.dtype}")
        rank = 2 if batched else 1
        if self.action.ndim != rank or self.action.shape[-1] < 1:
            kind = "BxD" if batched else "D"
            raise EncodingError(f"action must be {kind}, got shape {self.action.shape}")


def encode_obs(obs: Obs, policy: CompressionPolicy | None = None) -> Value:
    """Render ``obs`` as a value map, compressing eligible cameras per ``policy``.

    Only unbatched u8 HxWx3 cameras with at least ``policy.min_pixels`` pixels
    are compressed; everything else travels raw.
    """
    obs.validate()
    compress = policy is not None and policy.enabled and not obs.batched
    cameras: dict[str, Value] = {}
    for name, cam in obs.cameras.items():
        if compress and cam.shape[0] * cam.shape[1] >= policy.min_pixels:
            cameras[name] = CompressedImage("jpeg", compress_image(cam, policy.quality))
        else:
            cameras[name] = cam
    gripper: Value = obs.gripper
    if isinstance(gripper, np.ndarray):
        gripper = np.asarray(gripper, dtype=np.float64)
    elif gripper is not None:
        gripper = float(gripper)
    return {"cameras": cameras, "gripper": gripper, "info": obs.info}


def obs_has_compressed_cameras(encoded: Value) -> bool:
    cams = encoded.get("cameras", {}) if isinstance(encoded, dict) else {}
    return any(isinstance(v, CompressedImage) for v in cams.values())


def decode_obs(value: Value, batched: bool | None = None) -> Obs:
    """Rebuild an :class:`Obs` from its value map, decompressing any images."""
    if not isinstance(value, dict):
        raise DecodingError("encoded observation must be a map")
    raw_cams = value.get("cameras", {})
    if not isinstance(raw_cams, dict):
        raise DecodingError("observation 'cameras' must be a map")
    cameras: dict[str, np.ndarray] = {}
    for name, cam in raw_cams.items():
        if isinstance(cam, CompressedImage):
            cameras[name] = decompress_image(cam.data)
        elif isinstance(cam, np.ndarray):
            cameras[name] = cam
        else:
            raise DecodingError(f"camera {name!r} is neither an array nor an image")
    gripper = value.get("gripper")
    if gripper is not None and not isinstance(gripper, (float, np.ndarray)):
        raise DecodingError("observation 'gripper' must be real, array or null")
    info = value.get("info", {})
    if not isinstance(info, dict):
        raise DecodingError("observation 'info' must be a map")
    if batched is None:
        batched = any(c.ndim == 4 for c in cameras.values()) or isinstance(gripper, np.ndarray)
    obs = Obs(cameras=cameras, gripper=gripper, info=info, batched=batched)
    obs.validate()
    return obs


def encode_act(act: Act, batched: bool = False) -> Value:
    """Render ``act`` as a value map; actions are never compressed."""
    act.validate(batched)
    return {"action": act.action, "done": bool(act.done), "info": act.info}


def decode_act(value: Value, batched: bool = False) -> Act:
    """Rebuild an :class:`Act` from its value map."""
    if not isinstance(value, dict):
        raise DecodingError("encoded action must be a map")
    if "action" not in value:
        raise DecodingError("encoded action is missing the 'action' key")
    action = value["action"]
    if not isinstance(action, np.ndarray):
        raise DecodingError("'action' must be an array")
    done = value.get("done", False)
    if not isinstance(done, bool):
        raise DecodingError("'done' must be a bool")
    info = value.get("info", {})
    if not isinstance(info, dict):
        raise DecodingError("action 'info' must be a map")
    act = Act(action=action, done=done, info=info)
    try:
        act.validate(batched)
    except EncodingError as e:
        raise DecodingError(str(e)) from e
    return act


def obs_equal(a: Obs, b: Obs) -> bool:
    """Structural equality of two observations (array data compared bit-exactly)."""
    return (
        a.batched == b.batched
        and values_equal(dict(a.cameras), dict(b.cameras))
        and values_equal(a.gripper, b.gripper)
        and values_equal(a.info, b.info)
    )


def act_equal(a: Act, b: Act) -> bool:
    """Structural equality of two actions."""
    return (
        a.done == b.done
        and values_equal(a.action, b.action)
        and values_equal(a.info, b.info)
    )
