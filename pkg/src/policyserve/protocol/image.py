"""JPEG/PNG compression for u8 HxWx3 camera images.

Images are stored and exchanged in RGB channel order; conversion to the
codec's native order happens here so the octets are standard baseline JPEG
(or PNG) that any decoder reproduces as the original RGB pixels.
"""

from __future__ import annotations

import numpy as np

from ..errors import ConfigError, DecodingError, EncodingError

try:
    import cv2

    # Per-camera compression already runs on a thread pool; opencv's own
    # worker threads on top of that oversubscribe small hosts and produce
    # multi-millisecond tail latencies. At 224x224 the internal pool gains
    # nothing, so pin it to one thread.
    cv2.setNumThreads(1)
except ImportError:  # pragma: no cover
    cv2 = None


def _require_cv2():
    if cv2 is None:  # pragma: no cover
        raise RuntimeError("opencv is required for image compression")


def check_image_shape(img: np.ndarray, what: str = "image"):
    """Raise EncodingError unless ``img`` is u8 HxWx3 with H,W >= 1."""
    if not isinstance(img, np.ndarray) or img.dtype != np.uint8:
        raise EncodingError(f"{what} must be a u8 array")
    if img.ndim != 3 or img.shape[2] != 3 or img.shape[0] < 1 or img.shape[1] < 1:
        raise EncodingError(f"{what} must have shape HxWx3, got {img.shape}")


def compress_image(img: np.ndarray, quality: int = 90) -> bytes:
    """Encode a u8 HxWx3 RGB image as baseline JPEG octets."""
    _require_cv2()
    check_image_shape(img)
    if not 1 <= quality <= 100:
        raise ConfigError(f"jpeg quality must be 1-100, got {quality}")
    bgr = cv2.cvtColor(np.ascontiguousarray(img), cv2.COLOR_RGB2BGR)
    ok, encoded = cv2.imencode(".jpg", bgr, [cv2.IMWRITE_JPEG_QUALITY, int(quality)])
    if not ok:  # pragma: no cover
        raise EncodingError("jpeg encoder failed")
    return encoded.tobytes()


def decompress_image(data) -> np.ndarray:
    """Decode JPEG or PNG octets back to a u8 HxWx3 RGB array."""
    _require_cv2()
    raw = np.frombuffer(bytes(data), dtype=np.uint8)
    if raw.size == 0:
        raise DecodingError("empty image stream")
    bgr = cv2.imdecode(raw, cv2.IMREAD_COLOR)
    if bgr is None:
        raise DecodingError("corrupt or unsupported image stream")
    if bgr.ndim != 3 or bgr.shape[2] != 3:
        raise DecodingError(f"image did not decode to HxWx3, got {bgr.shape}")
    return bgr[:, :, ::-1]  # BGR -> RGB as a zero-copy channel flip
