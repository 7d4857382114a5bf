"""Image byte codecs used at every pipeline boundary.

All pipeline stages exchange *encoded* images (PNG/JPEG bytes) and decode to
uint8 RGB arrays only while computing. PNG encoding goes through one helper
so candidate stores stay byte-deterministic.
"""

import io

import numpy as np
from PIL import Image


def decode_rgb(data: bytes) -> np.ndarray:
    """Decode image bytes to a (H, W, 3) uint8 array."""
    with Image.open(io.BytesIO(data)) as im:
        return np.asarray(im.convert("RGB"), dtype=np.uint8)


def decode_gray(data: bytes) -> np.ndarray:
    """Decode image bytes to a (H, W) uint8 array."""
    with Image.open(io.BytesIO(data)) as im:
        return np.asarray(im.convert("L"), dtype=np.uint8)


def encode_png(arr: np.ndarray) -> bytes:
    """Encode a (H, W, 3) uint8 array as PNG bytes (deterministic)."""
    buf = io.BytesIO()
    Image.fromarray(np.ascontiguousarray(arr), mode="RGB").save(buf, format="PNG")
    return buf.getvalue()


def encode_gray_png(arr: np.ndarray) -> bytes:
    """Encode a (H, W) uint8 array as 8-bit grayscale PNG bytes."""
    buf = io.BytesIO()
    Image.fromarray(np.ascontiguousarray(arr), mode="L").save(buf, format="PNG")
    return buf.getvalue()


def image_size(data: bytes) -> tuple[int, int]:
    """(W, H) of encoded image bytes without decoding pixel data."""
    with Image.open(io.BytesIO(data)) as im:
        return im.size
