"""Deterministic stub behaviors behind the wire protocol.

Derivation rules (must match the engine's in-process mocks bit-for-bit; the
shared conformance fixture is the referee):

* RNG: ``numpy.random.default_rng(int.from_bytes(sha256(m)[:8], "big"))``,
  ``m`` = material parts joined with one 0x1f byte.
* caption material: (b"caption", str(seed), str(request_seed), repr(top_p),
  image bytes as sent); text is "a {ADJ} {NOUN} near the {PLACE}" from three
  successive rng.integers(0, 16) draws.
* inpaint material: (b"inpaint", str(seed), str(request_seed), repr(strength),
  str(steps), repr(guidance_scale), prompt utf-8, image bytes); fill is
  rng.integers(0, 256, (H, W, 3), uint8) where mask == 1. An all-zero mask
  echoes the input bytes verbatim.
* noisy grounder material: (b"ground-noisy", str(seed), repr(sigma),
  text utf-8, image bytes); reply = clip(oracle box + rng.normal(0, sigma, 4), 0, 1).
* embed material: (b"embed", str(seed), b"text"|b"image", payload bytes);
  vector = rng.standard_normal(dim), L2-normalized.

Pixel membership for crops uses pixel centers against the half-open box
rectangle, and a crop covering the whole frame captions the original bytes.
"""

import hashlib
import io
import math

import numpy as np
from PIL import Image

_SEP = b"\x1f"

ADJECTIVES = (
    "red", "blue", "green", "yellow", "small", "large", "bright", "dark",
    "striped", "spotted", "shiny", "old", "wooden", "metal", "round", "tall",
)
NOUNS = (
    "bus", "cat", "dog", "chair", "bottle", "bicycle", "pizza", "umbrella",
    "laptop", "horse", "boat", "clock", "flower", "backpack", "ball", "train",
)
PLACES = (
    "street", "park", "kitchen", "beach", "field", "station", "window",
    "table", "wall", "river", "market", "garden", "doorway", "bridge",
    "hill", "yard",
)


def stub_rng(*parts: bytes) -> np.random.Generator:
    digest = hashlib.sha256(_SEP.join(parts)).digest()
    return np.random.default_rng(int.from_bytes(digest[:8], "big"))


def image_sha(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def decode_rgb(data: bytes) -> np.ndarray:
    with Image.open(io.BytesIO(data)) as im:
        return np.asarray(im.convert("RGB"), dtype=np.uint8)


def decode_gray(data: bytes) -> np.ndarray:
    with Image.open(io.BytesIO(data)) as im:
        return np.asarray(im.convert("L"), dtype=np.uint8)


def encode_png(arr: np.ndarray) -> bytes:
    buf = io.BytesIO()
    Image.fromarray(np.ascontiguousarray(arr), mode="RGB").save(buf, format="PNG")
    return buf.getvalue()


def pixel_span(lo: float, hi: float, limit: int) -> tuple[int, int]:
    i0 = max(0, math.ceil(lo - 0.5))
    i1 = min(limit, math.ceil(hi - 0.5))
    return i0, max(i0, i1)


def crop_image_bytes(data: bytes, crop: tuple[float, float, float, float]) -> bytes:
    """Apply a center/width/height pixel crop; full-frame crops are no-ops."""
    arr = decode_rgb(data)
    height, width = arr.shape[:2]
    cx, cy, w, h = crop
    ix0, ix1 = pixel_span(cx - w / 2.0, cx + w / 2.0, width)
    iy0, iy1 = pixel_span(cy - h / 2.0, cy + h / 2.0, height)
    if (ix0, iy0, ix1, iy1) == (0, 0, width, height):
        return data
    if ix1 == ix0:
        ix0 = max(0, min(ix0, width - 1))
        ix1 = ix0 + 1
    if iy1 == iy0:
        iy0 = max(0, min(iy0, height - 1))
        iy1 = iy0 + 1
    return encode_png(arr[iy0:iy1, ix0:ix1, :])


def stub_caption(image: bytes, top_p: float, request_seed: int, seed: int) -> str:
    rng = stub_rng(
        b"caption",
        str(seed).encode(),
        str(request_seed).encode(),
        repr(float(top_p)).encode(),
        image,
    )
    adj = ADJECTIVES[int(rng.integers(0, 16))]
    noun = NOUNS[int(rng.integers(0, 16))]
    place = PLACES[int(rng.integers(0, 16))]
    return f"a {adj} {noun} near the {place}"


def stub_inpaint(
    image: bytes,
    mask_png: bytes,
    prompt: str,
    strength: float,
    steps: int,
    guidance_scale: float,
    request_seed: int,
    seed: int,
) -> bytes:
    mask_bits = (decode_gray(mask_png) >= 128).astype(np.uint8)
    if int(mask_bits.sum()) == 0:
        return image
    pixels = decode_rgb(image)
    if mask_bits.shape != pixels.shape[:2]:
        raise ValueError(
            f"mask {mask_bits.shape[1]}x{mask_bits.shape[0]} does not match "
            f"image {pixels.shape[1]}x{pixels.shape[0]}"
        )
    rng = stub_rng(
        b"inpaint",
        str(seed).encode(),
        str(request_seed).encode(),
        repr(float(strength)).encode(),
        str(int(steps)).encode(),
        repr(float(guidance_scale)).encode(),
        prompt.encode("utf-8"),
        image,
    )
    noise = rng.integers(0, 256, size=pixels.shape, dtype=np.uint8)
    return encode_png(np.where(mask_bits[:, :, None] == 1, noise, pixels))


def noisy_box(base, sigma: float, text: str, image: bytes, seed: int):
    rng = stub_rng(
        b"ground-noisy",
        str(seed).encode(),
        repr(float(sigma)).encode(),
        text.encode("utf-8"),
        image,
    )
    out = np.clip(np.asarray(base, dtype=np.float64) + rng.normal(0.0, sigma, 4), 0.0, 1.0)
    return tuple(float(v) for v in out)


def stub_embedding(tag: bytes, payload: bytes, seed: int, dim: int):
    rng = stub_rng(b"embed", str(seed).encode(), tag, payload)
    vec = rng.standard_normal(dim)
    return vec / np.linalg.norm(vec)
