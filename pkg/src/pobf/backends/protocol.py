"""Wire protocol contract shared by every model backend.

JSON over HTTP POST, images as base64. Field names are part of the contract:

* ``POST /caption``  {"image_b64", "crop", "top_p", "seed"} -> {"caption"}
* ``POST /inpaint``  {"image_b64", "mask_b64", "prompt", "strength", "steps",
  "guidance_scale", "seed"} -> {"image_b64"}
* ``POST /ground``   {"image_b64", "text"} -> {"box": [cx, cy, w, h] in [0,1]}
* ``POST /embed``    {"text" | "image_b64"} -> {"vector": [...]}
* ``GET /healthz``   -> {"ok": true, "roles": [...]}

``POBF_BACKEND_URL`` overrides configured base URLs for roles without an
explicit per-role URL.
"""

import base64
import hashlib
from dataclasses import dataclass, replace
from typing import Protocol

import numpy as np

from ..dataset import BBox
from ..errors import BackendMisbehavior, ConfigError, ProtocolError
from ..geometry import RasterMask

ROLES = ("caption", "inpaint", "ground", "embed")

ENV_BACKEND_URL = "POBF_BACKEND_URL"

MAX_SEED = 2**64 - 1


@dataclass(frozen=True)
class GenerationParams:
    """Knobs forwarded to the generative backends."""

    strength: float = 0.9
    steps: int = 45
    guidance_scale: float = 7.5
    top_p: float = 0.9
    seed: int = 0

    def __post_init__(self):
        if not 0.0 < self.strength <= 1.0:
            raise ConfigError(f"strength must be in (0, 1], got {self.strength}")
        if self.steps < 1:
            raise ConfigError(f"steps must be >= 1, got {self.steps}")
        if self.guidance_scale <= 0:
            raise ConfigError(f"guidance_scale must be > 0, got {self.guidance_scale}")
        if not 0.0 < self.top_p <= 1.0:
            raise ConfigError(f"top_p must be in (0, 1], got {self.top_p}")
        if not 0 <= self.seed <= MAX_SEED:
            raise ConfigError(f"seed must fit in 64 bits, got {self.seed}")

    def with_seed(self, seed: int) -> "GenerationParams":
        return replace(self, seed=seed)


@dataclass(frozen=True)
class BackendEndpoint:
    """Where a role lives and how hard to lean on it."""

    base_url: str
    timeout: float = 30.0
    max_retries: int = 2
    parallelism: int = 1

    def __post_init__(self):
        if self.parallelism < 1:
            raise ConfigError(f"parallelism must be >= 1, got {self.parallelism}")
        if self.max_retries < 0:
            raise ConfigError(f"max_retries must be >= 0, got {self.max_retries}")


def derive_seed(root_seed: int, *parts) -> int:
    """Stable per-work-item seed: sha256 over root seed and string parts.

    Candidate j of a sample uses ``derive_seed(run_seed, sample_id, str(j))``
    so reruns reproduce and candidates stay independent.
    """
    material = "|".join([str(int(root_seed)), *[str(p) for p in parts]])
    digest = hashlib.sha256(material.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big")


def encode_b64(data: bytes) -> str:
    return base64.b64encode(data).decode("ascii")


def decode_b64(text: str) -> bytes:
    try:
        return base64.b64decode(text, validate=True)
    except Exception as exc:
        raise ProtocolError(f"invalid base64 payload: {exc}") from exc


def parse_normalized_box(obj) -> tuple[float, float, float, float]:
    """Validate a grounder reply; out-of-range components are protocol errors."""
    if not isinstance(obj, (list, tuple)) or len(obj) != 4:
        raise ProtocolError(f"grounder box must be a 4-list, got {obj!r}")
    box = tuple(float(v) for v in obj)
    for v in box:
        if not 0.0 <= v <= 1.0:
            raise ProtocolError(f"grounder box component {v} outside [0, 1]")
    return box


def parse_caption(obj) -> str:
    if not isinstance(obj, str):
        raise ProtocolError(f"caption must be a string, got {type(obj).__name__}")
    if not obj:
        raise BackendMisbehavior("backend returned an empty caption")
    return obj


def parse_vector(obj) -> np.ndarray:
    if not isinstance(obj, list) or not obj:
        raise ProtocolError("embedding vector must be a non-empty list")
    vec = np.asarray(obj, dtype=np.float64)
    norm = float(np.linalg.norm(vec))
    if abs(norm - 1.0) > 1e-6:
        raise BackendMisbehavior(f"embedding norm {norm} not within 1e-6 of 1")
    return vec


def prepare_caption_image(image: bytes, crop: BBox | None) -> bytes:
    """Bytes actually sent for a caption request.

    Cropping happens on the client so the backend only ever sees the region
    it must describe. A crop covering the full pixel grid sends the original
    bytes untouched; the request is then identical to a crop-less one.
    """
    if crop is None:
        return image
    from .. import imgio
    from ..geometry import box_pixel_rect, crop_pixels

    arr = imgio.decode_rgb(image)
    size = (arr.shape[1], arr.shape[0])
    if box_pixel_rect(crop, size) == (0, 0, size[0], size[1]):
        return image
    return imgio.encode_png(crop_pixels(arr, crop))


class Captioner(Protocol):
    def caption(self, image: bytes, crop: BBox | None, params: GenerationParams) -> str: ...


class Inpainter(Protocol):
    def inpaint(self, image: bytes, mask: RasterMask, prompt: str,
                params: GenerationParams) -> bytes: ...


class Grounder(Protocol):
    def ground(self, image: bytes, text: str) -> tuple[float, float, float, float]: ...


class Embedder(Protocol):
    def embed(self, *, text: str | None = None,
              image: bytes | None = None) -> np.ndarray: ...
