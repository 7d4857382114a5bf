"""Deterministic in-process backends for tests and mock pipeline runs.

Every behavior is a pure function of (request content, backend seed). The
stub adapter server reimplements these rules bit-for-bit behind the wire
protocol; the shared fixture file ``fixtures/protocol_conformance.json``
keeps the two implementations from drifting.

Stub derivation rules (normative for both implementations):

* RNG: ``numpy.random.default_rng(int.from_bytes(sha256(m)[:8], "big"))``
  where ``m`` joins the material parts below with a 0x1f byte.
* caption: parts ``(b"caption", str(seed), str(request_seed), repr(top_p),
  image_bytes_as_sent)``; text is ``"a {ADJ} {NOUN} near the {PLACE}"`` with
  three successive ``rng.integers(0, 16)`` draws into the word tables.
* inpaint: parts ``(b"inpaint", str(seed), str(request_seed), repr(strength),
  str(steps), repr(guidance_scale), prompt_utf8, image_bytes)``; fill is
  ``rng.integers(0, 256, (H, W, 3), uint8)`` composed only where mask == 1;
  an all-zero mask echoes the input bytes verbatim.
* ground (noisy): parts ``(b"ground-noisy", str(seed), repr(sigma),
  text_utf8, image_bytes)``; reply is the oracle box plus
  ``rng.normal(0.0, sigma, 4)``, clipped to [0, 1].
* ground (hash): parts ``(b"ground-hash", str(seed), text_utf8,
  image_bytes)``; cx, cy are ``rng.uniform(0.15, 0.85, 2)`` and w, h are
  ``rng.uniform(0.1, 0.5, 2)``.
* embed: parts ``(b"embed", str(seed), b"text"|b"image", payload_bytes)``;
  vector is ``rng.standard_normal(dim)`` L2-normalized.

Oracle grounders key their lookup table on the sha256 hex of the request
image bytes exactly as received.
"""

import hashlib
import logging
from pathlib import Path

import numpy as np

from .. import imgio
from ..dataset import BBox, Manifest
from ..errors import BackendMisbehavior, GeometryError
from ..geometry import RasterMask, normalize_box
from .protocol import GenerationParams, parse_normalized_box, prepare_caption_image

logger = logging.getLogger(__name__)

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


def image_sha(image: bytes) -> str:
    return hashlib.sha256(image).hexdigest()


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
    mask_bits: np.ndarray,
    prompt: str,
    strength: float,
    steps: int,
    guidance_scale: float,
    request_seed: int,
    seed: int,
) -> bytes:
    if int(mask_bits.sum()) == 0:
        return image
    pixels = imgio.decode_rgb(image)
    if mask_bits.shape != pixels.shape[:2]:
        raise GeometryError(
            f"mask {mask_bits.shape} does not match image {pixels.shape[:2]}"
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
    out = np.where(mask_bits[:, :, None] == 1, noise, pixels)
    return imgio.encode_png(out)


def stub_embedding(tag: bytes, payload: bytes, seed: int, dim: int) -> np.ndarray:
    rng = stub_rng(b"embed", str(seed).encode(), tag, payload)
    vec = rng.standard_normal(dim)
    return vec / np.linalg.norm(vec)


class MockCaptioner:
    """Seeded template captioner."""

    def __init__(self, seed: int = 0):
        self.seed = seed

    def caption(self, image: bytes, crop: BBox | None, params: GenerationParams) -> str:
        payload = prepare_caption_image(image, crop)
        return stub_caption(payload, params.top_p, params.seed, self.seed)


class MockInpainter:
    """Seeded noise fill that respects the mask."""

    def __init__(self, seed: int = 0):
        self.seed = seed

    def inpaint(self, image: bytes, mask: RasterMask, prompt: str,
                params: GenerationParams) -> bytes:
        return stub_inpaint(
            image, mask.bits, prompt,
            params.strength, params.steps, params.guidance_scale,
            params.seed, self.seed,
        )


class FixedPriorGrounder:
    """Always answers with one configured normalized box."""

    def __init__(self, box: tuple[float, float, float, float]):
        self.box = parse_normalized_box(list(box))

    def ground(self, image: bytes, text: str) -> tuple[float, float, float, float]:
        return self.box


class OracleGrounder:
    """Lookup table from request-image sha256 to a normalized box.

    With ``empty_text_box`` set, an empty-string query returns that prior
    instead of the table box.
    """

    def __init__(self, table=None, empty_text_box=None):
        self.table: dict[str, tuple[float, float, float, float]] = dict(table or {})
        self.empty_text_box = (
            parse_normalized_box(list(empty_text_box)) if empty_text_box else None
        )

    @classmethod
    def from_manifest(cls, manifest: Manifest, images_root: str | Path,
                      empty_text_box=None) -> "OracleGrounder":
        root = Path(images_root)
        oracle = cls(empty_text_box=empty_text_box)
        for record in manifest.records:
            data = (root / record.image_path).read_bytes()
            oracle.register(data, normalize_box(record.box, record.image_size))
        return oracle

    def register(self, image: bytes, box: tuple[float, float, float, float]) -> None:
        self.table[image_sha(image)] = parse_normalized_box(list(box))

    def ground(self, image: bytes, text: str) -> tuple[float, float, float, float]:
        if text == "" and self.empty_text_box is not None:
            return self.empty_text_box
        key = image_sha(image)
        if key not in self.table:
            raise BackendMisbehavior(f"oracle grounder has no box for image {key[:12]}")
        return self.table[key]


class NoisyGrounder:
    """Oracle box plus a documented deterministic gaussian perturbation."""

    def __init__(self, base: OracleGrounder, sigma: float, seed: int = 0):
        self.base = base
        self.sigma = float(sigma)
        self.seed = seed

    def ground(self, image: bytes, text: str) -> tuple[float, float, float, float]:
        box = np.asarray(self.base.ground(image, text), dtype=np.float64)
        rng = stub_rng(
            b"ground-noisy",
            str(self.seed).encode(),
            repr(self.sigma).encode(),
            text.encode("utf-8"),
            image,
        )
        noisy = np.clip(box + rng.normal(0.0, self.sigma, 4), 0.0, 1.0)
        return tuple(float(v) for v in noisy)


class HashGrounder:
    """Pseudo-random but fully deterministic box; needs no ground truth.

    The workhorse for end-to-end mock runs where candidate images have no
    oracle entry.
    """

    def __init__(self, seed: int = 0):
        self.seed = seed

    def ground(self, image: bytes, text: str) -> tuple[float, float, float, float]:
        rng = stub_rng(
            b"ground-hash", str(self.seed).encode(), text.encode("utf-8"), image
        )
        cx, cy = rng.uniform(0.15, 0.85, 2)
        w, h = rng.uniform(0.1, 0.5, 2)
        return (float(cx), float(cy), float(w), float(h))


class MockEmbedder:
    """Seeded hash-to-unit-sphere embedder."""

    def __init__(self, seed: int = 0, dim: int = 64):
        self.seed = seed
        self.dim = dim

    def embed(self, *, text: str | None = None, image: bytes | None = None) -> np.ndarray:
        if (text is None) == (image is None):
            raise ValueError("embed() takes exactly one of text= or image=")
        if text is not None:
            return stub_embedding(b"text", text.encode("utf-8"), self.seed, self.dim)
        return stub_embedding(b"image", image, self.seed, self.dim)
