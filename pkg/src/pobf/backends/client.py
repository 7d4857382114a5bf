"""Resilient HTTP clients for the four backend roles.

Retries are bounded and idempotent: each logical request carries one
client-generated ``X-Request-Id`` that is reused across retries, so a
deterministic server answers a retried request identically. Timeouts,
connection failures, 429 and 5xx retry with exponential backoff; anything
else surfaces immediately.
"""

import logging
import time
import uuid
from concurrent.futures import ThreadPoolExecutor

import httpx
import numpy as np

from .. import imgio, kernels
from ..dataset import BBox
from ..errors import BackendMisbehavior, BackendUnavailable, GeometryError
from ..geometry import RasterMask
from .protocol import (
    BackendEndpoint,
    GenerationParams,
    decode_b64,
    encode_b64,
    parse_caption,
    parse_normalized_box,
    parse_vector,
    prepare_caption_image,
)

logger = logging.getLogger(__name__)

RETRYABLE_STATUS = (429, 500, 502, 503, 504)
BACKOFF_BASE_SECONDS = 0.05


class _HttpCore:
    """One endpoint, one httpx client, bounded retries."""

    def __init__(self, endpoint: BackendEndpoint, transport: httpx.BaseTransport | None = None):
        self.endpoint = endpoint
        self._client = httpx.Client(
            base_url=endpoint.base_url,
            timeout=endpoint.timeout,
            transport=transport,
        )

    def close(self):
        self._client.close()

    def post_json(self, path: str, payload: dict) -> dict:
        request_id = uuid.uuid4().hex
        attempts = self.endpoint.max_retries + 1
        last_reason = "no attempt made"
        for attempt in range(attempts):
            if attempt:
                time.sleep(BACKOFF_BASE_SECONDS * (2 ** (attempt - 1)))
            try:
                resp = self._client.post(
                    path, json=payload, headers={"X-Request-Id": request_id}
                )
            except httpx.HTTPError as exc:
                last_reason = f"{type(exc).__name__}: {exc}"
                logger.warning("%s%s attempt %d/%d failed: %s",
                               self.endpoint.base_url, path, attempt + 1, attempts, last_reason)
                continue
            if resp.status_code in RETRYABLE_STATUS:
                last_reason = f"HTTP {resp.status_code}"
                logger.warning("%s%s attempt %d/%d failed: %s",
                               self.endpoint.base_url, path, attempt + 1, attempts, last_reason)
                continue
            if resp.status_code != 200:
                raise BackendMisbehavior(
                    f"{path} returned HTTP {resp.status_code}: {resp.text[:200]}"
                )
            try:
                return resp.json()
            except ValueError as exc:
                raise BackendMisbehavior(f"{path} returned non-JSON body") from exc
        raise BackendUnavailable(
            f"{self.endpoint.base_url}{path} unavailable after {attempts} attempts ({last_reason})"
        )

    def get_json(self, path: str) -> dict:
        try:
            resp = self._client.get(path)
        except httpx.HTTPError as exc:
            raise BackendUnavailable(f"{self.endpoint.base_url}{path}: {exc}") from exc
        if resp.status_code != 200:
            raise BackendUnavailable(
                f"{self.endpoint.base_url}{path} returned HTTP {resp.status_code}"
            )
        return resp.json()


def enforce_box_preservation(original: bytes, mask: RasterMask, candidate: bytes) -> bytes:
    """Overwrite every mask=0 pixel of the candidate with the original pixel.

    The pipeline's label-alignment guarantee must hold even against an
    imperfect inpainting backend, so the client re-imposes it.
    """
    src = imgio.decode_rgb(original)
    out = imgio.decode_rgb(candidate).copy()
    if out.shape != src.shape:
        raise BackendMisbehavior(
            f"inpaint reply is {out.shape[1]}x{out.shape[0]}, "
            f"expected {src.shape[1]}x{src.shape[0]}"
        )
    differed = kernels.restore_where_keep(out, src, mask.bits)
    if differed:
        logger.warning("inpaint backend altered %d preserved pixels; restored", differed)
    return imgio.encode_png(out)


class HttpCaptioner:
    def __init__(self, endpoint: BackendEndpoint, transport=None):
        self._core = _HttpCore(endpoint, transport)

    def caption(self, image: bytes, crop: BBox | None, params: GenerationParams) -> str:
        payload = prepare_caption_image(image, crop)
        reply = self._core.post_json(
            "/caption",
            {
                "image_b64": encode_b64(payload),
                "crop": None,
                "top_p": params.top_p,
                "seed": params.seed,
            },
        )
        return parse_caption(reply.get("caption"))


class HttpInpainter:
    def __init__(self, endpoint: BackendEndpoint, transport=None):
        self._core = _HttpCore(endpoint, transport)

    def inpaint(self, image: bytes, mask: RasterMask, prompt: str,
                params: GenerationParams) -> bytes:
        if not prompt:
            raise ValueError("inpaint prompt must be non-empty")
        width, height = imgio.image_size(image)
        if (mask.width, mask.height) != (width, height):
            raise GeometryError(
                f"mask {mask.width}x{mask.height} does not match image {width}x{height}"
            )
        if mask.ones == 0:
            # Nothing to regenerate; skip the network round trip entirely.
            return image
        reply = self._core.post_json(
            "/inpaint",
            {
                "image_b64": encode_b64(image),
                "mask_b64": encode_b64(mask.to_png_bytes()),
                "prompt": prompt,
                "strength": params.strength,
                "steps": params.steps,
                "guidance_scale": params.guidance_scale,
                "seed": params.seed,
            },
        )
        if "image_b64" not in reply:
            raise BackendMisbehavior("inpaint reply missing image_b64")
        return enforce_box_preservation(image, mask, decode_b64(reply["image_b64"]))


class HttpGrounder:
    def __init__(self, endpoint: BackendEndpoint, transport=None):
        self._core = _HttpCore(endpoint, transport)

    def ground(self, image: bytes, text: str) -> tuple[float, float, float, float]:
        reply = self._core.post_json(
            "/ground", {"image_b64": encode_b64(image), "text": text}
        )
        return parse_normalized_box(reply.get("box"))


class HttpEmbedder:
    def __init__(self, endpoint: BackendEndpoint, transport=None):
        self._core = _HttpCore(endpoint, transport)

    def embed(self, *, text: str | None = None, image: bytes | None = None) -> np.ndarray:
        if (text is None) == (image is None):
            raise ValueError("embed() takes exactly one of text= or image=")
        reply = self._core.post_json(
            "/embed",
            {"text": text, "image_b64": encode_b64(image) if image is not None else None},
        )
        return parse_vector(reply.get("vector"))


def health_check(endpoint: BackendEndpoint, transport=None) -> list[str]:
    """GET /healthz; returns the advertised roles or raises BackendUnavailable."""
    core = _HttpCore(endpoint, transport)
    try:
        reply = core.get_json("/healthz")
    finally:
        core.close()
    if not reply.get("ok"):
        raise BackendUnavailable(f"{endpoint.base_url}/healthz reports not ok")
    return list(reply.get("roles", []))


def parallel_map(fn, items, parallelism: int):
    """Run ``fn(item)`` with bounded concurrency.

    Returns ``[(item, result_or_exception), ...]`` in input order, so callers
    decide how failures propagate and completion order never leaks into
    outputs.
    """
    if parallelism <= 1 or len(items) <= 1:
        out = []
        for item in items:
            try:
                out.append((item, fn(item)))
            except Exception as exc:  # noqa: BLE001 - caller triages
                out.append((item, exc))
        return out
    results = {}

    def run(index_item):
        index, item = index_item
        try:
            results[index] = (item, fn(item))
        except Exception as exc:  # noqa: BLE001 - caller triages
            results[index] = (item, exc)

    with ThreadPoolExecutor(max_workers=parallelism) as pool:
        list(pool.map(run, enumerate(items)))
    return [results[i] for i in range(len(items))]
