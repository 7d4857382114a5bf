"""FastAPI application implementing the backend wire protocol.

Endpoints (field names are the contract):

* ``POST /caption``  {"image_b64", "crop", "top_p", "seed"} -> {"caption"}
* ``POST /inpaint``  {"image_b64", "mask_b64", "prompt", "strength", "steps",
  "guidance_scale", "seed"} -> {"image_b64"}
* ``POST /ground``   {"image_b64", "text"} -> {"box": [cx, cy, w, h] in [0,1]}
* ``POST /embed``    {"text" | "image_b64"} -> {"vector": [...]}
* ``GET /healthz``   -> {"ok": true, "roles": [...]}

Malformed requests return 400 with {"error": ...}; a role that the current
mode cannot serve returns 501. ``flaky_first`` (testing aid) answers 503 the
first N times each distinct X-Request-Id is seen so clients can exercise
their retry path against a live server.
"""

import base64
import json
import threading
from dataclasses import dataclass, field
from pathlib import Path

from fastapi import Body, FastAPI, Request
from fastapi.responses import JSONResponse

from . import stubs
from .real import RealBackends

ROLES = ("caption", "inpaint", "ground", "embed")

GROUND_KINDS = ("oracle", "noisy", "prior")


@dataclass
class StubConfig:
    seed: int = 0
    embed_dim: int = 64
    ground_kind: str = "oracle"
    sigma: float = 0.05
    prior_box: tuple[float, float, float, float] | None = None
    empty_text_box: tuple[float, float, float, float] | None = None
    oracle_table: dict = field(default_factory=dict)  # sha256 hex -> normalized box
    flaky_first: int = 0

    def __post_init__(self):
        if self.ground_kind not in GROUND_KINDS:
            raise ValueError(f"ground_kind must be one of {GROUND_KINDS}")
        if self.ground_kind == "prior" and self.prior_box is None:
            raise ValueError("ground_kind 'prior' needs prior_box")


class BadRequest(Exception):
    pass


def load_oracle_table(manifest_path: str | Path, images_root: str | Path | None = None):
    """Build the image-hash lookup from a manifest JSONL plus its images.

    Manifest schema: one JSON object per line with ``image_path``,
    ``image_size`` [W, H] and ``box`` [cx, cy, w, h] in absolute pixels.
    Boxes are normalized here; lookups key on the exact file bytes.
    """
    manifest_path = Path(manifest_path)
    root = Path(images_root) if images_root else manifest_path.parent
    table = {}
    with manifest_path.open("r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            obj = json.loads(line)
            width, height = obj["image_size"]
            cx, cy, w, h = obj["box"]
            data = (root / obj["image_path"]).read_bytes()
            table[stubs.image_sha(data)] = (cx / width, cy / height, w / width, h / height)
    return table


def _b64(field_value, name: str) -> bytes:
    if not isinstance(field_value, str) or not field_value:
        raise BadRequest(f"{name} must be a base64 string")
    try:
        return base64.b64decode(field_value, validate=True)
    except Exception as exc:
        raise BadRequest(f"{name} is not valid base64: {exc}") from exc


def _number(req: dict, name: str, kind=float):
    if name not in req:
        raise BadRequest(f"missing field {name!r}")
    try:
        return kind(req[name])
    except (TypeError, ValueError) as exc:
        raise BadRequest(f"field {name!r} must be a number") from exc


def create_app(config: StubConfig | None = None, mode: str = "stub",
               real: RealBackends | None = None) -> FastAPI:
    config = config or StubConfig()
    real = real or RealBackends()
    app = FastAPI(title="pobf adapter server", docs_url=None, redoc_url=None)

    flaky_lock = threading.Lock()
    flaky_seen: dict[str, int] = {}

    def flaky_gate(request: Request):
        if config.flaky_first <= 0:
            return None
        request_id = request.headers.get("X-Request-Id", "")
        with flaky_lock:
            seen = flaky_seen.get(request_id, 0)
            flaky_seen[request_id] = seen + 1
        if seen < config.flaky_first:
            return JSONResponse({"error": "injected failure"}, status_code=503)
        return None

    def error(status: int, message: str) -> JSONResponse:
        return JSONResponse({"error": message}, status_code=status)

    @app.exception_handler(BadRequest)
    async def bad_request_handler(_request, exc: BadRequest):
        return error(400, str(exc))

    @app.get("/healthz")
    async def healthz():
        return {"ok": True, "roles": list(ROLES)}

    @app.post("/caption")
    async def caption(request: Request, req: dict = Body(...)):
        gate = flaky_gate(request)
        if gate:
            return gate
        image = _b64(req.get("image_b64"), "image_b64")
        top_p = _number(req, "top_p")
        seed = _number(req, "seed", int)
        if not 0.0 < top_p <= 1.0:
            raise BadRequest(f"top_p {top_p} outside (0, 1]")
        crop = req.get("crop")
        if crop is not None:
            if not isinstance(crop, list) or len(crop) != 4:
                raise BadRequest("crop must be null or [cx, cy, w, h]")
            image = stubs.crop_image_bytes(image, tuple(float(v) for v in crop))
        if mode != "stub":
            return real.caption_or_501(image, top_p, seed)
        return {"caption": stubs.stub_caption(image, top_p, seed, config.seed)}

    @app.post("/inpaint")
    async def inpaint(request: Request, req: dict = Body(...)):
        gate = flaky_gate(request)
        if gate:
            return gate
        image = _b64(req.get("image_b64"), "image_b64")
        mask_png = _b64(req.get("mask_b64"), "mask_b64")
        prompt = req.get("prompt")
        if not isinstance(prompt, str) or not prompt:
            raise BadRequest("prompt must be a non-empty string")
        strength = _number(req, "strength")
        steps = _number(req, "steps", int)
        guidance = _number(req, "guidance_scale")
        seed = _number(req, "seed", int)
        if mode != "stub":
            return real.inpaint_or_501(image, mask_png, prompt, strength, steps,
                                       guidance, seed)
        try:
            out = stubs.stub_inpaint(image, mask_png, prompt, strength, steps,
                                     guidance, seed, config.seed)
        except ValueError as exc:
            raise BadRequest(str(exc)) from exc
        return {"image_b64": base64.b64encode(out).decode("ascii")}

    @app.post("/ground")
    async def ground(request: Request, req: dict = Body(...)):
        gate = flaky_gate(request)
        if gate:
            return gate
        image = _b64(req.get("image_b64"), "image_b64")
        text = req.get("text")
        if not isinstance(text, str):
            raise BadRequest("text must be a string (may be empty)")
        if mode != "stub":
            return real.ground_or_501(image, text)
        if text == "" and config.empty_text_box is not None:
            return {"box": list(config.empty_text_box)}
        if config.ground_kind == "prior":
            return {"box": list(config.prior_box)}
        key = stubs.image_sha(image)
        if key not in config.oracle_table:
            raise BadRequest(f"unknown image {key[:12]} (not in the oracle manifest)")
        base = config.oracle_table[key]
        if config.ground_kind == "noisy":
            return {"box": list(stubs.noisy_box(base, config.sigma, text, image,
                                                config.seed))}
        return {"box": list(base)}

    @app.post("/embed")
    async def embed(request: Request, req: dict = Body(...)):
        gate = flaky_gate(request)
        if gate:
            return gate
        text = req.get("text")
        image_b64 = req.get("image_b64")
        if (text is None) == (image_b64 is None):
            raise BadRequest("exactly one of text or image_b64 must be set")
        if mode != "stub":
            return real.embed_or_501(text, image_b64)
        if text is not None:
            if not isinstance(text, str):
                raise BadRequest("text must be a string")
            vec = stubs.stub_embedding(b"text", text.encode("utf-8"),
                                       config.seed, config.embed_dim)
        else:
            vec = stubs.stub_embedding(b"image", _b64(image_b64, "image_b64"),
                                       config.seed, config.embed_dim)
        return {"vector": [float(v) for v in vec]}

    return app
