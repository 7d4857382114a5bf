"""Model backend interfaces: wire protocol, HTTP clients, deterministic mocks."""

from .client import (
    HttpCaptioner,
    HttpEmbedder,
    HttpGrounder,
    HttpInpainter,
    enforce_box_preservation,
    health_check,
    parallel_map,
)
from .mock import (
    FixedPriorGrounder,
    HashGrounder,
    MockCaptioner,
    MockEmbedder,
    MockInpainter,
    NoisyGrounder,
    OracleGrounder,
)
from .protocol import (
    ENV_BACKEND_URL,
    ROLES,
    BackendEndpoint,
    Captioner,
    Embedder,
    GenerationParams,
    Grounder,
    Inpainter,
    derive_seed,
    prepare_caption_image,
)

__all__ = [
    "ENV_BACKEND_URL",
    "ROLES",
    "BackendEndpoint",
    "Captioner",
    "Embedder",
    "FixedPriorGrounder",
    "GenerationParams",
    "Grounder",
    "HashGrounder",
    "HttpCaptioner",
    "HttpEmbedder",
    "HttpGrounder",
    "HttpInpainter",
    "Inpainter",
    "MockCaptioner",
    "MockEmbedder",
    "MockInpainter",
    "NoisyGrounder",
    "OracleGrounder",
    "derive_seed",
    "enforce_box_preservation",
    "health_check",
    "parallel_map",
    "prepare_caption_image",
]
