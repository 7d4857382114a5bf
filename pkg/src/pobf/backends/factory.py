"""Instantiate role backends from endpoint URLs.

``http(s)://`` URLs get the resilient HTTP clients. ``mock://`` URLs get the
in-process deterministic mocks, seeded with the run seed, so full pipeline
runs work with no services at all:

    mock://caption, mock://inpaint, mock://embed[?dim=64]
    mock://hash                                  (grounder, needs no labels)
    mock://oracle?manifest=PATH[&images_root=DIR][&empty=cx,cy,w,h]
    mock://noisy?sigma=S&manifest=PATH[&images_root=DIR]
    mock://prior?box=cx,cy,w,h
"""

from dataclasses import dataclass
from pathlib import Path
from urllib.parse import parse_qs, urlparse

from ..dataset import load_manifest
from ..errors import ConfigError
from .client import HttpCaptioner, HttpEmbedder, HttpGrounder, HttpInpainter, health_check
from .mock import (
    FixedPriorGrounder,
    HashGrounder,
    MockCaptioner,
    MockEmbedder,
    MockInpainter,
    NoisyGrounder,
    OracleGrounder,
)
from .protocol import BackendEndpoint

_HTTP_CLIENTS = {
    "caption": HttpCaptioner,
    "inpaint": HttpInpainter,
    "ground": HttpGrounder,
    "embed": HttpEmbedder,
}


def _single(params: dict, key: str, default=None):
    values = params.get(key)
    return values[0] if values else default


def _parse_box(text: str):
    parts = [float(p) for p in text.split(",")]
    if len(parts) != 4:
        raise ConfigError(f"box parameter needs 4 comma-separated floats, got {text!r}")
    return tuple(parts)


def _mock_grounder(kind: str, params: dict, seed: int, base_dir: Path):
    if kind in ("ground", "hash"):
        return HashGrounder(seed=seed)
    if kind in ("oracle", "noisy"):
        manifest_arg = _single(params, "manifest")
        if not manifest_arg:
            raise ConfigError(f"mock://{kind} needs a manifest=PATH parameter")
        manifest_path = Path(manifest_arg)
        if not manifest_path.is_absolute():
            manifest_path = base_dir / manifest_path
        manifest = load_manifest(manifest_path)
        images_root = _single(params, "images_root", str(manifest_path.parent))
        empty = _single(params, "empty")
        oracle = OracleGrounder.from_manifest(
            manifest, images_root, empty_text_box=_parse_box(empty) if empty else None
        )
        if kind == "oracle":
            return oracle
        return NoisyGrounder(oracle, sigma=float(_single(params, "sigma", "0.05")), seed=seed)
    if kind == "prior":
        box = _single(params, "box")
        if not box:
            raise ConfigError("mock://prior needs a box=cx,cy,w,h parameter")
        return FixedPriorGrounder(_parse_box(box))
    raise ConfigError(f"unknown mock grounder kind {kind!r}")


def build_backend(role: str, endpoint: BackendEndpoint, seed: int,
                  base_dir: str | Path = "."):
    url = urlparse(endpoint.base_url)
    if url.scheme in ("http", "https"):
        return _HTTP_CLIENTS[role](endpoint)
    if url.scheme != "mock":
        raise ConfigError(f"unsupported backend scheme {url.scheme!r} for role {role}")
    kind = url.netloc or role
    params = parse_qs(url.query)
    if role == "caption":
        if kind != "caption":
            raise ConfigError(f"role caption cannot use mock kind {kind!r}")
        return MockCaptioner(seed=seed)
    if role == "inpaint":
        if kind != "inpaint":
            raise ConfigError(f"role inpaint cannot use mock kind {kind!r}")
        return MockInpainter(seed=seed)
    if role == "embed":
        if kind != "embed":
            raise ConfigError(f"role embed cannot use mock kind {kind!r}")
        return MockEmbedder(seed=seed, dim=int(_single(params, "dim", "64")))
    return _mock_grounder(kind, params, seed, Path(base_dir))


@dataclass
class BackendSet:
    captioner: object | None = None
    inpainter: object | None = None
    grounder: object | None = None
    embedder: object | None = None


def is_http(endpoint: BackendEndpoint) -> bool:
    return urlparse(endpoint.base_url).scheme in ("http", "https")


def check_role_health(role: str, endpoint: BackendEndpoint) -> None:
    """Verify an HTTP endpoint is up and advertises the role; mocks pass."""
    if not is_http(endpoint):
        return
    roles = health_check(endpoint)
    if role not in roles:
        from ..errors import BackendUnavailable

        raise BackendUnavailable(
            f"{endpoint.base_url} does not serve role {role!r} (has {roles})"
        )
