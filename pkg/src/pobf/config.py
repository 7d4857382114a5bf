"""Declarative run configuration.

Config files are TOML (or the equivalent JSON object); flag overrides beat
file values, and ``POBF_BACKEND_URL`` fills the base URL of every role that
got no explicit per-role URL from a flag. Relative paths resolve against the
config file's directory. The effective configuration is snapshotted to
``runs/<run_id>/config.resolved.json`` by every stage.
"""

import json
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .backends.protocol import ENV_BACKEND_URL, ROLES, BackendEndpoint, GenerationParams
from .dataset import SPLITS
from .errors import ConfigError
from .filtering import FILTER_METHODS, FilterWeights
from .mixer import MixPolicy

DEFAULT_MOCK_URLS = {
    "caption": "mock://caption",
    "inpaint": "mock://inpaint",
    "ground": "mock://hash",
    "embed": "mock://embed",
}


@dataclass
class RunConfig:
    manifest_path: Path
    run_id: str
    images_root: Path
    runs_root: Path
    split: str = "train"
    k: int = 4
    seed: int = 0
    parallelism: int = 1
    filter_method: str = "pobf"
    weights: FilterWeights = field(default_factory=FilterWeights)
    gen: GenerationParams = field(default_factory=GenerationParams)
    mix: MixPolicy = field(default_factory=MixPolicy)
    backends: dict[str, BackendEndpoint] = field(default_factory=dict)
    resume: bool = False

    def __post_init__(self):
        if self.k < 1:
            raise ConfigError(f"k must be >= 1, got {self.k}")
        if self.parallelism < 1:
            raise ConfigError(f"parallelism must be >= 1, got {self.parallelism}")
        if self.split not in SPLITS:
            raise ConfigError(f"split must be one of {SPLITS}, got {self.split!r}")
        if self.filter_method not in FILTER_METHODS:
            raise ConfigError(
                f"filter must be one of {FILTER_METHODS}, got {self.filter_method!r}"
            )
        for role in self.backends:
            if role not in ROLES:
                raise ConfigError(f"unknown backend role {role!r}, expected one of {ROLES}")

    @property
    def run_dir(self) -> Path:
        return self.runs_root / self.run_id

    def endpoint(self, role: str) -> BackendEndpoint:
        if role not in ROLES:
            raise ConfigError(f"unknown backend role {role!r}")
        if role in self.backends:
            return self.backends[role]
        return BackendEndpoint(base_url=DEFAULT_MOCK_URLS[role])

    def to_obj(self) -> dict:
        return {
            "manifest": str(self.manifest_path),
            "run_id": self.run_id,
            "images_root": str(self.images_root),
            "runs_root": str(self.runs_root),
            "split": self.split,
            "k": self.k,
            "seed": self.seed,
            "parallelism": self.parallelism,
            "filter": self.filter_method,
            "weights": {
                "lambda1": self.weights.lambda1,
                "lambda2": self.weights.lambda2,
                "lambda_p": self.weights.lambda_p,
            },
            "generation": {
                "strength": self.gen.strength,
                "steps": self.gen.steps,
                "guidance_scale": self.gen.guidance_scale,
                "top_p": self.gen.top_p,
            },
            "mix": {"q": self.mix.q, "mode": self.mix.mode},
            "backends": {
                role: {
                    "url": self.endpoint(role).base_url,
                    "timeout": self.endpoint(role).timeout,
                    "max_retries": self.endpoint(role).max_retries,
                    "parallelism": self.endpoint(role).parallelism,
                }
                for role in ROLES
            },
            "resume": self.resume,
        }

    def snapshot(self) -> Path:
        self.run_dir.mkdir(parents=True, exist_ok=True)
        path = self.run_dir / "config.resolved.json"
        path.write_text(json.dumps(self.to_obj(), indent=2, sort_keys=True), "utf-8")
        return path


def load_config_file(path: str | Path) -> dict:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file {path} does not exist")
    if path.suffix.lower() == ".json":
        return json.loads(path.read_text("utf-8"))
    with path.open("rb") as fh:
        try:
            return tomllib.load(fh)
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"{path}: invalid TOML ({exc})") from exc


def parse_weights(text: str) -> FilterWeights:
    parts = [p.strip() for p in text.split(",")]
    if len(parts) != 3:
        raise ConfigError(f"--weights expects three comma-separated values, got {text!r}")
    try:
        return FilterWeights(*(float(p) for p in parts))
    except ValueError as exc:
        raise ConfigError(f"--weights: {exc}") from exc


def parse_backend_flag(text: str) -> tuple[str, str]:
    if "=" not in text:
        raise ConfigError(f"--backend-url expects ROLE=URL, got {text!r}")
    role, url = text.split("=", 1)
    if role not in ROLES:
        raise ConfigError(f"--backend-url role must be one of {ROLES}, got {role!r}")
    return role, url


def _endpoint_from_obj(obj: dict, default_url: str) -> BackendEndpoint:
    return BackendEndpoint(
        base_url=str(obj.get("url", default_url)),
        timeout=float(obj.get("timeout", 30.0)),
        max_retries=int(obj.get("max_retries", 2)),
        parallelism=int(obj.get("parallelism", 1)),
    )


def build_config(
    file_obj: dict,
    base_dir: str | Path,
    overrides: dict | None = None,
    env: dict | None = None,
) -> RunConfig:
    """Merge file values, the environment, and flag overrides into a RunConfig.

    Precedence: per-role ``--backend-url`` flags > ``POBF_BACKEND_URL`` >
    config file; every other flag simply beats its file value.
    """
    overrides = overrides or {}
    env = os.environ if env is None else env
    base_dir = Path(base_dir)

    def resolve(p) -> Path:
        p = Path(p)
        return p if p.is_absolute() else base_dir / p

    if "manifest" not in file_obj:
        raise ConfigError("config is missing 'manifest'")
    manifest_path = resolve(file_obj["manifest"])

    run_id = overrides.get("run_id") or file_obj.get("run_id")
    if not run_id:
        raise ConfigError("run_id must come from the config file or --run-id")

    images_root = resolve(file_obj.get("images_root", manifest_path.parent))
    runs_root = resolve(file_obj.get("runs_root", "runs"))

    weights_obj = file_obj.get("weights", {})
    weights = FilterWeights(
        lambda1=float(weights_obj.get("lambda1", 1.0)),
        lambda2=float(weights_obj.get("lambda2", 1.0)),
        lambda_p=float(weights_obj.get("lambda_p", 0.5)),
    )
    if overrides.get("weights") is not None:
        weights = overrides["weights"]

    gen_obj = file_obj.get("generation", {})
    seed = int(overrides.get("seed", file_obj.get("seed", 0)))
    gen = GenerationParams(
        strength=float(gen_obj.get("strength", 0.9)),
        steps=int(gen_obj.get("steps", 45)),
        guidance_scale=float(gen_obj.get("guidance_scale", 7.5)),
        top_p=float(gen_obj.get("top_p", 0.9)),
        seed=seed,
    )

    mix_obj = file_obj.get("mix", {})
    q = mix_obj.get("q", 0.3)
    if overrides.get("q") is not None:
        q = overrides["q"]
    mix = MixPolicy(q=float(q), mode=str(mix_obj.get("mode", "dual_text")), seed=seed)

    backends: dict[str, BackendEndpoint] = {}
    file_backends = file_obj.get("backends", {})
    env_url = env.get(ENV_BACKEND_URL)
    flag_urls: dict[str, str] = dict(overrides.get("backend_urls") or {})
    for role in ROLES:
        obj = dict(file_backends.get(role, {}))
        if role in flag_urls:
            obj["url"] = flag_urls[role]
        elif env_url:
            obj["url"] = env_url
        if obj:
            backends[role] = _endpoint_from_obj(obj, DEFAULT_MOCK_URLS[role])

    return RunConfig(
        manifest_path=manifest_path,
        run_id=str(run_id),
        images_root=images_root,
        runs_root=runs_root,
        split=str(overrides.get("split", file_obj.get("split", "train"))),
        k=int(overrides.get("k", file_obj.get("k", 4))),
        seed=seed,
        parallelism=int(overrides.get("parallelism", file_obj.get("parallelism", 1))),
        filter_method=str(overrides.get("filter", file_obj.get("filter", "pobf"))),
        weights=weights,
        gen=gen,
        mix=mix,
        backends=backends,
        resume=bool(overrides.get("resume", False)),
    )
