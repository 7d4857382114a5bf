import numpy as np
import pytest

from pobf import imgio
from pobf.dataset import BBox, GroundingSample, Manifest, save_manifest


def make_image(width, height, seed):
    """Deterministic RGB test image (gradient + seeded speckle)."""
    rng = np.random.default_rng(seed)
    ys, xs = np.mgrid[0:height, 0:width]
    base = np.stack(
        [
            (xs * 255 // max(width - 1, 1)),
            (ys * 255 // max(height - 1, 1)),
            ((xs + ys) * 255 // max(width + height - 2, 1)),
        ],
        axis=-1,
    ).astype(np.uint8)
    speckle = rng.integers(0, 64, size=(height, width, 3), dtype=np.uint8)
    return base ^ speckle


def random_inbounds_box(rng, width, height, min_extent=1.0):
    """A box that already satisfies the clamped invariant for (W, H)."""
    w = float(rng.uniform(min_extent, width))
    h = float(rng.uniform(min_extent, height))
    cx = float(rng.uniform(w / 2.0, width - w / 2.0))
    cy = float(rng.uniform(h / 2.0, height - h / 2.0))
    return BBox(cx, cy, w, h)


def build_dataset(tmp_path, n, seed=0, width=48, height=36, split="train"):
    """Write n sample images plus a manifest; returns the manifest path."""
    rng = np.random.default_rng(seed)
    images_dir = tmp_path / "images"
    images_dir.mkdir(parents=True, exist_ok=True)
    records = []
    for i in range(n):
        name = f"img_{i:03d}.png"
        (images_dir / name).write_bytes(
            imgio.encode_png(make_image(width, height, seed * 1000 + i))
        )
        box = random_inbounds_box(rng, width, height, min_extent=4.0)
        records.append(
            GroundingSample(
                id=f"s{i:03d}",
                image_path=name,
                image_size=(width, height),
                text=f"the object number {i}",
                box=box,
                split=split,
            )
        )
    manifest = Manifest(records=records, source_name="fixture")
    path = tmp_path / "manifest.jsonl"
    save_manifest(manifest, path)
    return path, images_dir, manifest


@pytest.fixture
def tiny_dataset(tmp_path):
    return build_dataset(tmp_path, n=3, seed=7)


def generate_mock_run(tmp_path, n=3, k=4, seed=0, run_id="run", parallelism=1):
    """Full mock generation pass; returns (store, manifest, images_root)."""
    from pobf.backends import GenerationParams, MockCaptioner, MockInpainter
    from pobf.dataset import load_manifest
    from pobf.genpipe import open_run, run_generation

    manifest_path, images_dir, _ = build_dataset(tmp_path, n=n, seed=seed)
    manifest = load_manifest(manifest_path)
    store = open_run(tmp_path / "runs", run_id)
    run_generation(
        manifest.records,
        store,
        k=k,
        params=GenerationParams(),
        captioner=MockCaptioner(seed=seed),
        inpainter=MockInpainter(seed=seed),
        run_seed=seed,
        images_root=images_dir,
        parallelism=parallelism,
    )
    return store, manifest, images_dir
