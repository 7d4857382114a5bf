import hashlib
import json
from pathlib import Path

import numpy as np
import pytest

from pobf import imgio
from pobf.backends import GenerationParams, MockCaptioner, MockInpainter
from pobf.dataset import BBox, GroundingSample, Manifest, load_manifest
from pobf.errors import BackendUnavailable, StoreError
from pobf.genpipe import (
    CandidateStore,
    candidate_from_obj,
    candidate_to_obj,
    generate_candidates,
    open_run,
    run_generation,
)
from pobf.geometry import box_pixel_rect

from conftest import build_dataset, generate_mock_run


def hash_tree(root: Path) -> dict:
    out = {}
    for path in sorted(root.rglob("*")):
        if path.is_file():
            out[str(path.relative_to(root))] = hashlib.sha256(path.read_bytes()).hexdigest()
    return out


class TestGenerateCandidates:
    def test_k_candidates_inside_pixels_preserved(self, tmp_path):
        store, manifest, images_dir = generate_mock_run(tmp_path, n=2, k=4)
        candidates = store.load_candidates()
        assert len(candidates) == 8
        by_id = manifest.by_id()
        for c in candidates:
            sample = by_id[c.sample_id]
            src = imgio.decode_rgb((images_dir / sample.image_path).read_bytes())
            got = imgio.decode_rgb(store.image_bytes(c))
            ix0, iy0, ix1, iy1 = box_pixel_rect(sample.box, sample.image_size)
            assert np.array_equal(got[iy0:iy1, ix0:ix1], src[iy0:iy1, ix0:ix1])

    def test_object_caption_shared_scene_caption_used(self, tmp_path):
        store, _, _ = generate_mock_run(tmp_path, n=1, k=4)
        candidates = store.load_candidates()
        assert len({c.object_caption for c in candidates}) == 1
        assert len({c.scene_caption for c in candidates}) == 1
        assert all(c.object_caption for c in candidates)

    def test_whole_image_box_yields_no_candidates(self, tmp_path):
        img = tmp_path / "img.png"
        from conftest import make_image

        img.write_bytes(imgio.encode_png(make_image(20, 20, 0)))
        sample = GroundingSample(
            id="s0", image_path="img.png", image_size=(20, 20),
            text="everything", box=BBox(10, 10, 20, 20), split="train",
        )
        store = open_run(tmp_path / "runs", "r")
        summary = run_generation(
            [sample], store, k=4, params=GenerationParams(),
            captioner=MockCaptioner(), inpainter=MockInpainter(),
            run_seed=0, images_root=tmp_path,
        )
        assert summary.degenerate == ["s0"]
        assert summary.candidates == 0
        assert store.load_candidates() == []

    def test_candidate_seeds_derived_per_index(self, tmp_path):
        store, _, _ = generate_mock_run(tmp_path, n=1, k=4)
        seeds = [c.params.seed for c in store.load_candidates()]
        assert len(set(seeds)) == 4

    def test_candidate_record_round_trip(self, tmp_path):
        store, _, _ = generate_mock_run(tmp_path, n=1, k=2)
        for c in store.load_candidates():
            assert candidate_from_obj(candidate_to_obj(c)) == c


class TestDeterminism:
    def test_same_seed_byte_identical_store(self, tmp_path):
        store_a, _, _ = generate_mock_run(tmp_path / "a", n=3, k=4, seed=5, run_id="x")
        store_b, _, _ = generate_mock_run(tmp_path / "b", n=3, k=4, seed=5, run_id="x")
        assert hash_tree(store_a.run_dir) == hash_tree(store_b.run_dir)

    def test_parallelism_does_not_change_bytes(self, tmp_path):
        store_a, _, _ = generate_mock_run(tmp_path / "a", n=4, k=3, seed=2, parallelism=1)
        store_b, _, _ = generate_mock_run(tmp_path / "b", n=4, k=3, seed=2, parallelism=4)
        assert hash_tree(store_a.run_dir) == hash_tree(store_b.run_dir)

    def test_different_seed_changes_images(self, tmp_path):
        store_a, _, _ = generate_mock_run(tmp_path / "a", n=1, k=1, seed=1)
        store_b, _, _ = generate_mock_run(tmp_path / "b", n=1, k=1, seed=2)
        a = store_a.load_candidates()[0]
        b = store_b.load_candidates()[0]
        assert store_a.image_bytes(a) != store_b.image_bytes(b)


class TestStoreLayout:
    def test_counts_and_sorting(self, tmp_path):
        store, _, _ = generate_mock_run(tmp_path, n=2, k=4)
        pngs = list(store.candidates_dir.glob("*/*.png"))
        assert len(pngs) == 8
        lines = store.candidates_jsonl.read_text().strip().splitlines()
        assert len(lines) == 8
        keys = [(json.loads(l)["sample_id"], json.loads(l)["index"]) for l in lines]
        assert keys == sorted(keys)

    def test_empty_manifest(self, tmp_path):
        store = open_run(tmp_path / "runs", "empty")
        summary = run_generation(
            [], store, k=4, params=GenerationParams(),
            captioner=MockCaptioner(), inpainter=MockInpainter(),
            run_seed=0, images_root=tmp_path,
        )
        assert summary.candidates == 0
        assert store.candidates_jsonl.read_text() == ""
        assert not any(store.candidates_dir.glob("*"))

    def test_collision_refused_without_resume(self, tmp_path):
        (tmp_path / "runs" / "dup").mkdir(parents=True)
        (tmp_path / "runs" / "dup" / "stale.txt").write_text("x")
        with pytest.raises(StoreError, match="already exists"):
            open_run(tmp_path / "runs", "dup")
        open_run(tmp_path / "runs", "dup", resume=True)

    def test_outside_ratio_recorded(self, tmp_path):
        store, manifest, _ = generate_mock_run(tmp_path, n=2, k=1)
        summary = store.load_summary()
        for record in manifest.records:
            ix0, iy0, ix1, iy1 = box_pixel_rect(record.box, record.image_size)
            inside = (ix1 - ix0) * (iy1 - iy0)
            total = record.image_size[0] * record.image_size[1]
            assert summary["outside_ratio"][record.id] == pytest.approx(
                (total - inside) / total
            )


class _FailOn:
    """Captioner that refuses one specific image payload."""

    def __init__(self, poison: bytes, seed=0):
        self.poison = poison
        self.inner = MockCaptioner(seed=seed)

    def caption(self, image, crop, params):
        if image == self.poison:
            raise BackendUnavailable("injected outage")
        return self.inner.caption(image, crop, params)


class TestFailureHandling:
    def test_failed_sample_all_or_nothing(self, tmp_path):
        manifest_path, images_dir, _ = build_dataset(tmp_path, n=3, seed=1)
        manifest = load_manifest(manifest_path)
        poison = (images_dir / manifest.records[1].image_path).read_bytes()
        store = open_run(tmp_path / "runs", "r")
        summary = run_generation(
            manifest.records, store, k=4, params=GenerationParams(),
            captioner=_FailOn(poison), inpainter=MockInpainter(),
            run_seed=0, images_root=images_dir,
        )
        bad = manifest.records[1].id
        assert summary.failed == [bad]
        assert summary.samples_ok == 2
        assert not store.sample_dir(bad).exists()
        assert len(store.load_candidates()) == 8
        assert summary.candidates == 4 * 2  # K x (non-degenerate, non-failed)


class TestResume:
    def test_partial_sample_regenerates_completed_untouched(self, tmp_path):
        manifest_path, images_dir, _ = build_dataset(tmp_path, n=3, seed=3)
        manifest = load_manifest(manifest_path)
        store, _, _ = generate_mock_run(tmp_path, n=3, k=4, seed=3)
        victim = manifest.records[2].id
        survivor = manifest.records[0].id

        # simulate a crash mid-sample: images exist but no done marker
        (store.sample_dir(victim) / "done.json").unlink()
        (store.sample_dir(victim) / "1.png").unlink()
        before = hash_tree(store.sample_dir(survivor))
        survivor_mtimes = {
            p.name: p.stat().st_mtime_ns for p in store.sample_dir(survivor).iterdir()
        }

        store2 = open_run(tmp_path / "runs", "run", resume=True)
        run_generation(
            manifest.records, store2, k=4, params=GenerationParams(),
            captioner=MockCaptioner(seed=3), inpainter=MockInpainter(seed=3),
            run_seed=3, images_root=images_dir, resume=True,
        )
        assert store2.sample_complete(victim)
        assert len(store2.load_candidates()) == 12
        assert hash_tree(store2.sample_dir(survivor)) == before
        after_mtimes = {
            p.name: p.stat().st_mtime_ns for p in store2.sample_dir(survivor).iterdir()
        }
        assert after_mtimes == survivor_mtimes  # genuinely untouched, not rewritten

    def test_resume_regenerates_same_bytes(self, tmp_path):
        store, manifest, images_dir = generate_mock_run(tmp_path, n=2, k=2, seed=9)
        reference = hash_tree(store.run_dir)
        victim = manifest.records[0].id
        (store.sample_dir(victim) / "done.json").unlink()
        store2 = open_run(tmp_path / "runs", "run", resume=True)
        run_generation(
            manifest.records, store2, k=2, params=GenerationParams(),
            captioner=MockCaptioner(seed=9), inpainter=MockInpainter(seed=9),
            run_seed=9, images_root=images_dir, resume=True,
        )
        assert hash_tree(store2.run_dir) == reference


class TestClampedFlag:
    def test_clamped_samples_flag_their_candidates(self, tmp_path):
        import json as _json

        from conftest import make_image

        images = tmp_path / "images"
        images.mkdir()
        (images / "a.png").write_bytes(imgio.encode_png(make_image(40, 30, 0)))
        manifest_path = tmp_path / "manifest.jsonl"
        manifest_path.write_text(
            "\n".join(
                _json.dumps(o)
                for o in [
                    {"id": "clamped", "image_path": "a.png", "image_size": [40, 30],
                     "text": "spills over", "box": [38, 15, 10, 10], "split": "train"},
                    {"id": "clean", "image_path": "a.png", "image_size": [40, 30],
                     "text": "fits", "box": [20, 15, 10, 10], "split": "train"},
                ]
            )
            + "\n"
        )
        manifest = load_manifest(manifest_path)
        assert manifest.clamped_ids == ("clamped",)
        store = open_run(tmp_path / "runs", "r")
        run_generation(
            manifest.records, store, k=2, params=GenerationParams(),
            captioner=MockCaptioner(), inpainter=MockInpainter(),
            run_seed=0, images_root=images, clamped_ids=manifest.clamped_ids,
        )
        flags = {c.sample_id: c.flags for c in store.load_candidates()}
        assert flags["clamped"] == ("clamped_box",)
        assert flags["clean"] == ()
