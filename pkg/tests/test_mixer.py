import numpy as np
import pytest

from pobf.backends import FixedPriorGrounder
from pobf.backends.protocol import derive_seed
from pobf.dataset import load_manifest
from pobf.errors import ConfigError, SelectionError
from pobf.filtering import (
    FilterWeights,
    apply_weights,
    normalize_scores,
    run_scoring,
    select_best,
)
from pobf.mixer import (
    MixPolicy,
    build_mix,
    load_mix,
    mix_record_to_obj,
    summarize_mix,
    write_mix,
)

from conftest import generate_mock_run


def make_run_with_selection(tmp_path, n=3, k=2, seed=0):
    store, manifest, images_root = generate_mock_run(tmp_path, n=n, k=k, seed=seed)
    grounder = FixedPriorGrounder((0.5, 0.5, 0.5, 0.5))
    records, _ = run_scoring(store, manifest, grounder)
    records = apply_weights(normalize_scores(records), FilterWeights())
    chosen = {s: [i] for s, i in select_best(records, k).items()}
    selection = {"method": "pobf", "weights": [1.0, 1.0, 0.5], "chosen": chosen}
    return store, manifest, images_root, selection


class TestBuildMix:
    def test_size_doubles_and_boxes_byte_equal(self, tmp_path):
        store, manifest, images_root, selection = make_run_with_selection(tmp_path)
        records = build_mix(
            manifest, selection, store, MixPolicy(q=0.0, mode="materialized"),
            images_root=images_root,
        )
        assert len(records) == 2 * len(manifest)
        real = {r.id: r for r in records if r.origin == "real"}
        for r in records:
            if r.origin == "synthetic":
                base = real[r.id.split("#")[0]]
                assert mix_record_to_obj(r)["box"] == mix_record_to_obj(base)["box"]
                assert r.text == base.text
                assert r.image_path.startswith("candidates/")

    def test_q_zero_all_real_texts(self, tmp_path):
        store, manifest, images_root, selection = make_run_with_selection(tmp_path)
        records = build_mix(
            manifest, selection, store, MixPolicy(q=0.0, mode="materialized"),
            images_root=images_root,
        )
        texts = {r.id.split("#")[0]: r.text for r in records}
        for sample in manifest.records:
            assert texts[sample.id] == sample.text
        assert all(r.replaced is False for r in records)

    def test_q_one_all_generated_texts(self, tmp_path):
        store, manifest, images_root, selection = make_run_with_selection(tmp_path)
        records = build_mix(
            manifest, selection, store, MixPolicy(q=1.0, mode="materialized"),
            images_root=images_root,
        )
        alt = {
            c.sample_id: c.object_caption for c in store.load_candidates()
        }
        for r in records:
            assert r.replaced is True
            assert r.text == alt[r.id.split("#")[0]]

    def test_replacement_replayable_from_documented_stream(self, tmp_path):
        store, manifest, images_root, selection = make_run_with_selection(tmp_path, n=5)
        policy = MixPolicy(q=0.3, mode="materialized", seed=77)
        records = build_mix(manifest, selection, store, policy, images_root=images_root)
        for r in records:
            rng = np.random.default_rng(derive_seed(77, r.id, "caption-swap"))
            assert r.replaced == (rng.random() < 0.3)

    def test_dual_text_carries_both_and_q(self, tmp_path):
        store, manifest, images_root, selection = make_run_with_selection(tmp_path)
        records = build_mix(
            manifest, selection, store, MixPolicy(q=0.3, mode="dual_text"),
            images_root=images_root,
        )
        alt = {c.sample_id: c.object_caption for c in store.load_candidates()}
        for r in records:
            sample_id = r.id.split("#")[0]
            assert r.alt_text == alt[sample_id]
            assert r.q == 0.3
            assert r.replaced is None
            assert r.text  # always the real text in dual_text mode

    def test_dangling_selection_lists_missing(self, tmp_path):
        store, manifest, images_root, selection = make_run_with_selection(tmp_path)
        selection["chosen"][manifest.records[0].id] = [99]
        with pytest.raises(SelectionError, match="99"):
            build_mix(manifest, selection, store, MixPolicy(), images_root=images_root)

    def test_unselected_sample_has_real_record_only(self, tmp_path):
        store, manifest, images_root, selection = make_run_with_selection(tmp_path)
        dropped = manifest.records[1].id
        del selection["chosen"][dropped]
        records = build_mix(
            manifest, selection, store, MixPolicy(q=1.0, mode="materialized"),
            images_root=images_root,
        )
        assert len(records) == 2 * len(manifest) - 1
        mine = [r for r in records if r.id.split("#")[0] == dropped]
        assert len(mine) == 1
        # no generated caption available: ineligible for replacement
        assert mine[0].replaced is None
        assert mine[0].text == manifest.records[1].text

    def test_deterministic(self, tmp_path):
        store, manifest, images_root, selection = make_run_with_selection(tmp_path)
        policy = MixPolicy(q=0.5, mode="materialized", seed=3)
        a = build_mix(manifest, selection, store, policy, images_root=images_root)
        b = build_mix(manifest, selection, store, policy, images_root=images_root)
        assert a == b

    def test_policy_validation(self):
        with pytest.raises(ConfigError):
            MixPolicy(q=1.5)
        with pytest.raises(ConfigError):
            MixPolicy(mode="sometimes")


class TestSummarize:
    def test_empty(self):
        summary = summarize_mix([])
        assert (summary.total, summary.real, summary.synthetic) == (0, 0, 0)
        assert summary.replacement_rate is None

    def test_counts(self, tmp_path):
        store, manifest, images_root, selection = make_run_with_selection(tmp_path)
        records = build_mix(
            manifest, selection, store, MixPolicy(q=0.0, mode="materialized"),
            images_root=images_root,
        )
        summary = summarize_mix(records)
        assert summary.real == len(manifest)
        assert summary.synthetic == len(manifest)
        assert summary.by_split == {"train": 2 * len(manifest)}
        assert summary.replacement_rate == 0.0

    def test_replacement_rate_statistics(self, tmp_path):
        # large synthetic-only fixture: rate should approach q
        from pobf.dataset import BBox, GroundingSample, Manifest
        from pobf.mixer import MixRecord, _swap_caption

        policy = MixPolicy(q=0.3, mode="materialized", seed=11)
        n = 10_000
        replaced = sum(_swap_caption(policy, f"rec{i}") for i in range(n))
        assert abs(replaced / n - 0.3) < 0.02


class TestMixIO:
    def test_round_trip(self, tmp_path):
        store, manifest, images_root, selection = make_run_with_selection(tmp_path)
        for mode, q in (("materialized", 0.4), ("dual_text", 0.3)):
            records = build_mix(
                manifest, selection, store, MixPolicy(q=q, mode=mode, seed=5),
                images_root=images_root,
            )
            path = write_mix(records, store.run_dir / f"mix_{mode}.jsonl")
            assert load_mix(path) == records

    def test_optional_fields_omitted_when_absent(self, tmp_path):
        store, manifest, images_root, selection = make_run_with_selection(tmp_path)
        records = build_mix(
            manifest, selection, store, MixPolicy(mode="dual_text"),
            images_root=images_root,
        )
        obj = mix_record_to_obj(records[0])
        assert "replaced" not in obj
        assert set(obj) >= {"id", "image_path", "image_size", "text", "box", "split", "origin"}
