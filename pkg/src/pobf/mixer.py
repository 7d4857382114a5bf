"""Assemble the student training set: real records plus selected synthetics.

Synthetic records reuse the real text and the real box unchanged; only the
image path points into the candidate store. Caption replacement with the
generated object caption happens either

* ``dual_text`` (default): records carry ``text`` and ``alt_text`` plus the
  probability ``q``; the trainer samples per iteration, matching the original
  training-time semantics, or
* ``materialized``: a one-shot draw here. The decision for a record is
  ``default_rng(derive_seed(policy.seed, record_id, "caption-swap")).random()
  < q``, so any consumer can replay the stream exactly.

Replacement applies to both the real and the synthetic record of a sample;
samples without a generated caption (nothing selected) are ineligible.
"""

import json
import os
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .backends.protocol import derive_seed
from .dataset import BBox, Manifest
from .errors import ConfigError, SelectionError
from .genpipe import CandidateStore

MIX_MODES = ("materialized", "dual_text")

ORIGIN_REAL = "real"
ORIGIN_SYNTHETIC = "synthetic"


@dataclass(frozen=True)
class MixPolicy:
    q: float = 0.3
    mode: str = "dual_text"
    seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.q <= 1.0:
            raise ConfigError(f"q must be within [0, 1], got {self.q}")
        if self.mode not in MIX_MODES:
            raise ConfigError(f"mode must be one of {MIX_MODES}, got {self.mode!r}")


@dataclass(frozen=True)
class MixRecord:
    id: str
    image_path: str
    image_size: tuple[int, int]
    text: str
    box: BBox
    split: str
    origin: str
    alt_text: str | None = None
    q: float | None = None
    replaced: bool | None = None


def _swap_caption(policy: MixPolicy, record_id: str) -> bool:
    rng = np.random.default_rng(derive_seed(policy.seed, record_id, "caption-swap"))
    return rng.random() < policy.q


def build_mix(
    real: Manifest,
    selection: dict,
    store: CandidateStore,
    policy: MixPolicy,
    *,
    images_root: str | Path,
) -> list[MixRecord]:
    """Real records (manifest order) followed by one record per selected candidate.

    Real image paths are rebased to be relative to the run directory so one
    base path resolves every record of the mix file.
    """
    chosen: dict[str, list[int]] = selection["chosen"]
    candidates = {c.key: c for c in store.load_candidates()}
    missing = sorted(
        f"{sample_id}/{index}"
        for sample_id, indices in chosen.items()
        for index in indices
        if (sample_id, index) not in candidates
    )
    if missing:
        raise SelectionError(f"selection references missing candidates: {', '.join(missing)}")

    # one generated object caption per sample, shared by its candidates
    alt_texts = {
        sample_id: candidates[(sample_id, indices[0])].object_caption
        for sample_id, indices in chosen.items()
        if indices
    }

    images_root = Path(images_root)
    run_dir = store.run_dir

    def emit(record_id, image_path, sample, origin) -> MixRecord:
        alt = alt_texts.get(sample.id)
        text = sample.text
        q = replaced = None
        if alt is not None:
            if policy.mode == "materialized":
                replaced = _swap_caption(policy, record_id)
                if replaced:
                    text = alt
                alt = None
            else:
                q = policy.q
        return MixRecord(
            id=record_id,
            image_path=image_path,
            image_size=sample.image_size,
            text=text,
            box=sample.box,
            split=sample.split,
            origin=origin,
            alt_text=alt,
            q=q,
            replaced=replaced,
        )

    records = [
        emit(
            sample.id,
            os.path.relpath(images_root / sample.image_path, run_dir),
            sample,
            ORIGIN_REAL,
        )
        for sample in real.records
    ]
    for sample in real.records:
        for index in sorted(chosen.get(sample.id, ())):
            candidate = candidates[(sample.id, index)]
            records.append(
                emit(f"{sample.id}#syn{index}", candidate.image_path, sample,
                     ORIGIN_SYNTHETIC)
            )
    return records


@dataclass
class MixSummary:
    total: int = 0
    real: int = 0
    synthetic: int = 0
    eligible: int = 0
    replaced: int = 0
    replacement_rate: float | None = None
    by_split: dict | None = None


def summarize_mix(records: list[MixRecord]) -> MixSummary:
    summary = MixSummary(by_split={})
    for r in records:
        summary.total += 1
        if r.origin == ORIGIN_REAL:
            summary.real += 1
        else:
            summary.synthetic += 1
        summary.by_split[r.split] = summary.by_split.get(r.split, 0) + 1
        if r.replaced is not None:
            summary.eligible += 1
            if r.replaced:
                summary.replaced += 1
    if summary.eligible:
        summary.replacement_rate = summary.replaced / summary.eligible
    return summary


def mix_record_to_obj(r: MixRecord) -> dict:
    obj = {
        "id": r.id,
        "image_path": r.image_path,
        "image_size": [r.image_size[0], r.image_size[1]],
        "text": r.text,
        "box": r.box.as_list(),
        "split": r.split,
        "origin": r.origin,
    }
    if r.alt_text is not None:
        obj["alt_text"] = r.alt_text
    if r.q is not None:
        obj["q"] = r.q
    if r.replaced is not None:
        obj["replaced"] = r.replaced
    return obj


def mix_record_from_obj(obj: dict) -> MixRecord:
    return MixRecord(
        id=obj["id"],
        image_path=obj["image_path"],
        image_size=(int(obj["image_size"][0]), int(obj["image_size"][1])),
        text=obj["text"],
        box=BBox(*(float(v) for v in obj["box"])),
        split=obj["split"],
        origin=obj["origin"],
        alt_text=obj.get("alt_text"),
        q=obj.get("q"),
        replaced=obj.get("replaced"),
    )


def write_mix(records: list[MixRecord], path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = [
        json.dumps(mix_record_to_obj(r), ensure_ascii=False, separators=(",", ":"))
        for r in records
    ]
    path.write_text("\n".join(lines) + ("\n" if lines else ""), encoding="utf-8")
    return path


def load_mix(path: str | Path) -> list[MixRecord]:
    out = []
    with Path(path).open("r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                out.append(mix_record_from_obj(json.loads(line)))
    return out
