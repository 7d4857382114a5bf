"""Candidate generation: K paint-outside-the-box images per real sample.

Per sample: one scene caption of the whole image (the inpainting prompt), one
object caption of the box crop (shared by all of the sample's candidates),
then K inpaints of everything outside the box with per-candidate derived
seeds. A sample is all-or-nothing: backend failure discards any partial set
so downstream K-way selection stays well-posed.

Store layout under ``runs/<run_id>/``::

    candidates/<sample_id>/<index>.png   candidate images
    candidates/<sample_id>/done.json     per-sample records (resume marker)
    candidates.jsonl                     all records, sorted by (sample_id, index)
    generation_summary.json              totals, degenerate/failed ids, outside ratios
"""

import json
import logging
import shutil
from dataclasses import dataclass, field
from pathlib import Path

from .backends.client import parallel_map
from .backends.protocol import Captioner, GenerationParams, Inpainter, derive_seed
from .dataset import GroundingSample, Manifest
from .errors import BackendMisbehavior, BackendUnavailable, DegenerateMaskError, StoreError
from .geometry import outside_mask

logger = logging.getLogger(__name__)

FLAG_DEGENERATE_MASK = "degenerate_mask"
FLAG_CLAMPED_BOX = "clamped_box"

CANDIDATE_FIELDS = (
    "sample_id", "index", "image_path", "scene_caption", "object_caption",
    "strength", "steps", "guidance_scale", "top_p", "seed", "flags",
)


@dataclass(frozen=True)
class Candidate:
    """One generated image plus its provenance."""

    sample_id: str
    index: int
    image_path: str  # relative to the run directory
    scene_caption: str
    object_caption: str
    params: GenerationParams
    flags: tuple[str, ...] = ()

    @property
    def key(self) -> tuple[str, int]:
        return (self.sample_id, self.index)


def candidate_to_obj(c: Candidate) -> dict:
    return {
        "sample_id": c.sample_id,
        "index": c.index,
        "image_path": c.image_path,
        "scene_caption": c.scene_caption,
        "object_caption": c.object_caption,
        "strength": c.params.strength,
        "steps": c.params.steps,
        "guidance_scale": c.params.guidance_scale,
        "top_p": c.params.top_p,
        "seed": c.params.seed,
        "flags": sorted(c.flags),
    }


def candidate_from_obj(obj: dict) -> Candidate:
    return Candidate(
        sample_id=obj["sample_id"],
        index=int(obj["index"]),
        image_path=obj["image_path"],
        scene_caption=obj["scene_caption"],
        object_caption=obj["object_caption"],
        params=GenerationParams(
            strength=obj["strength"],
            steps=obj["steps"],
            guidance_scale=obj["guidance_scale"],
            top_p=obj["top_p"],
            seed=obj["seed"],
        ),
        flags=tuple(obj.get("flags", [])),
    )


@dataclass
class GenerationSummary:
    samples_total: int = 0
    samples_ok: int = 0
    candidates: int = 0
    k: int = 0
    degenerate: list[str] = field(default_factory=list)
    failed: list[str] = field(default_factory=list)
    outside_ratio: dict[str, float] = field(default_factory=dict)

    def to_obj(self) -> dict:
        return {
            "samples_total": self.samples_total,
            "samples_ok": self.samples_ok,
            "candidates": self.candidates,
            "k": self.k,
            "degenerate": sorted(self.degenerate),
            "failed": sorted(self.failed),
            "outside_ratio": {k: self.outside_ratio[k] for k in sorted(self.outside_ratio)},
        }


class CandidateStore:
    """Filesystem contract for one run's candidate set."""

    def __init__(self, run_dir: str | Path):
        self.run_dir = Path(run_dir)

    @property
    def candidates_dir(self) -> Path:
        return self.run_dir / "candidates"

    @property
    def candidates_jsonl(self) -> Path:
        return self.run_dir / "candidates.jsonl"

    @property
    def summary_path(self) -> Path:
        return self.run_dir / "generation_summary.json"

    def candidate_rel_path(self, sample_id: str, index: int) -> str:
        return f"candidates/{sample_id}/{index}.png"

    def sample_dir(self, sample_id: str) -> Path:
        return self.candidates_dir / sample_id

    def sample_complete(self, sample_id: str) -> bool:
        return (self.sample_dir(sample_id) / "done.json").exists()

    def write_sample(self, sample_id: str, candidates: list[Candidate],
                     images: list[bytes]) -> None:
        """Write a sample's images then its done-marker; partial dirs are wiped."""
        directory = self.sample_dir(sample_id)
        if directory.exists():
            shutil.rmtree(directory)
        directory.mkdir(parents=True)
        for candidate, data in zip(candidates, images):
            (self.run_dir / candidate.image_path).write_bytes(data)
        marker = directory / "done.json"
        tmp = marker.with_suffix(".tmp")
        tmp.write_text(
            json.dumps([candidate_to_obj(c) for c in candidates], sort_keys=True),
            encoding="utf-8",
        )
        tmp.rename(marker)

    def load_sample_records(self, sample_id: str) -> list[Candidate]:
        marker = self.sample_dir(sample_id) / "done.json"
        return [candidate_from_obj(o) for o in json.loads(marker.read_text("utf-8"))]

    def finalize(self, summary: GenerationSummary) -> None:
        """Collect per-sample records into one deterministic JSONL."""
        records: list[Candidate] = []
        if self.candidates_dir.exists():
            for marker in self.candidates_dir.glob("*/done.json"):
                records.extend(
                    candidate_from_obj(o) for o in json.loads(marker.read_text("utf-8"))
                )
        records.sort(key=lambda c: c.key)
        lines = [
            json.dumps(candidate_to_obj(c), ensure_ascii=False, separators=(",", ":"))
            for c in records
        ]
        tmp = self.candidates_jsonl.with_suffix(".tmp")
        tmp.write_text("\n".join(lines) + ("\n" if lines else ""), encoding="utf-8")
        tmp.rename(self.candidates_jsonl)
        summary.candidates = len(records)
        self.summary_path.write_text(
            json.dumps(summary.to_obj(), indent=2, sort_keys=True), encoding="utf-8"
        )

    def load_candidates(self) -> list[Candidate]:
        if not self.candidates_jsonl.exists():
            raise StoreError(f"{self.candidates_jsonl} does not exist")
        out = []
        with self.candidates_jsonl.open("r", encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if line:
                    out.append(candidate_from_obj(json.loads(line)))
        return out

    def load_summary(self) -> dict:
        if not self.summary_path.exists():
            raise StoreError(f"{self.summary_path} does not exist")
        return json.loads(self.summary_path.read_text("utf-8"))

    def image_bytes(self, candidate: Candidate) -> bytes:
        return (self.run_dir / candidate.image_path).read_bytes()

    def is_complete(self) -> bool:
        return self.candidates_jsonl.exists()


def open_run(runs_root: str | Path, run_id: str, resume: bool = False) -> CandidateStore:
    """Create (or reopen with ``resume``) the run directory."""
    run_dir = Path(runs_root) / run_id
    store = CandidateStore(run_dir)
    if run_dir.exists() and any(run_dir.iterdir()) and not resume and not store.is_complete():
        raise StoreError(
            f"run directory {run_dir} already exists; pass resume to continue it"
        )
    run_dir.mkdir(parents=True, exist_ok=True)
    return store


@dataclass
class SampleGeneration:
    sample_id: str
    candidates: list[Candidate]
    images: list[bytes]
    degenerate: bool = False
    outside_ratio: float | None = None


def generate_candidates(
    sample: GroundingSample,
    k: int,
    params: GenerationParams,
    captioner: Captioner,
    inpainter: Inpainter,
    *,
    image: bytes,
    run_seed: int,
    store: CandidateStore,
    clamped: bool = False,
) -> SampleGeneration:
    """Produce the sample's K candidates (or none, if the mask is degenerate)."""
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    box = sample.box.clamped(sample.image_size)
    try:
        mask = outside_mask(sample.image_size, box)
    except DegenerateMaskError:
        logger.info("sample %s: box covers the image, no candidates", sample.id)
        return SampleGeneration(sample.id, [], [], degenerate=True)

    ratio = mask.ones / float(sample.image_size[0] * sample.image_size[1])
    scene = captioner.caption(
        image, None, params.with_seed(derive_seed(run_seed, sample.id, "scene"))
    )
    obj_caption = captioner.caption(
        image, box, params.with_seed(derive_seed(run_seed, sample.id, "object"))
    )
    flags = (FLAG_CLAMPED_BOX,) if clamped else ()
    candidates: list[Candidate] = []
    images: list[bytes] = []
    for j in range(k):
        cand_params = params.with_seed(derive_seed(run_seed, sample.id, str(j)))
        images.append(inpainter.inpaint(image, mask, scene, cand_params))
        candidates.append(
            Candidate(
                sample_id=sample.id,
                index=j,
                image_path=store.candidate_rel_path(sample.id, j),
                scene_caption=scene,
                object_caption=obj_caption,
                params=cand_params,
                flags=flags,
            )
        )
    return SampleGeneration(sample.id, candidates, images, outside_ratio=ratio)


def run_generation(
    samples: list[GroundingSample],
    store: CandidateStore,
    *,
    k: int,
    params: GenerationParams,
    captioner: Captioner,
    inpainter: Inpainter,
    run_seed: int,
    images_root: str | Path,
    parallelism: int = 1,
    resume: bool = False,
    clamped_ids: tuple[str, ...] = (),
) -> GenerationSummary:
    """Generate candidates for every sample and finalize the store."""
    images_root = Path(images_root)
    summary = GenerationSummary(samples_total=len(samples), k=k)
    clamped = set(clamped_ids)

    # Degeneracy and outside-area ratio are pure geometry; compute them for
    # every sample so resumed runs still report complete metadata.
    pending = []
    for sample in samples:
        box = sample.box.clamped(sample.image_size)
        try:
            mask = outside_mask(sample.image_size, box)
        except DegenerateMaskError:
            logger.info("sample %s: box covers the image, no candidates", sample.id)
            summary.degenerate.append(sample.id)
            continue
        total = float(sample.image_size[0] * sample.image_size[1])
        summary.outside_ratio[sample.id] = mask.ones / total
        if resume and store.sample_complete(sample.id):
            logger.info("sample %s already complete, skipping", sample.id)
        else:
            pending.append(sample)

    def work(sample: GroundingSample) -> SampleGeneration:
        data = (images_root / sample.image_path).read_bytes()
        return generate_candidates(
            sample, k, params, captioner, inpainter,
            image=data, run_seed=run_seed, store=store,
            clamped=sample.id in clamped,
        )

    # Workers run concurrently; this thread is the single store writer.
    for sample, result in parallel_map(work, pending, parallelism):
        if isinstance(result, (BackendUnavailable, BackendMisbehavior)):
            logger.warning("sample %s failed: %s", sample.id, result)
            summary.failed.append(sample.id)
            continue
        if isinstance(result, Exception):
            raise result
        store.write_sample(sample.id, result.candidates, result.images)

    failed = set(summary.failed)
    degenerate = set(summary.degenerate)
    summary.samples_ok = sum(
        1 for s in samples
        if s.id not in failed and s.id not in degenerate and store.sample_complete(s.id)
    )
    store.finalize(summary)
    return summary


def manifest_lookup(manifest: Manifest, candidates: list[Candidate]) -> dict[str, GroundingSample]:
    """Map candidate sample_ids to manifest records, failing on dangling ids."""
    by_id = manifest.by_id()
    missing = sorted({c.sample_id for c in candidates if c.sample_id not in by_id})
    if missing:
        raise StoreError(f"candidates reference unknown sample ids: {', '.join(missing)}")
    return by_id
