"""Candidate scoring, normalization, and per-sample selection.

Per candidate, three teacher queries produce raw scores in [0, 1]:

* hardness  s1 = IoU(teacher(candidate, real text), gt box)
* overfit   s2 = 1 - IoU(teacher(candidate with box interior zeroed, real text), gt box)
* prior     p  = IoU(teacher(candidate, empty text), gt box)

Each raw column is z-scored over the whole run's candidate population
(population standard deviation), combined with signed weights, and the
highest-scoring candidate per sample wins (ties to the lowest index). The
module also implements the reference baseline selectors used by
``benchmark-filters``.
"""

import csv
import json
import logging
import math
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .backends.client import parallel_map
from .backends.protocol import Grounder, derive_seed
from .dataset import GroundingSample, Manifest
from .errors import BackendMisbehavior, BackendUnavailable, ConfigError, SelectionError
from .genpipe import Candidate, CandidateStore, manifest_lookup
from .geometry import denormalize_box, iou, zero_inside
from . import imgio

logger = logging.getLogger(__name__)

SCORE_FIELDS = (
    "sample_id", "index", "s1_raw", "s2_raw", "p_raw",
    "s1_norm", "s2_norm", "p_norm", "combined", "selected",
)

BASELINE_METHODS = ("random", "none", "clip", "moderate_loss", "moderate_ds", "difficult_loss")
FILTER_METHODS = ("pobf",) + BASELINE_METHODS

ZERO_VARIANCE_EPS = 1e-12


@dataclass(frozen=True)
class FilterWeights:
    """Signed weights of the combined score; negatives give the ablations."""

    lambda1: float = 1.0
    lambda2: float = 1.0
    lambda_p: float = 0.5

    def __post_init__(self):
        for name, v in (("lambda1", self.lambda1), ("lambda2", self.lambda2),
                        ("lambda_p", self.lambda_p)):
            if not math.isfinite(v):
                raise ConfigError(f"{name} must be finite, got {v}")

    def as_list(self) -> list[float]:
        return [self.lambda1, self.lambda2, self.lambda_p]


@dataclass(frozen=True)
class ScoreRecord:
    sample_id: str
    index: int
    s1_raw: float
    s2_raw: float
    p_raw: float
    s1_norm: float | None = None
    s2_norm: float | None = None
    p_norm: float | None = None
    combined: float | None = None
    selected: bool = False

    @property
    def key(self) -> tuple[str, int]:
        return (self.sample_id, self.index)


def score_candidate(
    store: CandidateStore,
    candidate: Candidate,
    sample: GroundingSample,
    grounder: Grounder,
) -> ScoreRecord:
    """Raw hardness/overfit/prior scores for one candidate."""
    image = store.image_bytes(candidate)
    box = sample.box
    size = sample.image_size

    hard_box = denormalize_box(grounder.ground(image, sample.text), size)
    s1 = iou(hard_box, box)

    zeroed = imgio.encode_png(zero_inside(imgio.decode_rgb(image), box, expected_size=size))
    masked_box = denormalize_box(grounder.ground(zeroed, sample.text), size)
    s2 = 1.0 - iou(masked_box, box)

    prior_box = denormalize_box(grounder.ground(image, ""), size)
    p = iou(prior_box, box)

    return ScoreRecord(candidate.sample_id, candidate.index, s1, s2, p)


def run_scoring(
    store: CandidateStore,
    manifest: Manifest,
    grounder: Grounder,
    *,
    parallelism: int = 1,
) -> tuple[list[ScoreRecord], list[str]]:
    """Score every candidate in the store.

    Returns records sorted by (sample_id, index) plus the ids of samples
    excluded because a candidate could not be scored.
    """
    candidates = sorted(store.load_candidates(), key=lambda c: c.key)
    by_id = manifest_lookup(manifest, candidates)

    def work(candidate: Candidate) -> ScoreRecord:
        return score_candidate(store, candidate, by_id[candidate.sample_id], grounder)

    records: list[ScoreRecord] = []
    failed_samples: set[str] = set()
    for candidate, result in parallel_map(work, candidates, parallelism):
        if isinstance(result, (BackendUnavailable, BackendMisbehavior)):
            logger.warning("candidate %s unscored: %s", candidate.key, result)
            failed_samples.add(candidate.sample_id)
            continue
        if isinstance(result, Exception):
            raise result
        records.append(result)
    # Unscored candidates exclude their whole sample from selection.
    records = [r for r in records if r.sample_id not in failed_samples]
    records.sort(key=lambda r: r.key)
    return records, sorted(failed_samples)


def _zscore_column(values: np.ndarray) -> np.ndarray:
    mean = values.mean()
    std = values.std()  # population (divide-by-N)
    if std < ZERO_VARIANCE_EPS:
        return np.zeros_like(values)
    return (values - mean) / std


def normalize_scores(records: list[ScoreRecord]) -> list[ScoreRecord]:
    """Independently z-score each raw column over the whole run population."""
    if not records:
        return []
    s1 = _zscore_column(np.array([r.s1_raw for r in records], dtype=np.float64))
    s2 = _zscore_column(np.array([r.s2_raw for r in records], dtype=np.float64))
    p = _zscore_column(np.array([r.p_raw for r in records], dtype=np.float64))
    return [
        replace(r, s1_norm=float(s1[i]), s2_norm=float(s2[i]), p_norm=float(p[i]))
        for i, r in enumerate(records)
    ]


def combine(record: ScoreRecord, weights: FilterWeights) -> float:
    """Weighted sum of the normalized scores."""
    if record.s1_norm is None or record.s2_norm is None or record.p_norm is None:
        raise ValueError(f"record {record.key} has no normalized scores yet")
    return (
        weights.lambda1 * record.s1_norm
        + weights.lambda2 * record.s2_norm
        + weights.lambda_p * record.p_norm
    )


def apply_weights(records: list[ScoreRecord], weights: FilterWeights) -> list[ScoreRecord]:
    return [replace(r, combined=combine(r, weights)) for r in records]


def group_by_sample(records: list[ScoreRecord]) -> dict[str, list[ScoreRecord]]:
    groups: dict[str, list[ScoreRecord]] = {}
    for r in sorted(records, key=lambda r: r.key):
        groups.setdefault(r.sample_id, []).append(r)
    return groups


def select_best(records: list[ScoreRecord], k: int) -> dict[str, int]:
    """Highest combined score per complete group; ties go to the lowest index.

    Groups without exactly k scored records are excluded and logged.
    """
    chosen: dict[str, int] = {}
    for sample_id, group in group_by_sample(records).items():
        if len(group) != k:
            logger.warning(
                "sample %s has %d scored candidates, expected %d; excluded",
                sample_id, len(group), k,
            )
            continue
        if any(r.combined is None for r in group):
            raise ValueError(f"group {sample_id} has uncombined records")
        best = group[0]
        for record in group[1:]:
            if record.combined > best.combined:
                best = record
        chosen[sample_id] = best.index
    return chosen


def mark_selected(records: list[ScoreRecord], chosen: dict[str, list[int]]) -> list[ScoreRecord]:
    return [
        replace(r, selected=r.index in chosen.get(r.sample_id, ()))
        for r in records
    ]


def baseline_select(
    method: str,
    records: list[ScoreRecord] | None = None,
    *,
    k: int,
    seed: int = 0,
    image_vecs: dict[tuple[str, int], np.ndarray] | None = None,
    text_vecs: dict[str, np.ndarray] | None = None,
) -> dict[str, list[int]]:
    """Reference selection baselines; returns {sample_id: [indices]}.

    random          one seeded-uniform index per group
    none            every candidate (no filtering)
    clip            argmax cosine(candidate embedding, real-text embedding)
    difficult_loss  argmax loss, loss = 1 - s1_raw
    moderate_loss   loss deviation from the run mean closest to the run median
    moderate_ds     embedding distance to the run centroid closest to the median

    The run population stands in for the class in the moderate rules: visual
    grounding has no class labels.
    """
    if method not in BASELINE_METHODS:
        raise ConfigError(f"unknown baseline {method!r}, expected one of {BASELINE_METHODS}")

    if method in ("clip", "moderate_ds"):
        if image_vecs is None or (method == "clip" and text_vecs is None):
            raise ConfigError(f"method {method!r} needs an embedding backend")
        groups: dict[str, list[int]] = {}
        for sample_id, index in sorted(image_vecs):
            groups.setdefault(sample_id, []).append(index)
    else:
        if records is None:
            raise ConfigError(f"method {method!r} needs score records")
        groups = {
            sample_id: [r.index for r in group]
            for sample_id, group in group_by_sample(records).items()
        }

    incomplete = [s for s, idxs in groups.items() if len(idxs) != k]
    for sample_id in incomplete:
        logger.warning("sample %s has %d candidates, expected %d; excluded",
                       sample_id, len(groups[sample_id]), k)
        del groups[sample_id]

    if method == "none":
        return {s: list(idxs) for s, idxs in groups.items()}

    if method == "random":
        out = {}
        for sample_id, idxs in groups.items():
            rng = np.random.default_rng(derive_seed(seed, sample_id, "random-select"))
            out[sample_id] = [idxs[int(rng.integers(0, len(idxs)))]]
        return out

    if method == "clip":
        out = {}
        for sample_id, idxs in groups.items():
            text_vec = text_vecs[sample_id]
            sims = []
            for index in idxs:
                vec = image_vecs[(sample_id, index)]
                denom = float(np.linalg.norm(vec) * np.linalg.norm(text_vec))
                sims.append(float(vec @ text_vec) / denom)
            out[sample_id] = [idxs[int(np.argmax(sims))]]
        return out

    if method == "difficult_loss":
        by_key = {r.key: r for r in records}
        out = {}
        for sample_id, idxs in groups.items():
            losses = [1.0 - by_key[(sample_id, i)].s1_raw for i in idxs]
            out[sample_id] = [idxs[int(np.argmax(losses))]]
        return out

    # moderate rules: deviation closest to the run median of deviations
    if method == "moderate_loss":
        by_key = {r.key: r for r in records}
        deviations = {
            key: 1.0 - rec.s1_raw
            for key, rec in by_key.items()
            if key[0] in groups
        }
        mean = float(np.mean(list(deviations.values())))
        deviations = {key: v - mean for key, v in deviations.items()}
    else:  # moderate_ds
        keys = [(s, i) for s, idxs in groups.items() for i in idxs]
        centroid = np.mean([image_vecs[key] for key in keys], axis=0)
        deviations = {
            key: float(np.linalg.norm(image_vecs[key] - centroid)) for key in keys
        }
    median = float(np.median(list(deviations.values())))
    out = {}
    for sample_id, idxs in groups.items():
        gaps = [abs(deviations[(sample_id, i)] - median) for i in idxs]
        out[sample_id] = [idxs[int(np.argmin(gaps))]]
    return out


def pearson(xs, ys) -> float | None:
    """Pearson correlation; None (serialized as null) when undefined."""
    n = len(xs)
    if n < 2:
        return None
    xs = np.asarray(xs, dtype=np.float64)
    ys = np.asarray(ys, dtype=np.float64)
    dx = xs - xs.mean()
    dy = ys - ys.mean()
    vx = float((dx * dx).sum())
    vy = float((dy * dy).sum())
    if vx <= 0.0 or vy <= 0.0:
        return None
    return float((dx * dy).sum() / math.sqrt(vx * vy))


@dataclass
class CorrelationReport:
    pearson_s1_s2: float | None
    n: int
    scatter_csv: Path | None = None


def correlation_report(records: list[ScoreRecord],
                       csv_path: str | Path | None = None) -> CorrelationReport:
    """Pearson between raw hardness and raw overfit scores, plus a scatter CSV."""
    ordered = sorted(records, key=lambda r: r.key)
    coeff = pearson([r.s1_raw for r in ordered], [r.s2_raw for r in ordered])
    out_path = None
    if csv_path is not None:
        out_path = Path(csv_path)
        out_path.parent.mkdir(parents=True, exist_ok=True)
        with out_path.open("w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["sample_id", "index", "s1_raw", "s2_raw"])
            for r in ordered:
                writer.writerow([r.sample_id, r.index, repr(r.s1_raw), repr(r.s2_raw)])
    return CorrelationReport(pearson_s1_s2=coeff, n=len(ordered), scatter_csv=out_path)


def record_to_obj(r: ScoreRecord) -> dict:
    return {
        "sample_id": r.sample_id,
        "index": r.index,
        "s1_raw": r.s1_raw,
        "s2_raw": r.s2_raw,
        "p_raw": r.p_raw,
        "s1_norm": r.s1_norm,
        "s2_norm": r.s2_norm,
        "p_norm": r.p_norm,
        "combined": r.combined,
        "selected": r.selected,
    }


def record_from_obj(obj: dict) -> ScoreRecord:
    return ScoreRecord(
        sample_id=obj["sample_id"],
        index=int(obj["index"]),
        s1_raw=float(obj["s1_raw"]),
        s2_raw=float(obj["s2_raw"]),
        p_raw=float(obj["p_raw"]),
        s1_norm=obj.get("s1_norm"),
        s2_norm=obj.get("s2_norm"),
        p_norm=obj.get("p_norm"),
        combined=obj.get("combined"),
        selected=bool(obj.get("selected", False)),
    )


def write_scores(records: list[ScoreRecord], path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    ordered = sorted(records, key=lambda r: r.key)
    lines = [
        json.dumps(record_to_obj(r), ensure_ascii=False, separators=(",", ":"))
        for r in ordered
    ]
    path.write_text("\n".join(lines) + ("\n" if lines else ""), encoding="utf-8")
    return path


def read_scores(path: str | Path) -> list[ScoreRecord]:
    out = []
    with Path(path).open("r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                out.append(record_from_obj(json.loads(line)))
    return out


def write_selection(
    path: str | Path,
    method: str,
    weights: FilterWeights | None,
    chosen: dict[str, list[int]],
) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    obj = {
        "method": method,
        "weights": weights.as_list() if weights is not None else None,
        "chosen": {sample_id: list(chosen[sample_id]) for sample_id in sorted(chosen)},
    }
    path.write_text(json.dumps(obj, indent=2), encoding="utf-8")
    return path


def read_selection(path: str | Path) -> dict:
    obj = json.loads(Path(path).read_text("utf-8"))
    if "chosen" not in obj or "method" not in obj:
        raise SelectionError(f"{path} is not a selection file")
    return obj
