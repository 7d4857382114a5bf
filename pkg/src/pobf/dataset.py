"""Canonical region-text manifest: types, loading, validation, conversion.

A manifest is JSON Lines, one record per line, with bit-exact field names:
``id``, ``image_path``, ``image_size`` ([W, H] ints), ``text``,
``box`` ([cx, cy, w, h] floats, absolute pixels, center form) and ``split``.
"""

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConversionError, GeometryError, ManifestParseError, ManifestValidationError

logger = logging.getLogger(__name__)

SPLITS = ("train", "val", "test")

_FIELDS = ("id", "image_path", "image_size", "text", "box", "split")


@dataclass(frozen=True)
class BBox:
    """Axis-aligned box, center/width/height, absolute pixels."""

    cx: float
    cy: float
    w: float
    h: float

    def __post_init__(self):
        if not (self.w > 0 and self.h > 0):
            raise ManifestValidationError(
                f"non-positive box extent w={self.w} h={self.h}"
            )

    @property
    def corners(self) -> tuple[float, float, float, float]:
        """(x0, y0, x1, y1)."""
        return (
            self.cx - self.w / 2.0,
            self.cy - self.h / 2.0,
            self.cx + self.w / 2.0,
            self.cy + self.h / 2.0,
        )

    @property
    def area(self) -> float:
        return self.w * self.h

    @classmethod
    def from_corners(cls, x0: float, y0: float, x1: float, y1: float) -> "BBox":
        return cls((x0 + x1) / 2.0, (y0 + y1) / 2.0, x1 - x0, y1 - y0)

    def clamped(self, image_size: tuple[int, int]) -> "BBox":
        """Clamp corners to the image frame; exactly idempotent.

        Raises :class:`GeometryError` when the box lies entirely outside the
        image (no positive extent survives the clamp).
        """
        if self.fits(image_size):
            return self
        width, height = image_size
        x0, y0, x1, y1 = self.corners
        x0, x1 = max(0.0, min(x0, float(width))), max(0.0, min(x1, float(width)))
        y0, y1 = max(0.0, min(y0, float(height))), max(0.0, min(y1, float(height)))
        if x1 - x0 <= 0 or y1 - y0 <= 0:
            raise GeometryError(
                f"box {self} lies outside a {width}x{height} image"
            )
        return BBox.from_corners(x0, y0, x1, y1)

    def fits(self, image_size: tuple[int, int], tol: float = 1e-6) -> bool:
        """Corners within the frame up to a sub-pixel tolerance.

        The tolerance absorbs corner/center round-trip rounding so clamping a
        clamped box is a no-op rather than an epsilon-sized wiggle.
        """
        x0, y0, x1, y1 = self.corners
        return (
            x0 >= -tol
            and y0 >= -tol
            and x1 <= image_size[0] + tol
            and y1 <= image_size[1] + tol
        )

    def as_list(self) -> list[float]:
        return [self.cx, self.cy, self.w, self.h]


@dataclass(frozen=True)
class GroundingSample:
    """One (image, referring expression, box) training point."""

    id: str
    image_path: str
    image_size: tuple[int, int]
    text: str
    box: BBox
    split: str

    def __post_init__(self):
        if not self.id:
            raise ManifestValidationError("record id must be non-empty")
        if not self.text:
            raise ManifestValidationError(f"record {self.id!r}: text must be non-empty")
        if self.split not in SPLITS:
            raise ManifestValidationError(
                f"record {self.id!r}: split {self.split!r} not in {SPLITS}"
            )
        w, h = self.image_size
        if w <= 0 or h <= 0:
            raise ManifestValidationError(
                f"record {self.id!r}: non-positive image size {self.image_size}"
            )


@dataclass
class Manifest:
    """Ordered record collection; order is the file order."""

    records: list[GroundingSample]
    source_name: str = ""
    clamped_ids: tuple[str, ...] = field(default=(), compare=False, repr=False)

    def __len__(self) -> int:
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    def by_id(self) -> dict[str, GroundingSample]:
        return {r.id: r for r in self.records}

    def split_records(self, split: str) -> list[GroundingSample]:
        return [r for r in self.records if r.split == split]


def _record_from_obj(obj: dict, where: str) -> tuple[GroundingSample, bool]:
    """Build a validated, clamped record; returns (record, was_clamped)."""
    missing = [k for k in _FIELDS if k not in obj]
    if missing:
        raise ManifestParseError(f"{where}: missing fields {missing}")
    size = obj["image_size"]
    box = obj["box"]
    if not (isinstance(size, (list, tuple)) and len(size) == 2):
        raise ManifestParseError(f"{where}: image_size must be [W, H]")
    if not (isinstance(box, (list, tuple)) and len(box) == 4):
        raise ManifestParseError(f"{where}: box must be [cx, cy, w, h]")
    image_size = (int(size[0]), int(size[1]))
    try:
        raw_box = BBox(*(float(v) for v in box))
    except ManifestValidationError as exc:
        raise ManifestValidationError(f"{where}: {exc}") from exc
    clamped = False
    if not raw_box.fits(image_size):
        try:
            clamped_box = raw_box.clamped(image_size)
        except GeometryError as exc:
            raise ManifestValidationError(f"{where}: {exc}") from exc
        logger.warning(
            "%s: box %s exceeds image %s, clamped to %s",
            where, raw_box.as_list(), list(image_size), clamped_box.as_list(),
        )
        raw_box = clamped_box
        clamped = True
    try:
        record = GroundingSample(
            id=str(obj["id"]),
            image_path=str(obj["image_path"]),
            image_size=image_size,
            text=str(obj["text"]),
            box=raw_box,
            split=str(obj["split"]),
        )
    except ManifestValidationError as exc:
        raise ManifestValidationError(f"{where}: {exc}") from exc
    return record, clamped


def load_manifest(path: str | Path) -> Manifest:
    """Read and validate a JSONL manifest.

    Out-of-bounds boxes are clamped to the frame (one warning per record);
    malformed lines, duplicate ids and non-positive extents raise.
    """
    path = Path(path)
    records: list[GroundingSample] = []
    seen: set[str] = set()
    clamped_ids: list[str] = []
    with path.open("r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            where = f"{path.name}:{lineno}"
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ManifestParseError(f"{where}: invalid JSON ({exc.msg})") from exc
            record, was_clamped = _record_from_obj(obj, where)
            if record.id in seen:
                raise ManifestValidationError(f"{where}: duplicate id {record.id!r}")
            seen.add(record.id)
            if was_clamped:
                clamped_ids.append(record.id)
            records.append(record)
    return Manifest(records=records, source_name=path.name, clamped_ids=tuple(clamped_ids))


def record_to_obj(record: GroundingSample) -> dict:
    return {
        "id": record.id,
        "image_path": record.image_path,
        "image_size": [record.image_size[0], record.image_size[1]],
        "text": record.text,
        "box": record.box.as_list(),
        "split": record.split,
    }


def serialize_manifest(manifest: Manifest) -> bytes:
    """Byte-stable JSONL serialization (fixed key order, shortest floats)."""
    lines = [
        json.dumps(record_to_obj(r), ensure_ascii=False, separators=(",", ":"))
        for r in manifest.records
    ]
    return ("\n".join(lines) + ("\n" if lines else "")).encode("utf-8")


def save_manifest(manifest: Manifest, path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(serialize_manifest(manifest))
    return path


def convert_coco_refexp(annotations: str | Path, refs: str | Path) -> Manifest:
    """Convert COCO-style corner boxes plus referring expressions to a manifest.

    ``annotations`` is a JSON object with ``images`` ([{id, file_name, width,
    height}]) and ``annotations`` ([{id, image_id, bbox: [x_min, y_min, w, h]}]).
    ``refs`` is a JSON array of {ref_id, ann_id, sentences: [str, ...], split}.
    One manifest record is emitted per sentence, id ``<ref_id>-<k>``.
    """
    annotations = Path(annotations)
    refs = Path(refs)
    with annotations.open("r", encoding="utf-8") as fh:
        coco = json.load(fh)
    with refs.open("r", encoding="utf-8") as fh:
        ref_list = json.load(fh)

    images = {img["id"]: img for img in coco.get("images", [])}
    anns = {ann["id"]: ann for ann in coco.get("annotations", [])}

    missing_anns = sorted(
        {str(r["ann_id"]) for r in ref_list if r["ann_id"] not in anns}
    )
    if missing_anns:
        raise ConversionError(
            f"refs point at missing annotation ids: {', '.join(missing_anns)}"
        )
    missing_images = sorted(
        {str(anns[r["ann_id"]]["image_id"]) for r in ref_list
         if anns[r["ann_id"]]["image_id"] not in images}
    )
    if missing_images:
        raise ConversionError(
            f"annotations point at missing image ids: {', '.join(missing_images)}"
        )

    records: list[GroundingSample] = []
    clamped_ids: list[str] = []
    for ref in ref_list:
        ann = anns[ref["ann_id"]]
        img = images[ann["image_id"]]
        x_min, y_min, w, h = (float(v) for v in ann["bbox"])
        obj_box = [x_min + w / 2.0, y_min + h / 2.0, w, h]
        split = str(ref.get("split", "train"))
        for k, sentence in enumerate(ref["sentences"]):
            where = f"ref {ref['ref_id']}[{k}]"
            record, was_clamped = _record_from_obj(
                {
                    "id": f"{ref['ref_id']}-{k}",
                    "image_path": img["file_name"],
                    "image_size": [img["width"], img["height"]],
                    "text": sentence,
                    "box": obj_box,
                    "split": split,
                },
                where,
            )
            if was_clamped:
                clamped_ids.append(record.id)
            records.append(record)

    seen: set[str] = set()
    for record in records:
        if record.id in seen:
            raise ManifestValidationError(f"duplicate id {record.id!r} after conversion")
        seen.add(record.id)
    return Manifest(records=records, source_name=refs.name, clamped_ids=tuple(clamped_ids))


def sample_manifest(manifest: Manifest, fraction: float, unit: str, seed: int) -> Manifest:
    """Deterministically sample a fraction of the manifest.

    ``unit`` must be "expressions" (sample records directly) or "images"
    (sample distinct images and keep all their records); callers must choose,
    there is no default. Original record order is preserved.
    """
    if unit not in ("expressions", "images"):
        raise ValueError(f"unit must be 'expressions' or 'images', got {unit!r}")
    if not 0.0 <= fraction <= 1.0:
        raise ValueError(f"fraction must be within [0, 1], got {fraction}")
    rng = np.random.default_rng(seed)
    if unit == "expressions":
        n = len(manifest.records)
        k = int(round(fraction * n))
        chosen = set(rng.choice(n, size=k, replace=False).tolist()) if k else set()
        records = [r for i, r in enumerate(manifest.records) if i in chosen]
    else:
        paths = sorted({r.image_path for r in manifest.records})
        k = int(round(fraction * len(paths)))
        chosen_paths = set(
            rng.choice(len(paths), size=k, replace=False).tolist()
        ) if k else set()
        keep = {paths[i] for i in chosen_paths}
        records = [r for r in manifest.records if r.image_path in keep]
    return Manifest(records=records, source_name=manifest.source_name)
