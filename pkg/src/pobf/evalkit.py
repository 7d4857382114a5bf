"""Evaluation metric and run reporting.

Top-1 accuracy counts a prediction as correct when its IoU with the ground
truth strictly exceeds 0.5; an IoU of exactly 0.5 is wrong. Predictions are
exchanged in normalized grounder coordinates and denormalized against the
manifest's image sizes.
"""

import json
from dataclasses import dataclass
from pathlib import Path

from .dataset import Manifest
from .errors import EvalError
from .filtering import correlation_report, read_scores, read_selection
from .geometry import denormalize_box, iou

IOU_THRESHOLD = 0.5


@dataclass(frozen=True)
class Prediction:
    sample_id: str
    box: tuple[float, float, float, float]  # normalized cwh


def load_predictions(path: str | Path) -> list[Prediction]:
    out = []
    with Path(path).open("r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
                out.append(
                    Prediction(str(obj["sample_id"]), tuple(float(v) for v in obj["box"]))
                )
            except (KeyError, ValueError, TypeError) as exc:
                raise EvalError(f"{path}:{lineno}: bad prediction ({exc})") from exc
    return out


def top1_accuracy(preds: list[Prediction], manifest: Manifest,
                  split: str | None = None) -> float:
    """Fraction of records whose prediction overlaps ground truth with IoU > 0.5."""
    records = manifest.split_records(split) if split else list(manifest.records)
    if not records:
        raise EvalError(f"no manifest records in split {split!r}")

    by_id = {}
    duplicates = set()
    for pred in preds:
        if pred.sample_id in by_id:
            duplicates.add(pred.sample_id)
        by_id[pred.sample_id] = pred
    if duplicates:
        raise EvalError(f"duplicate predictions for: {', '.join(sorted(duplicates))}")

    wanted = {r.id for r in records}
    missing = sorted(wanted - by_id.keys())
    if missing:
        raise EvalError(f"missing predictions for: {', '.join(missing)}")
    unknown = sorted(by_id.keys() - wanted)
    if unknown:
        raise EvalError(f"predictions for unknown ids: {', '.join(unknown)}")

    correct = 0
    for record in records:
        pred_box = denormalize_box(by_id[record.id].box, record.image_size)
        if iou(pred_box, record.box) > IOU_THRESHOLD:
            correct += 1
    return correct / len(records)


def _column_stats(values) -> dict:
    present = [v for v in values if v is not None]
    if not present:
        return {"min": None, "mean": None, "max": None}
    return {
        "min": min(present),
        "mean": sum(present) / len(present),
        "max": max(present),
    }


def run_report(run_dir: str | Path) -> dict:
    """Summarize a run from its artifacts; returns the report dict.

    Writes ``report.json`` and ``report.md`` next to the inputs. Requires
    scores.jsonl and selection.json; generation_summary.json enriches the
    report when present.
    """
    run_dir = Path(run_dir)
    scores_path = run_dir / "scores.jsonl"
    selection_path = run_dir / "selection.json"
    for path in (scores_path, selection_path):
        if not path.exists():
            raise EvalError(f"missing report input: {path}")

    records = read_scores(scores_path)
    selection = read_selection(selection_path)
    correlation = correlation_report(records)

    report = {
        "candidates": len(records),
        "samples": len({r.sample_id for r in records}),
        "selected": sum(1 for r in records if r.selected),
        "method": selection["method"],
        "weights": selection.get("weights"),
        "pearson_s1_s2": correlation.pearson_s1_s2,
        "score_stats": {
            column: _column_stats([getattr(r, column) for r in records])
            for column in ("s1_raw", "s2_raw", "p_raw",
                           "s1_norm", "s2_norm", "p_norm", "combined")
        },
    }
    summary_path = run_dir / "generation_summary.json"
    if summary_path.exists():
        summary = json.loads(summary_path.read_text("utf-8"))
        report["generation"] = {
            "samples_total": summary.get("samples_total"),
            "samples_ok": summary.get("samples_ok"),
            "degenerate": summary.get("degenerate", []),
            "failed": summary.get("failed", []),
        }

    (run_dir / "report.json").write_text(
        json.dumps(report, indent=2, sort_keys=True), encoding="utf-8"
    )
    (run_dir / "report.md").write_text(render_report_md(report), encoding="utf-8")
    return report


def render_report_md(report: dict) -> str:
    def fmt(v):
        if v is None:
            return "null"
        if isinstance(v, float):
            return f"{v:.6f}"
        return str(v)

    lines = [
        "# Run report",
        "",
        f"- candidates scored: {report['candidates']}",
        f"- samples: {report['samples']}",
        f"- selected: {report['selected']}",
        f"- selection method: {report['method']}",
        f"- weights: {report['weights']}",
        f"- Pearson(S1, S2): {fmt(report['pearson_s1_s2'])}",
    ]
    if "generation" in report:
        gen = report["generation"]
        lines += [
            f"- generation: {gen['samples_ok']}/{gen['samples_total']} samples ok, "
            f"{len(gen['degenerate'])} degenerate, {len(gen['failed'])} failed",
        ]
    lines += ["", "## Score distributions", "",
              "| column | min | mean | max |", "| --- | --- | --- | --- |"]
    for column, stats in report["score_stats"].items():
        lines.append(
            f"| {column} | {fmt(stats['min'])} | {fmt(stats['mean'])} | {fmt(stats['max'])} |"
        )
    lines.append("")
    return "\n".join(lines)
