"""Command-line pipeline driver.

Stages are explicit subcommands over one run directory so filters can be
swapped without regenerating images::

    pobf generate --config run.toml
    pobf score    --config run.toml
    pobf select   --config run.toml --weights 1,1,0.5
    pobf mix      --config run.toml
    pobf eval     --config run.toml --predictions preds.jsonl --split test
    pobf benchmark-filters --config run.toml
    pobf report   --config run.toml

Exit codes: 0 success, 2 missing prerequisite stage, 3 backend health-check
failure, 1 anything else. Errors print one JSON object on stderr.
"""

import argparse
import json
import re
import sys

from . import filtering
from .backends.factory import build_backend, check_role_health
from .config import RunConfig, build_config, load_config_file, parse_backend_flag, parse_weights
from .dataset import load_manifest
from .errors import BackendUnavailable, MissingStageError, PobfError
from .evalkit import load_predictions, run_report, top1_accuracy
from .genpipe import CandidateStore, manifest_lookup, open_run, run_generation
from .mixer import build_mix, summarize_mix, write_mix

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_MISSING_STAGE = 2
EXIT_UNHEALTHY = 3


def _backend(config: RunConfig, role: str):
    endpoint = config.endpoint(role)
    check_role_health(role, endpoint)
    return build_backend(role, endpoint, config.seed, base_dir=config.manifest_path.parent)


def _store(config: RunConfig) -> CandidateStore:
    return CandidateStore(config.run_dir)


def _require(config: RunConfig, filename: str, producing_stage: str):
    path = config.run_dir / filename
    if not path.exists():
        raise MissingStageError(producing_stage, str(path))
    return path


def cmd_generate(config: RunConfig) -> dict:
    manifest = load_manifest(config.manifest_path)
    samples = manifest.split_records(config.split)
    store = _store(config)
    if store.is_complete() and not config.resume:
        # already complete: rerunning is a no-op, not an error
        summary = store.load_summary()
        summary["skipped"] = True
        return summary
    store = open_run(config.runs_root, config.run_id, resume=config.resume)
    captioner = _backend(config, "caption")
    inpainter = _backend(config, "inpaint")
    config.snapshot()
    summary = run_generation(
        samples,
        store,
        k=config.k,
        params=config.gen,
        captioner=captioner,
        inpainter=inpainter,
        run_seed=config.seed,
        images_root=config.images_root,
        parallelism=config.parallelism,
        resume=config.resume,
        clamped_ids=manifest.clamped_ids,
    )
    return summary.to_obj()


def cmd_score(config: RunConfig) -> dict:
    _require(config, "candidates.jsonl", "generate")
    manifest = load_manifest(config.manifest_path)
    store = _store(config)
    grounder = _backend(config, "ground")
    config.snapshot()
    records, failed = filtering.run_scoring(
        store, manifest, grounder, parallelism=config.parallelism
    )
    records = filtering.apply_weights(filtering.normalize_scores(records), config.weights)
    filtering.write_scores(records, config.run_dir / "scores.jsonl")
    report = filtering.correlation_report(records, config.run_dir / "scatter_s1_s2.csv")
    return {
        "scored": len(records),
        "failed_samples": failed,
        "pearson_s1_s2": report.pearson_s1_s2,
    }


def _selection_for(config: RunConfig, method: str, records, store, manifest):
    if method == "pobf":
        weighted = filtering.apply_weights(records, config.weights)
        return {s: [i] for s, i in filtering.select_best(weighted, config.k).items()}, weighted
    if method in ("clip", "moderate_ds"):
        embedder = _backend(config, "embed")
        by_id = manifest_lookup(manifest, store.load_candidates())
        image_vecs = {
            c.key: embedder.embed(image=store.image_bytes(c))
            for c in sorted(store.load_candidates(), key=lambda c: c.key)
        }
        text_vecs = None
        if method == "clip":
            text_vecs = {
                sample_id: embedder.embed(text=by_id[sample_id].text)
                for sample_id in sorted({key[0] for key in image_vecs})
            }
        chosen = filtering.baseline_select(
            method, records, k=config.k, seed=config.seed,
            image_vecs=image_vecs, text_vecs=text_vecs,
        )
        return chosen, records
    chosen = filtering.baseline_select(method, records, k=config.k, seed=config.seed)
    return chosen, records


def cmd_select(config: RunConfig) -> dict:
    _require(config, "scores.jsonl", "score")
    store = _store(config)
    manifest = load_manifest(config.manifest_path)
    records = filtering.read_scores(config.run_dir / "scores.jsonl")
    config.snapshot()
    chosen, records = _selection_for(config, config.filter_method, records, store, manifest)
    weights = config.weights if config.filter_method == "pobf" else None
    filtering.write_selection(
        config.run_dir / "selection.json", config.filter_method, weights, chosen
    )
    records = filtering.mark_selected(records, chosen)
    filtering.write_scores(records, config.run_dir / "scores.jsonl")
    return {
        "method": config.filter_method,
        "samples": len(chosen),
        "selected": sum(len(v) for v in chosen.values()),
    }


def cmd_mix(config: RunConfig) -> dict:
    _require(config, "selection.json", "select")
    manifest = load_manifest(config.manifest_path)
    selection = filtering.read_selection(config.run_dir / "selection.json")
    store = _store(config)
    config.snapshot()
    records = build_mix(
        manifest, selection, store, config.mix, images_root=config.images_root
    )
    write_mix(records, config.run_dir / "mix.jsonl")
    summary = summarize_mix(records)
    return {
        "total": summary.total,
        "real": summary.real,
        "synthetic": summary.synthetic,
        "replacement_rate": summary.replacement_rate,
        "by_split": summary.by_split,
    }


def cmd_eval(config: RunConfig, predictions_path: str, split: str) -> dict:
    manifest = load_manifest(config.manifest_path)
    preds = load_predictions(predictions_path)
    accuracy = top1_accuracy(preds, manifest, split=split)
    result = {
        "top1_accuracy": accuracy,
        "split": split,
        "n": len(manifest.split_records(split)),
    }
    if config.run_dir.exists():
        (config.run_dir / f"eval_{split}.json").write_text(
            json.dumps(result, indent=2), "utf-8"
        )
    return result


def cmd_benchmark_filters(config: RunConfig) -> dict:
    _require(config, "scores.jsonl", "score")
    store = _store(config)
    manifest = load_manifest(config.manifest_path)
    records = filtering.read_scores(config.run_dir / "scores.jsonl")
    config.snapshot()
    out_dir = config.run_dir / "selections"
    out_dir.mkdir(parents=True, exist_ok=True)
    written = {}
    for method in filtering.FILTER_METHODS:
        chosen, _ = _selection_for(config, method, records, store, manifest)
        weights = config.weights if method == "pobf" else None
        path = filtering.write_selection(
            out_dir / f"selection.{method}.json", method, weights, chosen
        )
        written[method] = {
            "path": str(path),
            "selected": sum(len(v) for v in chosen.values()),
        }
    summary_path = config.run_dir / "benchmark_filters.json"
    summary_path.write_text(json.dumps(written, indent=2, sort_keys=True), "utf-8")
    return written


def cmd_report(config: RunConfig) -> dict:
    _require(config, "scores.jsonl", "score")
    _require(config, "selection.json", "select")
    return run_report(config.run_dir)


def _add_common_flags(parser: argparse.ArgumentParser):
    parser.add_argument("--config", required=True, help="TOML or JSON run configuration")
    parser.add_argument("--run-id", help="override the run id")
    parser.add_argument("--k", type=int, help="candidates per sample")
    parser.add_argument("--weights", help="lambda1,lambda2,lambdaP")
    parser.add_argument("--filter", help="selection method",
                        choices=filtering.FILTER_METHODS)
    parser.add_argument("--q", type=float, help="caption replacement probability")
    parser.add_argument("--seed", type=int, help="run seed")
    parser.add_argument("--parallelism", type=int, help="max in-flight backend requests")
    parser.add_argument("--backend-url", action="append", default=[],
                        metavar="ROLE=URL", help="per-role backend URL (repeatable)")
    parser.add_argument("--split", help="manifest split to operate on")
    parser.add_argument("--resume", action="store_true", help="continue a partial run")


# lets "--weights -1,0,0" parse as a value rather than an unknown option
_NEGATIVE_TUPLE = re.compile(r"^-?\d+(\.\d+)?(,-?\d+(\.\d+)?)*$")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="pobf",
        description="Synthetic visual-grounding data engine: generate, score, select, mix.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    parsers = [parser]
    for name in ("generate", "score", "select", "mix", "benchmark-filters", "report"):
        sp = sub.add_parser(name)
        _add_common_flags(sp)
        parsers.append(sp)
    eval_parser = sub.add_parser(name="eval")
    _add_common_flags(eval_parser)
    eval_parser.add_argument("--predictions", required=True,
                             help="predictions JSONL (sample_id, normalized box)")
    parsers.append(eval_parser)
    for p in parsers:
        p._negative_number_matcher = _NEGATIVE_TUPLE
    return parser


def _config_from_args(args) -> RunConfig:
    file_obj = load_config_file(args.config)
    overrides = {
        "run_id": args.run_id,
        "k": args.k,
        "weights": parse_weights(args.weights) if args.weights else None,
        "filter": args.filter,
        "q": args.q,
        "seed": args.seed,
        "parallelism": args.parallelism,
        "split": args.split,
        "resume": args.resume,
        "backend_urls": dict(parse_backend_flag(v) for v in args.backend_url),
    }
    # 0 and 0.0 are legitimate override values; only drop unset flags
    overrides = {k: v for k, v in overrides.items() if v is not None}
    from pathlib import Path

    return build_config(file_obj, Path(args.config).parent, overrides)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        config = _config_from_args(args)
        if args.command == "generate":
            result = cmd_generate(config)
        elif args.command == "score":
            result = cmd_score(config)
        elif args.command == "select":
            result = cmd_select(config)
        elif args.command == "mix":
            result = cmd_mix(config)
        elif args.command == "eval":
            result = cmd_eval(config, args.predictions, args.split or "test")
        elif args.command == "benchmark-filters":
            result = cmd_benchmark_filters(config)
        else:
            result = cmd_report(config)
    except MissingStageError as exc:
        _fail(args.command, exc, extra={"missing_stage": exc.stage})
        return EXIT_MISSING_STAGE
    except BackendUnavailable as exc:
        _fail(args.command, exc)
        return EXIT_UNHEALTHY
    except (PobfError, OSError) as exc:
        _fail(args.command, exc)
        return EXIT_ERROR
    print(json.dumps(result, indent=2, sort_keys=True))
    return EXIT_OK


def _fail(command: str, exc: Exception, extra: dict | None = None):
    payload = {"command": command, "error": str(exc), "type": type(exc).__name__}
    payload.update(extra or {})
    print(json.dumps(payload), file=sys.stderr)


if __name__ == "__main__":
    sys.exit(main())
