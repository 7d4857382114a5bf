"""Serve the adapter endpoints.

Stub mode needs no models::

    pobf-adapter-server --port 8080 --seed 7 \\
        --ground oracle --manifest data/manifest.jsonl --images-root data/images

Real mode (after wiring hooks in a subclass of RealBackends) is selected with
``--mode real`` and answers 501 for any role left unimplemented.
"""

import argparse

import uvicorn

from .app import GROUND_KINDS, StubConfig, create_app, load_oracle_table


def _parse_box(text: str):
    parts = [float(v) for v in text.split(",")]
    if len(parts) != 4:
        raise argparse.ArgumentTypeError("expected cx,cy,w,h")
    return tuple(parts)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="pobf-adapter-server", description=__doc__)
    parser.add_argument("--host", default="127.0.0.1")
    parser.add_argument("--port", type=int, default=8080)
    parser.add_argument("--mode", choices=("stub", "real"), default="stub")
    parser.add_argument("--seed", type=int, default=0, help="stub determinism seed")
    parser.add_argument("--embed-dim", type=int, default=64)
    parser.add_argument("--ground", choices=GROUND_KINDS, default="oracle")
    parser.add_argument("--manifest", help="manifest JSONL for the oracle lookup")
    parser.add_argument("--images-root", help="base directory of manifest image paths")
    parser.add_argument("--sigma", type=float, default=0.05,
                        help="perturbation scale for --ground noisy")
    parser.add_argument("--prior-box", type=_parse_box,
                        help="normalized cx,cy,w,h for --ground prior")
    parser.add_argument("--empty-box", type=_parse_box,
                        help="normalized box returned for empty-text queries")
    parser.add_argument("--flaky-first", type=int, default=0,
                        help="testing aid: 503 the first N attempts per request id")
    return parser


def config_from_args(args) -> StubConfig:
    table = {}
    if args.ground in ("oracle", "noisy"):
        if not args.manifest:
            raise SystemExit(f"--ground {args.ground} requires --manifest")
        table = load_oracle_table(args.manifest, args.images_root)
    return StubConfig(
        seed=args.seed,
        embed_dim=args.embed_dim,
        ground_kind=args.ground,
        sigma=args.sigma,
        prior_box=args.prior_box,
        empty_text_box=args.empty_box,
        oracle_table=table,
        flaky_first=args.flaky_first,
    )


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    app = create_app(config_from_args(args), mode=args.mode)
    uvicorn.run(app, host=args.host, port=args.port, log_level="info")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
