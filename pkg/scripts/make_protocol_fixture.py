"""Regenerate fixtures/protocol_conformance.json from the in-process mocks.

The fixture is the single source of truth tying the in-process mock backends
and the stub adapter server to one behavior: both test suites replay these
request/response pairs and compare bit-exact. Rerun this script only when the
stub derivation rules change, and commit the result.
"""

import json
from pathlib import Path

import numpy as np

from pobf import imgio
from pobf.backends.mock import (
    MockCaptioner,
    MockEmbedder,
    MockInpainter,
    OracleGrounder,
)
from pobf.backends.protocol import GenerationParams, encode_b64
from pobf.dataset import BBox
from pobf.geometry import normalize_box, outside_mask

SEED = 7
EMBED_DIM = 64
EMPTY_TEXT_BOX = [0.5, 0.5, 0.25, 0.25]


def fixture_image(width, height, tag):
    rng = np.random.default_rng(tag)
    ys, xs = np.mgrid[0:height, 0:width]
    base = np.stack(
        [
            (xs * 255 // max(width - 1, 1)),
            (ys * 255 // max(height - 1, 1)),
            ((xs + ys) * 255 // max(width + height - 2, 1)),
        ],
        axis=-1,
    ).astype(np.uint8)
    return imgio.encode_png(base ^ rng.integers(0, 64, (height, width, 3), dtype=np.uint8))


def main():
    root = Path(__file__).resolve().parents[1]
    out_path = root / "fixtures" / "protocol_conformance.json"
    out_path.parent.mkdir(exist_ok=True)

    captioner = MockCaptioner(seed=SEED)
    inpainter = MockInpainter(seed=SEED)
    embedder = MockEmbedder(seed=SEED, dim=EMBED_DIM)

    img_main = fixture_image(24, 18, tag=1)
    img_small = fixture_image(12, 10, tag=2)
    box_main = BBox(12.0, 9.0, 10.0, 6.0)
    box_small = BBox(6.0, 5.0, 4.0, 4.0)

    oracle = OracleGrounder(empty_text_box=tuple(EMPTY_TEXT_BOX))
    oracle.register(img_main, normalize_box(box_main, (24, 18)))
    oracle.register(img_small, normalize_box(box_small, (12, 10)))

    params = GenerationParams(seed=11)
    mask = outside_mask((24, 18), box_main)
    zero_mask_png = imgio.encode_gray_png(np.zeros((18, 24), dtype=np.uint8))

    cases = []

    def case(name, endpoint, request, response):
        cases.append(
            {"name": name, "endpoint": endpoint, "request": request, "response": response}
        )

    case(
        "caption full image",
        "/caption",
        {"image_b64": encode_b64(img_main), "crop": None, "top_p": 0.9, "seed": 11},
        {"caption": captioner.caption(img_main, None, params)},
    )
    case(
        "caption with crop",
        "/caption",
        {"image_b64": encode_b64(img_main), "crop": box_main.as_list(),
         "top_p": 0.9, "seed": 11},
        {"caption": captioner.caption(img_main, box_main, params)},
    )
    case(
        "caption crop equals full frame",
        "/caption",
        {"image_b64": encode_b64(img_main), "crop": [12.0, 9.0, 24.0, 18.0],
         "top_p": 0.9, "seed": 11},
        {"caption": captioner.caption(img_main, None, params)},
    )
    case(
        "inpaint outside mask",
        "/inpaint",
        {"image_b64": encode_b64(img_main), "mask_b64": encode_b64(mask.to_png_bytes()),
         "prompt": "a scene", "strength": 0.9, "steps": 45, "guidance_scale": 7.5,
         "seed": 11},
        {"image_b64": encode_b64(inpainter.inpaint(img_main, mask, "a scene", params))},
    )
    case(
        "inpaint all-zero mask echoes input",
        "/inpaint",
        {"image_b64": encode_b64(img_main), "mask_b64": encode_b64(zero_mask_png),
         "prompt": "a scene", "strength": 0.9, "steps": 45, "guidance_scale": 7.5,
         "seed": 11},
        {"image_b64": encode_b64(img_main)},
    )
    case(
        "ground oracle main sample",
        "/ground",
        {"image_b64": encode_b64(img_main), "text": "the object"},
        {"box": list(oracle.ground(img_main, "the object"))},
    )
    case(
        "ground oracle small sample",
        "/ground",
        {"image_b64": encode_b64(img_small), "text": "thing"},
        {"box": list(oracle.ground(img_small, "thing"))},
    )
    case(
        "ground empty text returns prior",
        "/ground",
        {"image_b64": encode_b64(img_main), "text": ""},
        {"box": EMPTY_TEXT_BOX},
    )
    case(
        "embed text",
        "/embed",
        {"text": "a red bus", "image_b64": None},
        {"vector": [float(v) for v in embedder.embed(text="a red bus")]},
    )
    case(
        "embed image",
        "/embed",
        {"text": None, "image_b64": encode_b64(img_small)},
        {"vector": [float(v) for v in embedder.embed(image=img_small)]},
    )

    fixture = {
        "stub": {
            "seed": SEED,
            "embed_dim": EMBED_DIM,
            "ground": {"kind": "oracle", "empty_text_box": EMPTY_TEXT_BOX},
        },
        "oracle_samples": [
            {"image_b64": encode_b64(img_main), "image_size": [24, 18],
             "box": box_main.as_list()},
            {"image_b64": encode_b64(img_small), "image_size": [12, 10],
             "box": box_small.as_list()},
        ],
        "cases": cases,
    }
    out_path.write_text(json.dumps(fixture, indent=2), encoding="utf-8")
    print(f"wrote {out_path} ({len(cases)} cases)")


if __name__ == "__main__":
    main()
