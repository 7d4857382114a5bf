import base64
import io
import json

import numpy as np
import pytest
from fastapi.testclient import TestClient
from PIL import Image

from adapter_server import stubs
from adapter_server.app import StubConfig, create_app, load_oracle_table
from adapter_server.cli import build_parser, config_from_args
from adapter_server.real import RealBackends


def png_bytes(width, height, seed=0):
    rng = np.random.default_rng(seed)
    arr = rng.integers(0, 256, size=(height, width, 3), dtype=np.uint8)
    buf = io.BytesIO()
    Image.fromarray(arr, mode="RGB").save(buf, format="PNG")
    return buf.getvalue()


def gray_png(bits):
    buf = io.BytesIO()
    Image.fromarray((bits * 255).astype(np.uint8), mode="L").save(buf, format="PNG")
    return buf.getvalue()


def b64(data):
    return base64.b64encode(data).decode("ascii")


@pytest.fixture
def client():
    return TestClient(create_app(StubConfig(seed=3, prior_box=(0.5, 0.5, 0.2, 0.2),
                                            ground_kind="prior")))


class TestHealthz:
    def test_roles(self, client):
        resp = client.get("/healthz")
        assert resp.status_code == 200
        assert resp.json() == {
            "ok": True, "roles": ["caption", "inpaint", "ground", "embed"],
        }


class TestValidation:
    def test_missing_image_is_400(self, client):
        resp = client.post("/caption", json={"top_p": 0.9, "seed": 1})
        assert resp.status_code == 400
        assert "image_b64" in resp.json()["error"]

    def test_bad_base64_is_400(self, client):
        resp = client.post(
            "/caption", json={"image_b64": "!!!", "crop": None, "top_p": 0.9, "seed": 1}
        )
        assert resp.status_code == 400

    def test_embed_exactly_one_payload(self, client):
        assert client.post("/embed", json={"text": None, "image_b64": None}).status_code == 400
        assert client.post(
            "/embed", json={"text": "x", "image_b64": b64(png_bytes(4, 4))}
        ).status_code == 400

    def test_empty_prompt_is_400(self, client):
        img = png_bytes(6, 4)
        mask = gray_png(np.ones((4, 6), dtype=np.uint8))
        resp = client.post("/inpaint", json={
            "image_b64": b64(img), "mask_b64": b64(mask), "prompt": "",
            "strength": 0.9, "steps": 45, "guidance_scale": 7.5, "seed": 1,
        })
        assert resp.status_code == 400

    def test_mask_dimension_mismatch_is_400(self, client):
        img = png_bytes(6, 4)
        mask = gray_png(np.ones((3, 3), dtype=np.uint8))
        resp = client.post("/inpaint", json={
            "image_b64": b64(img), "mask_b64": b64(mask), "prompt": "p",
            "strength": 0.9, "steps": 45, "guidance_scale": 7.5, "seed": 1,
        })
        assert resp.status_code == 400
        assert "does not match" in resp.json()["error"]

    def test_unknown_oracle_image_is_400(self):
        client = TestClient(create_app(StubConfig(ground_kind="oracle")))
        resp = client.post("/ground", json={"image_b64": b64(png_bytes(4, 4)), "text": "x"})
        assert resp.status_code == 400
        assert "unknown image" in resp.json()["error"]


class TestGroundModes:
    def test_prior_mode(self, client):
        resp = client.post("/ground", json={"image_b64": b64(png_bytes(4, 4)), "text": "x"})
        assert resp.json()["box"] == [0.5, 0.5, 0.2, 0.2]

    def test_noisy_mode_matches_documented_rule(self):
        img = png_bytes(8, 8, seed=5)
        base = (0.4, 0.4, 0.2, 0.2)
        config = StubConfig(
            seed=9, ground_kind="noisy", sigma=0.05,
            oracle_table={stubs.image_sha(img): base},
        )
        client = TestClient(create_app(config))
        resp = client.post("/ground", json={"image_b64": b64(img), "text": "t"})
        want = stubs.noisy_box(base, 0.05, "t", img, 9)
        assert resp.json()["box"] == list(want)

    def test_empty_text_prior(self):
        img = png_bytes(8, 8, seed=5)
        config = StubConfig(
            ground_kind="oracle",
            oracle_table={stubs.image_sha(img): (0.4, 0.4, 0.2, 0.2)},
            empty_text_box=(0.5, 0.5, 0.3, 0.3),
        )
        client = TestClient(create_app(config))
        resp = client.post("/ground", json={"image_b64": b64(img), "text": ""})
        assert resp.json()["box"] == [0.5, 0.5, 0.3, 0.3]


class TestInpaintBehavior:
    def test_masked_pixels_filled_kept_pixels_intact(self, client):
        img = png_bytes(10, 8, seed=1)
        bits = np.zeros((8, 10), dtype=np.uint8)
        bits[:, 5:] = 1
        resp = client.post("/inpaint", json={
            "image_b64": b64(img), "mask_b64": b64(gray_png(bits)), "prompt": "p",
            "strength": 0.9, "steps": 45, "guidance_scale": 7.5, "seed": 1,
        })
        out = stubs.decode_rgb(base64.b64decode(resp.json()["image_b64"]))
        src = stubs.decode_rgb(img)
        assert np.array_equal(out[:, :5], src[:, :5])
        assert not np.array_equal(out[:, 5:], src[:, 5:])


class TestRealMode:
    def test_unwired_roles_return_501(self):
        client = TestClient(create_app(StubConfig(), mode="real"))
        img = b64(png_bytes(4, 4))
        assert client.post(
            "/caption", json={"image_b64": img, "crop": None, "top_p": 0.9, "seed": 1}
        ).status_code == 501
        assert client.post("/ground", json={"image_b64": img, "text": "x"}).status_code == 501

    def test_wired_role_serves(self):
        class Wired(RealBackends):
            def ground(self, image, text):
                return (0.1, 0.2, 0.3, 0.4)

        client = TestClient(create_app(StubConfig(), mode="real", real=Wired()))
        resp = client.post("/ground", json={"image_b64": b64(png_bytes(4, 4)), "text": "x"})
        assert resp.status_code == 200
        assert resp.json()["box"] == [0.1, 0.2, 0.3, 0.4]


class TestOracleLoading:
    def test_manifest_round_trip(self, tmp_path):
        img = png_bytes(20, 10, seed=2)
        (tmp_path / "a.png").write_bytes(img)
        manifest = tmp_path / "manifest.jsonl"
        manifest.write_text(json.dumps({
            "id": "a", "image_path": "a.png", "image_size": [20, 10],
            "text": "t", "box": [10.0, 5.0, 8.0, 4.0], "split": "train",
        }) + "\n")
        table = load_oracle_table(manifest)
        assert table[stubs.image_sha(img)] == (0.5, 0.5, 0.4, 0.4)

    def test_cli_config_requires_manifest_for_oracle(self):
        args = build_parser().parse_args(["--ground", "oracle"])
        with pytest.raises(SystemExit):
            config_from_args(args)

    def test_cli_config_prior(self):
        args = build_parser().parse_args(
            ["--ground", "prior", "--prior-box", "0.5,0.5,0.2,0.2", "--seed", "4"]
        )
        config = config_from_args(args)
        assert config.prior_box == (0.5, 0.5, 0.2, 0.2)
        assert config.seed == 4
