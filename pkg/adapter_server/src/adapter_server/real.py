"""Hook points for wiring real models behind the wire protocol.

Subclass :class:`RealBackends`, override the methods you can serve, and pass
the instance to ``create_app(config, mode="real", real=...)``. Anything left
unimplemented answers 501 so partially-wired deployments stay honest. The
repository deliberately ships no model weights; stub mode keeps CI and the
engine's test suite runnable everywhere.

Example skeleton::

    class DiffusersBackends(RealBackends):
        def __init__(self):
            self.pipe = ...  # load an inpainting pipeline once

        def inpaint(self, image, mask_png, prompt, strength, steps,
                    guidance_scale, seed):
            ...  # run the pipeline, return encoded PNG bytes
"""

import base64

from fastapi.responses import JSONResponse


def _not_implemented(role: str) -> JSONResponse:
    return JSONResponse(
        {"error": f"role {role!r} is not wired in real mode"}, status_code=501
    )


class RealBackends:
    """Override any subset; unimplemented roles return 501."""

    def caption(self, image: bytes, top_p: float, seed: int) -> str:
        raise NotImplementedError

    def inpaint(self, image: bytes, mask_png: bytes, prompt: str, strength: float,
                steps: int, guidance_scale: float, seed: int) -> bytes:
        raise NotImplementedError

    def ground(self, image: bytes, text: str) -> tuple[float, float, float, float]:
        raise NotImplementedError

    def embed(self, text: str | None, image: bytes | None) -> list[float]:
        raise NotImplementedError

    # --- wrappers used by the app; they translate NotImplementedError to 501

    def caption_or_501(self, image, top_p, seed):
        try:
            return {"caption": self.caption(image, top_p, seed)}
        except NotImplementedError:
            return _not_implemented("caption")

    def inpaint_or_501(self, image, mask_png, prompt, strength, steps,
                       guidance_scale, seed):
        try:
            out = self.inpaint(image, mask_png, prompt, strength, steps,
                               guidance_scale, seed)
            return {"image_b64": base64.b64encode(out).decode("ascii")}
        except NotImplementedError:
            return _not_implemented("inpaint")

    def ground_or_501(self, image, text):
        try:
            return {"box": list(self.ground(image, text))}
        except NotImplementedError:
            return _not_implemented("ground")

    def embed_or_501(self, text, image_b64):
        try:
            image = base64.b64decode(image_b64) if image_b64 else None
            return {"vector": [float(v) for v in self.embed(text, image)]}
        except NotImplementedError:
            return _not_implemented("embed")
