"""Box arithmetic, IoU and raster mask operations.

Pixel membership follows one rule everywhere: the pixel (px, py) belongs to a
box iff its center (px + 0.5, py + 0.5) lies in the half-open rectangle
[x0, x1) x [y0, y1). That kills boundary double counting; boxes touching only
along an edge therefore intersect nothing.
"""

import math
from dataclasses import dataclass

import numpy as np

from . import imgio, kernels
from .dataset import BBox
from .errors import DegenerateMaskError, GeometryError, ProtocolError


def iou(a: BBox, b: BBox) -> float:
    """Intersection over union in [0, 1]; symmetric, 1.0 iff identical."""
    return kernels.iou_cwh(a.cx, a.cy, a.w, a.h, b.cx, b.cy, b.w, b.h)


def pixel_span(lo: float, hi: float, limit: int) -> tuple[int, int]:
    """Integer index range [i0, i1) of pixels whose centers lie in [lo, hi)."""
    i0 = max(0, math.ceil(lo - 0.5))
    i1 = min(limit, math.ceil(hi - 0.5))
    return i0, max(i0, i1)


def box_pixel_rect(box: BBox, image_size: tuple[int, int]) -> tuple[int, int, int, int]:
    """(ix0, iy0, ix1, iy1) pixel rectangle covered by the box."""
    width, height = image_size
    x0, y0, x1, y1 = box.corners
    ix0, ix1 = pixel_span(x0, x1, width)
    iy0, iy1 = pixel_span(y0, y1, height)
    return ix0, iy0, ix1, iy1


@dataclass(frozen=True)
class RasterMask:
    """Binary bitmap; 1 marks pixels to regenerate."""

    width: int
    height: int
    bits: np.ndarray  # (height, width) uint8 of {0, 1}

    def __post_init__(self):
        if self.bits.shape != (self.height, self.width):
            raise GeometryError(
                f"mask bits shape {self.bits.shape} != {(self.height, self.width)}"
            )

    @property
    def ones(self) -> int:
        return int(self.bits.sum())

    def to_png_bytes(self) -> bytes:
        """8-bit grayscale PNG, 0 = keep, 255 = regenerate."""
        return imgio.encode_gray_png(self.bits * np.uint8(255))

    @classmethod
    def from_png_bytes(cls, data: bytes) -> "RasterMask":
        gray = imgio.decode_gray(data)
        bits = (gray >= 128).astype(np.uint8)
        return cls(width=bits.shape[1], height=bits.shape[0], bits=bits)


def outside_mask(image_size: tuple[int, int], box: BBox) -> RasterMask:
    """Mask of everything outside the box; raises when nothing is outside."""
    width, height = image_size
    if width <= 0 or height <= 0:
        raise GeometryError(f"non-positive image size {image_size}")
    ix0, iy0, ix1, iy1 = box_pixel_rect(box, image_size)
    bits = np.empty((height, width), dtype=np.uint8)
    kernels.fill_outside(bits, ix0, iy0, ix1, iy1)
    mask = RasterMask(width=width, height=height, bits=bits)
    if mask.ones == 0:
        raise DegenerateMaskError(
            f"box {box.as_list()} covers the whole {width}x{height} image"
        )
    return mask


def zero_inside(
    image: np.ndarray,
    box: BBox,
    expected_size: tuple[int, int] | None = None,
) -> np.ndarray:
    """Return a copy with all pixels inside the box set to (0, 0, 0).

    ``expected_size`` is the sample's declared (W, H); a mismatch with the
    actual array raises rather than silently scoring the wrong geometry.
    """
    if image.ndim != 3 or image.shape[2] != 3:
        raise GeometryError(f"expected (H, W, 3) image, got shape {image.shape}")
    actual = (image.shape[1], image.shape[0])
    if expected_size is not None and tuple(expected_size) != actual:
        raise GeometryError(
            f"image size mismatch: expected {tuple(expected_size)}, actual {actual}"
        )
    out = np.ascontiguousarray(image.copy())
    ix0, iy0, ix1, iy1 = box_pixel_rect(box, actual)
    kernels.zero_rect(out, ix0, iy0, ix1, iy1)
    return out


def denormalize_box(
    nb: tuple[float, float, float, float], image_size: tuple[int, int]
) -> BBox:
    """Scale a [0,1]^4 cwh box to absolute pixels, clamp, widen zero extents.

    Grounder backends reply in normalized coordinates; anything outside
    [0, 1] is a protocol violation, not a geometry problem.
    """
    if len(nb) != 4:
        raise ProtocolError(f"normalized box must have 4 components, got {len(nb)}")
    for v in nb:
        if not (0.0 <= float(v) <= 1.0) or not math.isfinite(float(v)):
            raise ProtocolError(f"normalized box component {v} outside [0, 1]")
    width, height = image_size
    cx, cy = nb[0] * width, nb[1] * height
    w, h = nb[2] * width, nb[3] * height

    x0 = max(0.0, min(cx - w / 2.0, float(width)))
    x1 = max(0.0, min(cx + w / 2.0, float(width)))
    y0 = max(0.0, min(cy - h / 2.0, float(height)))
    y1 = max(0.0, min(cy + h / 2.0, float(height)))
    # Degenerate extents widen to one pixel, nudged to stay in frame.
    if x1 - x0 <= 0.0:
        cx = min(max((x0 + x1) / 2.0, 0.5), width - 0.5)
        x0, x1 = cx - 0.5, cx + 0.5
    if y1 - y0 <= 0.0:
        cy = min(max((y0 + y1) / 2.0, 0.5), height - 0.5)
        y0, y1 = cy - 0.5, cy + 0.5
    return BBox.from_corners(x0, y0, x1, y1)


def normalize_box(box: BBox, image_size: tuple[int, int]) -> tuple[float, float, float, float]:
    """Inverse of :func:`denormalize_box` for well-formed boxes."""
    width, height = image_size
    return (box.cx / width, box.cy / height, box.w / width, box.h / height)


def crop_pixels(image: np.ndarray, box: BBox) -> np.ndarray:
    """Extract the pixel rectangle of the box (at least 1x1)."""
    size = (image.shape[1], image.shape[0])
    ix0, iy0, ix1, iy1 = box_pixel_rect(box, size)
    # Sub-pixel boxes still crop something captionable.
    if ix1 == ix0:
        ix0 = max(0, min(ix0, size[0] - 1))
        ix1 = ix0 + 1
    if iy1 == iy0:
        iy0 = max(0, min(iy0, size[1] - 1))
        iy1 = iy0 + 1
    return image[iy0:iy1, ix0:ix1, :]
