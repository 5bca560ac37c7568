"""Region-to-query pipeline: box prompt -> mask -> masked composites -> embedding.

Pixels are 8-bit row-major numpy arrays, (H, W) grayscale or (H, W, 3) RGB,
matching PNG transport so the composite rules stay bit-testable. The box_fill
segmenter is the deterministic fallback and test oracle; the remote provider
speaks the segmentation wire protocol.
"""

from __future__ import annotations

import base64
import io
from dataclasses import dataclass
from typing import Literal, Optional, Sequence

import httpx
import numpy as np

from .errors import (
    DimensionMismatch,
    EditorUnavailable,
    InvalidBox,
    SegmenterUnavailable,
)
from .index import normalize
from .model import UnitVector

Box = tuple[int, int, int, int]  # (x0, y0, x1, y1), inclusive-exclusive


def encode_png(image: np.ndarray) -> bytes:
    from PIL import Image

    buf = io.BytesIO()
    Image.fromarray(image).save(buf, format="PNG")
    return buf.getvalue()


def decode_png(data: bytes) -> np.ndarray:
    from PIL import Image

    img = Image.open(io.BytesIO(data))
    if img.mode not in ("L", "RGB"):
        img = img.convert("RGB")
    return np.asarray(img)


@dataclass(frozen=True)
class RegionMask:
    """Binary pixel mask; 1 marks the selected element."""

    width: int
    height: int
    bits: np.ndarray  # bool, shape (height, width)
    source_box: Box

    def __post_init__(self):
        bits = np.asarray(self.bits, dtype=bool)
        if bits.shape != (self.height, self.width):
            raise DimensionMismatch(
                f"mask bits shape {bits.shape} != (height={self.height}, width={self.width})"
            )
        if not bits.any():
            raise InvalidBox("mask selects no pixels")
        bits.setflags(write=False)
        object.__setattr__(self, "bits", bits)
        object.__setattr__(self, "source_box", tuple(self.source_box))


def _check_box(image: np.ndarray, box: Box) -> Box:
    h, w = image.shape[:2]
    x0, y0, x1, y1 = (int(v) for v in box)
    if not (0 <= x0 < x1 <= w and 0 <= y0 < y1 <= h):
        raise InvalidBox(f"box {box} invalid for a {w}x{h} image")
    return (x0, y0, x1, y1)


class BoxFillSegmenter:
    """Deterministic provider: the mask is exactly the box interior."""

    mode = "box_fill"

    def segment(self, image: np.ndarray, box: Box) -> RegionMask:
        x0, y0, x1, y1 = _check_box(image, box)
        h, w = image.shape[:2]
        bits = np.zeros((h, w), dtype=bool)
        bits[y0:y1, x0:x1] = True
        return RegionMask(width=w, height=h, bits=bits, source_box=(x0, y0, x1, y1))


class RemoteSegmenter:
    """Client for POST {endpoint}/segment; mask clipped to image bounds."""

    mode = "remote"

    def __init__(
        self,
        endpoint: str,
        timeout: float = 30.0,
        transport: Optional[httpx.BaseTransport] = None,
    ):
        self.endpoint = endpoint.rstrip("/")
        self._client = httpx.Client(timeout=timeout, transport=transport)

    def close(self) -> None:
        self._client.close()

    def segment(self, image: np.ndarray, box: Box) -> RegionMask:
        box = _check_box(image, box)
        payload = {
            "image": base64.b64encode(encode_png(image)).decode("ascii"),
            "box": list(box),
        }
        try:
            resp = self._client.post(f"{self.endpoint}/segment", json=payload)
        except httpx.HTTPError as exc:
            raise SegmenterUnavailable(f"segment call failed: {exc}") from exc
        if resp.status_code != 200:
            raise SegmenterUnavailable(f"segment endpoint returned HTTP {resp.status_code}")
        raw = decode_png(base64.b64decode(resp.json()["mask"]))
        if raw.ndim == 3:
            raw = raw[:, :, 0]
        h, w = image.shape[:2]
        bits = np.zeros((h, w), dtype=bool)
        ch, cw = min(h, raw.shape[0]), min(w, raw.shape[1])
        bits[:ch, :cw] = raw[:ch, :cw] > 127
        return RegionMask(width=w, height=h, bits=bits, source_box=box)


def segment(image: np.ndarray, box: Box, provider) -> RegionMask:
    return provider.segment(image, box)


# ---------------------------------------------------------------------------
# Masked composites
# ---------------------------------------------------------------------------


def _check_mask(image: np.ndarray, mask: RegionMask) -> None:
    if image.shape[:2] != (mask.height, mask.width):
        raise DimensionMismatch(
            f"image {image.shape[:2]} vs mask ({mask.height}, {mask.width})"
        )


def regularized_black_composite(
    image: np.ndarray, mask: RegionMask, alpha0: float = 0.9, alpha1: float = 0.1
) -> np.ndarray:
    """Keep the selection, damp the rest to alpha1 of its value (half-up rounding)."""
    _check_mask(image, mask)
    if abs(alpha0 + alpha1 - 1.0) > 1e-12:
        raise ValueError("alpha0 + alpha1 must equal 1.0")
    out = image.copy()
    outside = ~mask.bits
    out[outside] = np.floor(image[outside].astype(np.float64) * alpha1 + 0.5).astype(np.uint8)
    return out


def white_composite(image: np.ndarray, mask: RegionMask) -> np.ndarray:
    """Keep the selection, paint everything outside it white."""
    _check_mask(image, mask)
    out = image.copy()
    out[~mask.bits] = 255
    return out


def visual_query_embedding(
    image: np.ndarray,
    mask: RegionMask,
    embedder,
    alpha0: float = 0.9,
    alpha1: float = 0.1,
) -> UnitVector:
    """Average the embeddings of both composites and renormalize for the index."""
    dark = embedder.embed_image(regularized_black_composite(image, mask, alpha0, alpha1))
    light = embedder.embed_image(white_composite(image, mask))
    return normalize(0.5 * (dark.astype(np.float64) + light.astype(np.float64)))


def combine_selected_elements(
    vectors: Sequence[UnitVector], relation: Literal["intersection", "union"]
) -> list[UnitVector]:
    """Intersection folds selections into one query; union keeps them separate."""
    if not vectors:
        raise ValueError("need at least one selection vector")
    if relation == "union":
        return list(vectors)
    if relation == "intersection":
        if len(vectors) == 1:
            return [vectors[0]]
        mean = np.mean([v.astype(np.float64) for v in vectors], axis=0)
        return [normalize(mean)]
    raise ValueError(f"unknown relation {relation!r}")


def swap_element(original: np.ndarray, edited: np.ndarray, mask: RegionMask) -> np.ndarray:
    """Edited pixels inside the mask, original outside; bit-exact."""
    if original.shape != edited.shape:
        raise DimensionMismatch(f"original {original.shape} vs edited {edited.shape}")
    _check_mask(original, mask)
    out = original.copy()
    out[mask.bits] = edited[mask.bits]
    return out


# ---------------------------------------------------------------------------
# Edit providers (change preview)
# ---------------------------------------------------------------------------

_STUB_COLORS = {
    "black": (0, 0, 0),
    "white": (255, 255, 255),
    "red": (220, 40, 40),
    "green": (40, 200, 60),
    "blue": (40, 80, 230),
    "yellow": (240, 220, 40),
    "orange": (245, 140, 30),
    "purple": (150, 60, 200),
    "pink": (240, 130, 180),
    "cyan": (40, 210, 220),
    "brown": (150, 90, 40),
    "gray": (128, 128, 128),
    "grey": (128, 128, 128),
}


class StubEditProvider:
    """Offline stand-in for a text-guided editor: recolors deterministically.

    The last color word in the instruction wins; with no color word the image
    is inverted. The swap step keeps only the masked region of the result.
    """

    def edit(self, image: np.ndarray, instruction: str) -> np.ndarray:
        color = None
        for word in instruction.casefold().split():
            color = _STUB_COLORS.get(word.strip(".,!?"), color)
        if color is None:
            return (255 - image.astype(np.int16)).astype(np.uint8)
        out = np.empty_like(image)
        if image.ndim == 2:
            out[:] = int(round(sum(color) / 3))
        else:
            out[:] = np.asarray(color, dtype=np.uint8)
        return out


class RemoteEditProvider:
    """Client for POST {endpoint}/edit (text-guided image editing service)."""

    def __init__(
        self,
        endpoint: str,
        timeout: float = 120.0,
        transport: Optional[httpx.BaseTransport] = None,
    ):
        self.endpoint = endpoint.rstrip("/")
        self._client = httpx.Client(timeout=timeout, transport=transport)

    def close(self) -> None:
        self._client.close()

    def edit(self, image: np.ndarray, instruction: str) -> np.ndarray:
        payload = {
            "image": base64.b64encode(encode_png(image)).decode("ascii"),
            "instruction": instruction,
        }
        try:
            resp = self._client.post(f"{self.endpoint}/edit", json=payload)
        except httpx.HTTPError as exc:
            raise EditorUnavailable(f"edit call failed: {exc}") from exc
        if resp.status_code != 200:
            raise EditorUnavailable(f"edit endpoint returned HTTP {resp.status_code}")
        edited = decode_png(base64.b64decode(resp.json()["image"]))
        if edited.shape != image.shape:
            raise DimensionMismatch("edited image dimensions differ from the input")
        return edited


def compose_change_preview(
    image: np.ndarray, box: Box, instruction: str, segmenter, editor
) -> tuple[np.ndarray, RegionMask, np.ndarray]:
    """segment -> edit -> swap; returns (edited, mask, swapped preview)."""
    mask = segment(image, box, segmenter)
    edited = editor.edit(image, instruction)
    if edited.shape != image.shape:
        raise DimensionMismatch("edit provider changed the image dimensions")
    return edited, mask, swap_element(image, edited, mask)
