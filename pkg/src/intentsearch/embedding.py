"""Embedding providers behind one contract, plus the triplet-margin evaluator.

Two implementations: a deterministic synthetic attribute embedder that makes
ranking rules brute-force verifiable at desk scale, and an HTTP client for a
real encoder behind the embedding wire protocol. All providers return unit
vectors (norm within 1e-6) in input order.
"""

from __future__ import annotations

import base64
import io
import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from decimal import Decimal
from typing import TYPE_CHECKING, Iterable, Optional, Protocol, Sequence

import httpx
import numpy as np

from .errors import DimensionMismatch, EmbedderUnavailable
from .index import normalize
from .model import UnitVector, as_price

if TYPE_CHECKING:
    from .visual import RegionMask

Box = tuple[int, int, int, int]


class EmbeddingProvider(Protocol):
    """Uniform contract: declared dim, text/image capabilities, unit outputs."""

    dim: int
    capabilities: frozenset[str]

    def embed_texts(self, texts: Sequence[str]) -> list[UnitVector]: ...

    def embed_images(self, images: Sequence[np.ndarray]) -> list[UnitVector]: ...


# ---------------------------------------------------------------------------
# Synthetic attribute embedder
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SyntheticRecord:
    id: str
    attributes: tuple[str, ...]
    collection: str = ""
    price: Decimal = Decimal(0)

    def __post_init__(self):
        object.__setattr__(self, "attributes", tuple(self.attributes))
        object.__setattr__(self, "price", as_price(self.price))


@dataclass(frozen=True)
class SyntheticGallerySpec:
    """Attributes drawn as disjoint rectangles on a canvas; test-oracle substrate."""

    attribute_names: tuple[str, ...]
    grid: tuple[Box, ...]  # one (x0, y0, x1, y1) region per attribute
    canvas: tuple[int, int]  # (width, height)
    records: tuple[SyntheticRecord, ...] = ()
    dim: int = 0  # 0 means attribute count + 1 (the unknown basis)

    def __post_init__(self):
        object.__setattr__(self, "attribute_names", tuple(self.attribute_names))
        object.__setattr__(self, "grid", tuple(tuple(b) for b in self.grid))
        object.__setattr__(self, "canvas", tuple(self.canvas))
        object.__setattr__(self, "records", tuple(self.records))
        if len(self.grid) != len(self.attribute_names):
            raise ValueError("grid must assign one region per attribute")
        if self.dim == 0:
            object.__setattr__(self, "dim", len(self.attribute_names) + 1)
        if self.dim <= len(self.attribute_names):
            raise ValueError("dim must exceed the attribute count (last dim is the unknown basis)")
        w, h = self.canvas
        covered = np.zeros((h, w), dtype=bool)
        for name, (x0, y0, x1, y1) in zip(self.attribute_names, self.grid):
            if not (0 <= x0 < x1 <= w and 0 <= y0 < y1 <= h):
                raise ValueError(f"attribute {name!r} region outside canvas")
            if covered[y0:y1, x0:x1].any():
                raise ValueError(f"attribute {name!r} region overlaps another")
            covered[y0:y1, x0:x1] = True
        for rec in self.records:
            if not rec.attributes:
                raise ValueError(f"record {rec.id!r} has an empty attribute subset")
            unknown = set(rec.attributes) - set(self.attribute_names)
            if unknown:
                raise ValueError(f"record {rec.id!r} names unknown attributes {sorted(unknown)}")

    @property
    def unknown_index(self) -> int:
        return self.dim - 1

    def attribute_index(self, name: str) -> int:
        return self.attribute_names.index(name)

    def basis(self, name: str) -> UnitVector:
        vec = np.zeros(self.dim, dtype=np.float32)
        vec[self.attribute_index(name)] = 1.0
        return vec

    def embedding_for(self, attributes: Iterable[str]) -> UnitVector:
        """normalize(sum of attribute bases); empty set maps to the unknown basis."""
        vec = np.zeros(self.dim, dtype=np.float32)
        hits = 0
        for name in attributes:
            vec[self.attribute_index(name)] = 1.0
            hits += 1
        if hits == 0:
            vec[self.unknown_index] = 1.0
        return normalize(vec)


_TOKEN_RE = re.compile(r"[a-z0-9]+")


def _tokens(text: str) -> list[str]:
    return _TOKEN_RE.findall(text.casefold())


def _contains_subsequence(haystack: list[str], needle: list[str]) -> bool:
    if not needle:
        return False
    n = len(needle)
    return any(haystack[i : i + n] == needle for i in range(len(haystack) - n + 1))


def embed_text_synthetic(spec: SyntheticGallerySpec, text: str) -> UnitVector:
    """Sum the bases of every attribute whose name appears in the text's tokens."""
    toks = _tokens(text)
    matched = [
        name for name in spec.attribute_names if _contains_subsequence(toks, _tokens(name))
    ]
    return spec.embedding_for(matched)


def _foreground(image: np.ndarray) -> np.ndarray:
    """Bright, non-white pixels; dim regularization residue does not count."""
    if image.ndim == 2:
        return (image >= 128) & (image != 255)
    bright = image.max(axis=2) >= 128
    white = np.all(image == 255, axis=2)
    return bright & ~white


def embed_image_synthetic(
    spec: SyntheticGallerySpec,
    image: np.ndarray,
    mask: "Optional[RegionMask]" = None,
) -> UnitVector:
    """An attribute counts as present when a strict majority of its region is lit."""
    w, h = spec.canvas
    if image.shape[:2] != (h, w):
        raise DimensionMismatch(
            f"image is {image.shape[1]}x{image.shape[0]}, spec canvas is {w}x{h}"
        )
    mask_bits = None
    if mask is not None:
        mask_bits = mask.bits if hasattr(mask, "bits") else np.asarray(mask, dtype=bool)
        if mask_bits.shape != (h, w):
            raise DimensionMismatch("mask dimensions differ from the spec canvas")
    fg = _foreground(image)
    present = []
    for name, (x0, y0, x1, y1) in zip(spec.attribute_names, spec.grid):
        area = (x1 - x0) * (y1 - y0)
        if int(fg[y0:y1, x0:x1].sum()) * 2 <= area:
            continue
        if mask_bits is not None and int(mask_bits[y0:y1, x0:x1].sum()) * 2 <= area:
            continue
        present.append(name)
    return spec.embedding_for(present)


class SyntheticEmbedder:
    """Provider facade over a SyntheticGallerySpec."""

    capabilities = frozenset({"text", "image"})

    def __init__(self, spec: SyntheticGallerySpec):
        self.spec = spec
        self.dim = spec.dim

    def embed_texts(self, texts: Sequence[str]) -> list[UnitVector]:
        return [embed_text_synthetic(self.spec, t) for t in texts]

    def embed_images(self, images: Sequence[np.ndarray]) -> list[UnitVector]:
        return [embed_image_synthetic(self.spec, img) for img in images]

    def embed_text(self, text: str) -> UnitVector:
        return embed_text_synthetic(self.spec, text)

    def embed_image(self, image: np.ndarray, mask: "Optional[RegionMask]" = None) -> UnitVector:
        return embed_image_synthetic(self.spec, image, mask)


# ---------------------------------------------------------------------------
# Remote provider (embedding wire protocol)
# ---------------------------------------------------------------------------


def png_base64(image: np.ndarray) -> str:
    from PIL import Image

    buf = io.BytesIO()
    Image.fromarray(image).save(buf, format="PNG")
    return base64.b64encode(buf.getvalue()).decode("ascii")


class RemoteEmbedder:
    """Client for POST {endpoint}/embed; normalizes vectors client-side."""

    capabilities = frozenset({"text", "image"})

    def __init__(
        self,
        endpoint: str,
        expected_dim: Optional[int] = None,
        batch_max: int = 64,
        max_concurrency: int = 4,
        timeout: float = 30.0,
        transport: Optional[httpx.BaseTransport] = None,
    ):
        self.endpoint = endpoint.rstrip("/")
        self.dim = expected_dim or 0
        self.batch_max = batch_max
        self.max_concurrency = max(1, max_concurrency)
        self._client = httpx.Client(timeout=timeout, transport=transport)

    def close(self) -> None:
        self._client.close()

    def _post(self, payload: dict) -> list[UnitVector]:
        try:
            resp = self._client.post(f"{self.endpoint}/embed", json=payload)
        except httpx.HTTPError as exc:
            raise EmbedderUnavailable(f"embed call failed: {exc}") from exc
        if resp.status_code != 200:
            raise EmbedderUnavailable(f"embed endpoint returned HTTP {resp.status_code}")
        body = resp.json()
        server_dim = int(body["dim"])
        if self.dim and server_dim != self.dim:
            raise DimensionMismatch(f"server dim {server_dim} != expected {self.dim}")
        if not self.dim:
            self.dim = server_dim
        out = []
        for vec in body["vectors"]:
            arr = np.asarray(vec, dtype=np.float32)
            if arr.shape != (server_dim,):
                raise DimensionMismatch("vector length differs from declared dim")
            out.append(normalize(arr))
        return out

    def _batched(self, key: str, items: list) -> list[UnitVector]:
        """Chunk into batches; at most max_concurrency requests in flight."""
        if not items:
            return []
        chunks = [items[i : i + self.batch_max] for i in range(0, len(items), self.batch_max)]
        if len(chunks) == 1 or self.max_concurrency == 1:
            batches = [self._post({key: chunk}) for chunk in chunks]
        else:
            with ThreadPoolExecutor(max_workers=self.max_concurrency) as pool:
                batches = list(pool.map(lambda chunk: self._post({key: chunk}), chunks))
        return [vec for batch in batches for vec in batch]

    def embed_texts(self, texts: Sequence[str]) -> list[UnitVector]:
        return self._batched("texts", list(texts))

    def embed_images(self, images: Sequence[np.ndarray]) -> list[UnitVector]:
        return self._batched("images", [png_base64(img) for img in images])

    def embed_text(self, text: str) -> UnitVector:
        return self.embed_texts([text])[0]

    def embed_image(self, image: np.ndarray, mask=None) -> UnitVector:
        if mask is not None:
            raise ValueError("remote embedder does not take masks; composite first")
        return self.embed_images([image])[0]


# ---------------------------------------------------------------------------
# Triplet-margin evaluator
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TripletSample:
    """Query, positive, and adversarial vectors sharing one dim."""

    x_q: UnitVector
    x_p: UnitVector
    x_a: UnitVector


def _cosine_sim(u: UnitVector, v: UnitVector) -> float:
    if u.shape != v.shape:
        raise DimensionMismatch(f"dim {u.shape} vs {v.shape}")
    return float(np.dot(u.astype(np.float64), v.astype(np.float64)))


def triplet_margin(sample: TripletSample, alpha: float) -> float:
    """|Sim(q,p) - 1| - |Sim(q,a) - 1| + alpha, exactly as printed (no hinge)."""
    s_qp = _cosine_sim(sample.x_q, sample.x_p)
    s_qa = _cosine_sim(sample.x_q, sample.x_a)
    return abs(s_qp - 1.0) - abs(s_qa - 1.0) + alpha


def hinged_triplet_margin(sample: TripletSample, alpha: float) -> float:
    """The standard hinged form, max(0, raw margin)."""
    return max(0.0, triplet_margin(sample, alpha))
