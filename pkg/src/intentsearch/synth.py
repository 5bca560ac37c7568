"""Synthetic gallery generation: the desk-scale oracle corpus.

Each attribute is a solid saturated rectangle in its own grid cell on a black
canvas, so box_fill segmentation plus the synthetic embedder form an
end-to-end pixel-level oracle for the whole retrieval pipeline.
"""

from __future__ import annotations

import colorsys
import json
from decimal import Decimal
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .embedding import SyntheticEmbedder, SyntheticGallerySpec, SyntheticRecord
from .model import ImageRecord
from .visual import encode_png

SYNTH_SPEC_FILENAME = "synth_spec.json"
META_FILENAME = "meta.jsonl"
IMAGES_DIRNAME = "images"

_COLLECTIONS = ("Pixel Parade", "Cobalt Club", "Amber Array")


def attribute_color(i: int) -> tuple[int, int, int]:
    """Saturated, clearly-lit palette: max channel >= 128 and never pure white."""
    r, g, b = colorsys.hsv_to_rgb((i * 0.37) % 1.0, 0.75, 0.85)
    return int(r * 255), int(g * 255), int(b * 255)


def default_grid(num_attrs: int, canvas: tuple[int, int], margin: int = 2) -> list[tuple[int, int, int, int]]:
    """Disjoint axis-aligned cells, row-major, one per attribute."""
    w, h = canvas
    cols = int(np.ceil(np.sqrt(num_attrs)))
    rows = int(np.ceil(num_attrs / cols))
    cell_w, cell_h = w // cols, h // rows
    if cell_w - 2 * margin < 1 or cell_h - 2 * margin < 1:
        raise ValueError("canvas too small for the attribute count")
    regions = []
    for i in range(num_attrs):
        r, c = divmod(i, cols)
        x0, y0 = c * cell_w + margin, r * cell_h + margin
        regions.append((x0, y0, x0 + cell_w - 2 * margin, y0 + cell_h - 2 * margin))
    return regions


def build_spec(
    num_attrs: int,
    num_images: int,
    seed: int = 7,
    canvas: tuple[int, int] = (64, 64),
    dim: int = 0,
    max_subset: Optional[int] = None,
) -> SyntheticGallerySpec:
    """Random but seed-deterministic records over `num_attrs` attributes."""
    rng = np.random.default_rng(seed)
    names = tuple(f"attr{i}" for i in range(num_attrs))
    grid = default_grid(num_attrs, canvas)
    cap = max_subset or num_attrs
    records = []
    for i in range(num_images):
        size = int(rng.integers(1, cap + 1))
        subset = sorted(rng.choice(num_attrs, size=size, replace=False).tolist())
        price = Decimal(int(rng.integers(1, 1000))) / Decimal(100)
        records.append(
            SyntheticRecord(
                id=f"img{i:04d}",
                attributes=tuple(names[j] for j in subset),
                collection=_COLLECTIONS[i % len(_COLLECTIONS)],
                price=price,
            )
        )
    return SyntheticGallerySpec(
        attribute_names=names, grid=grid, canvas=canvas, records=tuple(records), dim=dim
    )


def render_record(spec: SyntheticGallerySpec, record: SyntheticRecord) -> np.ndarray:
    """RGB render: black background, one colored rectangle per attribute."""
    w, h = spec.canvas
    image = np.zeros((h, w, 3), dtype=np.uint8)
    for name in record.attributes:
        i = spec.attribute_index(name)
        x0, y0, x1, y1 = spec.grid[i]
        image[y0:y1, x0:x1] = attribute_color(i)
    return image


def image_records_for(spec: SyntheticGallerySpec) -> list[ImageRecord]:
    records = []
    for i, rec in enumerate(spec.records):
        records.append(
            ImageRecord(
                id=rec.id,
                image_path=f"{IMAGES_DIRNAME}/{rec.id}.png",
                contract="0xsynthetic",
                token_id=str(i),
                chain="testnet",
                collection=rec.collection,
                price=rec.price,
                tags={f"trait{j}": name for j, name in enumerate(rec.attributes)},
            )
        )
    return records


def spec_to_dict(spec: SyntheticGallerySpec) -> dict:
    return {
        "attribute_names": list(spec.attribute_names),
        "grid": [list(b) for b in spec.grid],
        "canvas": list(spec.canvas),
        "dim": spec.dim,
        "records": [
            {
                "id": r.id,
                "attributes": list(r.attributes),
                "collection": r.collection,
                "price": str(r.price),
            }
            for r in spec.records
        ],
    }


def spec_from_dict(data: dict) -> SyntheticGallerySpec:
    return SyntheticGallerySpec(
        attribute_names=tuple(data["attribute_names"]),
        grid=tuple(tuple(b) for b in data["grid"]),
        canvas=tuple(data["canvas"]),
        dim=int(data.get("dim", 0)),
        records=tuple(
            SyntheticRecord(
                id=r["id"],
                attributes=tuple(r["attributes"]),
                collection=r.get("collection", ""),
                price=Decimal(r.get("price", "0")),
            )
            for r in data.get("records", ())
        ),
    )


def materialize(spec: SyntheticGallerySpec, out_dir: str | Path) -> Path:
    """Write PNGs, JSONL metadata, and the spec file; returns the gallery root."""
    root = Path(out_dir)
    (root / IMAGES_DIRNAME).mkdir(parents=True, exist_ok=True)
    for rec in spec.records:
        png = encode_png(render_record(spec, rec))
        (root / IMAGES_DIRNAME / f"{rec.id}.png").write_bytes(png)
    with open(root / META_FILENAME, "w", encoding="utf-8") as fh:
        for rec in image_records_for(spec):
            row = {
                "id": rec.id,
                "image_path": rec.image_path,
                "contract": rec.contract,
                "token_id": rec.token_id,
                "chain": rec.chain,
                "collection": rec.collection,
                "price": str(rec.price),
                "tags": rec.tag_map,
            }
            fh.write(json.dumps(row, ensure_ascii=False, sort_keys=True) + "\n")
    with open(root / SYNTH_SPEC_FILENAME, "w", encoding="utf-8") as fh:
        json.dump(spec_to_dict(spec), fh, indent=2, sort_keys=True)
    return root


def load_spec(gallery_dir: str | Path) -> SyntheticGallerySpec:
    with open(Path(gallery_dir) / SYNTH_SPEC_FILENAME, "r", encoding="utf-8") as fh:
        return spec_from_dict(json.load(fh))


def embedder_for(gallery_dir: str | Path) -> SyntheticEmbedder:
    return SyntheticEmbedder(load_spec(gallery_dir))
