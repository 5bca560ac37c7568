"""Gallery persistence: JSONL metadata, the versioned embeddings file, and load.

Embeddings file layout (all little-endian, bit-exact round trip):
magic "IEMB" | u32 version=1 | u32 dim | u64 count |
per record: u16 id byte length, id UTF-8 bytes, dim x f32.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np
from filelock import FileLock

from .errors import (
    CorruptEmbeddingsFile,
    DimensionMismatch,
    MetaParseError,
    MissingImage,
)
from .index import BallTreeIndex, DEFAULT_LEAF_SIZE
from .model import ImageRecord, UnitVector, as_price
from .visual import decode_png

EMB_MAGIC = b"IEMB"
EMB_VERSION = 1


@dataclass
class GalleryManifest:
    root: Path
    records: list[ImageRecord]
    embeddings_file: Path


def load_records(meta_path: str | Path) -> list[ImageRecord]:
    """Parse JSON-Lines metadata; any bad row raises with its line number."""
    records: list[ImageRecord] = []
    seen: set[str] = set()
    with open(meta_path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                row = json.loads(line)
            except json.JSONDecodeError as exc:
                raise MetaParseError(lineno, f"invalid JSON: {exc.msg}") from exc
            if not isinstance(row, dict):
                raise MetaParseError(lineno, "row must be a JSON object")
            for required in ("id", "image_path"):
                if required not in row or not isinstance(row[required], str) or not row[required]:
                    raise MetaParseError(lineno, f"missing required field {required!r}")
            if row["id"] in seen:
                raise MetaParseError(lineno, f"duplicate id {row['id']!r}")
            seen.add(row["id"])
            try:
                price = as_price(row.get("price", 0))
            except (ValueError, TypeError) as exc:
                raise MetaParseError(lineno, f"bad price: {exc}") from exc
            if price < 0:
                raise MetaParseError(lineno, "price must be >= 0")
            tags = row.get("tags", {})
            if not isinstance(tags, dict):
                raise MetaParseError(lineno, "tags must be an object")
            records.append(
                ImageRecord(
                    id=row["id"],
                    image_path=row["image_path"],
                    contract=str(row.get("contract", "")),
                    token_id=str(row.get("token_id", "")),
                    chain=str(row.get("chain", "")),
                    collection=str(row.get("collection", "")),
                    price=price,
                    tags=tags,
                )
            )
    return records


def write_embeddings(
    path: str | Path, dim: int, items: Sequence[tuple[str, UnitVector]]
) -> None:
    """Atomic overwrite under an exclusive lock so ingest never races a reader."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(path.suffix + ".tmp")
    with FileLock(str(path) + ".lock"):
        with open(tmp, "wb") as fh:
            fh.write(EMB_MAGIC)
            fh.write(struct.pack("<IIQ", EMB_VERSION, dim, len(items)))
            for rid, vec in items:
                arr = np.ascontiguousarray(np.asarray(vec, dtype="<f4"))
                if arr.shape != (dim,):
                    raise DimensionMismatch(f"{rid!r}: vector dim {arr.shape} != {dim}")
                encoded = rid.encode("utf-8")
                fh.write(struct.pack("<H", len(encoded)))
                fh.write(encoded)
                fh.write(arr.tobytes())
        tmp.replace(path)


def read_embeddings(path: str | Path) -> tuple[int, list[tuple[str, UnitVector]]]:
    data = Path(path).read_bytes()
    header = struct.calcsize("<IIQ")
    if len(data) < 4 + header or data[:4] != EMB_MAGIC:
        raise CorruptEmbeddingsFile("bad magic or truncated header")
    version, dim, count = struct.unpack_from("<IIQ", data, 4)
    if version != EMB_VERSION:
        raise CorruptEmbeddingsFile(f"unsupported version {version}")
    if dim == 0:
        raise CorruptEmbeddingsFile("dim must be positive")
    offset = 4 + header
    items: list[tuple[str, UnitVector]] = []
    vec_bytes = dim * 4
    for _ in range(count):
        if offset + 2 > len(data):
            raise CorruptEmbeddingsFile("truncated record header")
        (id_len,) = struct.unpack_from("<H", data, offset)
        offset += 2
        if offset + id_len + vec_bytes > len(data):
            raise CorruptEmbeddingsFile("truncated record body")
        rid = data[offset : offset + id_len].decode("utf-8")
        offset += id_len
        vec = np.frombuffer(data, dtype="<f4", count=dim, offset=offset).copy()
        offset += vec_bytes
        items.append((rid, vec))
    if offset != len(data):
        raise CorruptEmbeddingsFile("trailing bytes after the declared record count")
    return dim, items


def ingest(
    gallery_dir: str | Path,
    meta_path: str | Path,
    embedder,
    out_path: str | Path,
    batch_size: int = 32,
) -> GalleryManifest:
    """Embed every gallery image and persist the embeddings file; idempotent."""
    gallery_dir = Path(gallery_dir)
    records = load_records(meta_path)
    paths = []
    for rec in records:
        path = gallery_dir / rec.image_path
        if not path.is_file():
            raise MissingImage(f"record {rec.id!r}: no file at {path}")
        paths.append(path)
    vectors: list[UnitVector] = []
    for start in range(0, len(records), batch_size):
        chunk = paths[start : start + batch_size]
        images = [decode_png(p.read_bytes()) for p in chunk]
        vectors.extend(embedder.embed_images(images))
    write_embeddings(out_path, embedder.dim, list(zip((r.id for r in records), vectors)))
    return GalleryManifest(root=gallery_dir, records=records, embeddings_file=Path(out_path))


@dataclass
class Gallery:
    """Loaded runtime state: aligned records, vectors, and the search index."""

    root: Path
    records: list[ImageRecord]
    vectors: dict[str, UnitVector]
    index: BallTreeIndex
    dim: int
    records_by_id: dict[str, ImageRecord] = field(init=False)

    def __post_init__(self):
        self.records_by_id = {r.id: r for r in self.records}

    def vector(self, image_id: str) -> UnitVector:
        return self.vectors[image_id]

    @property
    def collections(self) -> list[str]:
        out: list[str] = []
        for rec in self.records:
            if rec.collection and rec.collection not in out:
                out.append(rec.collection)
        return out

    @property
    def tag_vocab(self) -> list[tuple[str, str]]:
        seen: set[tuple[str, str]] = set()
        vocab: list[tuple[str, str]] = []
        for rec in self.records:
            for value in rec.tag_map.values():
                pair = (rec.collection, value)
                if pair not in seen:
                    seen.add(pair)
                    vocab.append(pair)
        return vocab

    def image_array(self, image_id: str) -> np.ndarray:
        rec = self.records_by_id[image_id]
        path = self.root / rec.image_path
        if not path.is_file():
            raise MissingImage(f"record {image_id!r}: no file at {path}")
        return decode_png(path.read_bytes())


def load(manifest: GalleryManifest, leaf_size: int = DEFAULT_LEAF_SIZE) -> Gallery:
    """Rebuild the index from the embeddings file, verifying header alignment."""
    dim, items = read_embeddings(manifest.embeddings_file)
    by_id = dict(items)
    if len(by_id) != len(items):
        raise CorruptEmbeddingsFile("duplicate ids in embeddings file")
    record_ids = [r.id for r in manifest.records]
    if set(record_ids) != set(by_id):
        raise CorruptEmbeddingsFile("embeddings file ids do not match gallery records")
    ordered = [(rid, by_id[rid]) for rid in record_ids]
    index = BallTreeIndex.build(ordered, leaf_size=leaf_size)
    return Gallery(
        root=manifest.root,
        records=manifest.records,
        vectors=dict(ordered),
        index=index,
        dim=dim,
    )


def open_gallery(
    gallery_dir: str | Path,
    meta_path: Optional[str | Path] = None,
    embeddings_path: Optional[str | Path] = None,
    leaf_size: int = DEFAULT_LEAF_SIZE,
) -> Gallery:
    """Convenience loader using the conventional file names inside the gallery."""
    gallery_dir = Path(gallery_dir)
    meta_path = Path(meta_path) if meta_path else gallery_dir / "meta.jsonl"
    embeddings_path = (
        Path(embeddings_path) if embeddings_path else gallery_dir / "embeddings.iemb"
    )
    manifest = GalleryManifest(
        root=gallery_dir, records=load_records(meta_path), embeddings_file=embeddings_path
    )
    return load(manifest, leaf_size=leaf_size)
