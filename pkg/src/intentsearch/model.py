"""Core domain types, the fixed ranking constants, and the canonical JSON wire shape.

Everything here is an immutable value object; construction is permissive and
``validate_expression`` reports invariant violations without raising.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from decimal import Decimal, InvalidOperation, ROUND_HALF_EVEN
from enum import Enum
from typing import Any, Iterable, Optional, Sequence

import numpy as np
import numpy.typing as npt

UnitVector = npt.NDArray[np.float32]
"""A float32 embedding normalized to unit length (|norm - 1| <= 1e-6)."""

DEFAULT_DIM = 512

COLLECTION_PREFIX = "C_"

PRICE_DECIMALS = 18
_PRICE_QUANTUM = Decimal(1).scaleb(-PRICE_DECIMALS)


def as_price(value: object) -> Decimal:
    """Coerce a price to a Decimal with at most 18 fractional digits (ETH)."""
    if isinstance(value, Decimal):
        dec = value
    elif isinstance(value, bool):
        raise TypeError("price cannot be a bool")
    elif isinstance(value, int):
        dec = Decimal(value)
    elif isinstance(value, float):
        dec = Decimal(str(value))
    elif isinstance(value, str):
        try:
            dec = Decimal(value.strip())
        except InvalidOperation as exc:
            raise ValueError(f"invalid price literal: {value!r}") from exc
    else:
        raise TypeError(f"cannot convert {type(value).__name__} to a price")
    if dec.is_nan() or dec.is_infinite():
        raise ValueError(f"invalid price value: {value!r}")
    exponent = dec.as_tuple().exponent
    if isinstance(exponent, int) and exponent < -PRICE_DECIMALS:
        dec = dec.quantize(_PRICE_QUANTUM, rounding=ROUND_HALF_EVEN)
    return dec


class ElementKind(str, Enum):
    VISUAL = "visual"
    COLLECTION = "collection"
    PRICE_RANK = "price_rank"
    PRICE_RANGE = "price_range"


class PriceOrder(str, Enum):
    ASC = "asc"
    DESC = "desc"


@dataclass(frozen=True)
class IntentElement:
    """One parsed unit of intent: a visual phrase, collection, or price constraint."""

    kind: ElementKind
    text: str
    direction: Optional[PriceOrder] = None
    bounds: Optional[tuple[Decimal, Decimal]] = None

    @staticmethod
    def visual(text: str) -> "IntentElement":
        return IntentElement(ElementKind.VISUAL, text)

    @staticmethod
    def collection(text: str) -> "IntentElement":
        return IntentElement(ElementKind.COLLECTION, text)

    @staticmethod
    def price_rank(text: str, direction: PriceOrder) -> "IntentElement":
        return IntentElement(ElementKind.PRICE_RANK, text, direction=direction)

    @staticmethod
    def price_range(text: str, low: object, high: object) -> "IntentElement":
        return IntentElement(
            ElementKind.PRICE_RANGE, text, bounds=(as_price(low), as_price(high))
        )

    @property
    def key(self) -> str:
        """Case-folded identity used for dedup; display text stays verbatim."""
        return self.text.casefold()

    @property
    def wire_text(self) -> str:
        """Serialized form: collections carry the C_ prefix, others are bare text."""
        if self.kind is ElementKind.COLLECTION:
            return COLLECTION_PREFIX + self.text
        return self.text

    @staticmethod
    def from_wire_text(text: str) -> "IntentElement":
        if text.startswith(COLLECTION_PREFIX):
            return IntentElement.collection(text[len(COLLECTION_PREFIX) :])
        return IntentElement.visual(text)


@dataclass(frozen=True)
class ComposedIntent:
    """An intersection of elements that must co-occur in a result (one option)."""

    elements: tuple[IntentElement, ...]

    def __init__(self, elements: Iterable[IntentElement]):
        object.__setattr__(self, "elements", tuple(elements))

    @property
    def texts(self) -> tuple[str, ...]:
        return tuple(e.text for e in self.elements)

    def joined_text(self) -> str:
        """Element texts joined for composed-query embedding, in element order."""
        return ", ".join(e.text for e in self.elements)


@dataclass(frozen=True)
class ChangeSpec:
    """A change relation: move away from ``source`` toward ``target``."""

    source: IntentElement
    target: IntentElement


@dataclass(frozen=True)
class MetadataConstraint:
    """Non-visual constraints applied after similarity ranking."""

    collection: Optional[str] = None
    price_order: Optional[PriceOrder] = None
    price_range: Optional[tuple[Decimal, Decimal]] = None

    def is_empty(self) -> bool:
        return (
            self.collection is None
            and self.price_order is None
            and self.price_range is None
        )


EMPTY_METADATA = MetadataConstraint()


@dataclass(frozen=True)
class IntentExpression:
    """The nested-list logic form of a query: union of options, negatives, changes."""

    options: tuple[ComposedIntent, ...]
    negatives: tuple[IntentElement, ...] = ()
    changes: tuple[ChangeSpec, ...] = ()
    metadata: MetadataConstraint = EMPTY_METADATA
    raw_query: str = ""

    def __init__(
        self,
        options: Iterable[ComposedIntent] = (),
        negatives: Iterable[IntentElement] = (),
        changes: Iterable[ChangeSpec] = (),
        metadata: MetadataConstraint = EMPTY_METADATA,
        raw_query: str = "",
    ):
        object.__setattr__(self, "options", tuple(options))
        object.__setattr__(self, "negatives", tuple(negatives))
        object.__setattr__(self, "changes", tuple(changes))
        object.__setattr__(self, "metadata", metadata)
        object.__setattr__(self, "raw_query", raw_query)


@dataclass(frozen=True)
class ImageRecord:
    """One gallery item with the metadata fields carried alongside each image."""

    id: str
    image_path: str
    contract: str = ""
    token_id: str = ""
    chain: str = ""
    collection: str = ""
    price: Decimal = Decimal(0)
    tags: tuple[tuple[str, str], ...] = ()

    def __init__(
        self,
        id: str,
        image_path: str,
        contract: str = "",
        token_id: str = "",
        chain: str = "",
        collection: str = "",
        price: object = Decimal(0),
        tags: object = (),
    ):
        object.__setattr__(self, "id", id)
        object.__setattr__(self, "image_path", image_path)
        object.__setattr__(self, "contract", contract)
        object.__setattr__(self, "token_id", token_id)
        object.__setattr__(self, "chain", chain)
        object.__setattr__(self, "collection", collection)
        object.__setattr__(self, "price", as_price(price))
        if isinstance(tags, dict):
            tags = tuple(sorted(tags.items()))
        object.__setattr__(self, "tags", tuple(tags))

    @property
    def tag_map(self) -> dict[str, str]:
        return dict(self.tags)


@dataclass(frozen=True)
class RankingConfig:
    """Ranking pipeline constants; defaults are the published values."""

    w: float = 1.0
    w_elem: float = 0.5
    prefilter_k: int = 500
    exclusion_fraction: float = 0.4
    alpha0: float = 0.9
    alpha1: float = 0.1
    triplet_alpha: float = 0.05

    def __post_init__(self):
        if abs(self.alpha0 + self.alpha1 - 1.0) > 1e-12:
            raise ValueError("alpha0 + alpha1 must equal 1.0")
        if not 0.0 < self.exclusion_fraction < 1.0:
            raise ValueError("exclusion_fraction must lie strictly between 0 and 1")
        if self.prefilter_k < 1:
            raise ValueError("prefilter_k must be >= 1")


@dataclass
class Candidate:
    """A scored retrieval result with its per-element similarity breakdown."""

    image_id: str
    composed_sim: float
    element_sims: list[float] = field(default_factory=list)
    final_score: float = 0.0


# ---------------------------------------------------------------------------
# Validation
# ---------------------------------------------------------------------------


def _validate_element(el: IntentElement, where: str, out: list[str]) -> None:
    if not el.text or el.text != el.text.strip():
        out.append(f"{where}: element text must be non-empty and trimmed")
    if (el.direction is not None) != (el.kind is ElementKind.PRICE_RANK):
        out.append(f"{where}: direction present iff kind is price_rank")
    if (el.bounds is not None) != (el.kind is ElementKind.PRICE_RANGE):
        out.append(f"{where}: bounds present iff kind is price_range")
    if el.bounds is not None and el.bounds[0] > el.bounds[1]:
        out.append(f"{where}: bounds.low must be <= bounds.high")


def validate_expression(expr: IntentExpression) -> list[str]:
    """Return every invariant violation in ``expr``; an empty list means valid."""
    violations: list[str] = []
    if not expr.options:
        violations.append("options must be non-empty")
    for i, option in enumerate(expr.options):
        where = f"options[{i}]"
        if not option.elements:
            violations.append(f"{where}: option must contain at least one element")
        seen: set[str] = set()
        for el in option.elements:
            if el.kind not in (ElementKind.VISUAL, ElementKind.COLLECTION):
                violations.append(f"{where}: options may only hold visual or collection elements")
            _validate_element(el, where, violations)
            if el.key in seen:
                violations.append(f"{where}: duplicate element text {el.text!r}")
            seen.add(el.key)
    for i, el in enumerate(expr.negatives):
        _validate_element(el, f"negatives[{i}]", violations)
    for i, change in enumerate(expr.changes):
        where = f"changes[{i}]"
        _validate_element(change.source, where + ".source", violations)
        _validate_element(change.target, where + ".target", violations)
        if change.source.key == change.target.key:
            violations.append("change source equals target")
    rng = expr.metadata.price_range
    if rng is not None:
        if rng[0] > rng[1]:
            violations.append("metadata: price_range low must be <= high")
        if rng[0] < 0:
            violations.append("metadata: price_range bounds must be non-negative")
    return violations


# ---------------------------------------------------------------------------
# Canonical serialization
# ---------------------------------------------------------------------------
# A stable JSON shape: sorted keys, no whitespace, absent fields omitted,
# decimals emitted verbatim so golden tests are byte-stable.


def _canonical(obj: Any) -> str:
    if obj is None:
        return "null"
    if obj is True:
        return "true"
    if obj is False:
        return "false"
    if isinstance(obj, str):
        return json.dumps(obj, ensure_ascii=False)
    if isinstance(obj, Decimal):
        return format(obj, "f")
    if isinstance(obj, int):
        return str(obj)
    if isinstance(obj, float):
        return json.dumps(obj)
    if isinstance(obj, dict):
        items = (f"{json.dumps(k, ensure_ascii=False)}:{_canonical(v)}" for k, v in sorted(obj.items()))
        return "{" + ",".join(items) + "}"
    if isinstance(obj, (list, tuple)):
        return "[" + ",".join(_canonical(v) for v in obj) + "]"
    raise TypeError(f"cannot canonicalize {type(obj).__name__}")


def expression_to_payload(expr: IntentExpression) -> dict[str, Any]:
    """The canonical dict shape of an expression, absent fields omitted."""
    payload: dict[str, Any] = {"raw_query": expr.raw_query}
    if expr.options:
        payload["options"] = [[el.wire_text for el in opt.elements] for opt in expr.options]
    if expr.negatives:
        payload["negatives"] = [el.wire_text for el in expr.negatives]
    if expr.changes:
        payload["changes"] = [
            {"source": c.source.wire_text, "target": c.target.wire_text} for c in expr.changes
        ]
    meta: dict[str, Any] = {}
    if expr.metadata.collection is not None:
        meta["collection"] = expr.metadata.collection
    if expr.metadata.price_order is not None:
        meta["price_order"] = expr.metadata.price_order.value
    if expr.metadata.price_range is not None:
        meta["price_range"] = list(expr.metadata.price_range)
    if meta:
        payload["metadata"] = meta
    return payload


def serialize_expression(expr: IntentExpression) -> str:
    return _canonical(expression_to_payload(expr))


def _require(cond: bool, message: str) -> None:
    if not cond:
        raise ValueError(message)


def expression_from_payload(data: dict[str, Any]) -> IntentExpression:
    """Rebuild an expression from the canonical dict shape (inverse of payload)."""
    _require(isinstance(data, dict), "intent payload must be a JSON object")
    known = {"options", "negatives", "changes", "metadata", "raw_query"}
    unknown = set(data) - known
    _require(not unknown, f"unknown intent fields: {sorted(unknown)}")

    options_raw = data.get("options", [])
    _require(isinstance(options_raw, list), "options must be a list")
    options = []
    for opt in options_raw:
        _require(isinstance(opt, list), "each option must be a list of strings")
        elements = []
        for text in opt:
            _require(isinstance(text, str), "option elements must be strings")
            elements.append(IntentElement.from_wire_text(text))
        options.append(ComposedIntent(elements))

    negatives_raw = data.get("negatives", [])
    _require(isinstance(negatives_raw, list), "negatives must be a list")
    negatives = []
    for text in negatives_raw:
        _require(isinstance(text, str), "negatives must be strings")
        negatives.append(IntentElement.from_wire_text(text))

    changes_raw = data.get("changes", [])
    _require(isinstance(changes_raw, list), "changes must be a list")
    changes = []
    for entry in changes_raw:
        _require(
            isinstance(entry, dict) and set(entry) == {"source", "target"},
            "each change must be {source, target}",
        )
        _require(
            isinstance(entry["source"], str) and isinstance(entry["target"], str),
            "change source/target must be strings",
        )
        changes.append(
            ChangeSpec(
                source=IntentElement.from_wire_text(entry["source"]),
                target=IntentElement.from_wire_text(entry["target"]),
            )
        )

    meta_raw = data.get("metadata", {})
    _require(isinstance(meta_raw, dict), "metadata must be an object")
    unknown_meta = set(meta_raw) - {"collection", "price_order", "price_range"}
    _require(not unknown_meta, f"unknown metadata fields: {sorted(unknown_meta)}")
    collection = meta_raw.get("collection")
    _require(
        collection is None or isinstance(collection, str),
        "metadata.collection must be a string",
    )
    order_raw = meta_raw.get("price_order")
    price_order = None
    if order_raw is not None:
        _require(order_raw in ("asc", "desc"), "metadata.price_order must be asc or desc")
        price_order = PriceOrder(order_raw)
    range_raw = meta_raw.get("price_range")
    price_range = None
    if range_raw is not None:
        _require(
            isinstance(range_raw, list) and len(range_raw) == 2,
            "metadata.price_range must be a [low, high] pair",
        )
        price_range = (as_price(range_raw[0]), as_price(range_raw[1]))

    raw_query = data.get("raw_query", "")
    _require(isinstance(raw_query, str), "raw_query must be a string")

    return IntentExpression(
        options=options,
        negatives=negatives,
        changes=changes,
        metadata=MetadataConstraint(
            collection=collection, price_order=price_order, price_range=price_range
        ),
        raw_query=raw_query,
    )


def deserialize_expression(text: str) -> IntentExpression:
    data = json.loads(text, parse_float=Decimal)
    return expression_from_payload(data)
