"""Free-form query text -> IntentExpression.

The deterministic grammar is the system of record. It splits a query on
connective boundaries (configurable lexicon), resolves collection names by
longest match against a gallery-supplied list before segmentation, folds price
phrases into metadata, and distributes "or" alternatives across shared
conjuncts (Cartesian product). An optional LLM front-end speaks the same
contract through `build_cot_prompt` and `adapt_llm_output`.

Scope rules the examples do not pin down: exclusion binds tighter than union,
and once a negative scope opens, later conjuncts stay negative to the end of
the query.
"""

from __future__ import annotations

import itertools
import json
import re
from dataclasses import dataclass
from decimal import Decimal
from functools import lru_cache
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np

from .errors import MalformedIntentJson, UnparsableQuery
from .model import (
    ChangeSpec,
    ComposedIntent,
    ElementKind,
    IntentElement,
    IntentExpression,
    MetadataConstraint,
    PriceOrder,
    expression_from_payload,
    serialize_expression,
    validate_expression,
)

ARTICLES = {"a", "an", "the"}
NOISE_WORDS = {"nft", "nfts"}

_PLACEHOLDER_RE = re.compile(r"^\x00(\d+)\x00$")
_TOKEN_RE = re.compile(r"\x00\d+\x00|[\w'-]+|,")
_RANGE_RE = re.compile(
    r"\bbetween\s+(\d+(?:\.\d+)?)\s+and\s+(\d+(?:\.\d+)?)\s*eth\b", re.IGNORECASE
)
_UNDER_RE = re.compile(r"\b(?:under|below)\s+(\d+(?:\.\d+)?)\s*eth\b", re.IGNORECASE)


# ---------------------------------------------------------------------------
# Connective lexicon
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ConnectiveLexicon:
    """Word lists driving the grammar; all matching is case-insensitive."""

    intersection: tuple[str, ...]
    union: tuple[str, ...]
    exclusion: tuple[str, ...]
    change: tuple[str, ...]  # templates using {source} and {target}
    price_desc: tuple[str, ...]
    price_asc: tuple[str, ...]

    @staticmethod
    def from_dict(data: dict) -> "ConnectiveLexicon":
        return ConnectiveLexicon(
            intersection=tuple(data.get("intersection", ())),
            union=tuple(data.get("union", ())),
            exclusion=tuple(data.get("exclusion", ())),
            change=tuple(data.get("change", ())),
            price_desc=tuple(data.get("price_desc", ())),
            price_asc=tuple(data.get("price_asc", ())),
        )


DEFAULT_LEXICON = ConnectiveLexicon(
    intersection=("and", "with", "wearing", "in", ","),
    union=("or",),
    exclusion=("but not", "but no", "without", "not", "no"),
    change=("change {source} to {target}", "with {target} instead of {source}"),
    price_desc=("expensive", "most expensive", "highest price", "priciest"),
    price_asc=("cheap", "cheapest", "lowest price"),
)


def load_lexicon(path: str | Path) -> ConnectiveLexicon:
    with open(path, "r", encoding="utf-8") as fh:
        return ConnectiveLexicon.from_dict(json.load(fh))


def _words(phrase: str) -> tuple[str, ...]:
    return tuple(w for w in re.findall(r"[\w'-]+|,", phrase.casefold()))


@dataclass(frozen=True)
class _ChangePatterns:
    forward_lead: tuple[tuple[str, ...], ...]  # e.g. ("change",)
    forward_sep: tuple[tuple[str, ...], ...]  # e.g. ("to",)
    retro_sep: tuple[tuple[str, ...], ...]  # e.g. ("instead", "of")


def _compile_change(templates: Sequence[str]) -> _ChangePatterns:
    forward_lead, forward_sep, retro_sep = [], [], []
    for template in templates:
        src, tgt = template.find("{source}"), template.find("{target}")
        if src < 0 or tgt < 0:
            continue
        first, second = ("{source}", "{target}") if src < tgt else ("{target}", "{source}")
        head, rest = template.split(first, 1)
        sep = _words(rest.split(second, 1)[0])
        if first == "{source}":
            lead = _words(head)
            if lead and sep:
                forward_lead.append(lead)
                forward_sep.append(sep)
        elif sep:
            retro_sep.append(sep)
    return _ChangePatterns(tuple(forward_lead), tuple(forward_sep), tuple(retro_sep))


# ---------------------------------------------------------------------------
# The grammar
# ---------------------------------------------------------------------------


class _Scanner:
    def __init__(self, lexicon: ConnectiveLexicon, collections: Sequence[str]):
        self.lexicon = lexicon
        self.collections = sorted(set(collections), key=lambda c: (-len(c), c))
        self.change = _compile_change(lexicon.change)
        # every connective as a token sequence, matched longest-first
        table: list[tuple[tuple[str, ...], str]] = []
        for lead in self.change.forward_lead:
            table.append((lead, "change_lead"))
        for sep in self.change.retro_sep:
            table.append((sep, "instead_sep"))
        for phrase in lexicon.exclusion:
            table.append((_words(phrase), "exclusion"))
        for phrase in lexicon.union:
            table.append((_words(phrase), "union"))
        for phrase in lexicon.intersection:
            table.append((_words(phrase), "intersection"))
        self.connectives = sorted(table, key=lambda e: -len(e[0]))
        self.price_desc = {" ".join(_words(p)) for p in lexicon.price_desc}
        self.price_asc = {" ".join(_words(p)) for p in lexicon.price_asc}

    def protect_collections(self, text: str) -> tuple[str, list[str]]:
        found: list[str] = []
        for name in self.collections:
            pattern = re.compile(r"(?<!\w)" + re.escape(name) + r"(?!\w)", re.IGNORECASE)

            def _sub(_match: re.Match) -> str:
                found.append(name)
                return f" \x00{len(found) - 1}\x00 "

            text = pattern.sub(_sub, text)
        return text, found

    def match_connective(self, folded: list[str], i: int) -> Optional[tuple[str, int]]:
        for seq, kind in self.connectives:
            n = len(seq)
            if folded[i : i + n] == list(seq):
                return kind, n
        return None


def _strip_phrase(tokens: list[str]) -> list[str]:
    out = list(tokens)
    while out and out[0].casefold() in ARTICLES:
        out = out[1:]
    return [t for t in out if t.casefold() not in NOISE_WORDS]


def parse_query(
    text: str,
    *,
    collections: Sequence[str] = (),
    lexicon: Optional[ConnectiveLexicon] = None,
) -> IntentExpression:
    """Parse free-form text deterministically into an IntentExpression."""
    if not text or not text.strip():
        raise UnparsableQuery("query text is empty")
    scanner = _Scanner(lexicon or DEFAULT_LEXICON, collections)

    working, found_collections = scanner.protect_collections(text)

    price_range: Optional[tuple[Decimal, Decimal]] = None
    price_order: Optional[PriceOrder] = None

    def _take_range(match: re.Match) -> str:
        nonlocal price_range
        if match.lastindex == 2:
            price_range = (Decimal(match.group(1)), Decimal(match.group(2)))
        else:
            price_range = (Decimal(0), Decimal(match.group(1)))
        return " , "

    working = _RANGE_RE.sub(_take_range, working)
    working = _UNDER_RE.sub(_take_range, working)

    tokens = _TOKEN_RE.findall(working)
    folded = [t.casefold() for t in tokens]

    # slots of positive conjuncts; each slot holds alternative element runs
    slots: list[list[list[IntentElement]]] = []
    negatives: list[IntentElement] = []
    changes: list[ChangeSpec] = []

    scope = "positive"
    mode = "phrase"  # phrase | change_source | change_target | instead_source
    attach_alternative = False
    buffer: list[str] = []
    change_source: list[IntentElement] = []
    change_target: list[IntentElement] = []

    def phrase_elements(tokens_in: list[str]) -> list[IntentElement]:
        elements: list[IntentElement] = []
        run: list[str] = []

        def flush_run():
            nonlocal run
            cleaned = _strip_phrase(run)
            if cleaned:
                elements.append(IntentElement.visual(" ".join(cleaned)))
            run = []

        for tok in tokens_in:
            m = _PLACEHOLDER_RE.match(tok)
            if m:
                flush_run()
                elements.append(IntentElement.collection(found_collections[int(m.group(1))]))
            else:
                run.append(tok)
        flush_run()
        return elements

    def dispatch_phrase():
        nonlocal buffer, price_order, change_source, change_target, mode, scope
        tokens_in, buffer = buffer, []
        if mode == "change_source":
            change_source = phrase_elements(tokens_in)
            return
        if mode in ("change_target", "instead_source"):
            phrase = phrase_elements(tokens_in)
            if mode == "change_target":
                change_target = phrase
            else:
                change_source = phrase
            if change_source and change_target:
                changes.append(ChangeSpec(source=change_source[0], target=change_target[0]))
            change_source, change_target = [], []
            mode = "phrase"
            return
        if scope == "positive":
            stripped = _strip_phrase(tokens_in)
            keyword = " ".join(t.casefold() for t in stripped)
            if keyword in scanner.price_desc:
                price_order = PriceOrder.DESC
                return
            if keyword in scanner.price_asc:
                price_order = PriceOrder.ASC
                return
        phrase = phrase_elements(tokens_in)
        if not phrase:
            return
        if scope == "negative":
            negatives.extend(phrase)
        elif attach_alternative and slots:
            slots[-1].append(phrase)
        else:
            slots.append([phrase])

    i = 0
    n = len(tokens)
    while i < n:
        if mode == "change_source":
            matched = None
            for sep in scanner.change.forward_sep:
                if folded[i : i + len(sep)] == list(sep):
                    matched = len(sep)
                    break
            if matched:
                dispatch_phrase()
                mode = "change_target"
                i += matched
                continue
            buffer.append(tokens[i])
            i += 1
            continue

        hit = scanner.match_connective(folded, i)
        if hit is None:
            buffer.append(tokens[i])
            i += 1
            continue
        kind, width = hit
        if kind == "change_lead":
            dispatch_phrase()
            mode = "change_source"
            attach_alternative = False
        elif kind == "instead_sep":
            # the pending phrase is the replacement target
            tokens_in, buffer = buffer, []
            phrase = phrase_elements(tokens_in)
            if phrase:
                change_target = [phrase[0]]
                mode = "instead_source"
            # with no pending phrase the separator is ignored
        elif kind == "exclusion":
            dispatch_phrase()
            scope = "negative"
            attach_alternative = False
        elif kind == "union":
            dispatch_phrase()
            attach_alternative = scope == "positive"
        else:  # intersection
            dispatch_phrase()
            if mode == "phrase":
                attach_alternative = False
        i += width
    dispatch_phrase()

    # Cartesian product over slots distributes alternatives into options
    options: list[ComposedIntent] = []
    seen_options: set[tuple[str, ...]] = set()
    if slots:
        for combo in itertools.product(*slots):
            elements: list[IntentElement] = []
            seen: set[str] = set()
            for piece in combo:
                for el in piece:
                    if el.key not in seen:
                        seen.add(el.key)
                        elements.append(el)
            key = tuple(el.key for el in elements)
            if elements and key not in seen_options:
                seen_options.add(key)
                options.append(ComposedIntent(elements))

    deduped_negatives: list[IntentElement] = []
    seen_neg: set[str] = set()
    for el in negatives:
        if el.key not in seen_neg:
            seen_neg.add(el.key)
            deduped_negatives.append(el)

    option_collections: list[str] = []
    for opt in options:
        for el in opt.elements:
            if el.kind is ElementKind.COLLECTION and el.text not in option_collections:
                option_collections.append(el.text)
    collection = option_collections[0] if len(option_collections) == 1 else None

    metadata = MetadataConstraint(
        collection=collection, price_order=price_order, price_range=price_range
    )
    if not options and not deduped_negatives and not changes and metadata.is_empty():
        raise UnparsableQuery(f"no intent element could be extracted from {text!r}")

    return IntentExpression(
        options=options,
        negatives=deduped_negatives,
        changes=changes,
        metadata=metadata,
        raw_query=text,
    )


# ---------------------------------------------------------------------------
# Chain-of-thought prompt building and the LLM output adapter
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PromptTemplate:
    """Instruction plus worked examples, each a (query, reasoning, answer-JSON) triple."""

    instruction: str
    few_shot_examples: tuple[tuple[str, str, str], ...]

    def __init__(self, instruction: str, few_shot_examples: Iterable[tuple[str, str, str]]):
        examples = tuple(tuple(e) for e in few_shot_examples)
        if not examples:
            raise ValueError("prompt template needs at least one example")
        for _query, _reasoning, answer in examples:
            try:
                adapt_llm_output(answer)
            except MalformedIntentJson as exc:
                raise ValueError(f"example answer invalid: {exc}") from exc
        object.__setattr__(self, "instruction", instruction)
        object.__setattr__(self, "few_shot_examples", examples)


def build_cot_prompt(template: PromptTemplate, query: str) -> str:
    """Q/P/R/A blocks for every example, then the live query awaiting reasoning."""
    blocks = [
        f"Q: {q}\nP: {template.instruction}\nR: {r}\nA: {a}"
        for q, r, a in template.few_shot_examples
    ]
    blocks.append(f"Q: {query}\nP: {template.instruction}\nR:")
    return "\n\n".join(blocks)


_DEFAULT_INSTRUCTION = (
    "Extract the search intent as JSON. Inner lists under \"options\" hold elements "
    "that must appear together; separate inner lists are alternatives (take the "
    "Cartesian product when alternatives share required elements). Unwanted elements "
    "go under \"negatives\". Replacements go under \"changes\" as {source, target}. "
    "Collection names get the C_ prefix; price preferences go under \"metadata\"."
)


@lru_cache(maxsize=1)
def default_prompt_template() -> PromptTemplate:
    collections = ("Bored Ape Yacht Club",)
    examples = []
    for query, reasoning in (
        (
            "woman in pixel style but no black hair or smoking",
            "The subject is a woman combined with pixel style; 'but no' opens "
            "exclusions and 'or' extends them, so black hair and smoking are negatives.",
        ),
        (
            "monkey with red hat and black shirt in Bored Ape Yacht club",
            "One option requires monkey, red hat and black shirt together; the trailing "
            "phrase names a known collection, prefixed C_.",
        ),
        (
            "penguin with glasses, expensive",
            "Penguin and glasses must co-occur; 'expensive' is a price preference, "
            "so it becomes a descending price order instead of a visual element.",
        ),
    ):
        answer = serialize_expression(parse_query(query, collections=collections))
        examples.append((query, reasoning, answer))
    return PromptTemplate(instruction=_DEFAULT_INSTRUCTION, few_shot_examples=examples)


def adapt_llm_output(json_text: str) -> IntentExpression:
    """Parse structured intent output, accepting the bare nested-list shorthand."""
    try:
        data = json.loads(json_text, parse_float=Decimal)
    except json.JSONDecodeError as exc:
        raise MalformedIntentJson(f"invalid JSON: {exc}") from exc
    if isinstance(data, list):
        data = {"options": data}
    try:
        expr = expression_from_payload(data)
    except ValueError as exc:
        raise MalformedIntentJson(str(exc)) from exc
    problems = validate_expression(expr)
    if problems:
        raise MalformedIntentJson(problems[0])
    return expr


# ---------------------------------------------------------------------------
# Tag suggestions
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TagSuggestion:
    element_text: str
    tag: str
    collection: str
    similarity: float


def match_elements_to_tags(
    elements: Sequence[IntentElement],
    tag_vocab: Sequence[tuple[str, str]],
    text_embedder,
    top_n: int,
) -> list[list[TagSuggestion]]:
    """Per visual element, the top_n vocabulary tags by text-embedding similarity."""
    if not tag_vocab:
        raise ValueError("tag_vocab must be non-empty")
    if top_n < 1:
        raise ValueError("top_n must be >= 1")
    vocab = list(dict.fromkeys((coll, tag) for coll, tag in tag_vocab))
    unique_tags = list(dict.fromkeys(tag for _coll, tag in vocab))
    tag_vectors = dict(zip(unique_tags, text_embedder.embed_texts(unique_tags)))

    out: list[list[TagSuggestion]] = []
    for element in elements:
        if element.kind is not ElementKind.VISUAL:
            out.append([])
            continue
        vec = text_embedder.embed_texts([element.text])[0].astype(np.float64)
        scored = [
            (-float(np.dot(vec, tag_vectors[tag].astype(np.float64))), tag, coll)
            for coll, tag in vocab
        ]
        scored.sort()
        out.append(
            [
                TagSuggestion(
                    element_text=element.text, tag=tag, collection=coll, similarity=-neg
                )
                for neg, tag, coll in scored[:top_n]
            ]
        )
    return out
