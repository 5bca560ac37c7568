"""HTTP API binding parser, index, visual parsing, and ranking together.

The server is stateless: refinement context (image id, boxes, logic) rides in
each request, so identical requests against the same loaded gallery return
identical bodies. Errors use {"error": {"code", "message"}} with 400 for
validation, 404 for unknown ids, 502 for provider failures.
"""

from __future__ import annotations

import base64
import binascii
import json
import re
from dataclasses import dataclass, field
from typing import Literal, Optional, Sequence, Union

import httpx
import numpy as np
from fastapi import FastAPI, Request
from fastapi.exceptions import RequestValidationError
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse, Response
from pydantic import BaseModel, Field, model_validator

from . import ranking
from .errors import (
    EditorUnavailable,
    EmbedderUnavailable,
    EmptyGallery,
    DimensionMismatch,
    IntentSearchError,
    InvalidBox,
    MalformedIntentJson,
    SegmenterUnavailable,
    UnknownGroundTruthId,
    UnparsableQuery,
    ZeroVector,
)
from .index import normalize
from .model import (
    ElementKind,
    IntentElement,
    IntentExpression,
    RankingConfig,
    UnitVector,
    expression_to_payload,
    validate_expression,
)
from .parser import (
    build_cot_prompt,
    adapt_llm_output,
    default_prompt_template,
    match_elements_to_tags,
    parse_query,
)
from .ranking import Candidate, RankedResult
from .storage import Gallery
from .visual import (
    BoxFillSegmenter,
    StubEditProvider,
    compose_change_preview,
    decode_png,
    encode_png,
    segment,
    visual_query_embedding,
)

Box4 = tuple[int, int, int, int]


class ApiError(IntentSearchError):
    def __init__(self, status: int, code: str, message: str):
        super().__init__(message)
        self.status = status
        self.code = code
        self.message = message


@dataclass
class ServiceState:
    """Everything a request handler needs; immutable once serving starts."""

    gallery: Gallery
    embedder: object
    segmenter: object = field(default_factory=BoxFillSegmenter)
    editor: object = field(default_factory=StubEditProvider)
    cfg: RankingConfig = field(default_factory=RankingConfig)
    llm_url: Optional[str] = None
    tag_top_n: int = 3


# ---------------------------------------------------------------------------
# Request models
# ---------------------------------------------------------------------------


class ParseRequest(BaseModel):
    query: str = Field(min_length=1)


class SearchRequest(BaseModel):
    query: str = Field(min_length=1)
    k: int = Field(default=20, ge=1, le=200)
    llm_mode: bool = False


class ChangePart(BaseModel):
    box: Box4
    instruction: Optional[str] = None
    target_text: Optional[str] = None

    @model_validator(mode="after")
    def _check(self):
        if not self.instruction and not self.target_text:
            raise ValueError("change needs an instruction or a target_text")
        return self


class VisualSearchRequest(BaseModel):
    base_image: str
    selections: list[Box4] = Field(default_factory=list)
    relation: Literal["intersection", "union"] = "intersection"
    negatives: list[Union[str, Box4]] = Field(default_factory=list)
    change: Optional[ChangePart] = None
    extra_text: Optional[str] = None
    k: int = Field(default=20, ge=1, le=200)

    @model_validator(mode="after")
    def _check(self):
        if not self.selections and not self.extra_text and self.change is None:
            raise ValueError("need at least one selection, extra_text, or change")
        return self


class PreviewRequest(BaseModel):
    image: str
    box: Box4
    instruction: str = Field(min_length=1)


# ---------------------------------------------------------------------------
# Handler helpers
# ---------------------------------------------------------------------------


def _resolve_image(state: ServiceState, ref: str) -> np.ndarray:
    """A gallery id, or an inline base64 PNG for uploaded reference images."""
    if ref in state.gallery.records_by_id:
        return state.gallery.image_array(ref)
    try:
        raw = base64.b64decode(ref, validate=True)
        return decode_png(raw)
    except (binascii.Error, ValueError, OSError):
        raise ApiError(404, "not_found", f"unknown image id {ref!r}") from None


def _result_entry(state: ServiceState, result: RankedResult) -> dict:
    record = state.gallery.records_by_id[result.image_id]
    return {
        "id": result.image_id,
        "score": result.final_score,
        "collection": record.collection,
        "price": float(record.price),
        "image_url": f"/images/{result.image_id}",
    }


def _suggestions_payload(state: ServiceState, expr: IntentExpression) -> list[dict]:
    elements: list[IntentElement] = []
    seen: set[str] = set()
    for option in expr.options:
        for el in option.elements:
            if el.kind is ElementKind.VISUAL and el.key not in seen:
                seen.add(el.key)
                elements.append(el)
    vocab = state.gallery.tag_vocab
    if not elements or not vocab:
        return []
    suggestions = match_elements_to_tags(elements, vocab, state.embedder, state.tag_top_n)
    return [
        {
            "element": el.text,
            "tags": [
                {"tag": s.tag, "collection": s.collection, "similarity": s.similarity}
                for s in per_element
            ],
        }
        for el, per_element in zip(elements, suggestions)
    ]


_JSON_BLOCK_RE = re.compile(r"[\[{].*[\]}]", re.DOTALL)


def _intent_via_llm(state: ServiceState, query: str) -> IntentExpression:
    if not state.llm_url:
        raise ApiError(400, "llm_not_configured", "no LLM endpoint is configured")
    prompt = build_cot_prompt(default_prompt_template(), query)
    try:
        resp = httpx.post(
            state.llm_url.rstrip("/") + "/complete", json={"prompt": prompt}, timeout=60.0
        )
    except httpx.HTTPError as exc:
        raise ApiError(502, "provider_unavailable", f"LLM call failed: {exc}") from exc
    if resp.status_code != 200:
        raise ApiError(502, "provider_unavailable", f"LLM returned HTTP {resp.status_code}")
    text = resp.json().get("text", "")
    try:
        expr = adapt_llm_output(text.strip())
    except MalformedIntentJson:
        block = _JSON_BLOCK_RE.search(text)
        if not block:
            raise
        expr = adapt_llm_output(block.group(0))
    return IntentExpression(
        options=expr.options,
        negatives=expr.negatives,
        changes=expr.changes,
        metadata=expr.metadata,
        raw_query=query,
    )


def _parse_for_state(state: ServiceState, query: str) -> IntentExpression:
    return parse_query(query, collections=state.gallery.collections)


def _execute_text_search(state: ServiceState, expr: IntentExpression, k: int) -> list[RankedResult]:
    problems = validate_expression(expr)
    if problems:
        raise ApiError(400, "invalid_intent", problems[0])
    if not expr.options:
        raise ApiError(400, "invalid_intent", "options must be non-empty")
    return ranking.execute(
        expr,
        state.gallery.records_by_id,
        state.gallery.index,
        state.embedder,
        state.cfg,
        k,
        state.gallery.vector,
    )


def _visual_candidates(state: ServiceState, query_vec: UnitVector) -> list[Candidate]:
    neighbors = state.gallery.index.knn(query_vec, state.cfg.prefilter_k)
    out = []
    for nb in neighbors:
        sim = 1.0 - nb.distance
        out.append(
            Candidate(
                image_id=nb.id,
                composed_sim=sim,
                element_sims=[],
                final_score=ranking.weighted_element_score(sim, [], state.cfg),
            )
        )
    return out


def _run_visual_search(state: ServiceState, req: VisualSearchRequest) -> tuple[list[RankedResult], IntentExpression]:
    base = _resolve_image(state, req.base_image)

    selection_vectors: list[UnitVector] = []
    for box in req.selections:
        mask = segment(base, box, state.segmenter)
        selection_vectors.append(
            visual_query_embedding(
                base, mask, state.embedder, state.cfg.alpha0, state.cfg.alpha1
            )
        )

    text_expr: Optional[IntentExpression] = None
    if req.extra_text:
        text_expr = _parse_for_state(state, req.extra_text)

    change_vector: Optional[UnitVector] = None
    if req.change is not None:
        mask = segment(base, req.change.box, state.segmenter)
        source_vec = visual_query_embedding(
            base, mask, state.embedder, state.cfg.alpha0, state.cfg.alpha1
        )
        if req.change.target_text:
            target_vec = state.embedder.embed_texts([req.change.target_text])[0]
        else:
            edited = state.editor.edit(base, req.change.instruction)
            from .visual import swap_element

            target_vec = state.embedder.embed_images(
                [swap_element(base, edited, mask)]
            )[0]
        original_vec = state.embedder.embed_images([base])[0]
        raw = (
            original_vec.astype(np.float64)
            + target_vec.astype(np.float64)
            - source_vec.astype(np.float64)
        )
        try:
            change_vector = normalize(raw)
        except ZeroVector:
            change_vector = original_vec

    # cross-modal composition: selections, change, and parsed text options
    visual_parts = list(selection_vectors)
    if change_vector is not None:
        visual_parts.append(change_vector)

    text_option_vectors: list[UnitVector] = []
    if text_expr is not None:
        for option in text_expr.options:
            text_option_vectors.append(ranking.composed_query_vector(option, state.embedder))

    option_vectors: list[UnitVector]
    if req.relation == "intersection":
        parts = visual_parts + text_option_vectors
        if not parts:
            raise ApiError(400, "validation_error", "nothing to search for")
        if visual_parts and text_option_vectors:
            combined_visual = _mean_normalize(visual_parts)
            option_vectors = [
                _mean_normalize([combined_visual, tv]) for tv in text_option_vectors
            ]
        elif visual_parts:
            option_vectors = [_mean_normalize(visual_parts)]
        else:
            option_vectors = text_option_vectors
    else:
        option_vectors = visual_parts + text_option_vectors

    option_results = [_visual_candidates(state, v) for v in option_vectors]
    provenance: dict[str, int] = {}
    for j, results in enumerate(option_results):
        for cand in results:
            provenance.setdefault(cand.image_id, j)
    merged = ranking.merge_union(option_results)

    text_negatives: list[IntentElement] = []
    extra_negative_vectors: list[UnitVector] = []
    for entry in req.negatives:
        if isinstance(entry, str):
            text_negatives.append(IntentElement.visual(entry))
        else:
            mask = segment(base, entry, state.segmenter)
            extra_negative_vectors.append(
                visual_query_embedding(
                    base, mask, state.embedder, state.cfg.alpha0, state.cfg.alpha1
                )
            )
    if text_expr is not None:
        text_negatives.extend(text_expr.negatives)

    survivors = ranking.apply_exclusion(
        merged,
        text_negatives,
        state.gallery.vector,
        state.embedder,
        state.cfg,
        extra_negative_vectors,
    )
    results = [
        RankedResult(
            image_id=c.image_id,
            final_score=c.final_score,
            provenance=provenance[c.image_id],
        )
        for c in survivors
    ]
    if text_expr is not None:
        results = ranking.apply_metadata(
            results, text_expr.metadata, state.gallery.records_by_id
        )

    intent = text_expr if text_expr is not None else IntentExpression(
        options=(), raw_query=""
    )
    return results[: req.k], intent


def _mean_normalize(vectors: Sequence[UnitVector]) -> UnitVector:
    return normalize(np.mean([v.astype(np.float64) for v in vectors], axis=0))


def text_search_response(
    state: ServiceState, query: str, k: int, llm_mode: bool = False
) -> dict:
    """The /search response body; the CLI emits exactly this shape with --json."""
    if llm_mode:
        expr = _intent_via_llm(state, query)
    else:
        expr = _parse_for_state(state, query)
    results = _execute_text_search(state, expr, k)
    return {
        "results": [_result_entry(state, r) for r in results],
        "intent": expression_to_payload(expr),
    }


# ---------------------------------------------------------------------------
# App factory
# ---------------------------------------------------------------------------


def create_app(state: ServiceState) -> FastAPI:
    app = FastAPI(title="intentsearch", docs_url=None, redoc_url=None)
    app.add_middleware(
        CORSMiddleware, allow_origins=["*"], allow_methods=["*"], allow_headers=["*"]
    )

    def error_body(code: str, message: str) -> dict:
        return {"error": {"code": code, "message": message}}

    @app.exception_handler(RequestValidationError)
    async def _validation_handler(_req: Request, exc: RequestValidationError):
        first = exc.errors()[0] if exc.errors() else {}
        msg = first.get("msg", "invalid request")
        loc = ".".join(str(p) for p in first.get("loc", ()))
        return JSONResponse(
            status_code=400,
            content=error_body("validation_error", f"{loc}: {msg}" if loc else msg),
        )

    @app.exception_handler(ApiError)
    async def _api_error_handler(_req: Request, exc: ApiError):
        return JSONResponse(status_code=exc.status, content=error_body(exc.code, exc.message))

    @app.exception_handler(IntentSearchError)
    async def _domain_error_handler(_req: Request, exc: IntentSearchError):
        if isinstance(exc, (EmbedderUnavailable, SegmenterUnavailable, EditorUnavailable)):
            return JSONResponse(
                status_code=502, content=error_body("provider_unavailable", str(exc))
            )
        if isinstance(exc, (UnparsableQuery, MalformedIntentJson, InvalidBox,
                            DimensionMismatch, EmptyGallery, ZeroVector)):
            code = {
                UnparsableQuery: "unparsable_query",
                MalformedIntentJson: "malformed_intent",
                InvalidBox: "invalid_box",
                DimensionMismatch: "dimension_mismatch",
                EmptyGallery: "empty_gallery",
                ZeroVector: "zero_vector",
            }[type(exc)]
            return JSONResponse(status_code=400, content=error_body(code, str(exc)))
        return JSONResponse(status_code=500, content=error_body("internal_error", str(exc)))

    @app.get("/healthz")
    def healthz():
        return {"status": "ok"}

    @app.post("/parse")
    def parse_endpoint(req: ParseRequest):
        expr = _parse_for_state(state, req.query)
        return {
            "intent": expression_to_payload(expr),
            "suggestions": _suggestions_payload(state, expr),
        }

    @app.post("/search")
    def search_endpoint(req: SearchRequest):
        return text_search_response(state, req.query, req.k, req.llm_mode)

    @app.post("/search/visual")
    def visual_search_endpoint(req: VisualSearchRequest):
        results, intent = _run_visual_search(state, req)
        return {
            "results": [_result_entry(state, r) for r in results],
            "intent": expression_to_payload(intent),
        }

    @app.post("/preview")
    def preview_endpoint(req: PreviewRequest):
        image = _resolve_image(state, req.image)
        _edited, _mask, swapped = compose_change_preview(
            image, req.box, req.instruction, state.segmenter, state.editor
        )
        return {"image": base64.b64encode(encode_png(swapped)).decode("ascii")}

    @app.get("/images/{image_id}")
    def image_endpoint(image_id: str):
        record = state.gallery.records_by_id.get(image_id)
        if record is None:
            raise ApiError(404, "not_found", f"unknown image id {image_id!r}")
        path = state.gallery.root / record.image_path
        if not path.is_file():
            raise ApiError(404, "not_found", f"image file missing for {image_id!r}")
        return Response(content=path.read_bytes(), media_type="image/png")

    return app


def serve_api(state: ServiceState, port: int, host: str = "127.0.0.1") -> None:
    """Run the HTTP API until interrupted."""
    import uvicorn

    uvicorn.run(create_app(state), host=host, port=port, log_level="warning")


# ---------------------------------------------------------------------------
# Top-K evaluation harness
# ---------------------------------------------------------------------------


@dataclass
class TopKReport:
    query_count: int
    per_k: dict[int, float]  # K -> fraction of queries with a ground-truth hit
    mean_reciprocal_rank: float  # extra diagnostic, not part of the published metric

    def lines(self) -> list[str]:
        out = [f"Top-{k} {frac * 100:.2f}%" for k, frac in sorted(self.per_k.items())]
        out.append(f"MRR {self.mean_reciprocal_rank:.4f} (extra metric)")
        return out


def eval_topk(
    queries: Sequence[tuple[str, Sequence[str]]],
    state: ServiceState,
    ks: Sequence[int],
) -> TopKReport:
    """Top-K accuracy: the share of queries whose ground truth lands in the top K."""
    if not queries:
        raise ValueError("no evaluation queries supplied")
    if not ks or any(k < 1 for k in ks):
        raise ValueError("ks must be positive")
    known = state.gallery.records_by_id
    for _query, truth in queries:
        for gid in truth:
            if gid not in known:
                raise UnknownGroundTruthId(f"ground truth id {gid!r} not in gallery")
    max_k = max(ks)
    hits = {k: 0 for k in ks}
    reciprocal_sum = 0.0
    for query, truth in queries:
        expr = _parse_for_state(state, query)
        results = ranking.execute(
            expr,
            state.gallery.records_by_id,
            state.gallery.index,
            state.embedder,
            state.cfg,
            max_k,
            state.gallery.vector,
        )
        ids = [r.image_id for r in results]
        truth_set = set(truth)
        rank = next((i + 1 for i, rid in enumerate(ids) if rid in truth_set), None)
        if rank is not None:
            reciprocal_sum += 1.0 / rank
            for k in ks:
                if rank <= k:
                    hits[k] += 1
    n = len(queries)
    return TopKReport(
        query_count=n,
        per_k={k: hits[k] / n for k in ks},
        mean_reciprocal_rank=reciprocal_sum / n,
    )


def load_eval_queries(path: str) -> list[tuple[str, list[str]]]:
    """Evaluation file: JSON list of {"query": str, "ground_truth": [ids]}."""
    with open(path, "r", encoding="utf-8") as fh:
        data = json.load(fh)
    if isinstance(data, dict):
        data = data.get("queries", [])
    out = []
    for row in data:
        out.append((row["query"], list(row["ground_truth"])))
    return out
