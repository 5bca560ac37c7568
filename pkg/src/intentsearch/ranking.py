"""Execute an IntentExpression against the index.

Pipeline order is fixed: prefilter by composed-intent similarity, re-rank with
the weighted element average, enforce the intersection threshold, interleave
union options, drop the most negative-similar fraction, then apply metadata.
All sorts are stable and tie-break ascending by id, so runs are byte-identical.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Mapping, Optional, Sequence

import numpy as np

from .errors import EmptyGallery
from .index import BallTreeIndex, normalize
from .model import (
    Candidate,
    ComposedIntent,
    ImageRecord,
    IntentElement,
    IntentExpression,
    MetadataConstraint,
    RankingConfig,
    UnitVector,
    validate_expression,
)

VectorLookup = Callable[[str], UnitVector]


@dataclass
class RankedResult:
    image_id: str
    final_score: float
    provenance: int  # index of the option that produced this result
    excluded: bool = False
    reason: Optional[str] = None


def composed_query_vector(ci: ComposedIntent, embedder) -> UnitVector:
    """Embed the element texts joined by ", " in element order."""
    return embedder.embed_texts([ci.joined_text()])[0]


def weighted_element_score(composed_sim: float, element_sims: Sequence[float], cfg: RankingConfig) -> float:
    """Weighted average of the composed similarity and all element similarities."""
    return cfg.w * composed_sim + cfg.w_elem * float(sum(element_sims))


def _dot(u: UnitVector, v: UnitVector) -> float:
    return float(np.dot(u.astype(np.float64), v.astype(np.float64)))


def retrieve_option(
    ci: ComposedIntent,
    index: BallTreeIndex,
    embedder,
    cfg: RankingConfig,
    vector_of: VectorLookup,
) -> list[Candidate]:
    """Prefilter, re-rank, then drop candidates below any element's pool mean."""
    if index.count == 0:
        raise EmptyGallery("cannot retrieve from an empty index")
    query = composed_query_vector(ci, embedder)
    neighbors = index.knn(query, cfg.prefilter_k)
    element_vectors = embedder.embed_texts([el.text for el in ci.elements])

    candidates: list[Candidate] = []
    for nb in neighbors:
        image_vec = vector_of(nb.id)
        sims = [_dot(image_vec, ev) for ev in element_vectors]
        composed_sim = 1.0 - nb.distance
        candidates.append(
            Candidate(
                image_id=nb.id,
                composed_sim=composed_sim,
                element_sims=sims,
                final_score=weighted_element_score(composed_sim, sims, cfg),
            )
        )
    candidates.sort(key=lambda c: (-c.final_score, c.image_id))

    if not candidates:
        return []
    means = [
        sum(c.element_sims[j] for c in candidates) / len(candidates)
        for j in range(len(ci.elements))
    ]
    return [
        c
        for c in candidates
        if all(sim >= mean for sim, mean in zip(c.element_sims, means))
    ]


def merge_union(option_results: Sequence[Sequence[Candidate]]) -> list[Candidate]:
    """Round-robin interleave preserving intra-option order; first occurrence wins."""
    merged: list[Candidate] = []
    seen: set[str] = set()
    cursors = [0] * len(option_results)
    remaining = sum(len(r) for r in option_results)
    while remaining:
        for j, results in enumerate(option_results):
            if cursors[j] < len(results):
                cand = results[cursors[j]]
                cursors[j] += 1
                remaining -= 1
                if cand.image_id not in seen:
                    seen.add(cand.image_id)
                    merged.append(cand)
    return merged


def combined_negative_vector(
    negatives: Sequence[IntentElement],
    embedder,
    extra_vectors: Sequence[UnitVector] = (),
) -> Optional[UnitVector]:
    """Mean of all negative embeddings (text and visual), renormalized."""
    vectors = list(embedder.embed_texts([el.text for el in negatives])) if negatives else []
    vectors.extend(extra_vectors)
    if not vectors:
        return None
    return normalize(np.mean([v.astype(np.float64) for v in vectors], axis=0))


def apply_exclusion(
    candidates: Sequence[Candidate],
    negatives: Sequence[IntentElement],
    vector_of: VectorLookup,
    embedder,
    cfg: RankingConfig,
    extra_negative_vectors: Sequence[UnitVector] = (),
) -> list[Candidate]:
    """Remove the ceil(fraction * n) candidates most similar to the negative intent."""
    negative = combined_negative_vector(negatives, embedder, extra_negative_vectors)
    if negative is None or not candidates:
        return list(candidates)
    sims = {c.image_id: _dot(vector_of(c.image_id), negative) for c in candidates}
    remove_count = math.ceil(cfg.exclusion_fraction * len(candidates))
    ranked = sorted(candidates, key=lambda c: (-sims[c.image_id], c.image_id))
    removed = {c.image_id for c in ranked[:remove_count]}
    return [c for c in candidates if c.image_id not in removed]


def score_change(
    candidate_sim_to_original: float, sim_to_target: float, sim_to_source: float
) -> float:
    """Reward closeness to the original and target, penalize the source element."""
    return 1.0 * candidate_sim_to_original + 1.0 * sim_to_target - 1.0 * sim_to_source


def _apply_changes(
    candidates: list[Candidate],
    changes,
    embedder,
    vector_of: VectorLookup,
) -> list[Candidate]:
    if not changes or not candidates:
        return candidates
    targets = embedder.embed_texts([c.target.text for c in changes])
    sources = embedder.embed_texts([c.source.text for c in changes])
    for cand in candidates:
        vec = vector_of(cand.image_id)
        score = cand.final_score
        for tv, sv in zip(targets, sources):
            score = score_change(score, _dot(vec, tv), _dot(vec, sv))
        cand.final_score = score
    candidates.sort(key=lambda c: (-c.final_score, c.image_id))
    return candidates


def apply_metadata(
    results: Sequence[RankedResult],
    mc: MetadataConstraint,
    records: Mapping[str, ImageRecord],
) -> list[RankedResult]:
    """Collection filter, then price-range filter, then stable price ordering."""
    kept = list(results)
    if mc.collection is not None:
        wanted = mc.collection.casefold()
        kept = [r for r in kept if records[r.image_id].collection.casefold() == wanted]
    if mc.price_range is not None:
        low, high = mc.price_range
        kept = [r for r in kept if low <= records[r.image_id].price <= high]
    if mc.price_order is not None:
        reverse = mc.price_order.value == "desc"
        kept.sort(key=lambda r: records[r.image_id].price, reverse=reverse)
    return kept


def execute(
    expr: IntentExpression,
    records: Mapping[str, ImageRecord],
    index: BallTreeIndex,
    embedder,
    cfg: RankingConfig,
    k: int,
    vector_of: VectorLookup,
    extra_negative_vectors: Sequence[UnitVector] = (),
    include_excluded: bool = False,
) -> list[RankedResult]:
    """Run the full pipeline and truncate to k survivors."""
    problems = validate_expression(expr)
    if problems:
        raise ValueError(f"invalid expression: {problems[0]}")
    if index.count == 0 or not records:
        raise EmptyGallery("gallery holds no records")

    option_results = []
    for option in expr.options:
        candidates = retrieve_option(option, index, embedder, cfg, vector_of)
        candidates = _apply_changes(candidates, expr.changes, embedder, vector_of)
        option_results.append(candidates)

    provenance: dict[str, int] = {}
    for j, results in enumerate(option_results):
        for cand in results:
            provenance.setdefault(cand.image_id, j)

    merged = merge_union(option_results)
    survivors = apply_exclusion(
        merged, expr.negatives, vector_of, embedder, cfg, extra_negative_vectors
    )
    surviving_ids = {c.image_id for c in survivors}

    ranked = [
        RankedResult(
            image_id=c.image_id,
            final_score=c.final_score,
            provenance=provenance[c.image_id],
        )
        for c in survivors
    ]
    final = apply_metadata(ranked, expr.metadata, records)
    out = final[:k]

    if include_excluded:
        final_ids = {r.image_id for r in final}
        for cand in merged:
            if cand.image_id not in surviving_ids:
                out.append(
                    RankedResult(
                        image_id=cand.image_id,
                        final_score=cand.final_score,
                        provenance=provenance[cand.image_id],
                        excluded=True,
                        reason="negative_similarity",
                    )
                )
            elif cand.image_id not in final_ids:
                out.append(
                    RankedResult(
                        image_id=cand.image_id,
                        final_score=cand.final_score,
                        provenance=provenance[cand.image_id],
                        excluded=True,
                        reason="metadata_filter",
                    )
                )
    return out
