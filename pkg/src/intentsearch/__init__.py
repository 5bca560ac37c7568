"""Logic-composed multimodal image search.

Parses free-form queries into a structured intent expression, retrieves over a
unit-sphere embedding index (exact ball-tree kNN), and ranks with logic-aware
rules: intersection thresholds, union interleaving, exclusion, change scoring,
and metadata constraints. Served over a stateless HTTP API.
"""

from .errors import IntentSearchError
from .model import (
    Candidate,
    ChangeSpec,
    ComposedIntent,
    ElementKind,
    ImageRecord,
    IntentElement,
    IntentExpression,
    MetadataConstraint,
    PriceOrder,
    RankingConfig,
    deserialize_expression,
    serialize_expression,
    validate_expression,
)
from .parser import (
    ConnectiveLexicon,
    DEFAULT_LEXICON,
    PromptTemplate,
    TagSuggestion,
    adapt_llm_output,
    build_cot_prompt,
    match_elements_to_tags,
    parse_query,
)
from .index import BallTreeIndex, Neighbor, brute_force_knn, cosine_distance, normalize
from .embedding import (
    RemoteEmbedder,
    SyntheticEmbedder,
    SyntheticGallerySpec,
    SyntheticRecord,
    TripletSample,
    embed_image_synthetic,
    embed_text_synthetic,
    hinged_triplet_margin,
    triplet_margin,
)
from .visual import (
    BoxFillSegmenter,
    RegionMask,
    RemoteEditProvider,
    RemoteSegmenter,
    StubEditProvider,
    combine_selected_elements,
    regularized_black_composite,
    segment,
    swap_element,
    visual_query_embedding,
    white_composite,
)
from .ranking import (
    RankedResult,
    apply_exclusion,
    apply_metadata,
    composed_query_vector,
    execute,
    merge_union,
    retrieve_option,
    score_change,
    weighted_element_score,
)
from .storage import Gallery, GalleryManifest, ingest, load, open_gallery
from .service import ServiceState, create_app, eval_topk, serve_api

__version__ = "0.1.0"

__all__ = [
    "IntentSearchError",
    "Candidate",
    "ChangeSpec",
    "ComposedIntent",
    "ElementKind",
    "ImageRecord",
    "IntentElement",
    "IntentExpression",
    "MetadataConstraint",
    "PriceOrder",
    "RankingConfig",
    "deserialize_expression",
    "serialize_expression",
    "validate_expression",
    "ConnectiveLexicon",
    "DEFAULT_LEXICON",
    "PromptTemplate",
    "TagSuggestion",
    "adapt_llm_output",
    "build_cot_prompt",
    "match_elements_to_tags",
    "parse_query",
    "BallTreeIndex",
    "Neighbor",
    "brute_force_knn",
    "cosine_distance",
    "normalize",
    "RemoteEmbedder",
    "SyntheticEmbedder",
    "SyntheticGallerySpec",
    "SyntheticRecord",
    "TripletSample",
    "embed_image_synthetic",
    "embed_text_synthetic",
    "hinged_triplet_margin",
    "triplet_margin",
    "BoxFillSegmenter",
    "RegionMask",
    "RemoteEditProvider",
    "RemoteSegmenter",
    "StubEditProvider",
    "combine_selected_elements",
    "regularized_black_composite",
    "segment",
    "swap_element",
    "visual_query_embedding",
    "white_composite",
    "RankedResult",
    "apply_exclusion",
    "apply_metadata",
    "composed_query_vector",
    "execute",
    "merge_union",
    "retrieve_option",
    "score_change",
    "weighted_element_score",
    "Gallery",
    "GalleryManifest",
    "ingest",
    "load",
    "open_gallery",
    "ServiceState",
    "create_app",
    "eval_topk",
    "serve_api",
]
