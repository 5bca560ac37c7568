import pytest

from intentsearch import synth
from intentsearch.embedding import SyntheticEmbedder
from intentsearch.storage import ingest, open_gallery


@pytest.fixture(scope="session")
def small_gallery(tmp_path_factory):
    """64 images over 8 attributes, materialized and ingested once per session."""
    root = tmp_path_factory.mktemp("small_gallery")
    spec = synth.build_spec(8, 64, seed=11)
    synth.materialize(spec, root)
    embedder = SyntheticEmbedder(spec)
    ingest(root, root / "meta.jsonl", embedder, root / "embeddings.iemb")
    gallery = open_gallery(root)
    return spec, embedder, gallery


@pytest.fixture(scope="session")
def oracle_gallery(tmp_path_factory):
    """256 images over 8 orthogonal attributes for the logic-semantics oracle."""
    root = tmp_path_factory.mktemp("oracle_gallery")
    spec = synth.build_spec(8, 256, seed=29)
    synth.materialize(spec, root)
    embedder = SyntheticEmbedder(spec)
    ingest(root, root / "meta.jsonl", embedder, root / "embeddings.iemb")
    gallery = open_gallery(root)
    return spec, embedder, gallery
