"""Operator entry points: ingest, serve, query, synth, eval.

Exit codes: 0 on success, 1 on usage errors, 2 on runtime failures.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .errors import IntentSearchError
from .model import RankingConfig
from .embedding import RemoteEmbedder
from .service import (
    ServiceState,
    eval_topk,
    load_eval_queries,
    serve_api,
    text_search_response,
)
from .storage import ingest, open_gallery
from .visual import BoxFillSegmenter, RemoteEditProvider, RemoteSegmenter, StubEditProvider
from . import synth


class _ArgumentParser(argparse.ArgumentParser):
    def error(self, message):  # usage errors exit 1, not argparse's default 2
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _add_gallery_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--gallery", required=True, help="gallery root directory")
    p.add_argument("--meta", default=None, help="metadata JSONL (default: GALLERY/meta.jsonl)")
    p.add_argument(
        "--embeddings", default=None, help="embeddings file (default: GALLERY/embeddings.iemb)"
    )
    p.add_argument("--embed-url", default=None, help="remote embedding endpoint")


def _add_ranking_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--leaf-size", type=int, default=32)
    p.add_argument("--prefilter-k", type=int, default=500)
    p.add_argument("--exclusion-fraction", type=float, default=0.4)


def build_parser() -> argparse.ArgumentParser:
    parser = _ArgumentParser(prog="intentsearch")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_ArgumentParser)

    p_synth = sub.add_parser("synth",
                             help="generate a synthetic attribute gallery")
    p_synth.add_argument("--attrs", type=int, required=True)
    p_synth.add_argument("--images", type=int, required=True)
    p_synth.add_argument("--out", required=True)
    p_synth.add_argument("--seed", type=int, default=7)
    p_synth.add_argument("--canvas", type=int, default=64, help="square canvas side in pixels")
    p_synth.add_argument("--dim", type=int, default=0, help="embedding dim (default attrs+1)")
    p_synth.add_argument("--max-subset", type=int, default=None)

    p_ingest = sub.add_parser("ingest",
                             help="embed a gallery and write the embeddings file")
    _add_gallery_flags(p_ingest)

    p_serve = sub.add_parser("serve",
                             help="run the HTTP API")
    _add_gallery_flags(p_serve)
    _add_ranking_flags(p_serve)
    p_serve.add_argument("--port", type=int, default=8080)
    p_serve.add_argument("--host", default="127.0.0.1")
    p_serve.add_argument("--segment-url", default=None)
    p_serve.add_argument("--edit-url", default=None)
    p_serve.add_argument("--llm-url", default=None)

    p_query = sub.add_parser("query",
                             help="one-shot text search")
    p_query.add_argument("text")
    _add_gallery_flags(p_query)
    _add_ranking_flags(p_query)
    p_query.add_argument("--k", type=int, default=10)
    p_query.add_argument("--json", action="store_true", dest="as_json")

    p_eval = sub.add_parser("eval",
                             help="Top-K evaluation")
    p_eval.add_argument("--queries", required=True)
    _add_gallery_flags(p_eval)
    _add_ranking_flags(p_eval)
    p_eval.add_argument("--k", default="1,5,20", help="comma-separated K values")

    return parser


def _make_embedder(args) -> object:
    if args.embed_url:
        return RemoteEmbedder(args.embed_url)
    spec_file = Path(args.gallery) / synth.SYNTH_SPEC_FILENAME
    if spec_file.is_file():
        return synth.embedder_for(args.gallery)
    raise IntentSearchError(
        "no embedding provider: pass --embed-url or use a synthetic gallery"
    )


def _make_config(args) -> RankingConfig:
    return RankingConfig(
        prefilter_k=args.prefilter_k, exclusion_fraction=args.exclusion_fraction
    )


def _load_state(args) -> ServiceState:
    gallery = open_gallery(
        args.gallery,
        meta_path=args.meta,
        embeddings_path=args.embeddings,
        leaf_size=getattr(args, "leaf_size", 32),
    )
    segmenter = (
        RemoteSegmenter(args.segment_url)
        if getattr(args, "segment_url", None)
        else BoxFillSegmenter()
    )
    editor = (
        RemoteEditProvider(args.edit_url)
        if getattr(args, "edit_url", None)
        else StubEditProvider()
    )
    return ServiceState(
        gallery=gallery,
        embedder=_make_embedder(args),
        segmenter=segmenter,
        editor=editor,
        cfg=_make_config(args),
        llm_url=getattr(args, "llm_url", None),
    )


def cmd_synth(args) -> int:
    canvas = (args.canvas, args.canvas)
    spec = synth.build_spec(
        args.attrs, args.images, seed=args.seed, canvas=canvas,
        dim=args.dim, max_subset=args.max_subset,
    )
    root = synth.materialize(spec, args.out)
    print(f"wrote {len(spec.records)} images over {args.attrs} attributes to {root}")
    return 0


def cmd_ingest(args) -> int:
    meta = args.meta or str(Path(args.gallery) / "meta.jsonl")
    out = args.embeddings or str(Path(args.gallery) / "embeddings.iemb")
    manifest = ingest(args.gallery, meta, _make_embedder(args), out)
    print(f"embedded {len(manifest.records)} records -> {manifest.embeddings_file}")
    return 0


def cmd_serve(args) -> int:
    state = _load_state(args)
    print(f"serving {len(state.gallery.records)} records on {args.host}:{args.port}")
    serve_api(state, args.port, host=args.host)
    return 0


def cmd_query(args) -> int:
    state = _load_state(args)
    body = text_search_response(state, args.text, args.k)
    if args.as_json:
        print(json.dumps(body, ensure_ascii=False))
    else:
        for rank, row in enumerate(body["results"], start=1):
            print(
                f"{rank:3d}. {row['id']}  score={row['score']:.4f}  "
                f"{row['collection']}  {row['price']} ETH"
            )
        if not body["results"]:
            print("no matches")
    return 0


def cmd_eval(args) -> int:
    try:
        ks = [int(part) for part in args.k.split(",") if part.strip()]
    except ValueError:
        raise IntentSearchError(f"bad --k list: {args.k!r}")
    state = _load_state(args)
    queries = load_eval_queries(args.queries)
    report = eval_topk(queries, state, ks)
    print(f"queries: {report.query_count}")
    for line in report.lines():
        print(line)
    return 0


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command == "query" and not args.text.strip():
        parser.print_usage(sys.stderr)
        print("intentsearch query: error: query text must be non-empty", file=sys.stderr)
        return 1
    try:
        if args.command == "synth":
            return cmd_synth(args)
        if args.command == "ingest":
            return cmd_ingest(args)
        if args.command == "serve":
            return cmd_serve(args)
        if args.command == "query":
            return cmd_query(args)
        if args.command == "eval":
            return cmd_eval(args)
        parser.print_usage(sys.stderr)
        return 1
    except IntentSearchError as exc:
        print(f"intentsearch: error: {exc}", file=sys.stderr)
        return 2
    except (OSError, ValueError) as exc:
        print(f"intentsearch: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
