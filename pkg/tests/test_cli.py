import json

import pytest

from intentsearch.cli import main
from intentsearch import synth


@pytest.fixture(scope="module")
def cli_gallery(tmp_path_factory, capsys_disabled=None):
    root = tmp_path_factory.mktemp("cli_gallery")
    code = main(
        ["synth", "--attrs", "8", "--images", "64", "--out", str(root), "--seed", "3"]
    )
    assert code == 0
    code = main(["ingest", "--gallery", str(root)])
    assert code == 0
    return root


class TestSynthIngestQuery:
    def test_end_to_end_set_semantics(self, cli_gallery, capsys):
        code = main(
            ["query", "attr0 and attr1", "--gallery", str(cli_gallery), "--k", "5", "--json"]
        )
        captured = capsys.readouterr()
        assert code == 0
        body = json.loads(captured.out)
        assert set(body) == {"results", "intent"}
        spec = synth.load_spec(cli_gallery)
        by_id = {r.id: set(r.attributes) for r in spec.records}
        assert body["results"]
        for row in body["results"]:
            assert {"attr0", "attr1"} <= by_id[row["id"]]

    def test_json_fields_match_http_contract(self, cli_gallery, capsys):
        main(["query", "attr2", "--gallery", str(cli_gallery), "--k", "3", "--json"])
        body = json.loads(capsys.readouterr().out)
        for row in body["results"]:
            assert set(row) == {"id", "score", "collection", "price", "image_url"}

    def test_plain_output_lists_ranked_ids(self, cli_gallery, capsys):
        code = main(["query", "attr0", "--gallery", str(cli_gallery), "--k", "3"])
        out = capsys.readouterr().out
        assert code == 0
        assert out.splitlines()[0].startswith("  1. ")

    def test_synth_gallery_files_exist(self, cli_gallery):
        assert (cli_gallery / "meta.jsonl").is_file()
        assert (cli_gallery / "embeddings.iemb").is_file()
        assert (cli_gallery / "synth_spec.json").is_file()
        assert len(list((cli_gallery / "images").glob("*.png"))) == 64


class TestUsageErrors:
    def test_empty_query_exits_one(self, cli_gallery, capsys):
        code = main(["query", "", "--gallery", str(cli_gallery)])
        captured = capsys.readouterr()
        assert code == 1
        assert "usage" in captured.err.lower() or "error" in captured.err.lower()

    def test_unknown_flag_exits_one(self, capsys):
        with pytest.raises(SystemExit) as err:
            main(["synth", "--bogus", "1"])
        assert err.value.code == 1

    def test_missing_subcommand_exits_one(self):
        with pytest.raises(SystemExit) as err:
            main([])
        assert err.value.code == 1

    def test_runtime_error_exits_two(self, tmp_path, capsys):
        code = main(["query", "dog", "--gallery", str(tmp_path / "missing")])
        assert code == 2
        assert "error" in capsys.readouterr().err.lower()


class TestEval:
    def test_topk_table_output(self, cli_gallery, capsys):
        # build a 2-query fixture with one guaranteed hit and one guaranteed miss
        main(["query", "attr0", "--gallery", str(cli_gallery), "--k", "2", "--json"])
        first = json.loads(capsys.readouterr().out)["results"]
        main(["query", "attr1", "--gallery", str(cli_gallery), "--k", "2", "--json"])
        second = json.loads(capsys.readouterr().out)["results"]
        queries = [
            {"query": "attr0", "ground_truth": [first[0]["id"]]},
            {"query": "attr1", "ground_truth": [second[1]["id"]]},
        ]
        path = cli_gallery / "queries.json"
        path.write_text(json.dumps(queries), encoding="utf-8")
        code = main(
            ["eval", "--queries", str(path), "--gallery", str(cli_gallery), "--k", "1,5"]
        )
        out = capsys.readouterr().out
        assert code == 0
        assert "Top-1 50.00%" in out
        assert "Top-5" in out
