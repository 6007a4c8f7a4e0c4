import pytest

from itrank.cli import main
from itrank.fixtures import FIXTURE_HASHES, fixture_dir
from itrank.formats import (parse_embeddings, parse_rankings,
                            parse_transfer_table, serialize_embeddings,
                            serialize_manifest, serialize_rankings,
                            serialize_scores)
from itrank import EmbeddingSet, TaskMeta, load_fixtures


@pytest.fixture(scope="module")
def fixdir():
    return fixture_dir()


def run(args):
    return main([str(a) for a in args])


class TestRank:
    def test_size_on_synthetic_manifest(self, tmp_path, capsys):
        metas = {
            "Yelp Polarity": TaskMeta("Yelp Polarity", "classification",
                                      560_000, "acc"),
            "SNLI": TaskMeta("SNLI", "classification", 550_000, "acc"),
            "MNLI": TaskMeta("MNLI", "classification", 393_000, "acc"),
            "RTE": TaskMeta("RTE", "classification", 1_000, "acc"),
        }
        mpath = tmp_path / "manifest.tsv"
        mpath.write_text(serialize_manifest(metas))
        assert run(["rank", "--method", "size", "--manifest", mpath,
                    "--targets", "RTE"]) == 0
        out = capsys.readouterr().out
        rankings = parse_rankings(out)
        assert rankings[0].ids == ("Yelp Polarity", "SNLI", "MNLI")

    def test_size_on_bundled_manifest(self, fixdir, capsys):
        assert run(["rank", "--method", "size",
                    "--manifest", fixdir / "manifest.tsv",
                    "--targets", ",".join(load_fixtures().roberta_table.targets),
                    ]) == 0
        rankings = parse_rankings(capsys.readouterr().out)
        rte = next(r for r in rankings if r.target == "RTE")
        assert rte.ids[0] == "ReCoRD"
        assert len(rte.ids) == 42

    def test_semb_duplicate_vector_tops(self, tmp_path, capsys):
        embs = EmbeddingSet(kind="sentence", dim=3, vectors={
            "tgt": [1.0, 2.0, 3.0], "twin": [2.0, 4.0, 6.0],
            "other": [-1.0, 0.0, 1.0]})
        epath = tmp_path / "e.jsonl"
        epath.write_text(serialize_embeddings(embs))
        assert run(["rank", "--method", "semb", "--embeddings", epath,
                    "--targets", "tgt"]) == 0
        rankings = parse_rankings(capsys.readouterr().out)
        assert rankings[0].ids[0] == "twin"

    def test_missing_embeddings_file_is_schema_error(self):
        assert run(["rank", "--method", "semb", "--embeddings",
                    "/nonexistent/e.jsonl", "--targets", "t"]) == 2

    def test_kind_mismatch_is_semantic_error(self, tmp_path):
        embs = EmbeddingSet(kind="text_mean", dim=2,
                            vectors={"t": [1.0, 0.0], "a": [0.0, 1.0]})
        epath = tmp_path / "e.jsonl"
        epath.write_text(serialize_embeddings(embs))
        assert run(["rank", "--method", "semb", "--embeddings", epath,
                    "--targets", "t"]) == 3

    def test_scores_method(self, tmp_path, capsys):
        spath = tmp_path / "s.tsv"
        spath.write_text(serialize_scores({"t": {"a": 0.1, "b": 0.9}}))
        assert run(["rank", "--method", "scores", "--scores", spath]) == 0
        rankings = parse_rankings(capsys.readouterr().out)
        assert rankings[0].ids == ("b", "a")

    def test_output_file_rerun_identical(self, tmp_path, fixdir):
        out = tmp_path / "r.tsv"
        args = ["rank", "--method", "random", "--seed", 3,
                "--manifest", fixdir / "manifest.tsv",
                "--targets", "RTE,BoolQ", "--out", out]
        assert run(args) == 0
        first = out.read_bytes()
        assert run(args) == 0
        assert out.read_bytes() == first


class TestEvaluate:
    def test_oracle_ranking_scores_perfectly(self, tmp_path, fixdir, capsys):
        bundle = load_fixtures()
        table = bundle.roberta_table
        from itrank.rankers import rank_by_scores
        rankings = [rank_by_scores({s: table.score(s, t)
                                    for s in table.intermediates}, t, "oracle")
                    for t in table.targets]
        rpath = tmp_path / "r.tsv"
        rpath.write_text(serialize_rankings(rankings))
        assert run(["evaluate", "--rankings", rpath,
                    "--table", fixdir / "roberta_transfer.tsv",
                    "--manifest", fixdir / "manifest.tsv"]) == 0
        out = capsys.readouterr().out
        overall = [ln for ln in out.splitlines()
                   if ln.startswith("oracle\toverall")]
        assert len(overall) == 1
        _, _, _, ndcg_val, r1, r3, r5 = overall[0].split("\t")
        assert float(ndcg_val) == pytest.approx(1.0)
        assert float(r1) == 0.0

    def test_prefer_same_type_flag(self, tmp_path, fixdir, capsys):
        bundle = load_fixtures()
        assert run(["rank", "--method", "size",
                    "--manifest", fixdir / "manifest.tsv",
                    "--targets", ",".join(bundle.roberta_table.targets),
                    "--out", tmp_path / "r.tsv"]) == 0
        assert run(["evaluate", "--rankings", tmp_path / "r.tsv",
                    "--table", fixdir / "roberta_transfer.tsv",
                    "--manifest", fixdir / "manifest.tsv",
                    "--prefer-same-type"]) == 0
        out = capsys.readouterr().out
        assert "size+type\toverall" in out

    def test_id_mismatch_is_exit_3(self, tmp_path, fixdir):
        rankings = [parse_rankings("target\tmethod\trank\ttask_id\tscore\n"
                                   "RTE\tm\t1\tfake-task\t1.0\n")[0]]
        rpath = tmp_path / "r.tsv"
        rpath.write_text(serialize_rankings(rankings))
        assert run(["evaluate", "--rankings", rpath,
                    "--table", fixdir / "roberta_transfer.tsv",
                    "--manifest", fixdir / "manifest.tsv"]) == 3

    def test_include_random_baseline(self, tmp_path, fixdir, capsys):
        bundle = load_fixtures()
        table = bundle.roberta_table
        from itrank.rankers import rank_by_size
        rankings = [rank_by_size(bundle.manifest, list(table.intermediates), t)
                    for t in table.targets]
        rpath = tmp_path / "r.tsv"
        rpath.write_text(serialize_rankings(rankings))
        assert run(["evaluate", "--rankings", rpath,
                    "--table", fixdir / "roberta_transfer.tsv",
                    "--manifest", fixdir / "manifest.tsv",
                    "--include-random", 200, "--seed", 1]) == 0
        out = capsys.readouterr().out
        assert "random\toverall" in out


class TestFuseCostToylab:
    def test_fuse_cli(self, tmp_path, capsys):
        from itrank.rankers import rank_by_scores
        r1 = [rank_by_scores({"a": 3.0, "b": 2.0, "c": 1.0}, "t", "m1")]
        r2 = [rank_by_scores({"b": 3.0, "a": 2.0, "c": 1.0}, "t", "m2")]
        p1, p2 = tmp_path / "r1.tsv", tmp_path / "r2.tsv"
        p1.write_text(serialize_rankings(r1))
        p2.write_text(serialize_rankings(r2))
        assert run(["fuse", "--rankings", p1, p2, "--fuse-constant", 60]) == 0
        fused = parse_rankings(capsys.readouterr().out)
        assert fused[0].ids == ("a", "b", "c")
        assert fused[0].method == "m1+m2"

    def test_cost_cli_values(self, capsys):
        assert run(["cost"]) == 0
        lines = capsys.readouterr().out.splitlines()
        rows = {ln.split("\t")[0]: float(ln.split("\t")[2])
                for ln in lines[1:]}
        assert rows["text_or_sent_emb"] == pytest.approx(1.10e13)
        assert rows["knn_or_linear"] == pytest.approx(4.62e14)
        assert rows["fsft_or_fs_taskemb"] == pytest.approx(1.386e15)

    def test_toylab_cli_outputs(self, tmp_path, capsys):
        assert run(["toylab", "--intermediates", 3, "--targets", 2,
                    "--examples", 300, "--cap", 100, "--epochs", 4,
                    "--restarts", 2, "--few-shot-steps", 5,
                    "--methods", "random,size,text_mean",
                    "--seed", 5, "--out-dir", tmp_path / "lab"]) == 0
        table = parse_transfer_table((tmp_path / "lab" / "transfer_table.tsv")
                                     .read_text())
        assert table.scores.shape == (3, 2)
        embs = parse_embeddings((tmp_path / "lab" / "text_mean.jsonl")
                                .read_text())
        assert len(embs.vectors) == 5
        report = (tmp_path / "lab" / "report.tsv").read_text()
        assert "size\toverall" in report
        # lab outputs feed the same CLI paths as the bundled fixtures
        assert run(["rank", "--method", "size",
                    "--manifest", tmp_path / "lab" / "manifest.tsv",
                    "--targets", ",".join(table.targets),
                    "--out", tmp_path / "lab_rank.tsv"]) == 0
        capsys.readouterr()
        assert run(["evaluate",
                    "--rankings", tmp_path / "lab_rank.tsv",
                    "--table", tmp_path / "lab" / "transfer_table.tsv",
                    "--manifest", tmp_path / "lab" / "manifest.tsv"]) == 0


class TestReproduce:
    def test_reproduce_passes(self, capsys):
        assert run(["reproduce"]) == 0
        out = capsys.readouterr().out
        assert "positive=243" in out
        assert "negative=203" in out
        assert "benefiting_targets=5" in out
        assert "[FAIL]" not in out

    def test_tampered_fixtures_exit_4(self, tmp_path):
        src = fixture_dir()
        for name in FIXTURE_HASHES:
            (tmp_path / name).write_bytes((src / name).read_bytes())
        path = tmp_path / "bert_transfer.tsv"
        path.write_text(path.read_text().replace("78.10", "11.11"))
        assert run(["reproduce", "--fixtures", tmp_path]) == 4
