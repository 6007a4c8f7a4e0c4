import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from itrank import EmbeddedDataset, EmbeddingSet, LabelKind, Ranking, TaskMeta
from itrank.errors import SchemaError
from itrank.fixtures import (FIXTURE_HASHES, FixtureIntegrityError,
                             fixture_dir, load_fixtures)
from itrank.formats import (parse_embedded_dataset, parse_embeddings,
                            parse_manifest, parse_rankings, parse_scores,
                            parse_transfer_table, serialize_embedded_dataset,
                            serialize_embeddings, serialize_manifest,
                            serialize_rankings, serialize_scores,
                            serialize_transfer_table)

from test_core import tiny_table

MINIMAL_TABLE = """m\tt0
__baseline__\t40.5
a\t50.25
b\t30.0
"""


class TestTransferTableFormat:
    def test_minimal_document(self):
        table = parse_transfer_table(MINIMAL_TABLE)
        assert table.model_tag == "m"
        assert table.intermediates == ("a", "b")
        assert table.score("a", "t0") == 50.25
        assert table.baseline["t0"] == 40.5

    def test_round_trip(self):
        rng = np.random.default_rng(0)
        table = tiny_table(rng.uniform(0, 100, size=(4, 3)),
                           rng.uniform(1, 99, size=3))
        assert parse_transfer_table(serialize_transfer_table(table)) == table

    def test_missing_baseline_row_named(self):
        bad = "m\tt0\na\t50.0\nb\t30.0\n"
        with pytest.raises(SchemaError, match="__baseline__"):
            parse_transfer_table(bad)

    def test_non_numeric_cell_reports_position(self):
        bad = MINIMAL_TABLE.replace("30.0", "oops")
        with pytest.raises(SchemaError, match="line 4"):
            parse_transfer_table(bad)

    def test_duplicate_row_id(self):
        bad = MINIMAL_TABLE + "a\t10.0\n"
        with pytest.raises(SchemaError, match="duplicate"):
            parse_transfer_table(bad)

    def test_ragged_row(self):
        bad = MINIMAL_TABLE + "c\t1.0\t2.0\n"
        with pytest.raises(SchemaError, match="line 5"):
            parse_transfer_table(bad)


class TestEmbeddingFormat:
    def embs(self):
        return EmbeddingSet(kind="text_mean", dim=4, vectors={
            "a": [0.5, -1.0, 2.0, 0.0], "b": [1.0, 1.0, 1.0, 1.0]})

    def test_round_trip(self):
        embs = self.embs()
        assert parse_embeddings(serialize_embeddings(embs)) == embs

    def test_two_records(self):
        text = ('{"task_id": "a", "kind": "sentence", "dim": 2, "values": [1, 2]}\n'
                '{"task_id": "b", "kind": "sentence", "dim": 2, "values": [3, 4]}\n')
        embs = parse_embeddings(text)
        assert set(embs.vectors) == {"a", "b"}

    def test_dim_mismatch(self):
        text = ('{"task_id": "a", "kind": "sentence", "dim": 2, "values": [1, 2]}\n'
                '{"task_id": "b", "kind": "sentence", "dim": 3, "values": [1, 2, 3]}\n')
        with pytest.raises(SchemaError, match="dim"):
            parse_embeddings(text)

    def test_unknown_kind(self):
        text = '{"task_id": "a", "kind": "word2vec", "dim": 1, "values": [1]}\n'
        with pytest.raises(SchemaError, match="kind"):
            parse_embeddings(text)

    def test_negative_fim_entry(self):
        text = '{"task_id": "a", "kind": "task_fim", "dim": 2, "values": [1, -0.5]}\n'
        with pytest.raises(SchemaError, match="negative"):
            parse_embeddings(text)

    def test_non_finite_value(self):
        text = '{"task_id": "a", "kind": "sentence", "dim": 1, "values": [NaN]}\n'
        with pytest.raises(SchemaError):
            parse_embeddings(text)


class TestEmbeddedDatasetFormat:
    def test_class_round_trip(self):
        rng = np.random.default_rng(1)
        data = EmbeddedDataset(label_kind=LabelKind.CLASS_INDEX,
                               vectors=rng.normal(size=(4, 3)),
                               labels=np.array([0, 1, 1, 0]),
                               source_model="mnli", n_classes=2)
        back = parse_embedded_dataset(serialize_embedded_dataset(data))
        assert np.array_equal(back.vectors, data.vectors)
        assert np.array_equal(back.labels, data.labels)
        assert back.source_model == "mnli"
        assert back.n_classes == 2

    def test_choice_round_trip(self):
        data = EmbeddedDataset(
            label_kind=LabelKind.CHOICE_GROUP,
            vectors=np.arange(8.0).reshape(4, 2),
            groups=("q0", "q0", "q1", "q1"),
            choices=np.array([0, 1, 0, 1]),
            correct=np.array([True, False, False, True]),
            source_model="swag")
        back = parse_embedded_dataset(serialize_embedded_dataset(data))
        assert back.groups == data.groups
        assert np.array_equal(back.correct, data.correct)

    def test_real_value_round_trip(self):
        data = EmbeddedDataset(label_kind=LabelKind.REAL_VALUE,
                               vectors=np.ones((3, 2)),
                               labels=np.array([0.1, 2.5, -1.0]))
        back = parse_embedded_dataset(serialize_embedded_dataset(data))
        assert np.array_equal(back.labels, data.labels)

    def test_choice_group_without_correct_rejected(self):
        text = ('{"label_kind": "choice_group", "dim": 1, "source_model": "m"}\n'
                '{"vector": [1.0], "group": "g", "choice": 0, "correct": false}\n'
                '{"vector": [2.0], "group": "g", "choice": 1, "correct": false}\n')
        with pytest.raises(SchemaError, match="exactly one"):
            parse_embedded_dataset(text)

    def test_label_overflow_rejected(self):
        text = ('{"label_kind": "class_index", "dim": 1, "source_model": "m", '
                '"n_classes": 2}\n'
                '{"vector": [1.0], "label": 5}\n')
        with pytest.raises(SchemaError):
            parse_embedded_dataset(text)

    def test_token_file_supports_downstream_sampling(self):
        from itrank import sample_tokens
        rows = [f'{{"vector": [{i}.0], "label": {i % 3}}}' for i in range(5000)]
        text = ('{"label_kind": "token_tag", "dim": 1, "source_model": "m", '
                '"n_classes": 3}\n' + "\n".join(rows) + "\n")
        data = parse_embedded_dataset(text)
        assert data.n_examples == 5000
        assert sample_tokens(data, 1000, seed=0).n_examples == 1000


class TestManifestFormat:
    def test_round_trip(self):
        metas = {"a": TaskMeta("a", "tagging", 12, "f1"),
                 "b": TaskMeta("b", "classification", 5, "acc")}
        assert parse_manifest(serialize_manifest(metas)) == metas

    def test_bad_type_rejected(self):
        text = "id\ttask_type\ttrain_size\tmetric\nx\tregression\t5\tmse\n"
        with pytest.raises(SchemaError, match="task type"):
            parse_manifest(text)


class TestRankingAndScoreFormats:
    def rankings(self):
        return [Ranking("t1", "size", (("a", 3.0), ("b", 2.0))),
                Ranking("t2", "size", (("b", 9.0), ("a", 1.5)))]

    def test_tsv_round_trip(self):
        rs = self.rankings()
        back = parse_rankings(serialize_rankings(rs, fmt="tsv"))
        assert sorted(r.target for r in back) == ["t1", "t2"]
        assert back[0].entries == rs[0].entries

    def test_jsonl_round_trip(self):
        rs = self.rankings()
        back = parse_rankings(serialize_rankings(rs, fmt="jsonl"))
        assert {r.target: r.ids for r in back} == {"t1": ("a", "b"),
                                                   "t2": ("b", "a")}

    def test_non_contiguous_ranks_rejected(self):
        text = ("target\tmethod\trank\ttask_id\tscore\n"
                "t\tm\t1\ta\t2.0\n"
                "t\tm\t3\tb\t1.0\n")
        with pytest.raises(SchemaError, match="contiguous"):
            parse_rankings(text)

    def test_scores_round_trip(self):
        scores = {"t1": {"a": 0.5, "b": 0.25}, "t2": {"a": 9.0, "b": 8.0}}
        assert parse_scores(serialize_scores(scores)) == scores


@settings(max_examples=40, deadline=None)
@given(st.integers(min_value=1, max_value=6),
       st.integers(min_value=1, max_value=4),
       st.integers(min_value=0, max_value=2**32 - 1))
def test_transfer_table_round_trip_property(n_s, n_t, seed):
    rng = np.random.default_rng(seed)
    table = tiny_table(rng.uniform(0, 100, size=(n_s, n_t)),
                       rng.uniform(0, 100, size=n_t))
    assert parse_transfer_table(serialize_transfer_table(table)) == table


@settings(max_examples=40, deadline=None)
@given(st.integers(min_value=1, max_value=5),
       st.sampled_from(["text_mean", "sentence", "task_fim"]),
       arrays(np.float64, shape=(3, 4),
              elements=st.floats(min_value=0.0, max_value=1e6,
                                 allow_nan=False)))
def test_embeddings_round_trip_property(extra_dim, kind, base):
    vectors = {f"task{i}": np.concatenate([row, np.ones(extra_dim)])
               for i, row in enumerate(base)}
    embs = EmbeddingSet(kind=kind, dim=4 + extra_dim, vectors=vectors)
    assert parse_embeddings(serialize_embeddings(embs)) == embs


class TestFixtures:
    def test_bundle_shape(self):
        bundle = load_fixtures()
        assert len(bundle.roberta_table.intermediates) == 42
        assert len(bundle.roberta_table.targets) == 11
        assert len(bundle.manifest) == 53

    def test_spot_values(self):
        bundle = load_fixtures()
        assert bundle.roberta_table.score("SST-2", "Rotten Tomatoes") == 92.03
        assert bundle.roberta_table.score("Social IQA", "COPA") == 79.92
        assert bundle.roberta_table.baseline["BoolQ"] == 62.17
        assert bundle.bert_table.score("MNLI", "RTE") == 78.10

    def test_tables_share_id_sets(self):
        bundle = load_fixtures()
        assert set(bundle.roberta_table.intermediates) == \
            set(bundle.bert_table.intermediates)

    def test_tampered_fixture_detected(self, tmp_path):
        src = fixture_dir()
        for name in FIXTURE_HASHES:
            (tmp_path / name).write_bytes((src / name).read_bytes())
        path = tmp_path / "roberta_transfer.tsv"
        path.write_text(path.read_text().replace("92.03", "99.99"))
        with pytest.raises(FixtureIntegrityError, match="hash"):
            load_fixtures(tmp_path, verify_hash=True)

    def test_env_override(self, tmp_path, monkeypatch):
        src = fixture_dir()
        for name in FIXTURE_HASHES:
            (tmp_path / name).write_bytes((src / name).read_bytes())
        monkeypatch.setenv("ITRANK_FIXTURES", str(tmp_path))
        bundle = load_fixtures()
        assert len(bundle.manifest) == 53
