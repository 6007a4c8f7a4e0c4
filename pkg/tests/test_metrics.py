import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from itrank import (MetricRow, Ranking, TaskMeta, TaskType, aggregate, dcg,
                    expected_random_ndcg, expected_random_regret, ndcg,
                    regret_at_k)
from itrank.errors import DomainError, StructureError
from itrank.metrics import metric_row

from oracles import (brute_expected_ndcg, brute_expected_regret, brute_ndcg,
                     brute_regret)


def one_target_table(scores_by_id, baseline=10.0):
    ids = sorted(scores_by_id)
    from itrank import TransferTable
    return TransferTable(
        model_tag="toy", intermediates=tuple(ids), targets=("t",),
        baseline={"t": baseline},
        scores=np.array([[scores_by_id[i]] for i in ids]))


def ranking_for(order, target="t", method="m"):
    n = len(order)
    return Ranking(target, method, tuple((s, float(n - i))
                                         for i, s in enumerate(order)))


class TestDcg:
    def test_descending_example(self):
        assert dcg([3, 2, 1]) == pytest.approx(9.392789, abs=1e-6)

    def test_ascending_example(self):
        assert dcg([1, 2, 3]) == pytest.approx(6.392789, abs=1e-6)

    def test_zero_relevance(self):
        assert dcg([0, 0, 0]) == 0.0

    def test_rejects_negative(self):
        with pytest.raises(DomainError):
            dcg([1.0, -0.1])

    def test_rejects_nonfinite(self):
        with pytest.raises(DomainError):
            dcg([float("inf")])

    def test_large_relevance_stays_finite(self):
        assert np.isfinite(dcg([100.0] * 42))


class TestNdcg:
    def test_ideal_order_is_one(self):
        table = one_target_table({"a": 3.0, "b": 2.0, "c": 1.0})
        assert ndcg(ranking_for(["a", "b", "c"]), table) == pytest.approx(1.0)

    def test_worst_first_toy_value(self):
        table = one_target_table({"a": 3.0, "b": 2.0, "c": 1.0})
        got = ndcg(ranking_for(["c", "b", "a"]), table)
        assert got == pytest.approx(0.68061, abs=1e-5)

    def test_equal_relevance_any_order_is_one(self):
        table = one_target_table({"a": 7.0, "b": 7.0, "c": 7.0})
        for perm in itertools.permutations(["a", "b", "c"]):
            assert ndcg(ranking_for(list(perm)), table) == pytest.approx(1.0)

    def test_mismatched_ranking_raises(self):
        table = one_target_table({"a": 3.0, "b": 2.0})
        with pytest.raises(StructureError):
            ndcg(ranking_for(["a", "x"]), table)


class TestRegretAtK:
    def test_full_k_is_zero(self):
        table = one_target_table({"a": 9.0, "b": 5.0, "c": 1.0})
        assert regret_at_k(ranking_for(["c", "b", "a"]), table, 3) == 0.0

    def test_rte_fixture_top3(self, ):
        from itrank import load_fixtures
        table = load_fixtures().roberta_table
        order = ["MNLI", "RACE", "Cosmos QA"]  # scores 83.47, 83.32, 79.21
        rest = sorted(set(table.intermediates) - set(order))
        r = ranking_for(order + rest, target="RTE")
        assert regret_at_k(r, table, 3) == pytest.approx(1.10, abs=0.005)

    def test_copa_fixture_top1(self):
        from itrank import load_fixtures
        table = load_fixtures().roberta_table
        order = ["Yelp Polarity"] + sorted(set(table.intermediates)
                                           - {"Yelp Polarity"})
        r = ranking_for(order, target="COPA")
        assert regret_at_k(r, table, 1) == pytest.approx(17.67, abs=0.005)

    def test_k_out_of_range(self):
        table = one_target_table({"a": 9.0, "b": 5.0})
        with pytest.raises(DomainError):
            regret_at_k(ranking_for(["a", "b"]), table, 0)
        with pytest.raises(DomainError):
            regret_at_k(ranking_for(["a", "b"]), table, 3)

    def test_zero_iff_top_is_optimal(self):
        table = one_target_table({"a": 9.0, "b": 5.0, "c": 1.0})
        assert regret_at_k(ranking_for(["a", "c", "b"]), table, 1) == 0.0
        assert regret_at_k(ranking_for(["b", "a", "c"]), table, 1) > 0.0


class TestMetricOracleParity:
    def test_exhaustive_small_rankings(self):
        rng = np.random.default_rng(17)
        checked = 0
        while checked < 1000:
            n = int(rng.integers(2, 7))
            rel = {f"s{i}": float(rng.uniform(0, 100)) for i in range(n)}
            table = one_target_table(rel)
            perm = list(rel)
            rng.shuffle(perm)
            r = ranking_for(perm)
            assert ndcg(r, table) == pytest.approx(brute_ndcg(perm, rel),
                                                   abs=1e-10)
            for k in range(1, n + 1):
                assert regret_at_k(r, table, k) == pytest.approx(
                    brute_regret(perm, rel, k), abs=1e-10)
            checked += 1


class TestExpectedRandomRegret:
    def test_singleton_example(self):
        table = one_target_table({"a": 10.0, "b": 8.0, "c": 2.0})
        assert expected_random_regret(table, "t", 1) == pytest.approx(
            100 * (10 - 20 / 3) / 10, abs=1e-12)

    def test_pair_example(self):
        table = one_target_table({"a": 10.0, "b": 8.0, "c": 2.0})
        assert expected_random_regret(table, "t", 2) == pytest.approx(
            100 * (10 - 28 / 3) / 10, abs=1e-12)

    def test_full_k_is_zero(self):
        table = one_target_table({"a": 10.0, "b": 8.0, "c": 2.0})
        assert expected_random_regret(table, "t", 3) == 0.0

    def test_matches_subset_enumeration(self):
        rng = np.random.default_rng(23)
        for _ in range(40):
            n = int(rng.integers(2, 9))
            scores = rng.uniform(0, 100, size=n)
            table = one_target_table({f"s{i}": float(v)
                                      for i, v in enumerate(scores)})
            for k in range(1, n + 1):
                assert expected_random_regret(table, "t", k) == pytest.approx(
                    brute_expected_regret(scores, k), abs=1e-12)


class TestExpectedRandomNdcg:
    def test_equal_relevance_is_one(self):
        table = one_target_table({"a": 5.0, "b": 5.0, "c": 5.0})
        assert expected_random_ndcg(table, "t", 50, seed=1) == pytest.approx(1.0)

    def test_single_item_is_one(self):
        table = one_target_table({"a": 5.0})
        assert expected_random_ndcg(table, "t", 10, seed=1) == pytest.approx(1.0)

    def test_matches_exact_enumeration(self):
        table = one_target_table({"a": 3.0, "b": 2.0, "c": 1.0})
        exact = brute_expected_ndcg([3.0, 2.0, 1.0])
        got = expected_random_ndcg(table, "t", 6000, seed=7)
        assert got == pytest.approx(exact, abs=0.02)

    def test_deterministic_per_seed(self):
        table = one_target_table({"a": 9.0, "b": 4.0, "c": 1.0, "d": 0.5})
        a = expected_random_ndcg(table, "t", 500, seed=3)
        b = expected_random_ndcg(table, "t", 500, seed=3)
        c = expected_random_ndcg(table, "t", 500, seed=4)
        assert a == b
        assert a != c

    def test_within_three_standard_errors(self):
        from oracles import brute_dcg
        rng = np.random.default_rng(31)
        for _ in range(5):
            n = int(rng.integers(2, 7))
            rel = [float(v) for v in rng.uniform(0, 20, size=n)]
            table = one_target_table({f"s{i}": v for i, v in enumerate(rel)})
            exact = brute_expected_ndcg(rel)
            samples = 4000
            seed = int(rng.integers(1e6))
            got = expected_random_ndcg(table, "t", samples, seed=seed)
            # replay the substreams to recover the per-sample values and the
            # estimator's true standard error
            col = np.array(sorted(rel, reverse=True))
            ideal = brute_dcg(col)
            per_sample = []
            for i in range(samples):
                perm = np.random.default_rng([seed, i]).permutation(n)
                # note: the implementation permutes the unsorted column
                raw = np.array(rel)
                per_sample.append(brute_dcg(raw[perm]) / ideal)
            per_sample = np.array(per_sample)
            assert got == pytest.approx(per_sample.mean(), abs=1e-12)
            se = per_sample.std(ddof=1) / np.sqrt(samples)
            assert abs(got - exact) <= 3 * se + 1e-9


class TestMetricRow:
    def test_rejects_out_of_range_ndcg(self):
        with pytest.raises(DomainError):
            MetricRow(ndcg=0.0, regret={1: 1.0})
        with pytest.raises(DomainError):
            MetricRow(ndcg=1.2, regret={1: 1.0})

    def test_rejects_increasing_regret(self):
        with pytest.raises(DomainError):
            MetricRow(ndcg=0.5, regret={1: 1.0, 3: 2.0})

    def test_rejects_negative_regret(self):
        with pytest.raises(DomainError):
            MetricRow(ndcg=0.5, regret={1: -0.5})

    def test_metric_row_clamps_large_k(self):
        table = one_target_table({"a": 9.0, "b": 5.0, "c": 3.0})
        row = metric_row(ranking_for(["b", "a", "c"]), table)
        # only 3 intermediates: regret@5 falls back to regret@3 = 0
        assert row.regret[5] == 0.0


class TestAggregate:
    @staticmethod
    def metas():
        return {
            "c1": TaskMeta("c1", TaskType.CLASSIFICATION, 10, "acc"),
            "c2": TaskMeta("c2", TaskType.CLASSIFICATION, 10, "acc"),
            "q1": TaskMeta("q1", TaskType.EXTRACTIVE_QA, 10, "em_f1"),
        }

    @staticmethod
    def row(ndcg_val, r1):
        return MetricRow(ndcg=ndcg_val, regret={1: r1, 3: r1, 5: r1})

    def test_single_member_groups_pass_through(self):
        rows = {("m", "c1"): self.row(0.5, 10.0), ("m", "q1"): self.row(0.5, 10.0)}
        rep = aggregate(rows, self.metas())
        assert rep.per_group[("m", TaskType.CLASSIFICATION)] == self.row(0.5, 10.0)
        assert rep.overall["m"] == self.row(0.5, 10.0)

    def test_group_mean_is_arithmetic(self):
        rows = {("m", "c1"): self.row(0.4, 10.0), ("m", "c2"): self.row(0.6, 20.0),
                ("m", "q1"): self.row(0.5, 0.0)}
        rep = aggregate(rows, self.metas())
        grp = rep.per_group[("m", TaskType.CLASSIFICATION)]
        assert grp.ndcg == pytest.approx(0.5)
        assert grp.regret[1] == pytest.approx(15.0)

    def test_absent_group_suppresses_overall(self):
        # a proxy-style method with no QA rows: QA group and overall absent
        rows = {("proxy", "c1"): self.row(0.4, 1.0),
                ("proxy", "c2"): self.row(0.6, 2.0),
                ("full", "c1"): self.row(0.4, 1.0),
                ("full", "c2"): self.row(0.6, 2.0),
                ("full", "q1"): self.row(0.2, 30.0)}
        rep = aggregate(rows, self.metas())
        assert ("proxy", TaskType.EXTRACTIVE_QA) not in rep.per_group
        assert "proxy" not in rep.overall
        assert "full" in rep.overall

    def test_missing_meta_raises(self):
        from itrank.errors import UnknownIdError
        with pytest.raises(UnknownIdError):
            aggregate({("m", "zz"): self.row(0.5, 1.0)}, self.metas())


@settings(max_examples=60, deadline=None)
@given(st.lists(st.floats(min_value=0, max_value=100), min_size=2, max_size=8,
                unique=True),
       st.randoms(use_true_random=False))
def test_regret_non_increasing_in_k(values, rnd):
    rel = {f"s{i}": v for i, v in enumerate(values)}
    table = one_target_table(rel)
    order = list(rel)
    rnd.shuffle(order)
    r = ranking_for(order)
    regrets = [regret_at_k(r, table, k) for k in range(1, len(values) + 1)]
    assert all(a >= b - 1e-12 for a, b in zip(regrets, regrets[1:]))
    assert regrets[-1] == 0.0


@settings(max_examples=40, deadline=None)
@given(st.integers(min_value=2, max_value=6),
       st.floats(min_value=0.5, max_value=50),
       st.randoms(use_true_random=False))
def test_ndcg_invariant_under_equal_relevance_permutation(n, rel, rnd):
    table = one_target_table({f"s{i}": rel for i in range(n)})
    order = [f"s{i}" for i in range(n)]
    rnd.shuffle(order)
    assert ndcg(ranking_for(order), table) == pytest.approx(1.0)
