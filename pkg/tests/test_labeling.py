"""Frequent-subset mining against a brute-force oracle; label assignment rules."""

from __future__ import annotations

import math
from itertools import combinations

import pytest
from hypothesis import given, settings, strategies as st

from star_rag.labeling import (
    EntityLabeler,
    InvalidThreshold,
    RelationSet,
    assign_labels,
    build_relation_sets,
    mine_frequent_relation_subsets,
)
from star_rag.tkg import load_tkg


def brute_force_frequent(transactions, min_support_fraction, max_subset_len):
    """Independent oracle: enumerate every subset of every size directly."""
    n = len(transactions)
    if n == 0:
        return {}
    min_count = math.ceil(min_support_fraction * n)
    items = sorted({i for t in transactions for i in t})
    out = {}
    for size in range(1, max_subset_len + 1):
        for combo in combinations(items, size):
            support = sum(1 for t in transactions if set(combo) <= t)
            if support >= min_count:
                out[frozenset(combo)] = support
    return out


def as_relation_sets(transactions):
    return [RelationSet(entity=i, relations=frozenset(t)) for i, t in enumerate(transactions)]


class TestMining:
    def test_documented_example(self):
        patterns = mine_frequent_relation_subsets(
            as_relation_sets([{1, 2}, {1, 2}, {1}]), min_support_fraction=2 / 3
        )
        found = {frozenset(p.relations): p.support_count for p in patterns}
        assert found == {frozenset({1}): 3, frozenset({2}): 2, frozenset({1, 2}): 2}

    def test_type_id_order(self):
        # support desc, then size desc, then lexicographic
        patterns = mine_frequent_relation_subsets(
            as_relation_sets([{1, 2}, {1, 2}, {1}]), min_support_fraction=2 / 3
        )
        ordered = [tuple(sorted(p.relations)) for p in patterns]
        assert ordered == [(1,), (1, 2), (2,)]
        assert [p.type_id for p in patterns] == [0, 1, 2]

    def test_empty_transactions(self):
        assert mine_frequent_relation_subsets([], 0.5) == []

    def test_subset_length_cap(self):
        patterns = mine_frequent_relation_subsets(
            as_relation_sets([{1, 2, 3, 4}] * 5), min_support_fraction=0.5, max_subset_len=3
        )
        assert max(len(p.relations) for p in patterns) == 3

    @pytest.mark.parametrize("bad", [0.0, -0.1, 1.5])
    def test_invalid_threshold(self, bad):
        with pytest.raises(InvalidThreshold):
            mine_frequent_relation_subsets(as_relation_sets([{1}]), bad)

    @given(
        transactions=st.lists(
            st.frozensets(st.integers(min_value=0, max_value=11), max_size=8),
            max_size=20,
        ),
        fraction=st.floats(min_value=0.05, max_value=1.0),
        max_len=st.integers(min_value=1, max_value=4),
    )
    @settings(max_examples=60, deadline=None)
    def test_matches_brute_force(self, transactions, fraction, max_len):
        mined = mine_frequent_relation_subsets(
            as_relation_sets([set(t) for t in transactions]), fraction, max_len
        )
        expected = brute_force_frequent([set(t) for t in transactions], fraction, max_len)
        assert {p.relations: p.support_count for p in mined} == expected

    @given(
        transactions=st.lists(
            st.frozensets(st.integers(min_value=0, max_value=7), max_size=6),
            min_size=1,
            max_size=15,
        ),
        hi=st.floats(min_value=0.3, max_value=1.0),
        lo=st.floats(min_value=0.01, max_value=0.3),
    )
    @settings(max_examples=40, deadline=None)
    def test_lower_threshold_only_adds(self, transactions, hi, lo):
        sets = as_relation_sets([set(t) for t in transactions])
        high = {p.relations for p in mine_frequent_relation_subsets(sets, hi)}
        low = {p.relations for p in mine_frequent_relation_subsets(sets, lo)}
        assert high <= low


class TestRelationSets:
    def test_single_event(self, tmp_path):
        path = tmp_path / "one.txt"
        path.write_text("A\tr1\tB\t2020-01-01\n")
        kg = load_tkg(path)
        sets = build_relation_sets(kg)
        assert all(rs.relations == frozenset({0}) for rs in sets)
        assert len(sets) == 2

    def test_object_role_counts(self, tmp_path):
        path = tmp_path / "obj.txt"
        path.write_text("A\tr1\tB\t2020-01-01\nC\tr2\tB\t2020-01-02\n")
        kg = load_tkg(path)
        sets = {kg.entities[rs.entity]: rs.relations for rs in build_relation_sets(kg)}
        r1, r2 = kg.relations.get("r1"), kg.relations.get("r2")
        assert sets["B"] == frozenset({r1, r2})
        assert sets["C"] == frozenset({r2})


class TestAssignment:
    def test_truncated_to_k_type(self):
        sets = as_relation_sets([{1, 2, 3}] * 10)
        patterns = mine_frequent_relation_subsets(sets, 0.5, max_subset_len=3)
        assert len(patterns) == 7
        assignment = assign_labels(sets, patterns, k_type=3)
        assert all(len(v) == 3 for v in assignment.labels.values())
        assert all(v == (0, 1, 2) for v in assignment.labels.values())

    def test_single_match(self):
        sets = as_relation_sets([{1}, {1}, {2, 9}])
        patterns = mine_frequent_relation_subsets(sets, 0.6)
        assignment = assign_labels(sets, patterns, k_type=3)
        assert assignment.labels[0] == (0,)

    def test_fallback_mints_new_type(self):
        sets = as_relation_sets([{1}, {1}, {9}])
        patterns = mine_frequent_relation_subsets(sets, 0.6)  # only {1} is frequent
        assignment = assign_labels(sets, patterns, k_type=3)
        fallback_id = assignment.labels[2][0]
        assert fallback_id == len(patterns)
        assert assignment.patterns[fallback_id].relations == frozenset({9})

    def test_identical_fallback_sets_share_a_type(self):
        sets = as_relation_sets([{1}, {1}, {9, 8}, {9, 8}])
        patterns = mine_frequent_relation_subsets(sets, 0.5)
        assignment = assign_labels(sets, patterns, k_type=2)
        assert assignment.labels[2] == assignment.labels[3]
        assert assignment.patterns[assignment.labels[2][0]].support_count == 2

    def test_every_entity_labeled(self, toy_kg):
        labeler = EntityLabeler(min_support_fraction=0.9).fit(toy_kg)
        assert set(labeler.labels_) == set(range(len(toy_kg.entities)))
        assert all(len(v) >= 1 for v in labeler.labels_.values())

    def test_deterministic(self, toy_kg):
        a = EntityLabeler().fit(toy_kg).assignment_
        b = EntityLabeler().fit(toy_kg).assignment_
        assert a == b


class TestEstimator:
    def test_get_params_round_trip(self):
        labeler = EntityLabeler(min_support_fraction=0.2, k_type=2)
        params = labeler.get_params()
        assert params["min_support_fraction"] == 0.2
        clone = EntityLabeler(**params)
        assert clone.get_params() == params

    def test_transform_returns_labels(self, toy_kg):
        labeler = EntityLabeler().fit(toy_kg)
        assert labeler.transform([0]) == [labeler.labels_[0]]
