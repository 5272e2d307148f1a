"""Structural entity labels mined from per-entity relation sets."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

from sklearn.base import BaseEstimator

from .tkg import TemporalKG


class InvalidThreshold(ValueError):
    pass


@dataclass(frozen=True, slots=True)
class RelationSet:
    """All relations an entity participates in, as subject or object."""

    entity: int
    relations: frozenset[int]


@dataclass(frozen=True, slots=True)
class FrequentPattern:
    relations: frozenset[int]
    support_count: int
    type_id: int


@dataclass(frozen=True)
class LabelAssignment:
    """Per-entity ordered label lists plus the pattern table indexed by type_id.

    ``patterns`` holds the mined patterns first, then any fallback patterns minted
    for entities that matched nothing; list position equals type_id.
    """

    labels: dict[int, tuple[int, ...]]
    patterns: tuple[FrequentPattern, ...]

    @property
    def num_types(self) -> int:
        return len(self.patterns)


def build_relation_sets(kg: TemporalKG) -> list[RelationSet]:
    """One RelationSet per entity, in entity-id order."""
    relations: list[set[int]] = [set() for _ in range(len(kg.entities))]
    for event in kg.events:
        relations[event.subject].add(event.relation)
        relations[event.object].add(event.relation)
    return [RelationSet(entity=i, relations=frozenset(r)) for i, r in enumerate(relations)]


def _pattern_sort_key(itemset: tuple[int, ...], support: int):
    # Preferred patterns first: common, then specific, then a stable lexicographic tie-break.
    return (-support, -len(itemset), itemset)


def mine_frequent_relation_subsets(
    relation_sets: Sequence[RelationSet],
    min_support_fraction: float = 0.01,
    max_subset_len: int = 3,
) -> list[FrequentPattern]:
    """Level-wise frequent-subset mining over per-entity relation sets.

    Support of a subset is the number of entities whose relation set contains it.
    The result is exactly what brute-force enumeration would produce; candidate
    pruning only skips subsets that cannot reach the threshold.
    """
    if not 0 < min_support_fraction <= 1:
        raise InvalidThreshold(f"min_support_fraction must be in (0, 1], got {min_support_fraction}")
    if max_subset_len < 1:
        raise InvalidThreshold(f"max_subset_len must be >= 1, got {max_subset_len}")
    n = len(relation_sets)
    if n == 0:
        return []
    min_count = math.ceil(min_support_fraction * n)

    tids_by_item: dict[int, set[int]] = {}
    for idx, rs in enumerate(relation_sets):
        for item in rs.relations:
            tids_by_item.setdefault(item, set()).add(idx)

    frequent: dict[tuple[int, ...], set[int]] = {}
    current = {
        (item,): tids
        for item, tids in sorted(tids_by_item.items())
        if len(tids) >= min_count
    }
    frequent.update(current)

    size = 1
    while size < max_subset_len and current:
        keys = sorted(current)
        nxt: dict[tuple[int, ...], set[int]] = {}
        for i, a in enumerate(keys):
            for b in keys[i + 1 :]:
                if a[:-1] != b[:-1]:
                    break
                candidate = a + (b[-1],)
                # Prune: every size-k subset of the candidate must itself be frequent.
                if any(
                    candidate[:j] + candidate[j + 1 :] not in current
                    for j in range(len(candidate))
                ):
                    continue
                tids = current[a] & current[b]
                if len(tids) >= min_count:
                    nxt[candidate] = tids
        frequent.update(nxt)
        current = nxt
        size += 1

    ordered = sorted(frequent.items(), key=lambda kv: _pattern_sort_key(kv[0], len(kv[1])))
    return [
        FrequentPattern(relations=frozenset(items), support_count=len(tids), type_id=i)
        for i, (items, tids) in enumerate(ordered)
    ]


def assign_labels(
    relation_sets: Sequence[RelationSet],
    patterns: Sequence[FrequentPattern],
    k_type: int = 3,
) -> LabelAssignment:
    """Label each entity with the first ``k_type`` matching patterns, in pattern order.

    An entity matching no mined pattern gets a fresh singleton pattern holding its
    full relation set; entities with identical unmatched relation sets share one.
    """
    if k_type < 1:
        raise ValueError(f"k_type must be >= 1, got {k_type}")
    labels: dict[int, tuple[int, ...]] = {}
    fallback_ids: dict[frozenset[int], int] = {}
    fallback_counts: dict[int, int] = {}
    next_id = len(patterns)

    for rs in relation_sets:
        matched: list[int] = []
        for pattern in patterns:
            if pattern.relations <= rs.relations:
                matched.append(pattern.type_id)
                if len(matched) == k_type:
                    break
        if not matched:
            tid = fallback_ids.get(rs.relations)
            if tid is None:
                tid = next_id
                next_id += 1
                fallback_ids[rs.relations] = tid
            fallback_counts[tid] = fallback_counts.get(tid, 0) + 1
            matched = [tid]
        labels[rs.entity] = tuple(matched)

    all_patterns = list(patterns)
    for relations, tid in sorted(fallback_ids.items(), key=lambda kv: kv[1]):
        all_patterns.append(
            FrequentPattern(relations=relations, support_count=fallback_counts[tid], type_id=tid)
        )
    return LabelAssignment(labels=labels, patterns=tuple(all_patterns))


class EntityLabeler(BaseEstimator):
    """Mines frequent relation subsets from a corpus and labels every entity.

    Parameters
    ----------
    min_support_fraction : fraction of entities a subset must cover to become a pattern.
    max_subset_len : longest relation subset considered.
    k_type : maximum number of labels kept per entity.
    """

    def __init__(self, min_support_fraction: float = 0.01, max_subset_len: int = 3, k_type: int = 3):
        self.min_support_fraction = min_support_fraction
        self.max_subset_len = max_subset_len
        self.k_type = k_type

    def fit(self, kg: TemporalKG, y=None):
        self.relation_sets_ = build_relation_sets(kg)
        self.mined_patterns_ = mine_frequent_relation_subsets(
            self.relation_sets_, self.min_support_fraction, self.max_subset_len
        )
        self.assignment_ = assign_labels(self.relation_sets_, self.mined_patterns_, self.k_type)
        self.labels_ = self.assignment_.labels
        return self

    def transform(self, entity_ids: Iterable[int]) -> list[tuple[int, ...]]:
        return [self.labels_[e] for e in entity_ids]
