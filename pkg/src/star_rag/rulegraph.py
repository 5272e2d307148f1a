"""Rule graph construction: event categories, span statistics, MDL edge selection.

The graph summarizes events into category nodes, links nodes whose triples differ
in at most one position, and keeps only the links whose fitted description
(binomial choice of explained pairs + exponential code for their day spans) is
cheaper than listing those pairs explicitly under a null code. Selection is
greedy and deterministic.
"""

from __future__ import annotations

import hashlib
import math
import random
from dataclasses import dataclass, field
from math import lgamma
from typing import Iterable, Sequence

import numpy as np
from scipy.sparse import csr_array
from sklearn.base import BaseEstimator

from .labeling import LabelAssignment
from .tkg import Event, TemporalKG

_LN2 = math.log(2.0)

DEFAULT_SPAN_FLOOR = 0.5
DEFAULT_PAIR_BUDGET = 1_000_000


class InvariantViolation(ValueError):
    pass


class DegenerateSpans(ValueError):
    pass


@dataclass(frozen=True, slots=True)
class RuleNode:
    """An event category <subject_type, relation, object_type> with its support."""

    node_id: int
    subject_type: int
    relation: int
    object_type: int
    support: tuple[int, ...]

    @property
    def triple(self) -> tuple[int, int, int]:
        return (self.subject_type, self.relation, self.object_type)


@dataclass(frozen=True, slots=True)
class CandidateEdge:
    """A Hamming-1 node pair with aggregated span statistics.

    ``num_spans`` counts matched event pairs (scaled back up when supports were
    subsampled); ``mean_span`` is the mean of the observed spans after flooring
    zero-day spans. ``num_pairs`` is |supp(u)| * |supp(v)|.
    """

    u: int
    v: int
    num_spans: int
    mean_span: float
    num_pairs: int

    @property
    def lambda_rate(self) -> float:
        return 1.0 / self.mean_span

    @property
    def weight(self) -> float:
        return self.num_spans / (1.0 + self.mean_span)


@dataclass
class MdlBreakdown:
    model_cost: float
    coverage_cost: float
    temporal_cost: float
    unexplained_cost: float = 0.0

    @property
    def total(self) -> float:
        return self.model_cost + self.coverage_cost + self.temporal_cost + self.unexplained_cost


@dataclass(eq=False)
class RuleGraph:
    nodes: list[RuleNode]
    edges: list[CandidateEdge]
    transition: csr_array
    mdl: MdlBreakdown
    total_description_length: float
    selection_log: list[float] = field(default_factory=list)
    _event_nodes: dict[int, tuple[int, ...]] | None = field(default=None, repr=False)

    def nodes_for_event(self, event_id: int) -> tuple[int, ...]:
        if self._event_nodes is None:
            mapping: dict[int, list[int]] = {}
            for node in self.nodes:
                for eid in node.support:
                    mapping.setdefault(eid, []).append(node.node_id)
            self._event_nodes = {eid: tuple(nids) for eid, nids in mapping.items()}
        return self._event_nodes.get(event_id, ())


def hamming_distance(u: Sequence[int], v: Sequence[int]) -> int:
    """Number of differing positions between two (type, relation, type) triples."""
    return (u[0] != v[0]) + (u[1] != v[1]) + (u[2] != v[2])


def generate_rule_nodes(kg: TemporalKG, assignment: LabelAssignment) -> list[RuleNode]:
    """One node per witnessed (subject label, relation, object label) combination.

    Every event lands in the cross product of its endpoint label lists, so it
    belongs to exactly len(labels(s)) * len(labels(o)) nodes.
    """
    index: dict[tuple[int, int, int], int] = {}
    supports: list[list[int]] = []
    for event in kg.events:
        for c_s in assignment.labels[event.subject]:
            for c_o in assignment.labels[event.object]:
                key = (c_s, event.relation, c_o)
                nid = index.get(key)
                if nid is None:
                    nid = len(supports)
                    index[key] = nid
                    supports.append([])
                supports[nid].append(event.event_id)
    return [
        RuleNode(node_id=nid, subject_type=key[0], relation=key[1], object_type=key[2],
                 support=tuple(supports[nid]))
        for key, nid in index.items()
    ]


def _event_hamming(a: Event, b: Event) -> int:
    return (a.subject != b.subject) + (a.relation != b.relation) + (a.object != b.object)


def _spans_between(events_u: list[Event], events_v: list[Event]) -> list[int]:
    """Day spans over cross pairs whose (s, r, o) triples differ in <= 2 positions."""
    if events_u and events_v and events_u[0].relation == events_v[0].relation:
        # Shared relation already caps the triple distance at 2: every cross pair counts.
        tu = np.array([e.time for e in events_u], dtype=np.int64)
        tv = np.array([e.time for e in events_v], dtype=np.int64)
        return np.abs(tu[:, None] - tv[None, :]).ravel().tolist()
    spans: list[int] = []
    by_subject: dict[int, list[Event]] = {}
    by_object: dict[int, list[Event]] = {}
    for e in events_v:
        by_subject.setdefault(e.subject, []).append(e)
        by_object.setdefault(e.object, []).append(e)
    for f in events_u:
        for g in by_subject.get(f.subject, ()):
            spans.append(abs(g.time - f.time))
        for g in by_object.get(f.object, ()):
            if g.subject != f.subject:  # already counted via the subject index
                spans.append(abs(g.time - f.time))
    return spans


def _pair_rng(seed: int, u: int, v: int) -> random.Random:
    digest = hashlib.sha256(f"{seed}:{u}:{v}".encode()).digest()
    return random.Random(int.from_bytes(digest[:8], "big"))


def _sampled_supports(
    events_u: list[Event], events_v: list[Event], pair_budget: int | None, rng: random.Random
) -> tuple[list[Event], list[Event]]:
    if pair_budget is None or len(events_u) * len(events_v) <= pair_budget:
        return events_u, events_v
    scale = math.sqrt(pair_budget / (len(events_u) * len(events_v)))
    m_u = max(1, int(len(events_u) * scale))
    m_v = max(1, int(len(events_v) * scale))
    return rng.sample(events_u, m_u), rng.sample(events_v, m_v)


def compute_span_set(
    u: RuleNode,
    v: RuleNode,
    kg: TemporalKG,
    pair_budget: int | None = None,
    seed: int = 42,
) -> list[int]:
    """Multiset of |t' - t| day spans between similar event pairs across two nodes.

    With a pair budget, oversized supports are deterministically subsampled and
    the returned multiset covers only the sampled pairs.
    """
    events_u = [kg.events[eid] for eid in u.support]
    events_v = [kg.events[eid] for eid in v.support]
    events_u, events_v = _sampled_supports(events_u, events_v, pair_budget, _pair_rng(seed, u.node_id, v.node_id))
    return _spans_between(events_u, events_v)


def generate_candidate_edges(
    nodes: Sequence[RuleNode],
    kg: TemporalKG,
    span_floor: float = DEFAULT_SPAN_FLOOR,
    pair_budget: int | None = DEFAULT_PAIR_BUDGET,
    seed: int = 42,
) -> list[CandidateEdge]:
    """All unordered Hamming-1 node pairs that witness at least one span."""
    buckets: dict[tuple[str, int, int], list[RuleNode]] = {}
    for node in nodes:
        s, r, o = node.triple
        buckets.setdefault(("ro", r, o), []).append(node)
        buckets.setdefault(("so", s, o), []).append(node)
        buckets.setdefault(("sr", s, r), []).append(node)

    events_by_node = {n.node_id: [kg.events[eid] for eid in n.support] for n in nodes}
    edges: list[CandidateEdge] = []
    for bucket in buckets.values():
        bucket.sort(key=lambda n: n.node_id)
        for i, a in enumerate(bucket):
            for b in bucket[i + 1 :]:
                rng = _pair_rng(seed, a.node_id, b.node_id)
                ev_a, ev_b = _sampled_supports(
                    events_by_node[a.node_id], events_by_node[b.node_id], pair_budget, rng
                )
                spans = _spans_between(ev_a, ev_b)
                if not spans:
                    continue
                num_pairs = len(a.support) * len(b.support)
                scale = num_pairs / (len(ev_a) * len(ev_b))
                num_spans = min(num_pairs, round(len(spans) * scale))
                floored = [max(float(d), span_floor) for d in spans]
                mean_span = math.fsum(floored) / len(floored)
                edges.append(
                    CandidateEdge(u=a.node_id, v=b.node_id, num_spans=num_spans,
                                  mean_span=mean_span, num_pairs=num_pairs)
                )
    edges.sort(key=lambda e: (e.u, e.v))
    return edges


def _log2_binomial(n: int, k: int) -> float:
    if k == 0 or k == n:
        return 0.0
    return (lgamma(n + 1) - lgamma(k + 1) - lgamma(n - k + 1)) / _LN2


def coverage_cost(support_u: int, support_v: int, num_spans: int) -> float:
    """Bits to identify which of the |supp(u)| * |supp(v)| pairs an edge explains."""
    pairs = support_u * support_v
    if num_spans < 0 or num_spans > pairs:
        raise InvariantViolation(
            f"num_spans={num_spans} exceeds the {pairs} available support pairs"
        )
    return _log2_binomial(pairs, num_spans)


def temporal_cost(spans: Iterable[float], span_floor: float = DEFAULT_SPAN_FLOOR) -> float:
    """Exponential-NLL code length (nats) of a span multiset at its fitted rate.

    Zero-day spans are floored at ``span_floor`` so same-day co-occurrence stays
    finite instead of being discarded.
    """
    values = [max(float(d), span_floor) for d in spans]
    if not values:
        raise DegenerateSpans("span multiset is empty")
    mean = math.fsum(values) / len(values)
    if mean <= 0.0:
        raise DegenerateSpans("mean span is zero; raise span_floor above 0")
    return len(values) * (1.0 + math.log(mean))


def _temporal_cost_stats(num_spans: int, mean_span: float) -> float:
    return num_spans * (1.0 + math.log(mean_span))


@dataclass(frozen=True)
class MdlScorer:
    """Code-length bookkeeping shared by greedy selection and post-hoc audits.

    ``subject_code``/``relation_code``/``object_code`` are -log2 empirical
    probabilities estimated from the corpus; ``num_labels`` (the label alphabet),
    ``num_relations`` and ``num_candidates`` size the two constant choice terms.
    """

    subject_code: dict[int, float]
    relation_code: dict[int, float]
    object_code: dict[int, float]
    num_labels: int
    num_relations: int
    num_candidates: int
    day_range: int

    @classmethod
    def from_corpus(cls, kg: TemporalKG, assignment: LabelAssignment, num_candidates: int) -> "MdlScorer":
        subj_counts: dict[int, int] = {}
        obj_counts: dict[int, int] = {}
        rel_counts: dict[int, int] = {}
        for event in kg.events:
            rel_counts[event.relation] = rel_counts.get(event.relation, 0) + 1
            for c in assignment.labels[event.subject]:
                subj_counts[c] = subj_counts.get(c, 0) + 1
            for c in assignment.labels[event.object]:
                obj_counts[c] = obj_counts.get(c, 0) + 1

        def codes(counts: dict[int, int]) -> dict[int, float]:
            total = sum(counts.values())
            return {k: -math.log2(c / total) for k, c in counts.items()}

        return cls(
            subject_code=codes(subj_counts),
            relation_code=codes(rel_counts),
            object_code=codes(obj_counts),
            num_labels=assignment.num_types,
            num_relations=len(kg.relations),
            num_candidates=num_candidates,
            day_range=kg.day_range(),
        )

    def constant_cost(self) -> float:
        cost = 0.0
        if self.num_labels > 0 and self.num_relations > 0:
            cost += math.log2(self.num_labels**2 * self.num_relations)
        if self.num_candidates > 0:
            cost += math.log2(2 * self.num_candidates)
        return cost

    def node_cost(self, node: RuleNode) -> float:
        return (
            self.subject_code[node.subject_type]
            + self.relation_code[node.relation]
            + self.object_code[node.object_type]
        )

    def edge_fit_cost(self, edge: CandidateEdge) -> float:
        """Coverage bits plus temporal nats for an edge inside the model."""
        cov = _log2_binomial(edge.num_pairs, edge.num_spans)
        return cov + _temporal_cost_stats(edge.num_spans, edge.mean_span)

    def unexplained_cost(self, edge: CandidateEdge) -> float:
        """Null encoding of the same pair associations without the rule edge.

        Each linked pair is listed by an explicit pointer into the support cross
        product, and its span is coded uniformly over the corpus day range.
        """
        pointer_bits = edge.num_spans * math.log2(edge.num_pairs) if edge.num_pairs > 1 else 0.0
        span_nats = edge.num_spans * math.log(self.day_range + 1)
        return pointer_bits + span_nats

    def model_cost(
        self, nodes_in_model: Iterable[RuleNode], edges_in_model: Sequence[CandidateEdge]
    ) -> float:
        """Constant choice terms plus prefix codes for the selected nodes and edges."""
        cost = self.constant_cost()
        cost += sum(self.node_cost(n) for n in nodes_in_model)
        if edges_in_model:
            degrees: dict[int, int] = {}
            for e in edges_in_model:
                degrees[e.u] = degrees.get(e.u, 0) + 1
                degrees[e.v] = degrees.get(e.v, 0) + 1
            two_e = 2 * len(edges_in_model)
            for e in edges_in_model:
                cost += -math.log2(degrees[e.u] / two_e) - math.log2(degrees[e.v] / two_e)
        return cost


class _SelectionState:
    """Incremental greedy state with O(1) acceptance deltas.

    The degree-dependent edge code sums are tracked as
    2E*log2(2E) - sum_v deg(v)*log2(deg(v)), which equals the per-edge endpoint
    code lengths summed over the selected set.
    """

    def __init__(self, scorer: MdlScorer, nodes: Sequence[RuleNode], candidates: Sequence[CandidateEdge]):
        self.scorer = scorer
        self.nodes = {n.node_id: n for n in nodes}
        self.fit_cost = {id(e): scorer.edge_fit_cost(e) for e in candidates}
        self.null_cost = {id(e): scorer.unexplained_cost(e) for e in candidates}
        self.degrees: dict[int, int] = {}
        self.num_edges = 0
        self.deg_entropy = 0.0  # sum over nodes of deg*log2(deg)
        self.node_cost_sum = 0.0
        self.total = scorer.constant_cost() + math.fsum(self.null_cost.values())

    @staticmethod
    def _dlog(d: int) -> float:
        return d * math.log2(d) if d > 0 else 0.0

    @staticmethod
    def _edge_choice_term(num_edges: int) -> float:
        return 2 * num_edges * math.log2(2 * num_edges) if num_edges > 0 else 0.0

    def delta(self, edge: CandidateEdge) -> float:
        """Change in total description length if ``edge`` (and its endpoints) join the model."""
        du = self.degrees.get(edge.u, 0)
        dv = self.degrees.get(edge.v, 0)
        node_add = 0.0
        if du == 0:
            node_add += self.scorer.node_cost(self.nodes[edge.u])
        if dv == 0:
            node_add += self.scorer.node_cost(self.nodes[edge.v])
        entropy_new = self.deg_entropy - self._dlog(du) - self._dlog(dv) \
            + self._dlog(du + 1) + self._dlog(dv + 1)
        edge_term_delta = (
            self._edge_choice_term(self.num_edges + 1)
            - entropy_new
            - (self._edge_choice_term(self.num_edges) - self.deg_entropy)
        )
        return node_add + edge_term_delta + self.fit_cost[id(edge)] - self.null_cost[id(edge)]

    def would_accept(self, edge: CandidateEdge) -> bool:
        return self.total + self.delta(edge) < self.total

    def accept(self, edge: CandidateEdge) -> None:
        self.total += self.delta(edge)
        du = self.degrees.get(edge.u, 0)
        dv = self.degrees.get(edge.v, 0)
        if du == 0:
            self.node_cost_sum += self.scorer.node_cost(self.nodes[edge.u])
        if dv == 0:
            self.node_cost_sum += self.scorer.node_cost(self.nodes[edge.v])
        self.deg_entropy += -self._dlog(du) - self._dlog(dv) + self._dlog(du + 1) + self._dlog(dv + 1)
        self.degrees[edge.u] = du + 1
        self.degrees[edge.v] = dv + 1
        self.num_edges += 1

    def model_cost(self) -> float:
        return (
            self.scorer.constant_cost()
            + self.node_cost_sum
            + self._edge_choice_term(self.num_edges)
            - self.deg_entropy
        )


def candidate_order(candidates: Sequence[CandidateEdge]) -> list[CandidateEdge]:
    """Deterministic examination order: most evidence first, then tightest spans."""
    return sorted(candidates, key=lambda e: (-e.num_spans, e.mean_span, (e.u, e.v)))


def greedy_select_edges(
    candidates: Sequence[CandidateEdge],
    nodes: Sequence[RuleNode],
    scorer: MdlScorer,
) -> RuleGraph:
    """Repeatedly scan candidates, keeping any edge that strictly lowers total cost.

    Scanning stops after a full pass accepts nothing; the totals after each
    acceptance are logged on the returned graph.
    """
    state = _SelectionState(scorer, nodes, candidates)
    order = candidate_order(candidates)
    selected: list[CandidateEdge] = []
    selected_ids: set[int] = set()
    log = [state.total]

    changed = True
    while changed:
        changed = False
        for edge in order:
            if id(edge) in selected_ids:
                continue
            if state.would_accept(edge):
                state.accept(edge)
                selected.append(edge)
                selected_ids.add(id(edge))
                log.append(state.total)
                changed = True

    selected.sort(key=lambda e: (e.u, e.v))
    coverage = math.fsum(_log2_binomial(e.num_pairs, e.num_spans) for e in selected)
    temporal = math.fsum(_temporal_cost_stats(e.num_spans, e.mean_span) for e in selected)
    unexplained = math.fsum(
        scorer.unexplained_cost(e) for e in candidates if id(e) not in selected_ids
    )
    breakdown = MdlBreakdown(
        model_cost=state.model_cost(),
        coverage_cost=coverage,
        temporal_cost=temporal,
        unexplained_cost=unexplained,
    )
    return RuleGraph(
        nodes=list(nodes),
        edges=selected,
        transition=build_transition_matrix(nodes, selected),
        mdl=breakdown,
        total_description_length=state.total,
        selection_log=log,
    )


def rejected_edge_deltas(
    graph: RuleGraph, candidates: Sequence[CandidateEdge], scorer: MdlScorer
) -> list[tuple[CandidateEdge, float]]:
    """Re-evaluate every rejected candidate against the final model."""
    state = _SelectionState(scorer, graph.nodes, candidates)
    selected_keys = {(e.u, e.v) for e in graph.edges}
    for edge in candidates:
        if (edge.u, edge.v) in selected_keys:
            state.accept(edge)
    return [
        (edge, state.delta(edge)) for edge in candidates if (edge.u, edge.v) not in selected_keys
    ]


def build_transition_matrix(nodes: Sequence[RuleNode], edges: Sequence[CandidateEdge]) -> csr_array:
    """Row-stochastic transition matrix over node ids.

    Edge weight |spans| / (1 + mean span) is applied symmetrically; nodes with no
    selected edges get a unit self-loop.
    """
    n = len(nodes)
    rows: list[int] = []
    cols: list[int] = []
    data: list[float] = []
    row_sums = np.zeros(n)
    for e in edges:
        w = e.weight
        rows.extend((e.u, e.v))
        cols.extend((e.v, e.u))
        data.extend((w, w))
        row_sums[e.u] += w
        row_sums[e.v] += w
    for i in range(n):
        if row_sums[i] == 0.0:
            rows.append(i)
            cols.append(i)
            data.append(1.0)
            row_sums[i] = 1.0
    values = np.array(data) / row_sums[np.array(rows, dtype=np.int64)]
    matrix = csr_array((values, (rows, cols)), shape=(n, n))
    matrix.sum_duplicates()
    return matrix


class RuleGraphBuilder(BaseEstimator):
    """Builds the rule graph for a labeled corpus.

    ``fit`` expects the corpus and a LabelAssignment covering every entity, and
    exposes ``nodes_``, ``candidates_``, ``scorer_`` and the selected ``graph_``.
    """

    def __init__(
        self,
        span_floor: float = DEFAULT_SPAN_FLOOR,
        pair_budget: int | None = DEFAULT_PAIR_BUDGET,
        seed: int = 42,
    ):
        self.span_floor = span_floor
        self.pair_budget = pair_budget
        self.seed = seed

    def fit(self, kg: TemporalKG, assignment: LabelAssignment):
        self.nodes_ = generate_rule_nodes(kg, assignment)
        self.candidates_ = generate_candidate_edges(
            self.nodes_, kg, span_floor=self.span_floor,
            pair_budget=self.pair_budget, seed=self.seed,
        )
        self.scorer_ = MdlScorer.from_corpus(kg, assignment, len(self.candidates_))
        self.graph_ = greedy_select_edges(self.candidates_, self.nodes_, self.scorer_)
        return self
