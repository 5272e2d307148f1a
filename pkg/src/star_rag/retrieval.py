"""Query-time retrieval: anchors, seeded restart distribution, PageRank, re-ranking."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Any, Sequence

import numpy as np
from scipy.sparse import csr_array
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .embedding import (
    EmbeddingCache,
    EmbeddingProvider,
    HashingProvider,
    embed_batch,
    render_event_text,
    top_k_by_similarity,
)
from .labeling import EntityLabeler
from .rulegraph import RuleGraph, RuleGraphBuilder
from .tkg import TemporalKG


class EmptyCorpus(ValueError):
    pass


class NoSeed(LookupError):
    pass


class InvalidParameter(ValueError):
    pass


class NonConvergence(RuntimeError):
    pass


@dataclass(frozen=True)
class AnchorSet:
    """Events most similar to the query, rank 1 first."""

    anchors: tuple[tuple[int, float], ...]

    def event_ids(self) -> tuple[int, ...]:
        return tuple(eid for eid, _ in self.anchors)


@dataclass(frozen=True)
class PersonalizationVector:
    """Restart distribution over seeded rule nodes, with its intermediates kept.

    ``coverage``/``rank_mass`` are the raw per-seed signals, their ``*_norm``
    variants are the normalized versions, and ``blended`` is the pre-smoothing mix.
    """

    entries: dict[int, float]
    seed_set: tuple[int, ...]
    theta: float
    beta: float
    tau: float
    coverage: dict[int, float]
    coverage_norm: dict[int, float]
    rank_mass: dict[int, float]
    rank_mass_norm: dict[int, float]
    blended: dict[int, float]

    def to_array(self, num_nodes: int) -> np.ndarray:
        gamma = np.zeros(num_nodes)
        for node_id, value in self.entries.items():
            gamma[node_id] = value
        return gamma


@dataclass(frozen=True)
class PprResult:
    scores: np.ndarray
    iterations: int
    residual: float
    alpha: float
    epsilon: float


@dataclass(frozen=True)
class RetrievalResult:
    events: tuple[tuple[int, float], ...]
    top_rules: tuple[int, ...]
    anchors: AnchorSet
    fallback: bool = False
    trace: dict[str, Any] | None = None


def select_anchors(
    query_vec: np.ndarray, kg: TemporalKG, vectors: np.ndarray, k1: int
) -> AnchorSet:
    """Top-k1 events by cosine similarity over the whole corpus."""
    if kg.num_events == 0:
        raise EmptyCorpus("cannot select anchors from an empty corpus")
    ranked = top_k_by_similarity(query_vec, range(kg.num_events), vectors, k1)
    return AnchorSet(anchors=tuple(ranked))


def seed_rules(anchors: AnchorSet, graph: RuleGraph) -> tuple[int, ...]:
    """Rule nodes whose support intersects the anchor events."""
    seeds: set[int] = set()
    for eid in anchors.event_ids():
        seeds.update(graph.nodes_for_event(eid))
    if not seeds:
        raise NoSeed("no rule node contains any anchor event")
    return tuple(sorted(seeds))


def personalization_vector(
    anchors: AnchorSet,
    seed_set: Sequence[int],
    graph: RuleGraph,
    theta: float = 0.6,
    beta: float = 0.7,
    tau: float | None = None,
) -> PersonalizationVector:
    """Blend support coverage with geometrically discounted anchor ranks.

    Each seed's mass mixes its normalized support size (weight 1-theta) with the
    normalized sum of beta^(rank-1) over the anchors it contains (weight theta),
    then gets Dirichlet smoothing tau before the final normalization.
    """
    seeds = tuple(sorted(seed_set))
    if not seeds:
        raise NoSeed("seed set is empty")
    if not 0.0 <= theta <= 1.0:
        raise InvalidParameter(f"theta must be in [0, 1], got {theta}")
    if not 0.0 < beta < 1.0:
        raise InvalidParameter(f"beta must be in (0, 1), got {beta}")
    if tau is None:
        tau = 1.0 / len(seeds)
    if tau <= 0.0:
        raise InvalidParameter(f"tau must be > 0, got {tau}")

    supports = {nid: frozenset(graph.nodes[nid].support) for nid in seeds}
    coverage = {nid: float(len(supports[nid])) for nid in seeds}
    coverage_total = math.fsum(coverage.values())
    coverage_norm = {nid: c / coverage_total for nid, c in coverage.items()}

    rank_mass = {
        nid: math.fsum(
            beta ** (rank - 1)
            for rank, (eid, _) in enumerate(anchors.anchors, start=1)
            if eid in supports[nid]
        )
        for nid in seeds
    }
    rank_total = math.fsum(rank_mass.values())
    rank_mass_norm = {nid: p / rank_total for nid, p in rank_mass.items()}

    blended = {
        nid: (1.0 - theta) * coverage_norm[nid] + theta * rank_mass_norm[nid] for nid in seeds
    }
    denominator = math.fsum(blended[nid] + tau for nid in seeds)
    entries = {nid: (blended[nid] + tau) / denominator for nid in seeds}
    return PersonalizationVector(
        entries=entries,
        seed_set=seeds,
        theta=theta,
        beta=beta,
        tau=tau,
        coverage=coverage,
        coverage_norm=coverage_norm,
        rank_mass=rank_mass,
        rank_mass_norm=rank_mass_norm,
        blended=blended,
    )


def run_ppr(
    transition: csr_array | RuleGraph,
    gamma: np.ndarray,
    alpha: float = 0.2,
    epsilon: float = 1e-5,
    max_iterations: int = 1000,
) -> PprResult:
    """Power iteration for pi = alpha*gamma + (1-alpha)*pi*A, started at gamma.

    Stops once the L1 step size drops to epsilon. Divergence is impossible for a
    row-stochastic matrix, but a hand-edited index could break stochasticity, so
    the iteration cap raises instead of spinning.
    """
    if isinstance(transition, RuleGraph):
        transition = transition.transition
    if not 0.0 < alpha < 1.0:
        raise InvalidParameter(f"alpha must be in (0, 1), got {alpha}")
    if epsilon <= 0.0:
        raise InvalidParameter(f"epsilon must be > 0, got {epsilon}")
    gamma = np.asarray(gamma, dtype=np.float64)
    if abs(gamma.sum() - 1.0) > 1e-6:
        raise InvalidParameter("gamma must sum to 1")

    transposed = transition.T.tocsr()
    pi = gamma.copy()
    for iteration in range(1, max_iterations + 1):
        nxt = alpha * gamma + (1.0 - alpha) * transposed.dot(pi)
        residual = float(np.abs(nxt - pi).sum())
        pi = nxt
        if residual <= epsilon:
            return PprResult(
                scores=pi, iterations=iteration, residual=residual,
                alpha=alpha, epsilon=epsilon,
            )
    raise NonConvergence(f"no convergence within {max_iterations} iterations")


def top_rules_by_score(scores: np.ndarray, k2: int) -> tuple[int, ...]:
    ids = np.arange(len(scores))
    order = np.lexsort((ids, -scores))[:k2]
    return tuple(int(i) for i in order)


def retrieve(
    question: str,
    kg: TemporalKG,
    graph: RuleGraph,
    vectors: np.ndarray,
    provider: EmbeddingProvider,
    k1: int = 10,
    k2: int = 20,
    alpha: float = 0.2,
    epsilon: float = 1e-5,
    theta: float = 0.6,
    beta: float = 0.7,
    tau: float | None = None,
    max_iterations: int = 1000,
    cache: EmbeddingCache | None = None,
    with_trace: bool = False,
) -> RetrievalResult:
    """Full query path: anchors -> seeds -> gamma -> PageRank -> candidate re-rank.

    When no rule node contains an anchor (possible only against a mismatched
    index), degrades to plain semantic search over the anchors, flagged
    ``fallback=True``.
    """
    if kg.num_events == 0:
        raise EmptyCorpus("index contains no events")
    if k1 < 1 or k2 < 1:
        raise InvalidParameter("k1 and k2 must be >= 1")
    query_vec = embed_batch(provider, [question], cache=cache)[0]
    anchors = select_anchors(query_vec, kg, vectors, k1)
    try:
        seeds = seed_rules(anchors, graph)
    except NoSeed:
        trace = {"anchors": [list(a) for a in anchors.anchors], "fallback": True} if with_trace else None
        return RetrievalResult(
            events=anchors.anchors, top_rules=(), anchors=anchors, fallback=True, trace=trace
        )
    pv = personalization_vector(anchors, seeds, graph, theta=theta, beta=beta, tau=tau)
    ppr = run_ppr(graph.transition, pv.to_array(len(graph.nodes)), alpha, epsilon, max_iterations)
    top_rules = top_rules_by_score(ppr.scores, k2)

    seen: set[int] = set()
    candidates: list[int] = []
    for node_id in top_rules:
        for eid in graph.nodes[node_id].support:
            if eid not in seen:
                seen.add(eid)
                candidates.append(eid)
    events = tuple(top_k_by_similarity(query_vec, candidates, vectors, k1))

    trace = None
    if with_trace:
        pi_order = top_rules_by_score(ppr.scores, min(50, len(graph.nodes)))
        trace = {
            "anchors": [[eid, score] for eid, score in anchors.anchors],
            "gamma": {str(nid): value for nid, value in sorted(pv.entries.items())},
            "pi_top50": [[int(nid), float(ppr.scores[nid])] for nid in pi_order],
            "top_rules": [int(n) for n in top_rules],
            "events": [[eid, score] for eid, score in events],
            "iterations": ppr.iterations,
            "residual": ppr.residual,
            "fallback": False,
        }
    return RetrievalResult(
        events=events, top_rules=top_rules, anchors=anchors, fallback=False, trace=trace
    )


class StarRetriever(BaseEstimator):
    """End-to-end retriever: fit on a corpus, then answer questions with evidence.

    ``fit`` mines entity labels, builds the rule graph, and embeds every event;
    ``retrieve`` runs the seeded-PageRank query path. Fitted state lives in
    ``kg_``, ``labeler_``, ``builder_``, ``graph_`` and ``event_vectors_``.
    """

    def __init__(
        self,
        k1: int = 10,
        k2: int = 20,
        alpha: float = 0.2,
        epsilon: float = 1e-5,
        theta: float = 0.6,
        beta: float = 0.7,
        min_support_fraction: float = 0.01,
        max_subset_len: int = 3,
        k_type: int = 3,
        span_floor: float = 0.5,
        pair_budget: int | None = 1_000_000,
        seed: int = 42,
        provider: EmbeddingProvider | None = None,
        cache_dir: str | None = None,
    ):
        self.k1 = k1
        self.k2 = k2
        self.alpha = alpha
        self.epsilon = epsilon
        self.theta = theta
        self.beta = beta
        self.min_support_fraction = min_support_fraction
        self.max_subset_len = max_subset_len
        self.k_type = k_type
        self.span_floor = span_floor
        self.pair_budget = pair_budget
        self.seed = seed
        self.provider = provider
        self.cache_dir = cache_dir

    def _validate_params(self) -> None:
        if not 0.0 < self.alpha < 1.0:
            raise InvalidParameter(f"alpha must be in (0, 1), got {self.alpha}")
        if self.epsilon <= 0.0:
            raise InvalidParameter(f"epsilon must be > 0, got {self.epsilon}")
        if not 0.0 <= self.theta <= 1.0:
            raise InvalidParameter(f"theta must be in [0, 1], got {self.theta}")
        if not 0.0 < self.beta < 1.0:
            raise InvalidParameter(f"beta must be in (0, 1), got {self.beta}")
        if self.k1 < 1 or self.k2 < 1:
            raise InvalidParameter("k1 and k2 must be >= 1")

    def _setup_embedding(self) -> None:
        self.provider_ = self.provider or HashingProvider()
        self.cache_ = EmbeddingCache(self.cache_dir) if self.cache_dir else None

    def fit(self, kg: TemporalKG, y=None):
        self._validate_params()
        if kg.num_events == 0:
            raise EmptyCorpus("cannot fit on an empty corpus")
        self.kg_ = kg
        self.labeler_ = EntityLabeler(
            min_support_fraction=self.min_support_fraction,
            max_subset_len=self.max_subset_len,
            k_type=self.k_type,
        ).fit(kg)
        self.builder_ = RuleGraphBuilder(
            span_floor=self.span_floor, pair_budget=self.pair_budget, seed=self.seed
        ).fit(kg, self.labeler_.assignment_)
        self.graph_ = self.builder_.graph_
        self._setup_embedding()
        self._embed_corpus()
        return self

    @classmethod
    def from_index(cls, kg: TemporalKG, graph: RuleGraph, **params) -> "StarRetriever":
        """Rehydrate a fitted retriever from a persisted index."""
        retriever = cls(**params)
        retriever._validate_params()
        retriever.kg_ = kg
        retriever.graph_ = graph
        retriever._setup_embedding()
        retriever._embed_corpus()
        return retriever

    def _embed_corpus(self) -> None:
        texts = [render_event_text(self.kg_, event) for event in self.kg_.events]
        self.event_vectors_ = embed_batch(self.provider_, texts, cache=self.cache_)

    def retrieve(self, question: str, with_trace: bool = False) -> RetrievalResult:
        check_is_fitted(self, "kg_")
        return retrieve(
            question,
            self.kg_,
            self.graph_,
            self.event_vectors_,
            self.provider_,
            k1=self.k1,
            k2=self.k2,
            alpha=self.alpha,
            epsilon=self.epsilon,
            theta=self.theta,
            beta=self.beta,
            cache=self.cache_,
            with_trace=with_trace,
        )

    def predict(self, questions: Sequence[str]) -> list[list[int]]:
        """Ranked evidence event ids for each question."""
        return [[eid for eid, _ in self.retrieve(q).events] for q in questions]
