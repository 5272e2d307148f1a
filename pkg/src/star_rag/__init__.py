"""Training-free retrieval for temporal knowledge graphs.

Offline, a corpus of timestamped facts is compressed into a rule graph whose
edges survive a description-length test; online, questions seed a personalized
random walk over that graph and the surviving neighborhoods are re-ranked by
semantic similarity into a small, time-consistent evidence set for an LLM.
"""

from .config import ConfigError, PipelineConfig
from .embedding import (
    EmbeddingCache,
    HashingProvider,
    HttpProvider,
    ProviderError,
    cosine_similarity,
    embed_batch,
    render_event_text,
    top_k_by_similarity,
)
from .evaluation import (
    EvalReport,
    Question,
    RunRecord,
    echo_gold_pipeline,
    evaluate,
    hit_at_k,
    load_questions,
    normalize_answer,
)
from .generation import (
    AnswerList,
    LlmClientConfig,
    LlmError,
    PromptBundle,
    assemble_prompt,
    call_llm,
    count_tokens,
    parse_answers,
)
from .index_io import Index, load_index, save_index
from .labeling import (
    EntityLabeler,
    FrequentPattern,
    LabelAssignment,
    RelationSet,
    assign_labels,
    build_relation_sets,
    mine_frequent_relation_subsets,
)
from .retrieval import (
    AnchorSet,
    PersonalizationVector,
    PprResult,
    RetrievalResult,
    StarRetriever,
    personalization_vector,
    retrieve,
    run_ppr,
    seed_rules,
    select_anchors,
)
from .rulegraph import (
    CandidateEdge,
    MdlBreakdown,
    MdlScorer,
    RuleGraph,
    RuleGraphBuilder,
    RuleNode,
    build_transition_matrix,
    compute_span_set,
    coverage_cost,
    generate_candidate_edges,
    generate_rule_nodes,
    greedy_select_edges,
    hamming_distance,
    temporal_cost,
)
from .tkg import (
    DatasetStats,
    Event,
    ParseError,
    TemporalKG,
    dump_tkg,
    format_timestamp,
    kg_stats,
    load_tkg,
    parse_event_line,
    parse_timestamp,
)

__version__ = "0.1.0"
