"""Command-line entry point: build-index, query, eval, stats."""

from __future__ import annotations

import argparse
import json
import os
import sys
import time

from .config import ConfigError, PipelineConfig, parse_config_file
from .embedding import HashingProvider, HttpProvider, ProviderError
from .evaluation import (
    PipelineResult,
    Question,
    echo_gold_pipeline,
    evaluate,
    load_questions,
    write_records,
    write_report,
)
from .generation import LlmClientConfig, LlmError, assemble_prompt, call_llm, count_tokens, parse_answers
from .index_io import Index, load_index, save_index
from .labeling import EntityLabeler
from .retrieval import StarRetriever
from .rulegraph import RuleGraphBuilder
from .tkg import ParseError, kg_stats, load_tkg

EMBED_URL_ENV = "STAR_RAG_EMBED_URL"

EXIT_OK = 0
EXIT_INPUT_ERROR = 1
EXIT_SERVICE_ERROR = 2


def _add_config_flags(parser: argparse.ArgumentParser) -> None:
    defaults = PipelineConfig()
    parser.add_argument("--config", metavar="FILE", default=None,
                        help="flat key = value config file (flags override it) (default: none)")
    parser.add_argument("--k1", type=int, default=None,
                        help=f"events retrieved per query (default: {defaults.k1})")
    parser.add_argument("--k2", type=int, default=None,
                        help=f"ranked rule nodes kept per query (default: {defaults.k2})")
    parser.add_argument("--alpha", type=float, default=None,
                        help=f"restart probability for the random walk (default: {defaults.alpha})")
    parser.add_argument("--epsilon", type=float, default=None,
                        help=f"power-iteration convergence tolerance (default: {defaults.epsilon})")
    parser.add_argument("--theta", type=float, default=None,
                        help=f"rank-signal weight when seeding the walk (default: {defaults.theta})")
    parser.add_argument("--beta", type=float, default=None,
                        help=f"geometric discount over anchor ranks (default: {defaults.beta})")
    parser.add_argument("--min-support-fraction", type=float, default=None, dest="min_support_fraction",
                        help=f"entity fraction a relation subset needs to become a label pattern (default: {defaults.min_support_fraction})")
    parser.add_argument("--max-subset-len", type=int, default=None, dest="max_subset_len",
                        help=f"longest relation subset mined (default: {defaults.max_subset_len})")
    parser.add_argument("--k-type", type=int, default=None, dest="k_type",
                        help=f"labels kept per entity (default: {defaults.k_type})")
    parser.add_argument("--seed", type=int, default=None,
                        help=f"seed for all randomness: sampling and pair subsampling (default: {defaults.seed})")
    parser.add_argument("--embed-url", default=None, dest="embed_url",
                        help=f"embedding service URL; ${EMBED_URL_ENV} is the env equivalent (default: none)")
    parser.add_argument("--llm-endpoint", default=None, dest="llm_endpoint",
                        help="chat-completions endpoint for generation (default: none)")
    parser.add_argument("--llm-model", default=None, dest="llm_model",
                        help="model name sent to the LLM endpoint (default: none)")


def _resolve_config(args: argparse.Namespace) -> PipelineConfig:
    base = PipelineConfig()
    if args.config:
        base = base.merged(parse_config_file(args.config))
    overrides = {
        name: getattr(args, name, None)
        for name in (
            "k1", "k2", "alpha", "epsilon", "theta", "beta",
            "min_support_fraction", "max_subset_len", "k_type", "seed",
            "embed_url", "llm_endpoint", "llm_model",
        )
    }
    if overrides.get("embed_url") is None and os.environ.get(EMBED_URL_ENV):
        overrides["embed_url"] = os.environ[EMBED_URL_ENV]
    return base.merged(overrides)


def _provider(args: argparse.Namespace, config: PipelineConfig):
    if args.provider == "http" or (args.provider == "auto" and config.embed_url):
        if not config.embed_url:
            raise ConfigError("http provider requested but no --embed-url configured")
        return HttpProvider(config.embed_url)
    return HashingProvider()


def _retriever_params(config: PipelineConfig) -> dict:
    return {
        "k1": config.k1,
        "k2": config.k2,
        "alpha": config.alpha,
        "epsilon": config.epsilon,
        "theta": config.theta,
        "beta": config.beta,
        "min_support_fraction": config.min_support_fraction,
        "max_subset_len": config.max_subset_len,
        "k_type": config.k_type,
        "seed": config.seed,
    }


def cmd_stats(args: argparse.Namespace) -> int:
    kg = load_tkg(args.events)
    stats = kg_stats(kg)
    print(f"events      {stats.num_events}")
    print(f"entities    {stats.num_entities}")
    print(f"relations   {stats.num_relations}")
    print(f"timestamps  {stats.num_timestamps}")
    return EXIT_OK


def cmd_build_index(args: argparse.Namespace) -> int:
    config = _resolve_config(args)
    kg = load_tkg(args.events)
    stats = kg_stats(kg)
    print(
        f"loaded {stats.num_events} events, {stats.num_entities} entities, "
        f"{stats.num_relations} relations, {stats.num_timestamps} timestamps"
    )
    # Index building is the offline stage: no embeddings needed yet.
    labeler = EntityLabeler(
        min_support_fraction=config.min_support_fraction,
        max_subset_len=config.max_subset_len,
        k_type=config.k_type,
    ).fit(kg)
    builder = RuleGraphBuilder(seed=config.seed).fit(kg, labeler.assignment_)
    graph = builder.graph_
    index = Index(
        kg=kg,
        assignment=labeler.assignment_,
        graph=graph,
        config={k: v for k, v in sorted(_retriever_params(config).items())},
    )
    save_index(index, args.out)
    mdl = graph.mdl
    print(f"rule nodes        {len(graph.nodes)}")
    print(f"candidate edges   {len(builder.candidates_)}")
    print(f"selected edges    {len(graph.edges)}")
    print(f"model cost        {mdl.model_cost:.3f}")
    print(f"coverage cost     {mdl.coverage_cost:.3f}")
    print(f"temporal cost     {mdl.temporal_cost:.3f}")
    print(f"unexplained cost  {mdl.unexplained_cost:.3f}")
    print(f"total description length {graph.total_description_length:.3f}")
    print(f"index written to {args.out}")
    return EXIT_OK


def _load_retriever(args: argparse.Namespace, config: PipelineConfig) -> StarRetriever:
    index = load_index(args.index)
    return StarRetriever.from_index(
        index.kg,
        index.graph,
        provider=_provider(args, config),
        cache_dir=args.cache_dir,
        **_retriever_params(config),
    )


def cmd_query(args: argparse.Namespace) -> int:
    config = _resolve_config(args)
    retriever = _load_retriever(args, config)
    result = retriever.retrieve(args.question, with_trace=args.trace)
    if result.fallback:
        print("# no seed rules matched; returning plain semantic search results")
    for rank, (eid, score) in enumerate(result.events, start=1):
        text = retriever.kg_.quad_strings(retriever.kg_.events[eid])
        print(f"{rank}. {text[0]} {text[1]} {text[2]} @ {text[3]}  score={score:.4f}")
    if args.trace:
        print(json.dumps(result.trace, sort_keys=True, indent=2))
    if args.generate:
        if not config.llm_endpoint or not config.llm_model:
            raise ConfigError("--generate needs --llm-endpoint and --llm-model")
        bundle = assemble_prompt(result, args.question, retriever.kg_)
        raw = call_llm(
            LlmClientConfig(endpoint=config.llm_endpoint, model=config.llm_model,
                            max_tokens=args.max_tokens, temperature=args.temperature),
            bundle,
        )
        answers = parse_answers(raw)
        print("answers: " + "; ".join(answers.candidates))
    return EXIT_OK


def _make_llm_pipeline(retriever: StarRetriever, config: PipelineConfig, args: argparse.Namespace):
    llm_config = LlmClientConfig(
        endpoint=config.llm_endpoint or "",
        model=config.llm_model or "",
        max_tokens=args.max_tokens,
        temperature=args.temperature,
    )

    def run(question: Question) -> PipelineResult:
        t0 = time.perf_counter()
        result = retriever.retrieve(question.text)
        t1 = time.perf_counter()
        bundle = assemble_prompt(result, question.text, retriever.kg_)
        raw = call_llm(llm_config, bundle)
        t2 = time.perf_counter()
        answers = parse_answers(raw)
        return PipelineResult(
            answers=answers,
            prompt_tokens=bundle.token_count(),
            response_tokens=count_tokens(raw),
            retrieval_ms=(t1 - t0) * 1000.0,
            llm_ms=(t2 - t1) * 1000.0,
            fallback=result.fallback,
        )

    return run


def cmd_eval(args: argparse.Namespace) -> int:
    config = _resolve_config(args)
    questions = load_questions(args.questions)
    ks = [int(k) for k in args.ks.split(",") if k.strip()]
    if args.llm == "echo-gold":
        pipeline = echo_gold_pipeline
    else:
        if not config.llm_endpoint or not config.llm_model:
            raise ConfigError(
                "eval needs --llm echo-gold or a configured --llm-endpoint/--llm-model"
            )
        retriever = _load_retriever(args, config)
        pipeline = _make_llm_pipeline(retriever, config, args)
    report = evaluate(
        questions,
        pipeline,
        ks=ks,
        sample_size=args.sample,
        seed=config.seed,
        runs=args.runs,
    )
    write_report(report, args.report)
    if args.records:
        write_records(report, args.records)
    print(report.format_table())
    print(f"report written to {args.report}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="star-rag",
        description="Temporal knowledge-graph retrieval: rule-graph index + seeded PageRank",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_stats = sub.add_parser("stats", help="print corpus statistics")
    p_stats.add_argument("events", help="tab-separated quadruple file")
    p_stats.set_defaults(func=cmd_stats)

    p_build = sub.add_parser("build-index", help="build and persist the rule-graph index")
    p_build.add_argument("events", help="tab-separated quadruple file")
    p_build.add_argument("--out", required=True, help="output index path (JSON document)")
    _add_config_flags(p_build)
    p_build.set_defaults(func=cmd_build_index)

    p_query = sub.add_parser("query", help="answer one question against an index")
    p_query.add_argument("index", help="index file from build-index")
    p_query.add_argument("question", help="natural-language question")
    _add_config_flags(p_query)
    p_query.add_argument("--provider", choices=("auto", "hashing", "http"), default="auto",
                         help="embedding provider; auto picks http when an embed URL is set (default: auto)")
    p_query.add_argument("--cache-dir", default=None, dest="cache_dir",
                         help="embedding cache directory (default: none)")
    p_query.add_argument("--trace", action="store_true",
                         help="print the retrieval diagnostics document (default: off)")
    p_query.add_argument("--generate", action=argparse.BooleanOptionalAction, default=False,
                         help="also call the configured LLM on the retrieved evidence (default: off)")
    p_query.add_argument("--max-tokens", type=int, default=512, dest="max_tokens",
                         help="LLM generation token cap (default: 512)")
    p_query.add_argument("--temperature", type=float, default=0.0,
                         help="LLM sampling temperature (default: 0.0)")
    p_query.set_defaults(func=cmd_query)

    p_eval = sub.add_parser("eval", help="run the QA evaluation harness")
    p_eval.add_argument("index", help="index file from build-index")
    p_eval.add_argument("questions", help="JSON-lines question file")
    _add_config_flags(p_eval)
    p_eval.add_argument("--provider", choices=("auto", "hashing", "http"), default="auto",
                        help="embedding provider; auto picks http when an embed URL is set (default: auto)")
    p_eval.add_argument("--cache-dir", default=None, dest="cache_dir",
                        help="embedding cache directory (default: none)")
    p_eval.add_argument("--llm", default=None,
                        help="'echo-gold' for the offline double, otherwise uses the configured endpoint (default: none)")
    p_eval.add_argument("--ks", default="1,5,10",
                        help="comma-separated Hit@k cutoffs (default: 1,5,10)")
    p_eval.add_argument("--runs", type=int, default=1,
                        help="number of seeded evaluation runs to average (default: 1)")
    p_eval.add_argument("--sample", type=int, default=None,
                        help="questions sampled per run (default: all)")
    p_eval.add_argument("--report", default="eval_report.json",
                        help="machine-readable report path (default: eval_report.json)")
    p_eval.add_argument("--records", default=None,
                        help="optional JSON-lines per-question record path (default: none)")
    p_eval.add_argument("--max-tokens", type=int, default=512, dest="max_tokens",
                        help="LLM generation token cap (default: 512)")
    p_eval.add_argument("--temperature", type=float, default=0.0,
                        help="LLM sampling temperature (default: 0.0)")
    p_eval.set_defaults(func=cmd_eval)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ParseError, ConfigError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT_ERROR
    except (ProviderError, LlmError, TimeoutError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        cause = exc.__cause__
        while cause is not None:
            print(f"caused by: {cause}", file=sys.stderr)
            cause = cause.__cause__
        return EXIT_SERVICE_ERROR


if __name__ == "__main__":
    sys.exit(main())
