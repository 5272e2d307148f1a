"""Question files, Hit@k scoring, and the evaluation harness."""

from __future__ import annotations

import json
import random
import statistics
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Sequence

from .generation import AnswerList, count_tokens

QTYPES = ("single", "multiple", "unknown")


@dataclass(frozen=True)
class Question:
    id: str
    text: str
    gold_answers: tuple[str, ...]
    qtype: str = "unknown"


@dataclass
class PipelineResult:
    """What one pipeline invocation hands back to the harness."""

    answers: AnswerList
    prompt_tokens: int
    response_tokens: int
    retrieval_ms: float
    llm_ms: float
    fallback: bool = False


@dataclass
class RunRecord:
    question_id: str
    qtype: str
    candidates: tuple[str, ...]
    hit_ranks: dict[int, int]
    prompt_tokens: int
    response_tokens: int
    retrieval_ms: float
    llm_ms: float
    fallback: bool = False
    error: str | None = None

    def to_json_dict(self) -> dict[str, Any]:
        return {
            "question_id": self.question_id,
            "qtype": self.qtype,
            "candidates": list(self.candidates),
            "hit_ranks": {str(k): v for k, v in sorted(self.hit_ranks.items())},
            "prompt_tokens": self.prompt_tokens,
            "response_tokens": self.response_tokens,
            "retrieval_ms": self.retrieval_ms,
            "llm_ms": self.llm_ms,
            "fallback": self.fallback,
            "error": self.error,
        }


@dataclass
class EvalReport:
    ks: tuple[int, ...]
    run_count: int
    num_runs: int
    accuracy: dict[int, float]
    accuracy_variance: dict[int, float]
    per_run_accuracy: list[dict[int, float]]
    per_qtype: dict[str, dict[int, float]]
    mean_prompt_tokens: float
    mean_response_tokens: float
    mean_retrieval_ms: float
    mean_llm_ms: float
    token_estimator: str = "whitespace"
    records: list[RunRecord] = field(default_factory=list, repr=False)

    def to_json_dict(self) -> dict[str, Any]:
        return {
            "ks": list(self.ks),
            "run_count": self.run_count,
            "num_runs": self.num_runs,
            "accuracy": {str(k): v for k, v in sorted(self.accuracy.items())},
            "accuracy_variance": {str(k): v for k, v in sorted(self.accuracy_variance.items())},
            "per_run_accuracy": [
                {str(k): v for k, v in sorted(run.items())} for run in self.per_run_accuracy
            ],
            "per_qtype": {
                qtype: {str(k): v for k, v in sorted(values.items())}
                for qtype, values in sorted(self.per_qtype.items())
            },
            "mean_prompt_tokens": self.mean_prompt_tokens,
            "mean_response_tokens": self.mean_response_tokens,
            "mean_retrieval_ms": self.mean_retrieval_ms,
            "mean_llm_ms": self.mean_llm_ms,
            "token_estimator": self.token_estimator,
        }

    def format_table(self) -> str:
        lines = ["metric" + "".join(f"\tHit@{k}" for k in self.ks)]
        lines.append("overall" + "".join(f"\t{self.accuracy[k]:.1f}" for k in self.ks))
        for qtype, values in sorted(self.per_qtype.items()):
            lines.append(qtype + "".join(f"\t{values[k]:.1f}" for k in self.ks))
        lines.append(f"questions evaluated\t{self.run_count}")
        lines.append(f"runs\t{self.num_runs}")
        lines.append(f"mean prompt tokens ({self.token_estimator})\t{self.mean_prompt_tokens:.1f}")
        lines.append(f"mean response tokens\t{self.mean_response_tokens:.1f}")
        lines.append(f"mean retrieval ms\t{self.mean_retrieval_ms:.2f}")
        lines.append(f"mean llm ms\t{self.mean_llm_ms:.2f}")
        return "\n".join(lines)


def load_questions(path: str | Path) -> list[Question]:
    """Read one JSON document per line: id, question, answers, optional qtype."""
    questions: list[Question] = []
    with open(path, encoding="utf-8") as handle:
        for lineno, raw in enumerate(handle, start=1):
            if not raw.strip():
                continue
            try:
                doc = json.loads(raw)
                answers = tuple(str(a) for a in doc["answers"])
                if not answers:
                    raise ValueError("empty answers list")
                qtype = doc.get("qtype") or "unknown"
                if qtype not in QTYPES:
                    raise ValueError(f"unknown qtype {qtype!r}")
                questions.append(
                    Question(id=str(doc["id"]), text=str(doc["question"]),
                             gold_answers=answers, qtype=qtype)
                )
            except (KeyError, ValueError, TypeError) as exc:
                raise ValueError(f"{path}: line {lineno}: {exc}") from exc
    return questions


def normalize_answer(text: str) -> str:
    """Case-fold, trim, and unify underscores with spaces for matching."""
    return " ".join(text.replace("_", " ").split()).casefold()


def hit_at_k(candidates: AnswerList | Sequence[str], gold: Sequence[str], k: int) -> int:
    """1 iff any of the first k candidates matches any gold answer after normalization."""
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    items = candidates.candidates if isinstance(candidates, AnswerList) else candidates
    gold_norm = {normalize_answer(g) for g in gold}
    return int(any(normalize_answer(c) in gold_norm for c in items[:k]))


Pipeline = Callable[[Question], PipelineResult]


def echo_gold_pipeline(question: Question) -> PipelineResult:
    """Offline harness double that always answers the gold (first alias, sorted).

    Timings are fixed at zero so reports stay byte-identical across runs.
    """
    answer = sorted(question.gold_answers)[0]
    answers = AnswerList(candidates=(answer,), raw_response=f"Answer: {answer}")
    return PipelineResult(
        answers=answers,
        prompt_tokens=count_tokens(question.text),
        response_tokens=count_tokens(answers.raw_response),
        retrieval_ms=0.0,
        llm_ms=0.0,
    )


def _mean(values: Sequence[float]) -> float:
    return sum(values) / len(values) if values else 0.0


def evaluate(
    questions: Sequence[Question],
    pipeline: Pipeline,
    ks: Sequence[int] = (1, 5, 10),
    sample_size: int | None = None,
    seed: int = 42,
    runs: int = 1,
) -> EvalReport:
    """Run the pipeline per sampled question and aggregate Hit@k, tokens, latency.

    Sampling is seeded (run i uses seed+i); a failing question is recorded as a
    miss with its error rather than aborting the run.
    """
    ks = tuple(sorted(set(int(k) for k in ks)))
    records: list[RunRecord] = []
    per_run_accuracy: list[dict[int, float]] = []

    for run_index in range(runs):
        rng = random.Random(seed + run_index)
        if sample_size is None or sample_size >= len(questions):
            sampled = list(questions)
        else:
            sampled = rng.sample(list(questions), sample_size)
        run_records: list[RunRecord] = []
        for question in sampled:
            try:
                outcome = pipeline(question)
                hit_ranks = {
                    k: hit_at_k(outcome.answers, question.gold_answers, k) for k in ks
                }
                run_records.append(
                    RunRecord(
                        question_id=question.id,
                        qtype=question.qtype,
                        candidates=outcome.answers.candidates,
                        hit_ranks=hit_ranks,
                        prompt_tokens=outcome.prompt_tokens,
                        response_tokens=outcome.response_tokens,
                        retrieval_ms=outcome.retrieval_ms,
                        llm_ms=outcome.llm_ms,
                        fallback=outcome.fallback,
                    )
                )
            except Exception as exc:  # per-question failures never abort the run
                run_records.append(
                    RunRecord(
                        question_id=question.id,
                        qtype=question.qtype,
                        candidates=(),
                        hit_ranks={k: 0 for k in ks},
                        prompt_tokens=0,
                        response_tokens=0,
                        retrieval_ms=0.0,
                        llm_ms=0.0,
                        error=f"{type(exc).__name__}: {exc}",
                    )
                )
        per_run_accuracy.append(
            {
                k: 100.0 * _mean([r.hit_ranks[k] for r in run_records])
                for k in ks
            }
            if run_records
            else {k: 0.0 for k in ks}
        )
        records.extend(run_records)

    accuracy = {k: _mean([run[k] for run in per_run_accuracy]) for k in ks}
    accuracy_variance = {
        k: (statistics.pvariance([run[k] for run in per_run_accuracy]) if per_run_accuracy else 0.0)
        for k in ks
    }
    per_qtype: dict[str, dict[int, float]] = {}
    for qtype in sorted({r.qtype for r in records}):
        subset = [r for r in records if r.qtype == qtype]
        per_qtype[qtype] = {k: 100.0 * _mean([r.hit_ranks[k] for r in subset]) for k in ks}

    return EvalReport(
        ks=ks,
        run_count=len(records),
        num_runs=runs,
        accuracy=accuracy,
        accuracy_variance=accuracy_variance,
        per_run_accuracy=per_run_accuracy,
        per_qtype=per_qtype,
        mean_prompt_tokens=_mean([r.prompt_tokens for r in records]),
        mean_response_tokens=_mean([r.response_tokens for r in records]),
        mean_retrieval_ms=_mean([r.retrieval_ms for r in records]),
        mean_llm_ms=_mean([r.llm_ms for r in records]),
        records=records,
    )


def write_report(report: EvalReport, path: str | Path) -> None:
    payload = json.dumps(report.to_json_dict(), sort_keys=True, separators=(",", ":")) + "\n"
    Path(path).write_text(payload, encoding="utf-8")


def write_records(report: EvalReport, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as handle:
        for record in report.records:
            handle.write(json.dumps(record.to_json_dict(), sort_keys=True) + "\n")
