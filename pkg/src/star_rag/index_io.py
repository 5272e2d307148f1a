"""Index persistence: one JSON document holding events, labels, rule graph, MDL."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Any

from .labeling import FrequentPattern, LabelAssignment
from .rulegraph import (
    CandidateEdge,
    MdlBreakdown,
    RuleGraph,
    RuleNode,
    build_transition_matrix,
)
from .tkg import TemporalKG, parse_timestamp

FORMAT_NAME = "star-rag-index"
FORMAT_VERSION = 1


@dataclass
class Index:
    kg: TemporalKG
    assignment: LabelAssignment
    graph: RuleGraph
    config: dict[str, Any]


def _document(index: Index) -> dict[str, Any]:
    kg = index.kg
    return {
        "format": FORMAT_NAME,
        "version": FORMAT_VERSION,
        "config": index.config,
        "events": [list(kg.quad_strings(event)) for event in kg.events],
        "labeling": {
            "patterns": [
                {
                    "type_id": p.type_id,
                    "relations": sorted(kg.relations[r] for r in p.relations),
                    "support": p.support_count,
                }
                for p in index.assignment.patterns
            ],
            "labels": {
                kg.entities[entity]: list(labels)
                for entity, labels in index.assignment.labels.items()
            },
        },
        "rule_nodes": [
            {
                "node_id": n.node_id,
                "subject_type": n.subject_type,
                "relation": kg.relations[n.relation],
                "object_type": n.object_type,
                "support": list(n.support),
            }
            for n in index.graph.nodes
        ],
        "edges": [
            {
                "u": e.u,
                "v": e.v,
                "num_spans": e.num_spans,
                "mean_span": e.mean_span,
                "weight": e.weight,
            }
            for e in index.graph.edges
        ],
        "mdl": {
            "model_cost": index.graph.mdl.model_cost,
            "coverage_cost": index.graph.mdl.coverage_cost,
            "temporal_cost": index.graph.mdl.temporal_cost,
            "unexplained_cost": index.graph.mdl.unexplained_cost,
            "total_description_length": index.graph.total_description_length,
        },
    }


def save_index(index: Index, path: str | Path) -> None:
    """Write the index deterministically: same inputs, byte-identical file."""
    payload = json.dumps(_document(index), sort_keys=True, separators=(",", ":")) + "\n"
    Path(path).write_bytes(payload.encode("utf-8"))


def load_index(path: str | Path) -> Index:
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    if doc.get("format") != FORMAT_NAME:
        raise ValueError(f"{path}: not a {FORMAT_NAME} file")

    kg = TemporalKG()
    for subject, relation, obj, date_text in doc["events"]:
        kg.add(subject, relation, obj, parse_timestamp(date_text))
    kg.finalize()

    patterns = tuple(
        FrequentPattern(
            relations=frozenset(kg.relations.get(r) for r in p["relations"]),
            support_count=p["support"],
            type_id=p["type_id"],
        )
        for p in doc["labeling"]["patterns"]
    )
    labels = {
        kg.entities.get(entity): tuple(type_ids)
        for entity, type_ids in doc["labeling"]["labels"].items()
    }
    assignment = LabelAssignment(labels=labels, patterns=patterns)

    supports = {n["node_id"]: tuple(n["support"]) for n in doc["rule_nodes"]}
    nodes = [
        RuleNode(
            node_id=n["node_id"],
            subject_type=n["subject_type"],
            relation=kg.relations.get(n["relation"]),
            object_type=n["object_type"],
            support=tuple(n["support"]),
        )
        for n in sorted(doc["rule_nodes"], key=lambda n: n["node_id"])
    ]
    edges = [
        CandidateEdge(
            u=e["u"],
            v=e["v"],
            num_spans=e["num_spans"],
            mean_span=e["mean_span"],
            num_pairs=len(supports[e["u"]]) * len(supports[e["v"]]),
        )
        for e in doc["edges"]
    ]
    mdl_doc = doc["mdl"]
    graph = RuleGraph(
        nodes=nodes,
        edges=edges,
        transition=build_transition_matrix(nodes, edges),
        mdl=MdlBreakdown(
            model_cost=mdl_doc["model_cost"],
            coverage_cost=mdl_doc["coverage_cost"],
            temporal_cost=mdl_doc["temporal_cost"],
            unexplained_cost=mdl_doc.get("unexplained_cost", 0.0),
        ),
        total_description_length=mdl_doc.get("total_description_length", 0.0),
    )
    return Index(kg=kg, assignment=assignment, graph=graph, config=doc.get("config", {}))
