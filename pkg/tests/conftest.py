"""Shared fixtures: toy corpora and the temporal-clue scenario builder."""

from __future__ import annotations

import textwrap
from dataclasses import dataclass

import pytest

from star_rag.tkg import TemporalKG, load_tkg

TOY_LINES = textwrap.dedent(
    """\
    Oman\tintend_cooperate\tQatar\t2011-04-26
    Oman\tsign_agreement\tQatar\t2011-04-27
    Bahrain\tintend_cooperate\tKuwait\t2011-05-02
    Bahrain\tsign_agreement\tKuwait\t2011-05-03
    Jordan\tintend_cooperate\tEgypt\t2011-06-10
    Jordan\tsign_agreement\tEgypt\t2011-06-11
    """
)


@pytest.fixture
def toy_events_path(tmp_path):
    path = tmp_path / "toy_events.txt"
    path.write_text(TOY_LINES, encoding="utf-8")
    return path


@pytest.fixture
def toy_kg(toy_events_path) -> TemporalKG:
    return load_tkg(toy_events_path)


@dataclass
class ClueScenario:
    """A corpus where the answer event is reachable only through the rule graph.

    The query semantically pins one anchor event plus several distractors; the
    answer event shares the anchor's entities but a different relation, so plain
    similarity ranks it below the distractors, while the anchor's rule node has a
    tight-span, high-support edge to the answer's rule node.
    """

    lines: list[str]
    query: str
    anchor_quad: tuple[str, str, str, str]
    answer_quad: tuple[str, str, str, str]
    num_pairs: int
    num_distractors: int

    def text(self) -> str:
        return "\n".join(self.lines) + "\n"

    def event_id_of(self, kg: TemporalKG, quad: tuple[str, str, str, str]) -> int:
        for event in kg.events:
            if kg.quad_strings(event) == quad:
                return event.event_id
        raise AssertionError(f"quad {quad} not found in corpus")


def build_clue_scenario(num_pairs: int = 30, num_distractors: int = 12) -> ClueScenario:
    lines: list[str] = []
    # Entity pairs that first announce cooperation, then sign one day later.
    # Pair 0 is the Oman/Qatar pair the query is about.
    for i in range(num_pairs):
        subject = "Oman" if i == 0 else f"Nation_a{i}"
        obj = "Qatar" if i == 0 else f"Nation_b{i}"
        month = (i % 12) + 1
        day = (i % 27) + 1
        lines.append(f"{subject}\tintend_cooperate\t{obj}\t2011-{month:02d}-{day:02d}")
        lines.append(f"{subject}\tsign_agreement\t{obj}\t2011-{month:02d}-{day + 1:02d}")
    # Distractors echo the query tokens inside a multi-word subject but use
    # unrelated relations, so each one outscores the answer event semantically.
    for j in range(num_distractors):
        subject = f"Oman Qatar intend_cooperate forum_{j}"
        lines.append(f"{subject}\tdiscuss_{j}\tpress\t2012-03-{(j % 27) + 1:02d}")
    return ClueScenario(
        lines=lines,
        query="Oman intend_cooperate Qatar",
        anchor_quad=("Oman", "intend_cooperate", "Qatar", "2011-01-01"),
        answer_quad=("Oman", "sign_agreement", "Qatar", "2011-01-02"),
        num_pairs=num_pairs,
        num_distractors=num_distractors,
    )


@pytest.fixture
def clue_scenario(tmp_path):
    scenario = build_clue_scenario()
    path = tmp_path / "clue_events.txt"
    path.write_text(scenario.text(), encoding="utf-8")
    return scenario, path
