"""Candidate triples: the unit of graph exploration."""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum


class Direction(str, Enum):
    OUTGOING = "outgoing"
    INCOMING = "incoming"


# (head, relation, tail, direction) -- hashable identity used by the
# knowledge memory sets and the trace files.
TripleKey = tuple[str, str, str, str]


@dataclass
class CandidateTriple:
    """One (head, relation, tail) edge seen from a frontier entity.

    Outgoing means the head is the frontier; incoming means the tail is.
    ``score`` stays None until pruning populates it.
    """

    head: str
    relation: str
    tail: str
    direction: Direction
    head_label: str = ""
    relation_label: str = ""
    tail_label: str = ""
    score: float | None = None

    def key(self) -> TripleKey:
        return (self.head, self.relation, self.tail, self.direction.value)

    def render(self) -> str:
        head = self.head_label or self.head
        rel = self.relation_label or self.relation
        tail = self.tail_label or self.tail
        return f"{head} —{rel}→ {tail}"

    def to_dict(self) -> dict:
        return {
            "head": self.head,
            "relation": self.relation,
            "tail": self.tail,
            "direction": self.direction.value,
            "head_label": self.head_label,
            "relation_label": self.relation_label,
            "tail_label": self.tail_label,
            "score": self.score,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "CandidateTriple":
        return cls(
            head=d["head"],
            relation=d["relation"],
            tail=d["tail"],
            direction=Direction(d["direction"]),
            head_label=d.get("head_label", ""),
            relation_label=d.get("relation_label", ""),
            tail_label=d.get("tail_label", ""),
            score=d.get("score"),
        )
