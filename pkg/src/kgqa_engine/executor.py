"""Path exploration: expand the frontier, prune, pick one triple.

The executor has no intelligence of its own; candidate selection is
delegated to the reasoning backend with a deterministic score fallback,
so selection is total for every possible backend string.
"""

from __future__ import annotations

import re

from .backends import ReasoningBackend
from .errors import MalformedBackendOutput, NoFrontier
from .kg import GraphStore
from .memory import IntegratedMemory, Observation, PlanStep
from .planner import load_prompt, parse_fields
from .pruning import Embedder, prune
from .triples import CandidateTriple, Direction


class Executor:
    def __init__(
        self,
        kg: GraphStore,
        embedder: Embedder,
        backend: ReasoningBackend,
        *,
        prune_threshold: int = 70,
        expand_unlabeled: bool = False,
    ):
        self.kg = kg
        self.embedder = embedder
        self.backend = backend
        self.prune_threshold = prune_threshold
        self.expand_unlabeled = expand_unlabeled

    # -- frontier -----------------------------------------------------------

    def resolve_frontier(self, memory: IntegratedMemory) -> str:
        """Chain tail once exploration has started; topic entity before that."""
        chain = memory.knowledge.reasoning_chain
        if chain:
            return chain[-1].tail
        if memory.strategic.topic_entities:
            return memory.strategic.topic_entities[0]
        entity = self._extract_topic_entity(memory.strategic.question)
        if entity is not None:
            memory.strategic.topic_entities.append(entity)
            return entity
        raise NoFrontier("no topic entity and empty reasoning chain")

    def _extract_topic_entity(self, question: str) -> str | None:
        """Backend extraction + reverse label lookup, if the store supports it."""
        lookup = getattr(self.kg, "entity_with_label", None)
        if lookup is None:
            return None
        try:
            raw = self.backend.complete(load_prompt("extract").format(question=question), "extract")
        except MalformedBackendOutput:
            return None
        name = parse_fields(raw).get("ENTITY", "")
        return lookup(name) if name else None

    # -- exploration ----------------------------------------------------------

    def _make_candidate(self, frontier: str, relation: str, other: str, direction: Direction) -> CandidateTriple:
        if direction is Direction.OUTGOING:
            head, tail = frontier, other
        else:
            head, tail = other, frontier
        return CandidateTriple(
            head=head,
            relation=relation,
            tail=tail,
            direction=direction,
            head_label=self.kg.label(head) or "",
            relation_label=self.kg.label(relation) or "",
            tail_label=self.kg.label(tail) or "",
        )

    def _retrieve_candidates(self, frontier: str, memory: IntegratedMemory) -> list[CandidateTriple]:
        candidates: list[CandidateTriple] = []
        for relation, other, direction in self.kg.neighbors(frontier):
            cand = self._make_candidate(frontier, relation, other, direction)
            memory.record_explored(cand)
            if (
                self.expand_unlabeled
                and direction is Direction.OUTGOING
                and not cand.tail_label
            ):
                expanded = self._expand_mediator(cand, memory)
                candidates.extend(expanded if expanded else [cand])
            else:
                candidates.append(cand)
        return candidates

    def _expand_mediator(self, first_hop: CandidateTriple, memory: IntegratedMemory) -> list[CandidateTriple]:
        """Hop once more through an unlabeled (CVT-style) node.

        Freebase answers often sit behind such mediators; the two hops are
        presented as one compound candidate whose relation joins both legs.
        """
        compounds: list[CandidateTriple] = []
        mediator = first_hop.tail
        for relation, other, direction in self.kg.neighbors(mediator):
            if direction is not Direction.OUTGOING or other == first_hop.head:
                continue
            second = self._make_candidate(mediator, relation, other, direction)
            memory.record_explored(second)
            compounds.append(
                CandidateTriple(
                    head=first_hop.head,
                    relation=f"{first_hop.relation}/{relation}",
                    tail=other,
                    direction=Direction.OUTGOING,
                    head_label=first_hop.head_label,
                    relation_label=" / ".join(
                        lab or raw
                        for lab, raw in [
                            (first_hop.relation_label, first_hop.relation),
                            (second.relation_label, relation),
                        ]
                    ),
                    tail_label=second.tail_label,
                )
            )
        return compounds

    def explore(self, frontier: str, step: PlanStep, memory: IntegratedMemory) -> Observation:
        """One Act+Observe: retrieve, exclude known-bad, prune, select.

        Excluded are triples already failed for this step's signature and
        triples already accepted into the reasoning chain.  All retrieved
        triples are recorded into the knowledge layer regardless.
        """
        memory.knowledge.visited_entities.add(frontier)
        retrieved = self._retrieve_candidates(frontier, memory)
        signature = memory.step_signature(step)
        failed = memory.failed_keys_for(signature)
        # chain exclusion ignores traversal direction: the same edge seen
        # from the other side is still a revisit
        chain_edges = {(t.head, t.relation, t.tail) for t in memory.knowledge.reasoning_chain}
        candidates = [
            c
            for c in retrieved
            if c.key() not in failed and (c.head, c.relation, c.tail) not in chain_edges
        ]
        total = len(candidates)
        pruned = prune(candidates, step.objective, self.prune_threshold, self.embedder) if candidates else []
        if pruned:
            chosen, rationale = self.select_entity(pruned, step, memory.render_context("executor"))
        else:
            chosen, rationale = None, "no candidates remained after exclusions"
        return Observation(
            frontier_entity=frontier,
            candidates_total=total,
            candidates_after_pruning=len(pruned),
            chosen=chosen,
            rationale=rationale,
            candidates=pruned,
        )

    # -- selection ------------------------------------------------------------

    def select_entity(
        self, pruned: list[CandidateTriple], step: PlanStep, context: str
    ) -> tuple[CandidateTriple, str]:
        """Backend picks a 1-based index; anything unusable falls back to score."""
        if not pruned:
            raise ValueError("select_entity requires a non-empty candidate list")
        listing = "\n".join(
            f"{i}. {c.render()} (relevance {c.score:.3f})" for i, c in enumerate(pruned, start=1)
        )
        prompt = load_prompt("select").format(context=context, candidates=listing)
        try:
            raw = self.backend.complete(prompt, "select")
        except MalformedBackendOutput:
            raw = ""
        fields = parse_fields(raw)
        rationale = fields.get("RATIONALE", "")
        index = self._parse_index(fields.get("CHOICE", "") or raw)
        if index is not None and 1 <= index <= len(pruned):
            return pruned[index - 1], rationale or f"backend chose candidate {index}"
        fallback = min(pruned, key=lambda c: (-(c.score or 0.0), c.render(), c.key()))
        return fallback, "fallback: highest-relevance candidate (backend choice unusable)"

    @staticmethod
    def _parse_index(text: str) -> int | None:
        match = re.search(r"\d+", text)
        return int(match.group()) if match else None
