"""High-level reasoning: decomposition, prediction, reflection, decisions.

The planner is stateless between calls; everything it knows comes in as
rendered context from the memory module.  Backend responses use a small
delimited key-value format, re-requested up to ``parse_retries`` times
before giving up with MalformedBackendOutput.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from importlib import resources
from typing import Callable, TypeVar

from .backends import ReasoningBackend
from .errors import EngineError, MalformedBackendOutput
from .memory import (
    ErrorLevel,
    ErrorSignal,
    IntegratedMemory,
    Observation,
    PlanStep,
    Prediction,
)

MAX_PLAN_STEPS = 8

T = TypeVar("T")


class DecisionKind(str, Enum):
    PROCEED = "proceed"
    PATH_CORRECT = "path_correct"
    REPLAN = "replan"
    FINISH = "finish"


@dataclass
class Decision:
    kind: DecisionKind
    rationale: str = ""
    answer: str = ""  # non-empty iff kind is FINISH
    coerced: bool = False

    def __post_init__(self):
        if self.kind is DecisionKind.FINISH and not self.answer:
            raise ValueError("Finish decision requires a non-empty answer")


def load_prompt(stage: str) -> str:
    return resources.files("kgqa_engine").joinpath(f"prompts/{stage}.txt").read_text(encoding="utf-8")


def parse_fields(text: str) -> dict[str, str]:
    """Parse ``KEY: value`` lines; first occurrence of each key wins."""
    fields: dict[str, str] = {}
    for line in text.splitlines():
        key, sep, value = line.partition(":")
        key = key.strip().upper()
        if sep and key and " " not in key and key not in fields:
            fields[key] = value.strip()
    return fields


def parse_plan_steps(text: str) -> list[PlanStep]:
    steps: list[PlanStep] = []
    for line in text.splitlines():
        line = line.strip()
        if not line.upper().startswith("STEP:"):
            continue
        body = line[len("STEP:"):].strip()
        objective, _, description = body.partition("|")
        objective = objective.strip()
        if objective:
            steps.append(PlanStep(index=len(steps), objective=objective, description=description.strip()))
    if not 1 <= len(steps) <= MAX_PLAN_STEPS:
        raise MalformedBackendOutput(f"expected 1-{MAX_PLAN_STEPS} plan steps, parsed {len(steps)}")
    return steps


def best_effort_answer(memory: IntegratedMemory) -> str:
    """Fallback answer: the tail of the last accepted triple, else unknown."""
    chain = memory.knowledge.reasoning_chain
    if chain:
        last = chain[-1]
        return last.tail_label or last.tail
    return "unknown"


class Planner:
    def __init__(self, backend: ReasoningBackend, *, parse_retries: int = 2,
                 max_path_corrections: int = 3):
        self.backend = backend
        self.parse_retries = parse_retries
        self.max_path_corrections = max_path_corrections

    def _complete_parsed(self, stage: str, prompt: str, parser: Callable[[str], T]) -> T:
        last_error: Exception | None = None
        for _ in range(self.parse_retries + 1):
            raw = self.backend.complete(prompt, stage)
            try:
                return parser(raw)
            except MalformedBackendOutput as exc:
                last_error = exc
        raise MalformedBackendOutput(
            f"stage {stage!r} unparseable after {self.parse_retries + 1} attempts: {last_error}"
        )

    # -- operations ---------------------------------------------------------

    def decompose(self, question: str, context: str) -> list[PlanStep]:
        if not question:
            raise ValueError("question must be non-empty")
        prompt = load_prompt("decompose").format(context=context)
        return self._complete_parsed("decompose", prompt, parse_plan_steps)

    def predict(self, step: PlanStep, context: str) -> Prediction:
        prompt = load_prompt("predict").format(context=context, objective=step.objective)

        def parser(raw: str) -> Prediction:
            fields = parse_fields(raw)
            outcome = fields.get("OUTCOME", "")
            if not outcome:
                raise MalformedBackendOutput("prediction needs a non-empty OUTCOME")
            return Prediction(
                expected_outcome=outcome,
                expected_entity_kind=fields.get("ENTITY_KIND") or None,
                confidence_note=fields.get("CONFIDENCE", ""),
            )

        return self._complete_parsed("predict", prompt, parser)

    def compute_error_signal(self, prediction: Prediction, observation: Observation) -> ErrorSignal:
        if observation.candidates_after_pruning == 0 or observation.chosen is None:
            return ErrorSignal(ErrorLevel.EMPTY_RESULT, "no candidate triples survived exploration")
        prompt = load_prompt("classify").format(
            prediction=prediction.expected_outcome,
            chosen=observation.chosen.render(),
        )

        def parser(raw: str) -> ErrorSignal:
            fields = parse_fields(raw)
            level = fields.get("LEVEL", "").lower()
            if level not in ("fulfilled", "partial", "mismatch"):
                raise MalformedBackendOutput(f"unknown error level: {fields.get('LEVEL')!r}")
            return ErrorSignal(ErrorLevel(level), fields.get("DETAIL", ""))

        return self._complete_parsed("classify", prompt, parser)

    def think(self, error_signal: ErrorSignal, context: str) -> str:
        prompt = load_prompt("think").format(
            context=context, level=error_signal.level.value, detail=error_signal.detail
        )

        def parser(raw: str) -> str:
            text = raw.strip()
            if not text:
                raise MalformedBackendOutput("reflection must be non-empty")
            return text

        return self._complete_parsed("think", prompt, parser)

    def evaluate(self, memory: IntegratedMemory) -> Decision:
        """Ask the backend for the next move, then apply engine overrides.

        Termination stays under engine control: a PathCorrect past the
        per-step attempt budget becomes Replan, and a Replan past the
        replan budget becomes a best-effort Finish.
        """
        prompt = load_prompt("evaluate").format(
            context=memory.render_context("planner"),
            thought=memory.step_cycle.thought or "",
        )

        def parser(raw: str) -> Decision:
            fields = parse_fields(raw)
            decision = fields.get("DECISION", "").lower().replace("-", "").replace("_", "")
            mapping = {
                "proceed": DecisionKind.PROCEED,
                "pathcorrect": DecisionKind.PATH_CORRECT,
                "replan": DecisionKind.REPLAN,
                "finish": DecisionKind.FINISH,
            }
            if decision not in mapping:
                raise MalformedBackendOutput(f"unknown decision: {fields.get('DECISION')!r}")
            kind = mapping[decision]
            answer = fields.get("ANSWER", "")
            if kind is DecisionKind.FINISH and not answer:
                raise MalformedBackendOutput("Finish decision requires ANSWER")
            return Decision(kind=kind, rationale=fields.get("RATIONALE", ""),
                            answer=answer if kind is DecisionKind.FINISH else "")

        decision = self._complete_parsed("evaluate", prompt, parser)
        return self.apply_overrides(decision, memory)

    def apply_overrides(self, decision: Decision, memory: IntegratedMemory) -> Decision:
        if (
            decision.kind is DecisionKind.PATH_CORRECT
            and memory.step_cycle.attempt_counter >= self.max_path_corrections
        ):
            decision = Decision(
                kind=DecisionKind.REPLAN,
                rationale=f"path-correction budget spent ({self.max_path_corrections}); replanning",
                coerced=True,
            )
        if (
            decision.kind is DecisionKind.REPLAN
            and memory.strategic.replan_counter >= memory.strategic.replan_limit
        ):
            decision = Decision(
                kind=DecisionKind.FINISH,
                rationale="replan budget spent; finishing with best-effort answer",
                answer=best_effort_answer(memory),
                coerced=True,
            )
        return decision

    def synthesize_answer(self, memory: IntegratedMemory) -> str:
        """Final answer synthesis. Total: backend failures fall back."""
        prompt = load_prompt("answer").format(context=memory.render_context("planner"))

        def parser(raw: str) -> str:
            answer = parse_fields(raw).get("ANSWER", "")
            if not answer:
                raise MalformedBackendOutput("synthesis needs a non-empty ANSWER")
            return answer

        try:
            return self._complete_parsed("answer", prompt, parser)
        except EngineError:
            return best_effort_answer(memory)
