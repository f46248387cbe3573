"""Batch evaluation: dataset loading, exact-match Hits@1, reports."""

from __future__ import annotations

import json
import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

from .errors import ParseError, ScriptMismatch
from .orchestrator import Engine, trace_to_jsonl


@dataclass
class QaExample:
    id: str
    question: str
    topic_entities: list[tuple[str, str]]  # (entity id, label)
    gold_answers: list[str]


FORMATS = ("simple", "grailqa", "cwq", "webqsp")


def load_dataset(path, format: str = "simple") -> list[QaExample]:
    if format not in FORMATS:
        raise ValueError(f"unknown dataset format: {format!r}")
    with open(path, encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except ValueError as exc:
            raise ParseError(f"dataset is not valid JSON: {exc}") from exc
    loader = {
        "simple": _load_simple,
        "grailqa": _load_grailqa,
        "cwq": _load_cwq,
        "webqsp": _load_webqsp,
    }[format]
    examples = loader(doc)
    seen: set[str] = set()
    for i, ex in enumerate(examples):
        if not ex.gold_answers or not all(ex.gold_answers):
            raise ParseError(f"example {i} ({ex.id!r}): gold answers must be non-empty")
        if not ex.question:
            raise ParseError(f"example {i} ({ex.id!r}): empty question")
        if ex.id in seen:
            raise ParseError(f"duplicate example id: {ex.id!r}")
        seen.add(ex.id)
    return examples


def _require_list(doc, what: str) -> list:
    if not isinstance(doc, list):
        raise ParseError(f"{what} dataset must be a JSON list")
    return doc


def _load_simple(doc) -> list[QaExample]:
    examples = []
    for i, raw in enumerate(_require_list(doc, "simple")):
        try:
            examples.append(
                QaExample(
                    id=str(raw["id"]),
                    question=raw["question"],
                    topic_entities=[(e["id"], e.get("label", "")) for e in raw.get("topic_entities", [])],
                    gold_answers=[str(a) for a in raw["answers"]],
                )
            )
        except (KeyError, TypeError) as exc:
            raise ParseError(f"example {i}: missing field {exc}") from exc
    return examples


def _load_grailqa(doc) -> list[QaExample]:
    examples = []
    for i, raw in enumerate(_require_list(doc, "grailqa")):
        try:
            nodes = raw.get("graph_query", {}).get("nodes", [])
            topic = [
                (n["id"], n.get("friendly_name", ""))
                for n in nodes
                if n.get("node_type") == "entity"
            ]
            gold = [a.get("entity_name") or a.get("answer_argument", "") for a in raw["answer"]]
            examples.append(
                QaExample(
                    id=str(raw["qid"]),
                    question=raw["question"],
                    topic_entities=topic,
                    gold_answers=gold,
                )
            )
        except (KeyError, TypeError) as exc:
            raise ParseError(f"example {i}: missing field {exc}") from exc
    return examples


def _load_cwq(doc) -> list[QaExample]:
    examples = []
    for i, raw in enumerate(_require_list(doc, "cwq")):
        try:
            topic = sorted((raw.get("topic_entity") or {}).items())
            gold: list[str] = []
            for ans in raw["answers"]:
                gold.append(ans["answer"])
                gold.extend(ans.get("aliases", []))
            examples.append(
                QaExample(
                    id=str(raw["ID"]),
                    question=raw["question"],
                    topic_entities=topic,
                    gold_answers=gold,
                )
            )
        except (KeyError, TypeError) as exc:
            raise ParseError(f"example {i}: missing field {exc}") from exc
    return examples


def _load_webqsp(doc) -> list[QaExample]:
    if not isinstance(doc, dict) or "Questions" not in doc:
        raise ParseError("webqsp dataset must be an object with a Questions list")
    examples = []
    for i, raw in enumerate(doc["Questions"]):
        try:
            parses = raw.get("Parses", [])
            topic = [
                (p["TopicEntityMid"], p.get("TopicEntityName", ""))
                for p in parses
                if p.get("TopicEntityMid")
            ]
            gold = [
                a.get("EntityName") or a.get("AnswerArgument", "")
                for p in parses
                for a in p.get("Answers", [])
            ]
            examples.append(
                QaExample(
                    id=str(raw["QuestionId"]),
                    question=raw["RawQuestion"],
                    topic_entities=topic,
                    gold_answers=gold,
                )
            )
        except (KeyError, TypeError) as exc:
            raise ParseError(f"example {i}: missing field {exc}") from exc
    return examples


# -- metric ---------------------------------------------------------------


def normalize_answer(text: str) -> str:
    """Lowercase, trim, collapse internal whitespace, strip outer quotes."""
    out = text.strip()
    while len(out) >= 2 and out[0] == out[-1] and out[0] in "\"'":
        out = out[1:-1].strip()
    out = re.sub(r"\s+", " ", out)
    return out.lower()


def exact_match(prediction: str, gold_answers: list[str]) -> int:
    norm = normalize_answer(prediction)
    return int(any(norm == normalize_answer(g) for g in gold_answers))


# -- batch evaluation --------------------------------------------------------


@dataclass
class ExampleResult:
    id: str
    answer: str
    hit: int
    cycles: int
    replans: int
    trace_path: str | None = None
    error: str | None = None

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "answer": self.answer,
            "hit": self.hit,
            "cycles": self.cycles,
            "replans": self.replans,
            "trace_path": self.trace_path,
            "error": self.error,
        }


@dataclass
class Report:
    results: list[ExampleResult] = field(default_factory=list)
    hits_at_1: float = 0.0
    undefined: bool = False  # true for an empty dataset

    def to_dict(self) -> dict:
        return {
            "hits_at_1": self.hits_at_1,
            "undefined": self.undefined,
            "num_examples": len(self.results),
            "results": [r.to_dict() for r in self.results],
        }

    def table(self) -> str:
        lines = [f"{'id':<24} {'hit':>3} {'cycles':>6} {'replans':>7}  answer"]
        for r in self.results:
            lines.append(f"{r.id:<24} {r.hit:>3} {r.cycles:>6} {r.replans:>7}  {r.answer}")
        agg = "undefined (empty dataset)" if self.undefined else f"{self.hits_at_1:.4f}"
        lines.append(f"Hits@1: {agg}")
        return "\n".join(lines)


def evaluate_run(
    examples: list[QaExample],
    engine: Engine | None = None,
    *,
    engine_factory=None,
    concurrency: int = 1,
    trace_dir: str | None = None,
) -> Report:
    """Run every example, never aborting the batch on per-example failure.

    ``engine_factory(example)`` builds a fresh engine per example; use it
    when the backend holds per-run state (scripted replays). Otherwise a
    single shared ``engine`` is used for the whole batch.
    """
    if engine is None and engine_factory is None:
        raise ValueError("need an engine or an engine_factory")
    if not examples:
        return Report(undefined=True)

    def one(example: QaExample) -> ExampleResult:
        try:
            runner = engine_factory(example) if engine_factory else engine
            run = runner.run(example.question, [eid for eid, _ in example.topic_entities])
        except ScriptMismatch:
            raise
        except Exception as exc:  # per-example isolation: record, keep going
            return ExampleResult(
                id=example.id, answer="", hit=0, cycles=0, replans=0, error=str(exc)
            )
        trace_path = None
        if trace_dir:
            trace_path = str(Path(trace_dir) / f"{example.id}.trace.jsonl")
            Path(trace_dir).mkdir(parents=True, exist_ok=True)
            Path(trace_path).write_text(trace_to_jsonl(run.trace), encoding="utf-8")
        return ExampleResult(
            id=example.id,
            answer=run.answer,
            hit=exact_match(run.answer, example.gold_answers),
            cycles=run.cycles,
            replans=run.replans,
            trace_path=trace_path,
            error=run.error_note,
        )

    if concurrency > 1:
        with ThreadPoolExecutor(max_workers=concurrency) as pool:
            results = list(pool.map(one, examples))
    else:
        results = [one(ex) for ex in examples]
    results.sort(key=lambda r: r.id)
    hits = [r.hit for r in results]
    return Report(results=results, hits_at_1=sum(hits) / len(hits))
