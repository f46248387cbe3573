"""Dataset loading, exact match, batch evaluation, CLI surface."""

import json
import re

import pytest

from kgqa_engine.config import EngineConfig
from kgqa_engine.errors import ParseError
from kgqa_engine.harness import (
    evaluate_run,
    exact_match,
    load_dataset,
    normalize_answer,
)
from kgqa_engine.orchestrator import Engine
from kgqa_engine.pruning import HashingEmbedder

from conftest import StageBackend, make_store
from scenarios import FIXTURES, build_engine, load_meta


def write_simple(tmp_path, examples):
    path = tmp_path / "dataset.json"
    path.write_text(json.dumps(examples))
    return path


SIMPLE_TWO = [
    {
        "id": "q1",
        "question": "capital of France?",
        "topic_entities": [{"id": "m.0f", "label": "France"}],
        "answers": ["Paris"],
    },
    {"id": "q2", "question": "who?", "topic_entities": [], "answers": ["Someone", "Else"]},
]


class TestLoadDataset:
    def test_simple_in_file_order(self, tmp_path):
        examples = load_dataset(write_simple(tmp_path, SIMPLE_TWO), "simple")
        assert [e.id for e in examples] == ["q1", "q2"]
        assert examples[0].topic_entities == [("m.0f", "France")]
        assert examples[1].gold_answers == ["Someone", "Else"]

    def test_empty_gold_rejected(self, tmp_path):
        bad = [{"id": "x", "question": "q", "topic_entities": [], "answers": []}]
        with pytest.raises(ParseError):
            load_dataset(write_simple(tmp_path, bad), "simple")

    def test_duplicate_ids_rejected_by_name(self, tmp_path):
        bad = SIMPLE_TWO + [SIMPLE_TWO[0]]
        with pytest.raises(ParseError, match="q1"):
            load_dataset(write_simple(tmp_path, bad), "simple")

    def test_grailqa_mapping(self, tmp_path):
        doc = [
            {
                "qid": "g1",
                "question": "what river?",
                "answer": [{"answer_argument": "m.0x", "entity_name": "The River"}],
                "graph_query": {
                    "nodes": [
                        {"node_type": "entity", "id": "m.0topic", "friendly_name": "Topic"},
                        {"node_type": "class", "id": "river"},
                    ]
                },
            }
        ]
        (tmp_path / "g.json").write_text(json.dumps(doc))
        examples = load_dataset(tmp_path / "g.json", "grailqa")
        assert examples[0].topic_entities == [("m.0topic", "Topic")]
        assert examples[0].gold_answers == ["The River"]

    def test_cwq_mapping_includes_aliases(self, tmp_path):
        doc = [
            {
                "ID": "c1",
                "question": "who?",
                "topic_entity": {"m.0a": "Alpha"},
                "answers": [{"answer": "Bob", "aliases": ["Robert"]}],
            }
        ]
        (tmp_path / "c.json").write_text(json.dumps(doc))
        examples = load_dataset(tmp_path / "c.json", "cwq")
        assert examples[0].gold_answers == ["Bob", "Robert"]
        assert examples[0].topic_entities == [("m.0a", "Alpha")]

    def test_webqsp_mapping(self, tmp_path):
        doc = {
            "Questions": [
                {
                    "QuestionId": "w1",
                    "RawQuestion": "where?",
                    "Parses": [
                        {
                            "TopicEntityMid": "m.0t",
                            "TopicEntityName": "Topic",
                            "Answers": [{"EntityName": "Paris", "AnswerArgument": "m.0p"}],
                        }
                    ],
                }
            ]
        }
        (tmp_path / "w.json").write_text(json.dumps(doc))
        examples = load_dataset(tmp_path / "w.json", "webqsp")
        assert examples[0].topic_entities == [("m.0t", "Topic")]
        assert examples[0].gold_answers == ["Paris"]

    def test_unknown_format(self, tmp_path):
        with pytest.raises(ValueError):
            load_dataset(write_simple(tmp_path, SIMPLE_TWO), "nope")


def oracle_normalize(text):
    """Independent reference normalization written with str methods only."""
    s = text.strip()
    while len(s) >= 2 and s[0] == s[-1] and s[0] in ("'", '"'):
        s = s[1:-1].strip()
    return " ".join(s.split()).lower()


class TestExactMatch:
    def test_case_fold(self):
        assert exact_match("Barack Obama", ["barack obama"]) == 1

    def test_miss(self):
        assert exact_match("Paris", ["London"]) == 0

    def test_whitespace_collapse(self):
        assert exact_match("  Niagara  Falls ", ["Niagara Falls"]) == 1
        assert oracle_normalize("  Niagara  Falls ") == normalize_answer("  Niagara  Falls ")

    def test_quote_stripping(self):
        assert exact_match('"Paris"', ["Paris"]) == 1
        assert exact_match("'Paris'", ["paris"]) == 1

    def test_agrees_with_oracle_on_fuzzed_pairs(self):
        import random

        rng = random.Random(11)
        alphabet = " \t'\"abcXYZ  09-"
        for _ in range(500):
            text = "".join(rng.choice(alphabet) for _ in range(rng.randrange(0, 20)))
            assert normalize_answer(text) == oracle_normalize(text)


class TestEvaluateRun:
    def scripted_engine_factory(self, answers):
        """Each example gets a fresh engine answering from a canned map."""

        def factory(example):
            backend = StageBackend(
                {
                    "evaluate": f"DECISION: Finish\nANSWER: {answers[example.id]}",
                    "answer": f"ANSWER: {answers[example.id]}",
                }
            )
            store = make_store([("e", "r", "x")], labels={"e": "E"})
            return Engine(backend=backend, kg=store, embedder=HashingEmbedder(), config=EngineConfig())

        return factory

    def dataset(self, tmp_path, n=4):
        examples = [
            {
                "id": f"q{i}",
                "question": f"question {i}?",
                "topic_entities": [{"id": "e", "label": "E"}],
                "answers": [f"gold{i}"],
            }
            for i in range(n)
        ]
        return load_dataset(write_simple(tmp_path, examples), "simple")

    def test_aggregate_is_mean(self, tmp_path):
        examples = self.dataset(tmp_path, 4)
        answers = {"q0": "gold0", "q1": "gold1", "q2": "gold2", "q3": "wrong"}
        report = evaluate_run(examples, engine_factory=self.scripted_engine_factory(answers))
        assert report.hits_at_1 == pytest.approx(0.75)
        assert [r.hit for r in report.results] == [1, 1, 1, 0]

    def test_failing_example_isolated(self, tmp_path):
        examples = self.dataset(tmp_path, 3)

        def factory(example):
            if example.id == "q1":
                raise RuntimeError("engine exploded")
            return self.scripted_engine_factory({e.id: f"gold{e.id[1:]}" for e in examples})(example)

        report = evaluate_run(examples, engine_factory=factory)
        by_id = {r.id: r for r in report.results}
        assert by_id["q1"].hit == 0 and "exploded" in by_id["q1"].error
        assert by_id["q0"].hit == 1 and by_id["q2"].hit == 1

    def test_empty_dataset_flagged_undefined(self):
        report = evaluate_run([], engine_factory=lambda e: None)
        assert report.undefined

    def test_trace_files_written(self, tmp_path):
        examples = self.dataset(tmp_path, 2)
        answers = {"q0": "gold0", "q1": "gold1"}
        report = evaluate_run(
            examples,
            engine_factory=self.scripted_engine_factory(answers),
            trace_dir=str(tmp_path / "traces"),
        )
        for r in report.results:
            assert (tmp_path / "traces" / f"{r.id}.trace.jsonl").exists()

    def test_concurrent_matches_serial(self, tmp_path):
        examples = self.dataset(tmp_path, 6)
        answers = {f"q{i}": f"gold{i}" for i in range(6)}
        serial = evaluate_run(examples, engine_factory=self.scripted_engine_factory(answers))
        threaded = evaluate_run(
            examples, engine_factory=self.scripted_engine_factory(answers), concurrency=4
        )
        assert [r.to_dict() | {"trace_path": None} for r in serial.results] == [
            r.to_dict() | {"trace_path": None} for r in threaded.results
        ]


class TestCli:
    def test_run_command(self, capsys):
        from kgqa_engine.cli import main

        fixture = FIXTURES / "happy_path"
        code = main(
            [
                "run",
                "--question",
                load_meta("happy_path")["question"],
                "--topic-entity",
                "m.0nile",
                "--kg-file",
                str(fixture / "kg.tsv"),
                "--script",
                str(fixture / "script.json"),
            ]
        )
        assert code == 0
        assert capsys.readouterr().out.strip() == "Cairo"

    def test_bench_command_and_report(self, tmp_path, capsys):
        from kgqa_engine.cli import main

        fixture = FIXTURES / "path_fix"
        dataset = [
            {
                "id": "eiffel",
                "question": load_meta("path_fix")["question"],
                "topic_entities": [{"id": "m.0eiffel", "label": "Eiffel Tower"}],
                "answers": ["Paris"],
            }
        ]
        ds = write_simple(tmp_path, dataset)
        code = main(
            [
                "bench",
                "--dataset",
                str(ds),
                "--format",
                "simple",
                "--kg-file",
                str(fixture / "kg.tsv"),
                "--script",
                str(fixture / "script.json"),
                "--out-dir",
                str(tmp_path / "out"),
            ]
        )
        out = capsys.readouterr().out
        assert code == 0
        assert "Hits@1: 1.0000" in out
        report = json.loads((tmp_path / "out" / "report.json").read_text())
        assert report["hits_at_1"] == 1.0
        assert (tmp_path / "out" / "eiffel.trace.jsonl").exists()

    def test_bench_empty_dataset_exit_2(self, tmp_path, capsys):
        from kgqa_engine.cli import main

        ds = write_simple(tmp_path, [])
        code = main(["bench", "--dataset", str(ds), "--kg-file", "unused", "--script", "unused"])
        assert code == 2

    def test_bench_invalid_dataset_exit_2(self, tmp_path):
        from kgqa_engine.cli import main

        path = tmp_path / "bad.json"
        path.write_text("{not json")
        assert main(["bench", "--dataset", str(path), "--kg-file", "x", "--script", "x"]) == 2

    def test_replay_command(self, tmp_path, capsys):
        from kgqa_engine.cli import main

        fixture = FIXTURES / "replan"
        meta = load_meta("replan")
        code = main(
            [
                "run",
                "--question",
                meta["question"],
                "--topic-entity",
                "m.0danube",
                "--kg-file",
                str(fixture / "kg.tsv"),
                "--script",
                str(fixture / "script.json"),
                "--out-dir",
                str(tmp_path),
                "--max-path-corrections",
                "1",
            ]
        )
        assert code == 0
        code = main(
            [
                "replay",
                "--trace",
                str(tmp_path / "run.trace.jsonl"),
                "--kg-file",
                str(fixture / "kg.tsv"),
            ]
        )
        assert code == 0
        lines = capsys.readouterr().out.strip().splitlines()
        assert lines[-1] == "Romania"


class TestConfig:
    def test_file_env_flag_precedence(self, tmp_path):
        cfg = tmp_path / "engine.cfg"
        cfg.write_text("replan_limit = 4\nprune_threshold = 10\n# comment\n")
        config = EngineConfig.load(
            str(cfg),
            env={"KGQA_PRUNE_THRESHOLD": "20"},
            overrides={"max_total_cycles": 9},
        )
        assert config.replan_limit == 4
        assert config.prune_threshold == 20  # env beats file
        assert config.max_total_cycles == 9  # flag beats both

    def test_unknown_key_rejected(self, tmp_path):
        cfg = tmp_path / "engine.cfg"
        cfg.write_text("nonsense = 1\n")
        with pytest.raises(ValueError):
            EngineConfig.load(str(cfg), env={})

    def test_validation(self):
        with pytest.raises(ValueError):
            EngineConfig(replan_limit=0).validate()
        with pytest.raises(ValueError):
            EngineConfig(max_total_cycles=3).validate()
