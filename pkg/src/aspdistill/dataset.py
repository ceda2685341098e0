"""Question/scene/answer examples, functional-program translation and sampling."""

from __future__ import annotations

import enum
import json
import random
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from .asp_core import Literal, Program, Rule, RuleKind, parse_program, predicates_of


class FormatError(ValueError):
    def __init__(self, index: int, message: str):
        super().__init__(f"record {index}: {message}")
        self.index = index
        self.message = message


class MalformedTree(ValueError):
    pass


class EmptyBucket(ValueError):
    pass


class UnknownPredicate(KeyError):
    pass


def _facts_only(program: Program) -> bool:
    return all(r.kind is RuleKind.FACT for r in program.rules)


@dataclass
class FunctionalNode:
    op: str
    inputs: list = field(default_factory=list)

    @classmethod
    def from_dict(cls, data: dict) -> "FunctionalNode":
        return cls(data["op"], [cls.from_dict(child) for child in data.get("inputs", [])])

    def to_dict(self) -> dict:
        out: dict = {"op": self.op}
        if self.inputs:
            out["inputs"] = [child.to_dict() for child in self.inputs]
        return out


@dataclass(frozen=True)
class Example:
    id: str
    question: Program
    scene: Program
    expected_answer: str
    functional: Optional[FunctionalNode] = field(default=None, compare=False)
    question_predicates: frozenset = field(init=False, compare=False)
    predicate_count: int = field(init=False, compare=False)

    def __post_init__(self):
        if not _facts_only(self.question):
            raise ValueError(f"{self.id}: question must contain facts only")
        if not _facts_only(self.scene):
            raise ValueError(f"{self.id}: scene must contain facts only")
        object.__setattr__(self, "question_predicates", frozenset(predicates_of(self.question)))
        object.__setattr__(self, "predicate_count", len(self.question))

    @property
    def predicate_names(self) -> frozenset:
        return frozenset(name for name, _ in self.question_predicates)

    def to_record(self) -> dict:
        record = {
            "id": self.id,
            "question_asp": self.question.serialize(),
            "scene_asp": self.scene.serialize(),
            "answer": self.expected_answer,
        }
        if self.functional is not None:
            record["functional"] = self.functional.to_dict()
        return record


def translate_functional_to_asp(root: FunctionalNode) -> Program:
    """Encode an operation tree as indexed facts.

    Every ``scene`` leaf gets index 0; the other nodes are numbered from 1 in
    post-order.  Facts are emitted as ``end(root)`` followed by the nodes in
    pre-order (inputs left to right) and finally ``scene(0)``.
    """
    index: dict[int, int] = {}
    on_path: set[int] = set()
    counter = 0

    def number(node: FunctionalNode) -> int:
        nonlocal counter
        key = id(node)
        if key in on_path:
            raise MalformedTree(f"cycle through {node.op!r}")
        if node.op == "scene":
            if node.inputs:
                raise MalformedTree("scene must be a leaf")
            index[key] = 0
            return 0
        if key in index:
            raise MalformedTree(f"node {node.op!r} has more than one parent")
        if not node.inputs:
            raise MalformedTree(f"leaf {node.op!r} is not a scene")
        on_path.add(key)
        for child in node.inputs:
            number(child)
        on_path.discard(key)
        counter += 1
        index[key] = counter
        return counter

    root_index = number(root)
    facts = [Rule.make(Literal("end", (root_index,)))]

    def emit(node: FunctionalNode):
        if node.op == "scene":
            return
        terms = (index[id(node)],) + tuple(index[id(c)] for c in node.inputs)
        facts.append(Rule.make(Literal(node.op, terms)))
        for child in node.inputs:
            emit(child)

    emit(root)
    facts.append(Rule.make(Literal("scene", (0,))))
    return Program(tuple(facts))


# --------------------------------------------------------------------------
# corpus files


def _example_from_record(index: int, record: dict) -> Example:
    if not isinstance(record, dict):
        raise FormatError(index, "record is not an object")
    for key in ("id", "scene_asp", "answer"):
        if key not in record:
            raise FormatError(index, f"missing field {key!r}")
    functional = None
    if "functional" in record and record["functional"] is not None:
        try:
            functional = FunctionalNode.from_dict(record["functional"])
        except (KeyError, TypeError) as exc:
            raise FormatError(index, f"bad functional tree: {exc}") from exc
    if "question_asp" in record:
        question = parse_program(record["question_asp"])
    elif functional is not None:
        question = translate_functional_to_asp(functional)
    else:
        raise FormatError(index, "missing field 'question_asp'")
    scene = parse_program(record["scene_asp"])
    if not _facts_only(question):
        raise FormatError(index, "question must contain facts only")
    if not _facts_only(scene):
        raise FormatError(index, "scene must contain facts only")
    return Example(str(record["id"]), question, scene, str(record["answer"]), functional)


def load_corpus(path) -> list[Example]:
    """Load a line-delimited corpus file, or every ``*.jsonl`` file of a directory."""
    path = Path(path)
    files = sorted(path.glob("*.jsonl")) if path.is_dir() else [path]
    examples = []
    index = 0
    for file in files:
        with open(file, encoding="utf-8") as fh:
            for line in fh:
                if not line.strip():
                    continue
                try:
                    record = json.loads(line)
                except json.JSONDecodeError as exc:
                    raise FormatError(index, f"invalid JSON: {exc.msg}") from exc
                examples.append(_example_from_record(index, record))
                index += 1
    return examples


def write_corpus(examples, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for ex in examples:
            fh.write(json.dumps(ex.to_record(), sort_keys=True) + "\n")


# --------------------------------------------------------------------------
# grouping and sampling


class Strategy(str, enum.Enum):
    PREDICATE_COUNT = "count"
    PREDICATE_RELEVANCE = "relevance"


@dataclass(frozen=True)
class SampleSpec:
    strategy: Strategy = Strategy.PREDICATE_COUNT
    k: int = 1
    seed: int = 0
    restrict_to_predicate: Optional[str] = None

    def __post_init__(self):
        if self.k < 1:
            raise ValueError("k must be at least 1")
        object.__setattr__(self, "strategy", Strategy(self.strategy))


def group_by_predicate_count(corpus) -> dict[int, list[Example]]:
    groups: dict[int, list[Example]] = {}
    for ex in corpus:
        groups.setdefault(ex.predicate_count, []).append(ex)
    return {key: groups[key] for key in sorted(groups)}


def group_by_predicate_relevance(corpus) -> dict[str, list[Example]]:
    groups: dict[str, list[Example]] = {}
    for ex in corpus:
        for name in sorted(ex.predicate_names):
            groups.setdefault(name, []).append(ex)
    return {key: groups[key] for key in sorted(groups)}


def _draw(bucket: list, k: int, rng: random.Random, key) -> list:
    if not bucket:
        raise EmptyBucket(f"bucket {key!r} is empty")
    if len(bucket) >= k:
        return rng.sample(bucket, k)
    return rng.choices(bucket, k=k)


def sample(corpus, spec: SampleSpec) -> list[Example]:
    """Draw examples for distillation.

    Predicate count draws ``k`` per question length, shortest first.
    Predicate relevance draws exactly ``k``: from the bucket of
    ``restrict_to_predicate`` when set, otherwise one bucket at a time in
    round-robin order.  Buckets smaller than ``k`` are drawn with replacement.
    """
    rng = random.Random(spec.seed)
    if spec.strategy is Strategy.PREDICATE_COUNT:
        out = []
        for key, bucket in group_by_predicate_count(corpus).items():
            out.extend(_draw(bucket, spec.k, rng, key))
        return out
    groups = group_by_predicate_relevance(corpus)
    if spec.restrict_to_predicate is not None:
        if spec.restrict_to_predicate not in groups:
            raise UnknownPredicate(spec.restrict_to_predicate)
        return _draw(groups[spec.restrict_to_predicate], spec.k, rng, spec.restrict_to_predicate)
    keys = list(groups)
    if not keys:
        return []
    return [rng.choice(groups[keys[i % len(keys)]]) for i in range(spec.k)]
