"""Grow an ASP theory by prompting a backend, checked by the solver at every step."""

from __future__ import annotations

import enum
import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import NamedTuple, Optional

from .asp_core import Program, parse_program, write_program
from .dataset import Example, write_corpus
from .llm import Backend, BackendError, Role, Transcript, extract_rules, respond
from .solver import OutcomeKind, SolverConfig, SolverError, SolverOutcome, check_answer, solve

log = logging.getLogger(__name__)

SYNTAX_MEND_HEADER = "The solver rejected the program with this error:"
SEMANTIC_MEND_HEADER = "The rules run, but they give wrong answers."

GUIDELINES = (
    "1. Only output the new ASP Rules.",
    "2. Do not add facts as rules.",
    "3. New rules should be as general as possible, i.e., have a low number of constants and high number of variables.",
    "4. Do not output any natural language.",
)


@dataclass(frozen=True)
class DistillParams:
    r: int = 1
    m: int = 1
    mending_enabled: bool = True
    batch_size: int = 1
    no_facts_guard: bool = True

    def __post_init__(self):
        if self.r < 1:
            raise ValueError("r must be at least 1")
        if self.m < 0:
            raise ValueError("m must be non-negative")
        if self.batch_size < 1:
            raise ValueError("batch_size must be at least 1")

    @property
    def call_budget(self) -> int:
        """Most backend calls one batch may cost."""
        if not self.mending_enabled:
            return self.r
        return self.r * (1 + 2 * self.m)


@dataclass
class Stats:
    llm_calls: int = 0
    mends_syntax: int = 0
    mends_semantic: int = 0
    regressions_failed: int = 0
    accepted: int = 0
    rejected: int = 0
    already_correct: int = 0

    def to_dict(self) -> dict:
        return asdict(self)


class DistillKind(str, enum.Enum):
    ACCEPTED = "accepted"
    REJECTED_REGRESSION = "rejected_regression"
    REJECTED_SEMANTIC = "rejected_semantic"
    REJECTED_SYNTAX = "rejected_syntax"
    ALREADY_CORRECT = "already_correct"


@dataclass(frozen=True)
class DistillOutcome:
    kind: DistillKind
    added_rules: tuple = ()
    detail: str = ""
    example_ids: tuple = ()
    llm_calls: int = 0
    mends_syntax: int = 0
    mends_semantic: int = 0
    attempts: int = 0

    def __post_init__(self):
        if bool(self.added_rules) != (self.kind is DistillKind.ACCEPTED):
            raise ValueError("added_rules must be nonempty exactly for accepted outcomes")

    def to_record(self) -> dict:
        rec = asdict(self)
        rec["kind"] = self.kind.value
        rec["added_rules"] = list(self.added_rules)
        rec["example_ids"] = list(self.example_ids)
        return rec


@dataclass
class SessionState:
    theory: Program
    transcript: Transcript
    params: DistillParams = field(default_factory=DistillParams)
    seen: list = field(default_factory=list)
    stats: Stats = field(default_factory=Stats)
    jobs: int = 1


# --------------------------------------------------------------------------
# preprompt


@dataclass(frozen=True)
class TaskDescription:
    """The domain-specific parts of the preprompt."""

    domain: str = "visual question answering over synthetic scenes of simple 3D objects"
    scene_excerpt: str = (
        "obj(0). attr(0,size,large). attr(0,color,cyan). attr(0,material,metal). attr(0,shape,cylinder).\n"
        "obj(1). attr(1,size,small). attr(1,color,yellow). attr(1,material,rubber). attr(1,shape,cube).\n"
        "left(0,1)."
    )
    scene_explanation: str = (
        "obj(I) declares object I. attr(I,Category,Value) gives one attribute of I, where Category is "
        "size, color, material or shape. left(A,B) says that A is left of B."
    )
    question_excerpt: str = "end(3). count(3,2). filter_cube(2,1). filter_yellow(1,0). scene(0)."
    question_explanation: str = (
        "A question is a tree of operations. Each fact is one operation: the first argument is the index "
        "of its output and the remaining arguments are the indices of its inputs. scene(0) is the set of "
        "all objects and end(N) marks the final operation. The example counts the yellow cubes."
    )
    answer_predicate: str = "ans"


def build_preprompt(init: Program, task: Optional[TaskDescription] = None) -> str:
    task = task or TaskDescription()
    theory = init.serialize().rstrip("\n")
    theory_section = theory if theory else "(The initial theory is empty. It contains no rules yet.)"
    ans = task.answer_predicate
    sections = [
        (
            "Introduction",
            f"You help maintain a logic program that answers questions in {task.domain}. "
            "Questions and scenes are given as facts, and the program derives the answer from them.",
        ),
        (
            "Language Syntax",
            "Programs are written in Answer Set Programming (clingo syntax). A rule has the form\n"
            "head :- body_1, ..., body_n.\n"
            "Variables start with an uppercase letter and constants with a lowercase letter or a digit. "
            "`not b` is negation as failure. A rule without a head is a constraint and a rule without a "
            "body is a fact. Every statement ends with a period. Aggregates such as "
            "N = #count{I : p(I)} are allowed in rule bodies.",
        ),
        (
            "Scene and Question Explanation",
            f"{task.scene_explanation}\nExample scene:\n{task.scene_excerpt}\n\n"
            f"{task.question_explanation}\nExample question:\n{task.question_excerpt}",
        ),
        (
            "Answer Format",
            f"The answer must be derived as a single atom {ans}(V), where V is the answer constant, "
            f"for example {ans}(yes), {ans}(3) or {ans}(red). The predicate {ans}/1 must not be used for anything else.",
        ),
        ("Initial Theory", theory_section),
        (
            "Task Explanation",
            "Keep the theory up to date so that it answers every question it is given. You will receive one or "
            "more questions together with their expected answers. The current theory does not answer them "
            "correctly yet, so add rules that make it do so.\n\n"
            "Strictly follow these guidelines:\n" + "\n".join(GUIDELINES),
        ),
    ]
    return "\n\n".join(f"## {i}. {title}\n{body}" for i, (title, body) in enumerate(sections, 1)) + "\n"


# --------------------------------------------------------------------------
# prompts


def _facts(program: Program) -> str:
    return " ".join(r.source_text for r in program.rules)


def render_example_prompt(ex: Example) -> str:
    return (
        "The current theory does not answer this question correctly.\n"
        f"Question:\n{_facts(ex.question)}\n"
        f"Scene:\n{_facts(ex.scene)}\n"
        f"Expected answer: {ex.expected_answer}"
    )


def render_batch_prompt(batch) -> str:
    """Question encodings and answers only; scenes are left out on purpose."""
    parts = [f"The current theory does not answer these {len(batch)} questions correctly."]
    for i, ex in enumerate(batch, 1):
        parts.append(f"Question {i}:\n{_facts(ex.question)}\nExpected answer: {ex.expected_answer}")
    return "\n\n".join(parts)


def render_syntax_mend(message: str) -> str:
    return f"{SYNTAX_MEND_HEADER}\n{message}\nRevise your rules so that the program is accepted."


def render_semantic_mend(failures, batched: bool) -> str:
    lines = [SEMANTIC_MEND_HEADER]
    for i, ex, outcome in failures:
        prefix = f"Question {i}: " if batched else ""
        lines.append(f"{prefix}the solver answered {outcome.describe()}, but the expected answer is {ex.expected_answer}.")
    lines.append("Revise your rules.")
    return "\n".join(lines)


# --------------------------------------------------------------------------
# checking


def _solve_safely(theory: Program, ex: Example, cfg: SolverConfig) -> SolverOutcome:
    try:
        return solve(theory, ex.question, ex.scene, cfg)
    except SolverError as exc:
        log.error("solver failed on %s: %s", ex.id, exc)
        return SolverOutcome(OutcomeKind.SYNTAX_ERROR, message=f"solver failure: {exc}")


def solve_examples(theory: Program, examples, cfg: SolverConfig, jobs: int = 1) -> list[SolverOutcome]:
    """Solve each example against ``theory``; results follow input order."""
    examples = list(examples)
    if jobs <= 1 or len(examples) <= 1:
        return [_solve_safely(theory, ex, cfg) for ex in examples]
    with ThreadPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(lambda ex: _solve_safely(theory, ex, cfg), examples))


def regression_test(theory: Program, seen, cfg: SolverConfig, jobs: int = 1) -> tuple[bool, list[str]]:
    seen = list(seen)
    outcomes = solve_examples(theory, seen, cfg, jobs)
    failing = [ex.id for ex, out in zip(seen, outcomes) if not check_answer(out, ex.expected_answer)]
    return not failing, failing


# --------------------------------------------------------------------------
# distillation


def distill_example(state: SessionState, ex: Example, backend: Backend, cfg: SolverConfig) -> DistillOutcome:
    return distill_batch(state, [ex], backend, cfg)


def distill_batch(state: SessionState, batch, backend: Backend, cfg: SolverConfig) -> DistillOutcome:
    batch = list(batch)
    params = state.params
    if not 1 <= len(batch) <= params.batch_size:
        raise ValueError(f"batch of {len(batch)} does not fit batch size {params.batch_size}")
    ids = tuple(ex.id for ex in batch)
    before = solve_examples(state.theory, batch, cfg, state.jobs)
    if all(check_answer(o, ex.expected_answer) for ex, o in zip(batch, before)):
        state.seen.extend(batch)
        state.stats.already_correct += 1
        return DistillOutcome(DistillKind.ALREADY_CORRECT, example_ids=ids, detail="answered by the current theory")

    batched = params.batch_size > 1
    prompt = render_batch_prompt(batch) if batched else render_example_prompt(batch[0])
    calls = syntax_total = semantic_total = 0
    kind, detail = DistillKind.REJECTED_SEMANTIC, ""

    def ask(text: str) -> list[str]:
        nonlocal calls
        calls += 1
        state.stats.llm_calls += 1
        return extract_rules(respond(backend, state.transcript, text), params.no_facts_guard)

    attempt = 0
    for attempt in range(1, params.r + 1):
        rules = ask(prompt)
        syntax_used = semantic_used = 0
        while True:
            candidate = state.theory.union(parse_program("\n".join(rules)))
            outcomes = solve_examples(candidate, batch, cfg, state.jobs)
            syntax = next((o for o in outcomes if o.kind is OutcomeKind.SYNTAX_ERROR), None)
            if syntax is not None:
                kind, detail = DistillKind.REJECTED_SYNTAX, syntax.message or "syntax error"
                if params.mending_enabled and syntax_used < params.m:
                    syntax_used += 1
                    syntax_total += 1
                    state.stats.mends_syntax += 1
                    rules = ask(render_syntax_mend(detail))
                    continue
                break
            failures = [
                (i, ex, o) for i, (ex, o) in enumerate(zip(batch, outcomes), 1) if not check_answer(o, ex.expected_answer)
            ]
            if failures:
                kind = DistillKind.REJECTED_SEMANTIC
                detail = "; ".join(f"{ex.id}: got {o.describe()}, expected {ex.expected_answer}" for _, ex, o in failures)
                if params.mending_enabled and semantic_used < params.m:
                    semantic_used += 1
                    semantic_total += 1
                    state.stats.mends_semantic += 1
                    rules = ask(render_semantic_mend(failures, batched))
                    continue
                break
            passed, failing = regression_test(candidate, state.seen, cfg, state.jobs)
            if not passed:
                kind, detail = DistillKind.REJECTED_REGRESSION, "breaks seen examples: " + ", ".join(failing)
                state.stats.regressions_failed += 1
                break
            added = tuple(r.source_text for r in candidate.rules if r not in state.theory)
            state.theory = candidate.with_label(state.theory.label)
            state.seen.extend(batch)
            state.stats.accepted += 1
            return DistillOutcome(
                DistillKind.ACCEPTED, added, f"accepted on attempt {attempt}", ids, calls, syntax_total, semantic_total, attempt
            )
    state.stats.rejected += 1
    return DistillOutcome(kind, (), detail, ids, calls, syntax_total, semantic_total, attempt)


class SessionResult(NamedTuple):
    theory: Program
    outcomes: list
    transcript: Transcript
    stats: Stats
    error: Optional[str] = None


class RunLog:
    """Files of one distillation run, written as the run progresses."""

    def __init__(self, directory):
        self.directory = Path(directory)
        self.directory.mkdir(parents=True, exist_ok=True)
        self.outcomes_path = self.directory / "outcomes.jsonl"
        self.outcomes_path.write_text("", encoding="utf-8")

    @property
    def transcript_path(self) -> Path:
        return self.directory / "transcript.jsonl"

    def start(self, params_record: dict, init: Program, examples) -> None:
        with open(self.directory / "params.json", "w", encoding="utf-8") as fh:
            json.dump(params_record, fh, indent=2, sort_keys=True)
            fh.write("\n")
        write_program(init, self.directory / "theory_init.lp")
        write_corpus(examples, self.directory / "examples.jsonl")

    def outcome(self, index: int, outcome: DistillOutcome, budget: int) -> None:
        rec = {"batch": index, **outcome.to_record(), "call_budget": budget}
        with open(self.outcomes_path, "a", encoding="utf-8") as fh:
            fh.write(json.dumps(rec, sort_keys=True) + "\n")

    def finish(self, theory: Program, stats: Stats, error: Optional[str]) -> None:
        write_program(theory, self.directory / "theory_final.lp")
        with open(self.directory / "summary.json", "w", encoding="utf-8") as fh:
            json.dump({"stats": stats.to_dict(), "error": error}, fh, indent=2, sort_keys=True)
            fh.write("\n")


def run_session(
    init: Program,
    examples,
    backend: Backend,
    cfg: SolverConfig,
    params: Optional[DistillParams] = None,
    task: Optional[TaskDescription] = None,
    log_dir=None,
    metadata: Optional[dict] = None,
    jobs: int = 1,
) -> SessionResult:
    """Present ``examples`` in consecutive batches and return the grown theory.

    When ``log_dir`` is given, parameters, the initial theory and the examples
    are written before the first prompt; the transcript and the outcomes are
    written as they happen.
    """
    params = params or DistillParams()
    examples = list(examples)
    preprompt = build_preprompt(init, task)
    run_log = RunLog(log_dir) if log_dir is not None else None
    transcript = Transcript(log_path=run_log.transcript_path if run_log else None)
    if run_log is not None:
        run_log.start(
            {
                "params": asdict(params),
                "solver": {k: (list(v) if isinstance(v, tuple) else v) for k, v in asdict(cfg).items()},
                "backend": backend.describe(),
                "examples": [ex.id for ex in examples],
                "session_id": transcript.session_id,
                "preprompt": preprompt,
                **(metadata or {}),
            },
            init,
            examples,
        )
    transcript.append(Role.SYSTEM, preprompt)
    state = SessionState(init, transcript, params, jobs=jobs)
    outcomes: list[DistillOutcome] = []
    error = None
    b = params.batch_size
    try:
        for index, start in enumerate(range(0, len(examples), b)):
            outcome = distill_batch(state, examples[start:start + b], backend, cfg)
            outcomes.append(outcome)
            if run_log is not None:
                run_log.outcome(index, outcome, params.call_budget)
    except (BackendError, SolverError, OSError) as exc:  # keep the progress made so far
        error = f"{type(exc).__name__}: {exc}"
        log.error("session aborted: %s", error)
    if run_log is not None:
        run_log.finish(state.theory, state.stats, error)
    return SessionResult(state.theory, outcomes, transcript, state.stats, error)
