"""Run an external ASP system as a child process and classify what it reports."""

from __future__ import annotations

import enum
import importlib.util
import json
import logging
import re
import shlex
import shutil
import subprocess
import sys
import threading
import time
from collections import OrderedDict
from dataclasses import dataclass, field
from typing import Optional

from .asp_core import AspError, Program, enumerate_answer_sets, format_interpretation, parse_atom

log = logging.getLogger(__name__)

MESSAGE_LIMIT = 2000


class SolverError(Exception):
    pass


class ExecutableNotFound(SolverError):
    pass


class ProcessFailure(SolverError):
    pass


class OutcomeKind(str, enum.Enum):
    SYNTAX_ERROR = "syntax_error"
    NO_ANSWER_SET = "no_answer_set"
    ANSWERED = "answered"
    TIMEOUT = "timeout"


@dataclass(frozen=True)
class SolverOutcome:
    kind: OutcomeKind
    message: Optional[str] = None
    answers: tuple = ()
    elapsed: float = 0.0  # milliseconds
    models: tuple = field(default=(), compare=False)  # atom-string sets, optimal first

    def describe(self) -> str:
        """Short human-readable rendering used in mending prompts and logs."""
        if self.kind is OutcomeKind.ANSWERED:
            return self.answers[0]
        if self.kind is OutcomeKind.NO_ANSWER_SET:
            return "no answer (no ans atom was derived)"
        if self.kind is OutcomeKind.TIMEOUT:
            return "no answer (the solver timed out)"
        return "no answer (syntax error)"


@dataclass(frozen=True)
class SolverConfig:
    executable: str = "clingo"
    flags: tuple = ()
    timeout_ms: int = 10_000
    answer_predicate: str = "ans"
    output_format: str = "json"  # or "text"
    cache: bool = True

    def __post_init__(self):
        if self.timeout_ms <= 0:
            raise ValueError("timeout_ms must be positive")
        if self.output_format not in ("json", "text"):
            raise ValueError(f"unknown output format {self.output_format!r}")
        object.__setattr__(self, "flags", tuple(self.flags))


def resolve_command(cfg: SolverConfig) -> list[str]:
    """Turn ``cfg.executable`` into an argv prefix.

    A bare ``clingo`` that is not on PATH falls back to the ``clingo`` Python
    package's own command line (``python -m clingo``).
    """
    argv = shlex.split(cfg.executable)
    if not argv:
        raise ExecutableNotFound("empty solver executable")
    if shutil.which(argv[0]):
        return argv
    if argv == ["clingo"] and importlib.util.find_spec("clingo") is not None:
        return [sys.executable, "-m", "clingo"]
    raise ExecutableNotFound(f"solver executable not found: {cfg.executable}")


# --------------------------------------------------------------------------
# output parsing seam


@dataclass
class RawResult:
    result: str  # SATISFIABLE, UNSATISFIABLE, OPTIMUM FOUND, UNKNOWN
    models: list  # list of (atom strings, costs tuple)
    best_costs: Optional[tuple] = None


def parse_json_output(stdout: str) -> RawResult:
    data = json.loads(stdout)
    models = []
    for call in data.get("Call", []):
        for witness in call.get("Witnesses", []):
            models.append((tuple(witness.get("Value", [])), tuple(witness.get("Costs", ()))))
    best = data.get("Models", {}).get("Costs")
    return RawResult(data.get("Result", "UNKNOWN"), models, tuple(best) if best is not None else None)


_RESULTS = ("OPTIMUM FOUND", "UNSATISFIABLE", "SATISFIABLE", "UNKNOWN")


def parse_text_output(stdout: str) -> RawResult:
    lines = stdout.splitlines()
    models: list = []
    result = None
    i = 0
    while i < len(lines):
        line = lines[i].strip()
        if line.startswith("Answer:"):
            atoms_line = lines[i + 1] if i + 1 < len(lines) else ""
            models.append([tuple(split_atoms(atoms_line)), ()])
            i += 2
            continue
        if line.startswith("Optimization:") and models:
            models[-1][1] = tuple(int(x) for x in line.split(":", 1)[1].split())
        elif line in _RESULTS:
            result = line
        i += 1
    if result is None:
        raise ValueError("no result line in solver output")
    models = [(a, c) for a, c in models]
    best = None
    if result == "OPTIMUM FOUND" and models:
        best = min(c for _, c in models)
    return RawResult(result, models, best)


def split_atoms(line: str) -> list[str]:
    """Split a space-separated model line, respecting parentheses and quotes."""
    atoms, current, depth, quoted = [], [], 0, False
    prev = ""
    for ch in line.strip():
        if quoted:
            current.append(ch)
            if ch == '"' and prev != "\\":
                quoted = False
        elif ch == '"':
            quoted = True
            current.append(ch)
        elif ch == "(":
            depth += 1
            current.append(ch)
        elif ch == ")":
            depth -= 1
            current.append(ch)
        elif ch == " " and depth == 0:
            if current:
                atoms.append("".join(current))
                current = []
        else:
            current.append(ch)
        prev = ch
    if current:
        atoms.append("".join(current))
    return atoms


_ERROR_LINE = re.compile(r"^.*?:\d+:\d+(?:-\d+(?::\d+)?)?: error: ", re.M)


def extract_error_message(stderr: str) -> Optional[str]:
    """Collect the solver's ``error:`` diagnostics, or ``None`` when there are none."""
    lines = stderr.splitlines()
    picked: list[str] = []
    keep = False
    for line in lines:
        if _ERROR_LINE.match(line) or line.startswith("*** ERROR"):
            keep = not line.startswith("*** ERROR")
            if keep:
                picked.append(line)
            continue
        if keep:
            if not line.strip() or line.startswith("Traceback"):
                keep = False
                continue
            picked.append(line)
    if picked:
        return "\n".join(picked)[:MESSAGE_LIMIT]
    if "error" in stderr.lower():
        return stderr.strip()[:MESSAGE_LIMIT]
    return None


def normalize_atom(text: str) -> str:
    try:
        return str(parse_atom(text))
    except AspError:
        return text


def _answer_of(atoms: tuple, predicate: str) -> Optional[str]:
    values = []
    for text in atoms:
        try:
            lit = parse_atom(text)
        except AspError:
            continue
        if lit.predicate == predicate and lit.arity == 1:
            values.append(str(lit.terms[0]))
    if not values:
        return None
    return ";".join(sorted(values))


def _order_models(raw: RawResult) -> list[tuple]:
    seen = set()
    optimal, rest = [], []
    for atoms, costs in raw.models:
        key = frozenset(atoms)
        if raw.best_costs is not None and tuple(costs) == raw.best_costs:
            if key not in {frozenset(a) for a in optimal}:
                optimal.append(atoms)
        elif key not in seen:
            rest.append(atoms)
        seen.add(key)
    optimal_keys = {frozenset(a) for a in optimal}
    return optimal + [a for a in rest if frozenset(a) not in optimal_keys]


# --------------------------------------------------------------------------
# running


_cache: "OrderedDict[tuple, SolverOutcome]" = OrderedDict()
_cache_lock = threading.Lock()
_CACHE_SIZE = 8192


def clear_cache() -> None:
    with _cache_lock:
        _cache.clear()


def run_solver(text: str, cfg: SolverConfig, all_models: bool = True) -> SolverOutcome:
    """Solve the program ``text`` and classify the result."""
    key = (cfg, text, all_models)
    if cfg.cache:
        with _cache_lock:
            if key in _cache:
                _cache.move_to_end(key)
                return _cache[key]
    outcome = _run(text, cfg, all_models)
    if cfg.cache and outcome.kind is not OutcomeKind.TIMEOUT:
        with _cache_lock:
            _cache[key] = outcome
            while len(_cache) > _CACHE_SIZE:
                _cache.popitem(last=False)
    return outcome


def _run(text: str, cfg: SolverConfig, all_models: bool) -> SolverOutcome:
    argv = resolve_command(cfg)
    argv += ["--outf=2" if cfg.output_format == "json" else "--outf=0", "--opt-mode=optN"]
    argv += ["0" if all_models else "1"]
    argv += list(cfg.flags)
    start = time.perf_counter()
    try:
        proc = subprocess.Popen(
            argv,
            stdin=subprocess.PIPE,
            stdout=subprocess.PIPE,
            stderr=subprocess.PIPE,
            text=True,
            encoding="utf-8",
        )
    except OSError as exc:
        raise ExecutableNotFound(f"cannot start solver {argv[0]}: {exc}") from exc
    try:
        stdout, stderr = proc.communicate(text, timeout=cfg.timeout_ms / 1000)
    except subprocess.TimeoutExpired:
        proc.kill()
        proc.communicate()
        elapsed = (time.perf_counter() - start) * 1000
        log.warning("solver timed out after %.0f ms", elapsed)
        return SolverOutcome(OutcomeKind.TIMEOUT, elapsed=elapsed)
    elapsed = (time.perf_counter() - start) * 1000

    error = extract_error_message(stderr)
    if error is not None or proc.returncode == 65:
        return SolverOutcome(OutcomeKind.SYNTAX_ERROR, message=error or stderr.strip()[:MESSAGE_LIMIT] or "solver rejected the program", elapsed=elapsed)
    try:
        raw = parse_json_output(stdout) if cfg.output_format == "json" else parse_text_output(stdout)
    except ValueError as exc:
        raise ProcessFailure(f"unreadable solver output (exit {proc.returncode}): {stderr.strip()[:500]}") from exc
    if raw.result == "UNSATISFIABLE":
        return SolverOutcome(OutcomeKind.NO_ANSWER_SET, elapsed=elapsed)
    if raw.result == "UNKNOWN" and not raw.models:
        raise ProcessFailure(f"solver stopped without a result (exit {proc.returncode}): {stderr.strip()[:500]}")

    ordered = _order_models(raw)
    models = tuple(frozenset(normalize_atom(a) for a in atoms) for atoms in ordered)
    answers = tuple(a for a in (_answer_of(atoms, cfg.answer_predicate) for atoms in ordered) if a is not None)
    if not answers:
        return SolverOutcome(OutcomeKind.NO_ANSWER_SET, elapsed=elapsed, models=models)
    return SolverOutcome(OutcomeKind.ANSWERED, answers=answers, elapsed=elapsed, models=models)


def solve(theory: Program, question: Program, scene: Program, cfg: SolverConfig) -> SolverOutcome:
    text = theory.serialize() + question.serialize() + scene.serialize()
    return run_solver(text, cfg)


def normalize_answer(value: str) -> str:
    value = value.strip()
    if len(value) >= 2 and value[0] == value[-1] and value[0] in "\"'":
        value = value[1:-1]
    return value.strip().lower()


def check_answer(outcome: SolverOutcome, expected: str) -> bool:
    if outcome.kind is not OutcomeKind.ANSWERED:
        return False
    return normalize_answer(outcome.answers[0]) == normalize_answer(expected)


def enumerate_models(program: Program, cfg: SolverConfig) -> set[frozenset]:
    outcome = run_solver(program.serialize(), cfg)
    if outcome.kind is OutcomeKind.SYNTAX_ERROR:
        raise ProcessFailure(f"solver rejected the program: {outcome.message}")
    if outcome.kind is OutcomeKind.TIMEOUT:
        raise ProcessFailure("solver timed out during enumeration")
    return set(outcome.models)


def cross_validate(theory: Program, cfg: SolverConfig) -> bool:
    """Compare the solver's answer sets with the brute-force enumeration."""
    expected = {format_interpretation(i) for i in enumerate_answer_sets(theory)}
    return enumerate_models(theory, cfg) == expected
