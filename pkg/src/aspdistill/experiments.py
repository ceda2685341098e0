"""Mutate a theory, let a backend restore it, and measure accuracy over repeated runs."""

from __future__ import annotations

import enum
import json
import logging
import statistics
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Callable, Optional, Union

from .asp_core import Program, predicates_of, remove_random_fraction, remove_rules_mentioning
from .dataset import SampleSpec, Strategy, sample
from .distiller import DistillKind, DistillParams, TaskDescription, run_session, solve_examples
from .llm import Backend, OracleBackend, OracleFault
from .solver import SolverConfig, check_answer

log = logging.getLogger(__name__)

DEFAULT_SEEDS = (0, 1, 2, 3, 4)

# a backend, or a factory called per run with (full theory, mutated theory, seed)
BackendSource = Union[Backend, Callable[[Program, Program, int], Backend]]


class ExperimentKind(str, enum.Enum):
    PREDICATE_REMOVAL = "predicate-removal"
    RANDOM_REMOVAL = "random-removal"
    TIERED_BATCH = "tiered"


@dataclass(frozen=True)
class ExperimentSpec:
    kind: ExperimentKind
    target: object  # predicate name, removal percentage, or tier name
    runs: int = 5
    seeds: tuple = DEFAULT_SEEDS
    params: DistillParams = field(default_factory=DistillParams)
    sample: SampleSpec = field(default_factory=SampleSpec)

    def __post_init__(self):
        object.__setattr__(self, "kind", ExperimentKind(self.kind))
        object.__setattr__(self, "seeds", tuple(self.seeds))
        if self.runs < 1:
            raise ValueError("runs must be at least 1")
        if len(self.seeds) != self.runs:
            raise ValueError(f"{self.runs} runs need {self.runs} seeds, got {len(self.seeds)}")

    @classmethod
    def predicate_removal(cls, pred: str, runs: int = 5, seeds=None, params=None, k: int = 10) -> "ExperimentSpec":
        return cls(
            ExperimentKind.PREDICATE_REMOVAL,
            pred,
            runs,
            tuple(seeds) if seeds is not None else tuple(range(runs)),
            params or DistillParams(r=1, m=1),
            SampleSpec(Strategy.PREDICATE_RELEVANCE, k, 0, pred),
        )

    @classmethod
    def random_removal(cls, s: float, runs: int = 5, seeds=None, params=None, k: int = 2) -> "ExperimentSpec":
        if not 0 < s < 100:
            raise ValueError("s must lie strictly between 0 and 100")
        return cls(
            ExperimentKind.RANDOM_REMOVAL,
            s,
            runs,
            tuple(seeds) if seeds is not None else tuple(range(runs)),
            params or DistillParams(r=1, m=1),
            SampleSpec(Strategy.PREDICATE_COUNT, k, 0),
        )

    @classmethod
    def tiered(cls, tier: str, b: int, runs: int = 5, seeds=None, params=None, k: int = 11) -> "ExperimentSpec":
        base = params or DistillParams(r=3, m=2)
        return cls(
            ExperimentKind.TIERED_BATCH,
            tier,
            runs,
            tuple(seeds) if seeds is not None else tuple(range(runs)),
            replace(base, batch_size=b),
            SampleSpec(Strategy.PREDICATE_COUNT, k, 0),
        )

    def to_dict(self) -> dict:
        return {
            "kind": self.kind.value,
            "target": self.target,
            "runs": self.runs,
            "seeds": list(self.seeds),
            "params": asdict(self.params),
            "sample": {
                "strategy": self.sample.strategy.value,
                "k": self.sample.k,
                "restrict_to_predicate": self.sample.restrict_to_predicate,
            },
        }


# --------------------------------------------------------------------------
# accuracy and statistics


@dataclass(frozen=True)
class Evaluation:
    accuracy: float
    failures: tuple  # (example id, what the solver said)


def evaluate(theory: Program, suite, cfg: SolverConfig, jobs: int = 1) -> Evaluation:
    suite = list(suite)
    if not suite:
        raise ValueError("empty test suite")
    outcomes = solve_examples(theory, suite, cfg, jobs)
    failures = tuple(
        (ex.id, out.describe()) for ex, out in zip(suite, outcomes) if not check_answer(out, ex.expected_answer)
    )
    return Evaluation(100.0 * (len(suite) - len(failures)) / len(suite), failures)


def evaluate_accuracy(theory: Program, suite, cfg: SolverConfig, jobs: int = 1) -> float:
    return evaluate(theory, suite, cfg, jobs).accuracy


@dataclass(frozen=True)
class Aggregate:
    mean: float
    std: float  # population
    min: float
    max: float
    n: int

    def format(self) -> str:
        return format_cell(self.mean, self.std, self.min, self.max)

    def to_dict(self) -> dict:
        return {**asdict(self), "formatted": self.format()}


def format_cell(mean: float, std: float, lo: float, hi: float) -> str:
    return f"{mean:05.2f}±{std:05.2f} ({lo:.2f}, {hi:.2f})"


def aggregate(values) -> Aggregate:
    """Mean, population std, min and max of run accuracies (or run records)."""
    values = [v.final_accuracy if isinstance(v, RunRecord) else v for v in values]
    values = [float(v) for v in values if v is not None]
    if not values:
        raise ValueError("nothing to aggregate")
    return Aggregate(statistics.fmean(values), statistics.pstdev(values), min(values), max(values), len(values))


# --------------------------------------------------------------------------
# runs


@dataclass(frozen=True)
class RunRecord:
    seed: int
    init_accuracy: Optional[float]
    final_accuracy: Optional[float]
    stats: dict
    accepted_extensions: int = 0
    rules_init: int = 0
    rules_final: int = 0
    max_calls_per_batch: int = 0
    call_budget: int = 0
    sampled: tuple = ()
    final_failures: tuple = ()
    error: Optional[str] = None

    def to_dict(self) -> dict:
        rec = asdict(self)
        rec["sampled"] = list(self.sampled)
        rec["final_failures"] = [list(f) for f in self.final_failures]
        return rec


@dataclass(frozen=True)
class ExperimentReport:
    spec: ExperimentSpec
    per_run: tuple
    baseline: float
    mutated_baseline: Optional[Aggregate]
    aggregate: Optional[Aggregate]

    @property
    def failed_runs(self) -> int:
        return sum(1 for r in self.per_run if r.error is not None)

    def to_dict(self) -> dict:
        return {
            "spec": self.spec.to_dict(),
            "std": "population",
            "baseline": self.baseline,
            "mutated_baseline": self.mutated_baseline.to_dict() if self.mutated_baseline else None,
            "aggregate": self.aggregate.to_dict() if self.aggregate else None,
            "per_run": [r.to_dict() for r in self.per_run],
            "failed_runs": self.failed_runs,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True, ensure_ascii=False) + "\n"

    def save(self, path) -> None:
        Path(path).write_text(self.to_json(), encoding="utf-8")


def render_table(report: ExperimentReport) -> str:
    spec = report.spec
    lines = [
        f"{spec.kind.value} target={spec.target} runs={spec.runs} "
        f"r={spec.params.r} m={spec.params.m} b={spec.params.batch_size} "
        f"mending={'on' if spec.params.mending_enabled else 'off'} (population std)",
        f"{'full theory':<14}{report.baseline:.2f}",
        f"{'mutated':<14}{report.mutated_baseline.format() if report.mutated_baseline else 'n/a'}",
        f"{'final':<14}{report.aggregate.format() if report.aggregate else 'n/a'}",
        "",
        f"{'seed':>6} {'init':>7} {'final':>7} {'accepted':>9} {'calls':>6} {'mends':>6}  note",
    ]
    for run in report.per_run:
        init = f"{run.init_accuracy:.2f}" if run.init_accuracy is not None else "-"
        final = f"{run.final_accuracy:.2f}" if run.final_accuracy is not None else "-"
        mends = run.stats.get("mends_syntax", 0) + run.stats.get("mends_semantic", 0)
        note = run.error or ("---" if run.accepted_extensions == 0 else "")
        lines.append(
            f"{run.seed:>6} {init:>7} {final:>7} {run.accepted_extensions:>9} {run.stats.get('llm_calls', 0):>6} {mends:>6}  {note}"
        )
    return "\n".join(lines) + "\n"


def _backend_for(source: BackendSource, full: Program, mutated: Program, seed: int) -> Backend:
    if isinstance(source, Backend):
        return source
    return source(full, mutated, seed)


def oracle_factory(mode: str = "missing", fault=OracleFault.NONE) -> Callable[[Program, Program, int], Backend]:
    """Fresh oracle per run, holding the removed rules ("missing") or the whole theory ("full")."""
    if mode not in ("missing", "full"):
        raise ValueError(f"unknown oracle mode {mode!r}")

    def make(full: Program, mutated: Program, seed: int) -> Backend:
        hidden = full if mode == "full" else Program(tuple(r for r in full.rules if r not in mutated))
        return OracleBackend(hidden, fault)

    return make


def null_factory() -> Callable[[Program, Program, int], Backend]:
    """A backend that never offers a usable rule."""
    return lambda full, mutated, seed: OracleBackend(Program(()))


def _one_run(
    index: int,
    seed: int,
    spec: ExperimentSpec,
    full: Program,
    mutate: Callable[[int], Program],
    corpus,
    testsuite,
    source: BackendSource,
    cfg: SolverConfig,
    task: Optional[TaskDescription],
    log_dir,
    jobs: int,
) -> RunRecord:
    init_acc = None
    try:
        mutated = mutate(seed)
        init_eval = evaluate(mutated, testsuite, cfg, jobs)
        init_acc = init_eval.accuracy
        examples = sample(corpus, replace(spec.sample, seed=seed))
        backend = _backend_for(source, full, mutated, seed)
        run_dir = Path(log_dir) / f"run{index}_seed{seed}" if log_dir is not None else None
        session = run_session(
            mutated,
            examples,
            backend,
            cfg,
            spec.params,
            task=task,
            log_dir=run_dir,
            metadata={"experiment": spec.to_dict(), "run": index, "seed": seed},
            jobs=jobs,
        )
        final_eval = evaluate(session.theory, testsuite, cfg, jobs)
        return RunRecord(
            seed=seed,
            init_accuracy=init_acc,
            final_accuracy=final_eval.accuracy,
            stats=session.stats.to_dict(),
            accepted_extensions=sum(1 for o in session.outcomes if o.kind is DistillKind.ACCEPTED),
            rules_init=len(mutated),
            rules_final=len(session.theory),
            max_calls_per_batch=max((o.llm_calls for o in session.outcomes), default=0),
            call_budget=spec.params.call_budget,
            sampled=tuple(ex.id for ex in examples),
            final_failures=final_eval.failures,
            error=session.error,
        )
    except Exception as exc:  # a failed run is reported, not dropped
        log.exception("run %d (seed %d) failed", index, seed)
        return RunRecord(seed, init_acc, None, {}, error=f"{type(exc).__name__}: {exc}")


def run_experiment(
    spec: ExperimentSpec,
    full: Program,
    init_for_seed: Callable[[int], Program],
    corpus,
    testsuite,
    backend: BackendSource,
    cfg: SolverConfig,
    task: Optional[TaskDescription] = None,
    log_dir=None,
    jobs: int = 1,
) -> ExperimentReport:
    baseline = evaluate_accuracy(full, testsuite, cfg, jobs)
    args = [
        (i, seed, spec, full, init_for_seed, corpus, testsuite, backend, cfg, task, log_dir, 1 if jobs > 1 else jobs)
        for i, seed in enumerate(spec.seeds)
    ]
    if jobs > 1 and spec.runs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            runs = tuple(pool.map(lambda a: _one_run(*a), args))
    else:
        runs = tuple(_one_run(*a) for a in args)
    inits = [r.init_accuracy for r in runs if r.init_accuracy is not None]
    finals = [r.final_accuracy for r in runs if r.final_accuracy is not None]
    report = ExperimentReport(
        spec,
        runs,
        baseline,
        aggregate(inits) if inits else None,
        aggregate(finals) if finals else None,
    )
    if log_dir is not None:
        Path(log_dir).mkdir(parents=True, exist_ok=True)
        report.save(Path(log_dir) / "report.json")
        (Path(log_dir) / "report.txt").write_text(render_table(report), encoding="utf-8")
    return report


def run_predicate_removal(full, pred, corpus, testsuite, backend, cfg, spec=None, **kw) -> ExperimentReport:
    if not any(name == pred for name, _ in predicates_of(full)):
        raise ValueError(f"predicate {pred!r} does not occur in the theory")
    spec = spec or ExperimentSpec.predicate_removal(pred)
    mutated = remove_rules_mentioning(full, pred).with_label("Init")
    return run_experiment(spec, full, lambda seed: mutated, corpus, testsuite, backend, cfg, **kw)


def run_random_removal(full, s, corpus, testsuite, backend, cfg, spec=None, **kw) -> ExperimentReport:
    spec = spec or ExperimentSpec.random_removal(s)
    return run_experiment(
        spec, full, lambda seed: remove_random_fraction(full, s, seed).with_label("Init"), corpus, testsuite, backend, cfg, **kw
    )


def run_tiered_batch(tier, b, corpus, testsuite, backend, cfg, spec=None, full=None, **kw) -> ExperimentReport:
    """Start from a hand-picked tier of ``full``; the oracle's "missing" rules are the rest of ``full``."""
    if full is None:
        raise ValueError("the tiered experiment needs the full theory for its baseline")
    spec = spec or ExperimentSpec.tiered(tier.label or "tier", b)
    if spec.params.batch_size != b:
        spec = replace(spec, params=replace(spec.params, batch_size=b))
    return run_experiment(spec, full, lambda seed: tier, corpus, testsuite, backend, cfg, **kw)

