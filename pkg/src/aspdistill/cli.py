"""Command-line entry point: ``asp-distill``.

Exit codes: 0 success, 1 domain failure (invalid corpus, failed check, all
runs failed), 2 usage or configuration error.
"""

from __future__ import annotations

import argparse
import json
import logging
import random
import sys
from collections import Counter
from dataclasses import replace
from pathlib import Path

from . import fixture
from .asp_core import AspError, random_ground_program, read_program
from .asp_core import remove_random_fraction, remove_rules_mentioning, write_program
from .config import AppConfig, ConfigError, load_config
from .dataset import FormatError, SampleSpec, Strategy, load_corpus, sample, write_corpus
from .distiller import DistillParams, run_session
from .experiments import (
    ExperimentSpec,
    null_factory,
    oracle_factory,
    render_table,
    run_predicate_removal,
    run_random_removal,
    run_tiered_batch,
)
from .llm import OracleBackend, OracleFault, RemoteHttpBackend, ReplayBackend, ScriptedBackend, Transcript
from .solver import ExecutableNotFound, SolverConfig, SolverError, cross_validate

log = logging.getLogger("aspdistill")

EXIT_OK, EXIT_FAILURE, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


def _emit(args, payload: dict, text: str) -> None:
    if getattr(args, "format", "text") == "json":
        print(json.dumps(payload, indent=2, sort_keys=True))
    else:
        print(text)


def _config(args) -> AppConfig:
    overrides = {
        ("solver", "path"): getattr(args, "solver", None),
        ("solver", "timeout_ms"): getattr(args, "timeout_ms", None),
        ("run", "jobs"): getattr(args, "jobs", None),
        ("run", "seeds"): getattr(args, "seeds", None),
        ("run", "log_dir"): getattr(args, "log_dir", None),
        ("distill", "r"): getattr(args, "r", None),
        ("distill", "m"): getattr(args, "m", None),
        ("distill", "batch"): getattr(args, "batch", None),
    }
    if getattr(args, "no_mend", False):
        overrides[("distill", "mending")] = False
    if getattr(args, "allow_facts", False):
        overrides[("distill", "no_facts_guard")] = False
    return load_config(args.config, overrides=overrides)


# --------------------------------------------------------------------------
# corpus


def cmd_corpus_validate(args) -> int:
    try:
        corpus = load_corpus(args.path)
    except (FormatError, AspError, OSError) as exc:
        print(f"invalid corpus: {exc}", file=sys.stderr)
        return EXIT_FAILURE
    counts = Counter(ex.predicate_count for ex in corpus)
    payload = {"records": len(corpus), "by_predicate_count": {str(k): counts[k] for k in sorted(counts)}}
    buckets = ", ".join(f"{k}:{counts[k]}" for k in sorted(counts))
    _emit(args, payload, f"{len(corpus)} records (predicate count buckets {buckets})")
    return EXIT_OK


def cmd_corpus_sample(args) -> int:
    corpus = load_corpus(args.path)
    spec = SampleSpec(Strategy(args.strategy), args.k, args.seed, args.pred)
    chosen = sample(corpus, spec)
    if args.out:
        write_corpus(chosen, args.out)
    _emit(args, {"ids": [ex.id for ex in chosen], "count": len(chosen)}, "\n".join(ex.id for ex in chosen))
    return EXIT_OK


# --------------------------------------------------------------------------
# theory


def cmd_theory_mutate(args) -> int:
    theory = read_program(args.theory)
    if (args.remove_pred is None) == (args.remove_percent is None):
        raise UsageError("give exactly one of --remove-pred and --remove-percent")
    if args.remove_pred is not None:
        mutated = remove_rules_mentioning(theory, args.remove_pred)
    else:
        mutated = remove_random_fraction(theory, args.remove_percent, args.seed)
    removed = len(theory) - len(mutated)
    if args.out:
        write_program(mutated, args.out)
    else:
        sys.stdout.write(mutated.serialize())
    info = {"removed": removed, "kept": len(mutated), "out": args.out}
    message = f"removed {removed} rules, kept {len(mutated)}"
    if args.format == "json":
        print(json.dumps(info, sort_keys=True), file=sys.stderr if not args.out else sys.stdout)
    else:
        print(message, file=sys.stderr if not args.out else sys.stdout)
    return EXIT_OK


# --------------------------------------------------------------------------
# distillation


def _make_backend(args, cfg: AppConfig):
    kind = args.backend
    if kind == "oracle":
        if not args.oracle_rules:
            raise UsageError("--backend oracle needs --oracle-rules")
        return OracleBackend(read_program(args.oracle_rules), OracleFault(args.fault))
    if kind == "scripted":
        if not args.script:
            raise UsageError("--backend scripted needs --script (a JSON list of responses)")
        return ScriptedBackend(json.loads(Path(args.script).read_text(encoding="utf-8")))
    if kind == "replay":
        if not args.replay:
            raise UsageError("--backend replay needs --replay (a transcript.jsonl)")
        return ReplayBackend(args.replay)
    if kind == "http":
        return _http_backend(cfg)
    raise UsageError(f"unknown backend {kind!r}")


def _http_backend(cfg: AppConfig):
    if not cfg.llm.endpoint or not cfg.llm.model:
        raise ConfigError("the http backend needs llm.endpoint and llm.model")
    return RemoteHttpBackend(
        cfg.llm.endpoint, cfg.llm.model, cfg.llm.api_key_env, cfg.llm.temperature, cfg.llm.max_retries
    )


def cmd_run(args) -> int:
    cfg = _config(args)
    init = read_program(args.init, label="Init")
    corpus = load_corpus(args.corpus)
    seed = cfg.seeds[0] if cfg.seeds else 0
    if args.k is not None:
        examples = sample(corpus, SampleSpec(Strategy(args.strategy), args.k, seed, args.pred))
    else:
        examples = corpus
    backend = _make_backend(args, cfg)
    params = cfg.defaults
    result = run_session(
        init,
        examples,
        backend,
        cfg.solver,
        params,
        log_dir=cfg.log_dir,
        metadata={"seed": seed, "config": cfg.to_dict(), "init_path": str(args.init), "corpus_path": str(args.corpus)},
        jobs=cfg.jobs,
    )
    kinds = Counter(o.kind.value for o in result.outcomes)
    payload = {
        "batches": len(result.outcomes),
        "outcomes": dict(sorted(kinds.items())),
        "stats": result.stats.to_dict(),
        "rules_init": len(init),
        "rules_final": len(result.theory),
        "error": result.error,
        "log_dir": cfg.log_dir,
    }
    text = (
        f"{len(result.outcomes)} batches: "
        + ", ".join(f"{k}={v}" for k, v in sorted(kinds.items()))
        + f"\ntheory grew from {len(init)} to {len(result.theory)} rules"
        + (f"\nerror: {result.error}" if result.error else "")
    )
    if args.out:
        write_program(result.theory, args.out)
    _emit(args, payload, text)
    return EXIT_FAILURE if result.error else EXIT_OK


def cmd_replay(args) -> int:
    """Re-run a logged session against its own transcript and compare the final theory."""
    run_dir = Path(args.log_dir_in)
    recorded = json.loads((run_dir / "params.json").read_text(encoding="utf-8"))
    params = DistillParams(**recorded["params"])
    solver_cfg = SolverConfig(**recorded["solver"])
    if args.solver:
        solver_cfg = replace(solver_cfg, executable=args.solver)
    init = read_program(run_dir / "theory_init.lp", label="Init")
    examples = load_corpus(run_dir / "examples.jsonl")
    backend = ReplayBackend(Transcript.load(run_dir / "transcript.jsonl"))
    result = run_session(init, examples, backend, solver_cfg, params)
    expected = read_program(run_dir / "theory_final.lp")
    same = result.theory.serialize() == expected.serialize() and result.error is None
    payload = {"identical": same, "rules": len(result.theory), "error": result.error}
    _emit(args, payload, "replay matches the recorded run" if same else f"replay diverged: {result.error or 'different final theory'}")
    return EXIT_OK if same else EXIT_FAILURE


# --------------------------------------------------------------------------
# experiments


def _experiment_inputs(args):
    full = read_program(args.full, label="Full") if args.full else fixture.full_theory()
    train = load_corpus(args.train) if args.train else fixture.train_corpus()
    test = load_corpus(args.test) if args.test else fixture.test_corpus()
    return full, train, test


def _experiment_backend(args, cfg: AppConfig):
    if args.backend == "oracle":
        return oracle_factory("missing", OracleFault(args.fault))
    if args.backend == "oracle-full":
        return oracle_factory("full", OracleFault(args.fault))
    if args.backend == "null":
        return null_factory()
    if args.backend == "http":
        return lambda full, mutated, seed: _http_backend(cfg)
    raise UsageError(f"unknown backend {args.backend!r}")


def cmd_experiment(args) -> int:
    cfg = _config(args)
    full, train, test = _experiment_inputs(args)
    backend = _experiment_backend(args, cfg)
    seeds = cfg.seeds
    if args.runs is not None:
        if args.seeds is None:
            seeds = tuple(range(args.runs))
        elif len(seeds) != args.runs:
            raise UsageError(f"--runs {args.runs} needs {args.runs} seeds, got {len(seeds)}")
    runs = len(seeds)
    kw = {"log_dir": cfg.log_dir, "jobs": cfg.jobs}
    if args.kind == "predicate-removal":
        params = DistillParams(
            r=args.r or 1, m=1 if args.m is None else args.m, mending_enabled=not args.no_mend
        )
        spec = ExperimentSpec.predicate_removal(args.pred, runs, seeds, params, k=args.k or 10)
        report = run_predicate_removal(full, args.pred, train, test, backend, cfg.solver, spec, **kw)
    elif args.kind == "random-removal":
        params = DistillParams(
            r=args.r or 1, m=1 if args.m is None else args.m, mending_enabled=not args.no_mend
        )
        spec = ExperimentSpec.random_removal(args.s, runs, seeds, params, k=args.k or 2)
        report = run_random_removal(full, args.s, train, test, backend, cfg.solver, spec, **kw)
    else:
        params = DistillParams(
            r=args.r or 3, m=2 if args.m is None else args.m, mending_enabled=not args.no_mend
        )
        tier = read_program(args.tier_file, label=args.tier) if args.tier_file else fixture.tier(args.tier)
        spec = ExperimentSpec.tiered(args.tier, args.batch, runs, seeds, params, k=args.k or 11)
        report = run_tiered_batch(tier, args.batch, train, test, backend, cfg.solver, spec, full=full, **kw)
    if args.report:
        report.save(args.report)
    if args.format == "json":
        sys.stdout.write(report.to_json())
    else:
        sys.stdout.write(render_table(report))
    return EXIT_FAILURE if report.failed_runs == len(report.per_run) else EXIT_OK


# --------------------------------------------------------------------------
# checks and fixtures


def cmd_oracle_check(args) -> int:
    cfg = _config(args)
    rng = random.Random(args.seed)
    mismatches = []
    for i in range(args.n):
        program = random_ground_program(rng, args.max_atoms, args.max_rules)
        if not cross_validate(program, cfg.solver):
            mismatches.append((i, program.serialize()))
    payload = {"programs": args.n, "mismatches": len(mismatches), "first_mismatch": mismatches[0][1] if mismatches else None}
    text = f"{args.n - len(mismatches)}/{args.n} programs agree with the solver"
    if mismatches:
        text += f"\nfirst mismatch (program {mismatches[0][0]}):\n{mismatches[0][1]}"
    _emit(args, payload, text)
    return EXIT_OK if not mismatches else EXIT_FAILURE


def cmd_fixture_export(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for name in ("light", "medium", "heavy", "full"):
        write_program(fixture.tier(name), out / f"{name}.lp")
    train, test = fixture.train_corpus(), fixture.test_corpus()
    write_corpus(train, out / "train.jsonl")
    write_corpus(test, out / "test.jsonl")
    _emit(
        args,
        {"out": str(out), "train": len(train), "test": len(test)},
        f"wrote 4 theories, {len(train)} train and {len(test)} test examples to {out}",
    )
    return EXIT_OK


# --------------------------------------------------------------------------
# parser


def _common(p: argparse.ArgumentParser, solver: bool = True) -> None:
    p.add_argument("--format", choices=("text", "json"), default="text")
    p.add_argument("--config", help="INI config file")
    if solver:
        p.add_argument("--solver", help="solver executable (default: clingo)")
        p.add_argument("--timeout-ms", type=int, dest="timeout_ms")
        p.add_argument("--jobs", type=int, help="parallel solver calls / runs (default: CPU count)")


def _distill_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--r", type=int, help="attempts per example")
    p.add_argument("--m", type=int, help="mends per check and attempt")
    p.add_argument("--no-mend", action="store_true", help="disable syntax and semantic mending")
    p.add_argument("--log-dir", dest="log_dir")
    p.add_argument("--seeds", help="comma separated seeds")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="asp-distill", description="Distill ASP rules from a language model.")
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    corpus = sub.add_parser("corpus", help="inspect corpora").add_subparsers(dest="action", required=True)
    p = corpus.add_parser("validate", help="load a corpus and report its size")
    p.add_argument("path")
    _common(p, solver=False)
    p.set_defaults(func=cmd_corpus_validate)
    p = corpus.add_parser("sample", help="draw a sample of example ids")
    p.add_argument("path")
    p.add_argument("--strategy", choices=[s.value for s in Strategy], default="count")
    p.add_argument("--k", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--pred", help="restrict relevance sampling to this predicate")
    p.add_argument("--out", help="write the sample as a corpus file")
    _common(p, solver=False)
    p.set_defaults(func=cmd_corpus_sample)

    theory = sub.add_parser("theory", help="mutate theories").add_subparsers(dest="action", required=True)
    p = theory.add_parser("mutate", help="remove rules by predicate or at random")
    p.add_argument("theory")
    p.add_argument("--remove-pred")
    p.add_argument("--remove-percent", type=float)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("-o", "--out", help="output file (default: standard output)")
    _common(p, solver=False)
    p.set_defaults(func=cmd_theory_mutate)

    p = sub.add_parser("run", help="distill rules over a corpus")
    p.add_argument("--init", required=True)
    p.add_argument("--corpus", required=True)
    p.add_argument("--backend", choices=("http", "oracle", "scripted", "replay"), default="oracle")
    p.add_argument("--oracle-rules", help="hidden program for the oracle backend")
    p.add_argument("--fault", choices=[f.value for f in OracleFault], default="none")
    p.add_argument("--script", help="JSON list of responses for the scripted backend")
    p.add_argument("--replay", help="transcript.jsonl for the replay backend")
    p.add_argument("--batch", type=int)
    p.add_argument("--seed", type=int, dest="seed_single", help="sampling seed")
    p.add_argument("--k", type=int, help="sample k examples instead of using the whole corpus")
    p.add_argument("--strategy", choices=[s.value for s in Strategy], default="count")
    p.add_argument("--pred")
    p.add_argument("--allow-facts", action="store_true", help="keep facts found in responses")
    p.add_argument("-o", "--out", help="write the final theory here")
    _distill_flags(p)
    _common(p)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("experiment", help="run a repeated mutation experiment")
    p.add_argument("kind", choices=("predicate-removal", "random-removal", "tiered"))
    p.add_argument("--pred", help="predicate to remove (predicate-removal)")
    p.add_argument("--s", type=float, help="percentage of rules to remove (random-removal)")
    p.add_argument("--tier", choices=("light", "medium", "heavy"), help="starting tier (tiered)")
    p.add_argument("--tier-file", help="use this theory as the tier instead of the built-in one")
    p.add_argument("--batch", type=int, default=1)
    p.add_argument("--runs", type=int, help="number of runs (default: one per seed, 5 seeds)")
    p.add_argument("--k", type=int)
    p.add_argument("--backend", choices=("oracle", "oracle-full", "null", "http"), default="oracle")
    p.add_argument("--fault", choices=[f.value for f in OracleFault], default="none")
    p.add_argument("--full", help="full theory (default: built-in fixture)")
    p.add_argument("--train", help="training corpus (default: built-in fixture)")
    p.add_argument("--test", help="test corpus (default: built-in fixture)")
    p.add_argument("--report", help="write the JSON report here")
    _distill_flags(p)
    _common(p)
    p.set_defaults(func=cmd_experiment)

    p = sub.add_parser("replay", help="re-run a logged session from its transcript")
    p.add_argument("log_dir_in", metavar="LOG_DIR")
    _common(p)
    p.set_defaults(func=cmd_replay)

    p = sub.add_parser("oracle-check", help="compare the brute-force checker with the solver")
    p.add_argument("--n", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--max-atoms", type=int, default=8)
    p.add_argument("--max-rules", type=int, default=12)
    _common(p)
    p.set_defaults(func=cmd_oracle_check)

    fx = sub.add_parser("fixture", help="built-in fixture").add_subparsers(dest="action", required=True)
    p = fx.add_parser("export", help="write the fixture theories and corpora")
    p.add_argument("--out", required=True)
    _common(p, solver=False)
    p.set_defaults(func=cmd_fixture_export)
    return parser


def _check_args(args) -> None:
    if args.command == "run" and args.seed_single is not None:
        args.seeds = str(args.seed_single)
    if args.command == "experiment":
        if args.kind == "predicate-removal" and not args.pred:
            raise UsageError("predicate-removal needs --pred")
        if args.kind == "random-removal" and args.s is None:
            raise UsageError("random-removal needs --s")
        if args.kind == "tiered" and not args.tier:
            raise UsageError("tiered needs --tier")


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * args.verbose, format="%(levelname)s %(name)s: %(message)s")
    try:
        _check_args(args)
        return args.func(args)
    except (UsageError, ConfigError, ExecutableNotFound) as exc:
        print(f"asp-distill: {exc}", file=sys.stderr)
        parser.print_usage(sys.stderr)
        return EXIT_USAGE
    except (FormatError, AspError, SolverError, OSError, ValueError) as exc:
        print(f"asp-distill: {exc}", file=sys.stderr)
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
