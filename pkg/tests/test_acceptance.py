"""One test per acceptance criterion; each records a PASS/FAIL line for the terminal summary."""

import json
import os
import random
import re
import time

import pytest

from aspdistill import fixture
from aspdistill.asp_core import (
    Program,
    atoms,
    enumerate_answer_sets,
    format_interpretation,
    is_answer_set,
    parse_program,
    random_ground_program,
    reduct,
    remove_rules_mentioning,
)
from aspdistill.config import load_config
from aspdistill.dataset import SampleSpec, Strategy, group_by_predicate_count, sample, translate_functional_to_asp
from aspdistill.distiller import SEMANTIC_MEND_HEADER, SYNTAX_MEND_HEADER, DistillKind, DistillParams, run_session
from aspdistill.experiments import (
    ExperimentSpec,
    aggregate,
    evaluate_accuracy,
    null_factory,
    oracle_factory,
    run_predicate_removal,
    run_random_removal,
    run_tiered_batch,
)
from aspdistill.llm import OracleBackend, OracleFault, RemoteHttpBackend, Role, ScriptedBackend, Transcript
from aspdistill.solver import enumerate_models

SCENE_ATOM = re.compile(r"\b(obj|attr|left)\(")


def verdict(record, number, checks, elapsed=None, limit=None):
    """Record and assert a criterion; ``checks`` maps a label to a bool."""
    failed = [label for label, ok in checks.items() if not ok]
    if limit is not None:
        checks = dict(checks, runtime=elapsed < limit)
        if elapsed >= limit:
            failed.append(f"runtime {elapsed:.1f}s >= {limit}s")
    detail = "ok" if not failed else "failed: " + "; ".join(failed)
    if elapsed is not None:
        detail += f" ({elapsed:.1f}s)"
    record(number, not failed, detail)
    assert not failed, detail


@pytest.fixture(scope="module")
def logs(tmp_path_factory):
    return tmp_path_factory.mktemp("acceptance-logs")


def timed(fn):
    start = time.perf_counter()
    value = fn()
    return value, time.perf_counter() - start


# --------------------------------------------------------------------------
# 1-3: symbolic core


def test_criterion_01_functional_translation(record_criterion):
    expected = {
        "end(8).", "count(8,7).", "filter_large(7,6).", "union(6,3,5).", "filter_cylinder(3,2).",
        "filter_cyan(2,1).", "filter_metal(1,0).", "filter_cube(5,4).", "filter_yellow(4,0).", "scene(0).",
    }  # fmt: skip
    program, elapsed = timed(lambda: translate_functional_to_asp(fixture.clevr_example_tree()))
    got = {r.source_text.replace(" ", "") for r in program.rules}
    verdict(record_criterion, 1, {"ten facts": got == expected and len(program) == 10}, elapsed, 1.0)


def test_criterion_02_answer_set_oracle(record_criterion, cfg):
    def run():
        rng = random.Random(2024)
        mismatches = 0
        for _ in range(100):
            program = random_ground_program(rng, max_atoms=8, max_rules=12)
            ours = {format_interpretation(i) for i in enumerate_answer_sets(program)}
            if ours != enumerate_models(program, cfg):
                mismatches += 1
        return mismatches

    mismatches, elapsed = timed(run)
    verdict(record_criterion, 2, {f"{mismatches}/100 mismatches": mismatches == 0}, elapsed, 60.0)


def test_criterion_03_reduct_suite(record_criterion):
    def run():
        p = parse_program("a :- not b.")
        even = parse_program("a :- not b.\nb :- not a.")
        deny = parse_program("a.\n:- a.")
        return {
            "a :- not b. under {}": reduct(p, atoms()) == parse_program("a."),
            "a :- not b. under {b}": reduct(p, atoms("b")) == Program(),
            "a :- b, not c.": reduct(parse_program("a :- b, not c.\nb."), atoms("a", "b")) == parse_program("a :- b.\nb."),
            "fact": is_answer_set(parse_program("a."), atoms("a")) and not is_answer_set(parse_program("a."), atoms()),
            "even loop members": [is_answer_set(even, atoms(*s)) for s in ((), ("a",), ("b",), ("a", "b"))]
            == [False, True, True, False],
            "even loop enumeration": enumerate_answer_sets(even) == {atoms("a"), atoms("b")},
            "constraint": not any(is_answer_set(deny, atoms(*s)) for s in ((), ("a",))),
            "constraint enumeration": enumerate_answer_sets(deny) == set(),
            "empty program": enumerate_answer_sets(Program()) == {atoms()},
            "underivable body": enumerate_answer_sets(parse_program("a :- b.")) == {atoms()},
        }

    checks, elapsed = timed(run)
    verdict(record_criterion, 3, checks, elapsed, 1.0)


# --------------------------------------------------------------------------
# 4-8: distillation with deterministic backends; the runs are shared with 9


@pytest.fixture(scope="module")
def exp1(cfg, full, train, test_suite, logs):
    spec = ExperimentSpec.predicate_removal("exist", runs=5, params=DistillParams(r=1, m=1), k=10)
    return timed(
        lambda: run_predicate_removal(full, "exist", train, test_suite, oracle_factory(), cfg, spec=spec, log_dir=logs / "c4")
    )


@pytest.fixture(scope="module")
def exp2(cfg, full, train, test_suite, logs):
    def run():
        out = {}
        for s in (10, 20, 50):
            spec = ExperimentSpec.random_removal(s, runs=5)
            for name, backend in (("oracle", oracle_factory()), ("null", null_factory())):
                out[s, name] = run_random_removal(
                    full, s, train, test_suite, backend, cfg, spec=spec, log_dir=logs / f"c5_s{s}_{name}"
                )
        return out

    return timed(run)


@pytest.fixture(scope="module")
def exp3(cfg, full, train, test_suite, logs):
    def run():
        out = {}
        for tier in ("light", "medium", "heavy"):
            for b in (1, 2, 5, 10):
                spec = ExperimentSpec.tiered(tier, b, runs=5)
                out[tier, b] = run_tiered_batch(
                    fixture.tier(tier), b, train, test_suite, oracle_factory(), cfg, spec=spec, full=full,
                    log_dir=logs / f"c6_{tier}_b{b}",
                )  # fmt: skip
        return out

    return timed(run)


@pytest.fixture(scope="module")
def mutated(full):
    return remove_rules_mentioning(full, "exist")


@pytest.fixture(scope="module")
def hidden(full, mutated):
    return Program(tuple(r for r in full.rules if r not in mutated))


@pytest.fixture(scope="module")
def exist_example(test_suite):
    return next(ex for ex in test_suite if "exist" in ex.predicate_names)


@pytest.fixture(scope="module")
def mending_runs(cfg, mutated, hidden, exist_example, logs):
    def run():
        one = [exist_example]
        return {
            "syntax_on": run_session(
                mutated, one, OracleBackend(hidden, OracleFault.SYNTAX), cfg, DistillParams(r=1, m=1), log_dir=logs / "c7_on"
            ),
            "syntax_off": run_session(
                mutated, one, OracleBackend(hidden, OracleFault.SYNTAX), cfg,
                DistillParams(r=1, m=1, mending_enabled=False), log_dir=logs / "c7_off",
            ),
            "semantic": run_session(
                mutated, one, OracleBackend(hidden, OracleFault.SEMANTIC), cfg, DistillParams(r=1, m=1), log_dir=logs / "c7_sem"
            ),
        }  # fmt: skip

    return timed(run)


@pytest.fixture(scope="module")
def regression_run(cfg, mutated, train, test_suite, logs):
    seen = next(ex for ex in train if "exist" not in ex.predicate_names and ex.expected_answer.isdigit())
    target = next(ex for ex in test_suite if "exist" in ex.predicate_names and ex.expected_answer == "no")
    backend = ScriptedBackend(["bool(T,false) :- end(T)."])
    return timed(lambda: (run_session(mutated, [seen, target], backend, cfg, log_dir=logs / "c8"), seen, target))


def test_criterion_04_oracle_restores_removed_predicate(record_criterion, cfg, full, test_suite, mutated, exp1):
    report, elapsed = exp1
    affected = sum("exist" in ex.predicate_names for ex in test_suite)
    expected_mutated = 100.0 * (1 - affected / len(test_suite))
    checks = {
        "baseline 100": evaluate_accuracy(full, test_suite, cfg) == 100.0,
        f"mutated {expected_mutated:.2f}": evaluate_accuracy(mutated, test_suite, cfg) == expected_mutated,
        "every run starts mutated": all(r.init_accuracy == expected_mutated for r in report.per_run),
        "5 runs": len(report.per_run) == 5 and report.failed_runs == 0,
        "every run restores 100": all(r.final_accuracy == 100.0 for r in report.per_run),
        "cell 100.00±00.00": report.aggregate.format().startswith("100.00±00.00"),
    }
    verdict(record_criterion, 4, checks, elapsed, 120.0)


def test_criterion_05_random_removal(record_criterion, exp2):
    reports, elapsed = exp2
    checks = {}
    for s in (10, 20, 50):
        oracle, null = reports[s, "oracle"], reports[s, "null"]
        checks[f"s={s} oracle reaches baseline"] = all(r.final_accuracy == oracle.baseline for r in oracle.per_run)
        checks[f"s={s} null keeps mutated"] = all(
            r.final_accuracy == r.init_accuracy and r.accepted_extensions == 0 for r in null.per_run
        ) and null.aggregate == null.mutated_baseline
        checks[f"s={s} 5 runs each"] = len(oracle.per_run) == len(null.per_run) == 5
    verdict(record_criterion, 5, checks, elapsed, 300.0)


def user_turns(path):
    return [t.content for t in Transcript.load(path).turns if t.role is Role.USER]


def test_criterion_06_batches_and_tiers(record_criterion, logs, exp3):
    reports, elapsed = exp3
    checks = {"Light has 5 rules": len(fixture.tier("light")) == 5}
    for (tier, b), report in reports.items():
        checks[f"{tier} b={b} reaches baseline"] = report.failed_runs == 0 and all(
            r.final_accuracy == report.baseline for r in report.per_run
        )
        if b > 1:
            prompts = [u for path in (logs / f"c6_{tier}_b{b}").glob("run*/transcript.jsonl") for u in user_turns(path)]
            checks[f"{tier} b={b} prompts free of scene atoms"] = bool(prompts) and not any(
                SCENE_ATOM.search(u) for u in prompts
            )
    verdict(record_criterion, 6, checks, elapsed, 300.0)


def test_criterion_07_mending(record_criterion, mutated, exist_example, logs, mending_runs):
    runs, elapsed = mending_runs
    on, off, sem = runs["syntax_on"], runs["syntax_off"], runs["semantic"]
    on_turns = user_turns(logs / "c7_on" / "transcript.jsonl")
    sem_turns = user_turns(logs / "c7_sem" / "transcript.jsonl")
    expected = exist_example.expected_answer
    actual = {"yes": "no", "no": "yes"}[expected]
    sem_mends = [u for u in sem_turns if u.startswith(SEMANTIC_MEND_HEADER)]
    checks = {
        "m=1 accepted": [o.kind for o in on.outcomes] == [DistillKind.ACCEPTED],
        "one syntax mend turn": sum(u.startswith(SYNTAX_MEND_HEADER) for u in on_turns) == 1 and len(on_turns) == 2,
        "mending off rejected": [o.kind for o in off.outcomes] == [DistillKind.REJECTED_SYNTAX],
        "theory unchanged": off.theory.serialize() == mutated.serialize()
        and (logs / "c7_off" / "theory_final.lp").read_bytes() == (logs / "c7_off" / "theory_init.lp").read_bytes(),
        "semantic variant accepted": [o.kind for o in sem.outcomes] == [DistillKind.ACCEPTED],
        "semantic mend names both answers": len(sem_mends) == 1
        and f"answered {actual}" in sem_mends[0]
        and f"expected answer is {expected}" in sem_mends[0],
    }
    verdict(record_criterion, 7, checks, elapsed, 30.0)


def test_criterion_08_regression_safety(record_criterion, logs, regression_run):
    (result, seen, target), elapsed = regression_run
    run_dir = logs / "c8"
    checks = {
        "seen example first": result.outcomes[0].kind is DistillKind.ALREADY_CORRECT,
        "rejected by regression": result.outcomes[1].kind is DistillKind.REJECTED_REGRESSION,
        "names the broken example": seen.id in result.outcomes[1].detail,
        "theory byte-identical": (run_dir / "theory_final.lp").read_bytes() == (run_dir / "theory_init.lp").read_bytes(),
    }
    verdict(record_criterion, 8, checks, elapsed, 30.0)


def test_criterion_09_call_budget(record_criterion, logs, exp1, exp2, exp3, mending_runs, regression_run):
    records, wrong_budget = [], []
    for path in logs.rglob("outcomes.jsonl"):
        params = json.loads((path.parent / "params.json").read_text())["params"]
        budget = params["r"] * (1 + 2 * params["m"]) if params["mending_enabled"] else params["r"]
        for line in path.read_text().splitlines():
            rec = json.loads(line)
            records.append(rec)
            if rec["call_budget"] != budget:
                wrong_budget.append(rec)
    over = [r for r in records if r["llm_calls"] > r["call_budget"]]
    checks = {
        f"{len(records)} logged batches": len(records) > 0,
        f"{len(over)} over budget": not over,
        "logged budget is r(1+2m)": not wrong_budget,
    }
    verdict(record_criterion, 9, checks)


# --------------------------------------------------------------------------
# 10-11: sampling and statistics


def test_criterion_10_sampling(record_criterion, train):
    def run():
        count_spec = SampleSpec(Strategy.PREDICATE_COUNT, k=2, seed=7)
        rel_spec = SampleSpec(Strategy.PREDICATE_RELEVANCE, k=10, seed=7, restrict_to_predicate="exist")
        by_count, by_rel = sample(train, count_spec), sample(train, rel_spec)
        return {
            "10 buckets": len(group_by_predicate_count(train)) == 10,
            "count k=2 gives 20": len(by_count) == 20,
            "relevance k=10 gives 10": len(by_rel) == 10,
            "all contain exist": all("exist" in ex.predicate_names for ex in by_rel),
            "same seed same sample": sample(train, count_spec) == by_count and sample(train, rel_spec) == by_rel,
        }

    checks, elapsed = timed(run)
    verdict(record_criterion, 10, checks, elapsed, 1.0)


def test_criterion_11_cell_format(record_criterion):
    cell, elapsed = timed(lambda: aggregate([0, 100]).format())
    verdict(record_criterion, 11, {repr(cell): cell == "50.00±50.00 (0.00, 100.00)"}, elapsed, 1.0)


# --------------------------------------------------------------------------
# 12: live endpoint, optional


@pytest.mark.network
def test_criterion_12_live_smoke(record_criterion, cfg, full, train, test_suite, tmp_path):
    app = load_config(os.environ.get("ASP_DISTILL_CONFIG"))
    if not app.llm.endpoint or not app.llm.model or not os.environ.get(app.llm.api_key_env):
        record_criterion(12, None, "no endpoint, model or API key configured")
        pytest.skip("no live endpoint configured")
    backend = RemoteHttpBackend(
        app.llm.endpoint, app.llm.model, api_key_env=app.llm.api_key_env, temperature=app.llm.temperature
    )
    spec = ExperimentSpec.predicate_removal("exist", runs=1, seeds=(0,), k=2)
    report = run_predicate_removal(full, "exist", train, test_suite, backend, cfg, spec=spec, log_dir=tmp_path)
    run_dir = tmp_path / "run0_seed0"
    checks = {
        "report written": (tmp_path / "report.json").exists(),
        "params logged": json.loads((run_dir / "params.json").read_text())["seed"] == 0,
        "prompts logged": len(user_turns(run_dir / "transcript.jsonl")) >= 1,
        "run finished": report.per_run[0].final_accuracy is not None,
    }
    verdict(record_criterion, 12, checks)
