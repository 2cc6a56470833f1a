"""Command-line entry point.

Exit codes: 0 success, 1 validation error (bad arguments, malformed
scenario, impossible query), 2 environment error (unreadable files,
missing endpoint credentials, endpoint failures).
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import re
import sys
from dataclasses import replace
from pathlib import Path

from . import experiments
from .agent import RemoteChatSource
from .consensus import write_snapshot
from .ctl import required_samples
from .errors import ErmError, SourceFailure
from .harness import (
    RefusalSensitiveModel,
    always_no_model,
    load_cases,
    run_correction,
    run_detection,
    save_results,
)
from .scenario import load_scenario
from .scm import Intervention, exact_conditional, exact_do_distribution
from .transactions import RolledBack, execute, verify_recovery_bound

_QUERY_RE = re.compile(
    r"^\s*P\(\s*(?P<var>\w+)\s*(?:=\s*(?P<val>[^|,)]+?)\s*)?"
    r"(?:\|(?P<cond>.*?))?\)\s*$"
)
_DO_RE = re.compile(r"^do\(\s*(?P<var>\w+)\s*=\s*(?P<val>[^)]+?)\s*\)$")


def _coerce(scm, var, raw):
    raw = raw.strip()
    for v in scm.domains.get(var, []):
        if str(v) == raw or v == raw:
            return v
    raise ErmError(f"{raw!r} is not a value of {var!r}")


def _parse_query(scm, query: str):
    m = _QUERY_RE.match(query)
    if not m:
        raise ErmError(f"cannot parse query {query!r}")
    outcome = m.group("var")
    outcome_val = m.group("val")
    iv = None
    given = {}
    cond = m.group("cond")
    if cond:
        for part in (p.strip() for p in cond.split(",")):
            if not part:
                continue
            dom = _DO_RE.match(part)
            if dom:
                if iv is not None:
                    raise ErmError("at most one do() term is supported")
                iv = Intervention(dom.group("var"), _coerce(scm, dom.group("var"), dom.group("val")))
            else:
                if "=" not in part:
                    raise ErmError(f"cannot parse condition {part!r}")
                var, raw = part.split("=", 1)
                var = var.strip()
                given[var] = _coerce(scm, var, raw)
    return outcome, outcome_val, iv, given


def _cmd_oracle(args) -> int:
    scenario = load_scenario(args.scenario)
    scm = scenario.scm
    outcome, outcome_val, iv, given = _parse_query(scm, args.query)
    if iv is not None:
        dist = exact_do_distribution(scm, outcome, iv, given)
    else:
        dist = exact_conditional(scm, outcome, given)
    if outcome_val is not None:
        val = _coerce(scm, outcome, outcome_val)
        print(f"{dist.get(val, 0.0):.6g}")
    else:
        for val in scm.domains[outcome]:
            print(f"{outcome}={val}\t{dist.get(val, 0.0):.6g}")
    return 0


def _cmd_bound(args) -> int:
    print(required_samples(args.epsilon, args.delta, args.domain))
    return 0


def _write_rows(rows, stream) -> None:
    writer = csv.writer(stream, lineterminator="\n")
    writer.writerow(experiments.CSV_HEADER)
    for r in rows:
        writer.writerow(
            [
                r.episode,
                repr(r.task_loss),
                repr(r.epistemic_regret),
                repr(r.consistency_loss),
                repr(r.total),
                r.belief_set_size,
                r.guards_active,
            ]
        )


def _cmd_run(args) -> int:
    scenario = load_scenario(args.scenario)
    cfg = scenario.erm
    if args.baseline:
        cfg = replace(cfg, lam=0.0)
    elif args.lam is not None:
        cfg = replace(cfg, lam=args.lam)
    rows, _state = experiments.run_scenario(scenario, args.episodes, args.seed, cfg=cfg)
    if args.out:
        with open(args.out, "w", encoding="utf-8", newline="") as fh:
            _write_rows(rows, fh)
    else:
        _write_rows(rows, sys.stdout)
    return 0


def _cmd_demo(args) -> int:
    if args.what != "entrenchment":
        raise ErmError(f"unknown demo {args.what!r}")
    scenario = load_scenario(args.scenario)
    erm_eps = experiments.episodes_to_contraction(
        scenario, lam=1.0, max_episodes=args.max_episodes, seed=args.seed
    )
    base_eps = experiments.episodes_to_contraction(
        scenario, lam=0.0, max_episodes=args.baseline_episodes, seed=args.seed
    )
    print(f"lambda=1.0 episodes_to_contraction={erm_eps:g}")
    if math.isinf(base_eps):
        print(
            f"lambda=0.0 episodes_to_contraction=inf "
            f"(no contraction within {args.baseline_episodes} episodes)"
        )
    else:
        print(f"lambda=0.0 episodes_to_contraction={base_eps:g}")
    return 0


def _cmd_swarm(args) -> int:
    scenario = load_scenario(args.scenario)
    defaults = scenario.swarm
    m = args.agents if args.agents is not None else int(defaults.get("agents", 4))
    theta_q = args.quorum if args.quorum is not None else float(defaults.get("quorum", 0.5))
    rounds = args.rounds if args.rounds is not None else int(defaults.get("rounds", 5))
    history = experiments.run_swarm_rounds(
        scenario, m=m, theta_q=theta_q, rounds=rounds, seed=args.seed
    )
    outdir = Path(args.outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    for rnd, snapshot in enumerate(history, start=1):
        write_snapshot(snapshot, outdir, rnd)
        inc = ", ".join(f"{c.cause}->{c.effect}" for c in sorted(snapshot.included)) or "-"
        und = ", ".join(
            f"{c.cause}->{c.effect}" for c in sorted(snapshot.underdetermined)
        ) or "-"
        print(f"round {rnd}: included [{inc}] underdetermined [{und}]")
    return 0


def _cmd_txn(args) -> int:
    scenario = load_scenario(args.scenario)
    if not scenario.transactions:
        raise ErmError("scenario defines no transactions")
    txn = scenario.transactions[args.index]
    result = execute(txn, scenario.scm, fail_at=args.fail_at, seed=args.seed)
    if isinstance(result, RolledBack):
        from .transactions import normalized_hamming

        measured = normalized_hamming(result.recovery_state, txn.initial_state)
        honored = verify_recovery_bound(result)
        print(f"failed_at={result.failed_at}")
        print(f"deviation_bound={result.deviation_bound:.6g}")
        print(f"measured_deviation={measured:.6g}")
        print(f"bound_honored={str(honored).lower()}")
    else:
        print("committed")
        print(f"final_state={json.dumps(result.final_state.assignment, sort_keys=True)}")
    return 0


def _cmd_eval(args) -> int:
    cases = load_cases(args.cases)
    if args.model == "remote":
        source = RemoteChatSource()  # raises SourceFailure when env is missing

        def model(prompt, case):
            return source._request(prompt)

    else:
        model = always_no_model if args.what == "detect" else None

    if args.what == "detect":
        report = run_detection(cases, model)
        lo, hi = report.ci
        print(f"collapse_rate={report.rate:.4f} n={report.n}")
        print(f"wilson_95ci=[{lo:.4f}, {hi:.4f}]")
        if args.results:
            save_results(report.trials, args.results)
    else:
        if args.model == "mock":
            # Mock correction: pretend every NO case failed zero-shot, then
            # apply the refusal-keyed responder to show the treatment effect.
            failed = [
                (c, "YES. The correlation is clear and consistent.")
                for c in cases
                if c.ground_truth == "NO"
            ]
            model = RefusalSensitiveModel()
        else:
            detection = run_detection(cases, model)
            failed = detection.failed
        report = run_correction(failed, model, mode=args.mode)
        lo, hi = report.ci
        print(f"mode={report.mode} correction_rate={report.rate:.4f} n={report.n}")
        print(f"wilson_95ci=[{lo:.4f}, {hi:.4f}]")
        if args.results:
            save_results(report.trials, args.results)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ermkit",
        description="Causal belief-revision sandbox: scenarios, oracles, swarms, evaluations.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="drive an agent over a scenario, emit per-episode CSV")
    p.add_argument("scenario")
    p.add_argument("--episodes", type=int, default=50)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--lambda", dest="lam", type=float, default=None)
    p.add_argument("--baseline", action="store_true", help="outcome-only mode (lambda=0)")
    p.add_argument("--out", default=None, help="CSV path (default: stdout)")
    p.set_defaults(func=_cmd_run)

    p = sub.add_parser("demo", help="built-in demonstrations")
    p.add_argument("what", choices=["entrenchment"])
    p.add_argument("--scenario", default="scenarios/dock.json")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--max-episodes", type=int, default=50)
    p.add_argument("--baseline-episodes", type=int, default=500)
    p.set_defaults(func=_cmd_demo)

    p = sub.add_parser("oracle", help="exact enumeration answers")
    p.add_argument("scenario")
    p.add_argument("--query", required=True, help='e.g. "P(Y=1|do(X=1))"')
    p.set_defaults(func=_cmd_oracle)

    p = sub.add_parser("swarm", help="multi-agent consensus rounds")
    p.add_argument("scenario")
    p.add_argument("--agents", type=int, default=None, help="default: scenario swarm block")
    p.add_argument("--quorum", type=float, default=None)
    p.add_argument("--rounds", type=int, default=None)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--outdir", default=".")
    p.set_defaults(func=_cmd_swarm)

    p = sub.add_parser("txn", help="transaction rollback demo")
    p.add_argument("scenario")
    p.add_argument("--fail-at", type=int, default=None)
    p.add_argument("--index", type=int, default=0)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=_cmd_txn)

    p = sub.add_parser("eval", help="trap-case detection/correction harness")
    p.add_argument("what", choices=["detect", "correct"])
    p.add_argument("cases")
    p.add_argument("--model", choices=["mock", "remote"], default="mock")
    p.add_argument("--mode", choices=["standard", "erm"], default="erm")
    p.add_argument("--results", default=None, help="write per-trial JSONL here")
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("bound", help="finite-sample intervention count")
    p.add_argument("--epsilon", type=float, required=True)
    p.add_argument("--delta", type=float, required=True)
    p.add_argument("--domain", type=int, required=True)
    p.set_defaults(func=_cmd_bound)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except SourceFailure as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (ErmError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entry()
