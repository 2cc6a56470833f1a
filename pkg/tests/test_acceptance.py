"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Run with ``pytest tests/test_acceptance.py -v -s`` to see the per-criterion
lines stream; without ``-s`` they appear in captured output on failure.
"""

import math
import os
import time
from contextlib import contextmanager

import pytest

from ermkit.agent import Hypothesis, ScriptedSource, render_prompt, run_episode
from ermkit.consensus import SwarmConfig, aggregate
from ermkit.ctl import CtlEntry, CtlLog, required_samples
from ermkit.experiments import (
    episodes_to_contraction,
    hoeffding_coverage,
    rounds_to_correct_set,
)
from ermkit.failures import GUARD_TEXT, FailureKind, Guard
from ermkit.graph import CausalClaim, CausalGraph
from ermkit.harness import (
    ERM_CORRECTION_TEMPLATE,
    STANDARD_CORRECTION_TEMPLATE,
    ZERO_SHOT_TEMPLATE,
    RefusalSensitiveModel,
    always_no_model,
    always_yes_model,
    load_cases,
    run_correction,
    run_detection,
    wilson_ci,
)
from ermkit.probs import sup_norm_gap, tv_distance
from ermkit.revision import ErmConfig, check_agm_postulates, claim_confidence, erm_revise
from ermkit.scenario import build_agent_state, load_scenario
from ermkit.scm import (
    Intervention,
    WorldState,
    detect_rung_collapse,
    empirical_distribution,
    exact_conditional,
    exact_do_distribution,
    exact_marginal,
    sample_interventional,
)
from ermkit.transactions import (
    PhysicalTransaction,
    TransactionStep,
    execute,
    verify_recovery_bound,
)

XY = CausalClaim("X", "Y")
N_BIG = 200_000

# One designated intervention per grounding scenario.
GROUNDING_PLAN = [
    ("dock.json", Intervention("X", 1), "Y"),
    ("chain.json", Intervention("X", 1), "Y"),
    ("collider.json", Intervention("C", 1), "Y"),
    ("diamond.json", Intervention("X", 1), "Y"),
    ("ternary.json", Intervention("S", "wet"), "G"),
    ("swarm.json", Intervention("X", 1), "Y"),
]


@contextmanager
def criterion(num, name):
    try:
        yield
    except BaseException:
        print(f"[criterion {num:02d}] {name}: FAIL")
        raise
    print(f"[criterion {num:02d}] {name}: PASS")


@pytest.fixture(scope="module")
def grounding_samples(scenario_dir):
    """n=200k interventional samples per designated plan entry, timed."""
    out = {}
    start = time.monotonic()
    for fname, iv, outcome in GROUNDING_PLAN:
        scm = load_scenario(scenario_dir / fname).scm
        states = sample_interventional(scm, iv, N_BIG, seed=2024)
        out[fname] = (scm, iv, outcome, states)
    out["_elapsed"] = time.monotonic() - start
    return out


def bern(p1):
    return {0: 1 - p1, 1: p1}


def test_c01_physical_grounding(grounding_samples):
    with criterion(1, "physical grounding, empirical vs oracle at n=200k"):
        assert len(GROUNDING_PLAN) >= 5
        for fname in [p[0] for p in GROUNDING_PLAN]:
            scm, iv, outcome, states = grounding_samples[fname]
            gap = sup_norm_gap(
                empirical_distribution(states, outcome),
                exact_do_distribution(scm, outcome, iv),
            )
            assert gap <= 0.01, (fname, gap)
        elapsed = grounding_samples["_elapsed"]
        assert elapsed < 30.0, f"sampling took {elapsed:.1f}s"


def test_c02_confounder_immunity(scenario_dir, grounding_samples):
    with criterion(2, "confounder immunity, exact 1e-12 and sampled 0.02"):
        for path in sorted(scenario_dir.glob("*.json")):
            scm = load_scenario(path).scm
            for v in scm.variables:
                for parent in scm.parents[v]:
                    prior = exact_marginal(scm, parent)
                    for val in scm.domains[v]:
                        post = exact_do_distribution(scm, parent, Intervention(v, val))
                        assert sup_norm_gap(prior, post) <= 1e-12
        for fname in [p[0] for p in GROUNDING_PLAN]:
            scm, iv, outcome, states = grounding_samples[fname]
            for parent in scm.parents[iv.target]:
                gap = sup_norm_gap(
                    empirical_distribution(states, parent), exact_marginal(scm, parent)
                )
                assert gap <= 0.02, (fname, parent, gap)


def test_c03_rung_collapse_gap(dock_scm):
    with criterion(3, "rung collapse gap 0.64 vs 0.40 on dock"):
        obs = exact_conditional(dock_scm, "Y", {"X": 1})
        do = exact_do_distribution(dock_scm, "Y", Intervention("X", 1))
        assert obs[1] == pytest.approx(0.64, abs=1e-12)
        assert do[1] == pytest.approx(0.40, abs=1e-12)
        assert detect_rung_collapse(obs, do, tol=0.05) is True


def test_c04_entrenchment_prevention(dock):
    with criterion(4, "wrong edge contracts (lam=1) vs entrenches (lam=0), 20 seeds"):
        start = time.monotonic()
        for seed in range(20):
            erm_eps = episodes_to_contraction(dock, lam=1.0, max_episodes=50, seed=seed)
            assert erm_eps <= 50, f"seed {seed}: no contraction within 50 episodes"
            base_eps = episodes_to_contraction(dock, lam=0.0, max_episodes=500, seed=seed)
            assert math.isinf(base_eps), f"seed {seed}: baseline contracted at {base_eps}"
        assert time.monotonic() - start < 120.0


def test_c05_hoeffding_coverage(dock_scm):
    with criterion(5, "finite-sample bound coverage at N=877"):
        start = time.monotonic()
        assert required_samples(0.05, 0.05, 2) == 877
        violations, trials, n = hoeffding_coverage(
            dock_scm, Intervention("X", 1), "Y", epsilon=0.05, delta=0.05, trials=200
        )
        assert n == 877
        assert violations / trials <= 0.05, f"{violations}/{trials} exceeded epsilon"
        assert time.monotonic() - start < 60.0


def _log_with(claim, supports, refutes):
    log = CtlLog(eps_err=0.1)
    t = 0
    for delta in [0.0] * supports + [0.9] * refutes:
        t += 1
        log.append(
            CtlEntry(
                t=t,
                state=WorldState({"X": 1, "Y": 0}),
                claims=[claim],
                action=Intervention("X", 1),
                predicted=bern(0.64),
                observed=0,
                delta=delta,
            )
        )
    return log


def test_c06_revision_unit_suite():
    with criterion(6, "revision operator fixtures and postulate reports"):
        cfg = ErmConfig()
        assert claim_confidence(XY, _log_with(XY, 8, 2), cfg) == pytest.approx(0.8, abs=1e-9)
        assert claim_confidence(XY, _log_with(XY, 0, 5), cfg) == pytest.approx(0.0, abs=1e-12)

        contracted = erm_revise(
            CausalGraph(variables=set(), edges={("X", "Y"): 0.5}),
            [XY],
            _log_with(XY, 0, 5),
            cfg,
        )
        assert ("X", "Y") not in contracted.edges

        # acyclicity after every revision in a battery of conflicting claims
        graph = CausalGraph(variables=set(), edges={("A", "B"): 0.9})
        battery = [CausalClaim("B", "A"), CausalClaim("A", "B"), CausalClaim("B", "A")]
        evidence = [(6, 4), (9, 0), (9, 1)]
        for claim, (s, r) in zip(battery, evidence):
            graph = erm_revise(graph, [claim], _log_with(claim, s, r), cfg)
            assert graph.is_acyclic()

        reinforcing = _log_with(XY, 9, 0)
        before = CausalGraph(variables=set(), edges={("X", "Y"): 0.5, ("A", "B"): 0.9})
        after = erm_revise(before, [XY], reinforcing, cfg)
        report = check_agm_postulates(before, [XY], reinforcing, cfg, after)
        assert report.success and report.inclusion and report.consistency
        assert report.vacuity is True

        contracting = _log_with(XY, 0, 5)
        after2 = erm_revise(before, [XY], contracting, cfg)
        report2 = check_agm_postulates(before, [XY], contracting, cfg, after2)
        assert report2.success and report2.inclusion and report2.consistency
        assert report2.vacuity is None


def test_c07_guard_transfer_and_retraction(dock, scenario_dir):
    with criterion(7, "guard transfer across disjoint scenarios and retraction"):
        # Scenario A: three confounder-blind failures inject the guard.
        cfg = dock.erm
        state_a = build_agent_state(dock, cfg=cfg)
        wrong = ScriptedSource([Hypothesis([XY], bern(0.75), 0.8)])
        for ep in range(1, 4):
            run_episode(dock.scm, state_a, wrong, dock.subtasks, cfg, episode_seed=ep)
        guard_text = GUARD_TEXT[FailureKind.CONFOUNDER_BLIND]
        assert guard_text in state_a.registry.active_guard_texts()

        # Scenario B: disjoint variables; the registry travels with the agent.
        relay = load_scenario(scenario_dir / "relay.json")
        assert set(relay.scm.variables).isdisjoint(set(dock.scm.variables))
        state_b = build_agent_state(relay, cfg=relay.erm)
        state_b.registry = state_a.registry
        prompt = render_prompt(
            state_b.graph, state_b.registry.active_guard_texts(), relay.subtasks[0]
        )
        assert guard_text in prompt

        # Planted regret-increasing guard is retracted after the window.
        state_c = build_agent_state(dock, cfg=cfg)
        planted = Guard(
            mode=FailureKind.PREMATURE_CERTAINTY,
            text=GUARD_TEXT[FailureKind.PREMATURE_CERTAINTY],
            active=True,
            injected_at=0,
            regret_before=1e-4,
        )
        state_c.registry.guards.append(planted)
        stubborn = ScriptedSource([Hypothesis([XY], bern(0.64), 0.8)])
        for ep in range(1, 6):
            run_episode(dock.scm, state_c, stubborn, dock.subtasks, cfg, episode_seed=ep)
        assert planted.active is False
        assert planted.text not in state_c.registry.active_guard_texts()


def test_c08_recovery_bound_randomized(scenario_dir):
    with criterion(8, "rollback deviation bound on 100 randomized transactions"):
        import numpy as np

        scenario = load_scenario(scenario_dir / "wide.json")
        scm = scenario.scm
        rng = np.random.default_rng(404)
        initial = WorldState({v: 0 for v in scm.variables})
        honored = 0
        total = 0
        for _ in range(100):
            k_steps = int(rng.integers(1, 5))
            targets = rng.choice(scm.variables, size=k_steps, replace=False)
            steps = []
            for target in targets:
                value = int(rng.integers(0, 2))
                steps.append(
                    TransactionStep(
                        action=Intervention(str(target), value),
                        compensation=Intervention(str(target), 0),
                        epsilon=float(rng.choice([0.125, 0.25, 0.375])),
                        cost=1.0,
                        time=1.0,
                    )
                )
            txn = PhysicalTransaction(initial_state=initial, steps=steps)
            fail_at = int(rng.integers(1, k_steps + 1))
            result = execute(txn, scm, fail_at=fail_at, seed=int(rng.integers(0, 2**31)))
            total += 1
            if verify_recovery_bound(result):
                honored += 1
            assert result.trace.compensation_order() == list(range(fail_at, 0, -1))
        assert honored == total == 100

        violator = PhysicalTransaction(
            initial_state=initial,
            steps=[
                TransactionStep(
                    action=Intervention("C", 1),
                    compensation=Intervention("C", 1),  # refuses to undo
                    epsilon=0.0,
                    cost=1.0,
                    time=1.0,
                )
            ],
        )
        caught = execute(violator, scm, fail_at=1, seed=11)
        assert verify_recovery_bound(caught) is False


def test_c09_consensus(scenario_dir):
    with criterion(9, "quorum truth table and swarm speedup"):
        def voting_log(claim, supports, refutes):
            return _log_with(claim, supports, refutes)

        sup, ref = (9, 0), (1, 9)
        logs = [voting_log(XY, *sup)] * 3 + [voting_log(XY, *ref)] * 2
        at_half = aggregate(logs, SwarmConfig(m=5, theta_q=0.5))
        assert XY in at_half.included
        at_point_six = aggregate(logs, SwarmConfig(m=5, theta_q=0.6))
        assert XY in at_point_six.underdetermined

        swarm = load_scenario(scenario_dir / "swarm.json")
        target = {CausalClaim("Z", "Y")}
        multi, single = [], []
        for seed in range(20):
            multi.append(rounds_to_correct_set(swarm, 4, 0.5, target, 12, seed))
            single.append(rounds_to_correct_set(swarm, 1, 0.5, target, 12, seed))
        median = lambda xs: sorted(xs)[len(xs) // 2]
        assert median(multi) <= median(single), (multi, single)


def test_c10_harness(golden_dir, cases_file):
    with criterion(10, "harness goldens, Wilson interval, mock rates"):
        for name, template in [
            ("zero_shot.txt", ZERO_SHOT_TEMPLATE),
            ("standard_correction.txt", STANDARD_CORRECTION_TEMPLATE),
            ("erm_correction.txt", ERM_CORRECTION_TEMPLATE),
        ]:
            assert (golden_dir / name).read_bytes() == template.encode("utf-8")

        lo, hi = wilson_ci(17, 100)
        assert abs(lo - 0.109) <= 0.001 and abs(hi - 0.255) <= 0.001

        cases = load_cases(cases_file)
        detection = run_detection(cases, always_no_model)
        assert detection.rate == 0.0
        failures = run_detection(cases, always_yes_model).failed
        correction = run_correction(failures, RefusalSensitiveModel(), mode="erm")
        assert correction.rate == 1.0
        stubborn = run_correction(failures, RefusalSensitiveModel(), mode="standard")
        assert stubborn.rate == 0.0


def test_c11_out_of_scope_documented(cases_file, scenario_dir):
    with criterion(11, "published-rate reproduction replaced by local criteria"):
        # The published collapse/steerability rates depend on proprietary
        # endpoints and an unavailable benchmark; they are replaced here by
        # criteria 1-10 plus a live smoke run on the shipped 20-case set
        # that only executes when endpoint credentials are configured.
        cases = load_cases(cases_file)
        assert len(cases) == 20
        for case in cases:
            scm = load_scenario(scenario_dir / case.scm).scm
            marginal = exact_marginal(scm, case.effect)
            shift = max(
                tv_distance(
                    exact_do_distribution(scm, case.effect, Intervention(case.cause, v)),
                    marginal,
                )
                for v in scm.domains[case.cause]
            )
            assert ("YES" if shift > 1e-6 else "NO") == case.ground_truth


@pytest.mark.skipif(
    not (os.environ.get("ERM_ENDPOINT") and os.environ.get("ERM_MODEL")),
    reason=(
        "live smoke run needs ERM_ENDPOINT/ERM_MODEL; published model rates are "
        "not reproducible offline and are replaced by criteria 1-10"
    ),
)
def test_c11_live_smoke(cases_file):
    from ermkit.agent import RemoteChatSource

    source = RemoteChatSource()
    cases = load_cases(cases_file)[:5]
    report = run_detection(cases, lambda prompt, case: source._request(prompt))
    assert 0.0 <= report.rate <= 1.0
