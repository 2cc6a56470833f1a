"""Reusable experiment drivers shared by the CLI, scripts, and tests."""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .agent import GraphFaithfulSource, ScriptedSource, run_episode
from .consensus import GlobalGraph, SwarmConfig, aggregate, broadcast
from .ctl import required_samples
from .graph import CausalClaim, belief_set
from .probs import sup_norm_gap
from .revision import ErmConfig
from .scenario import Scenario, build_agent_state
from .scm import (
    Intervention,
    empirical_distribution,
    exact_do_distribution,
    sample_interventional,
)


@dataclass
class EpisodeRow:
    episode: int
    task_loss: float
    epistemic_regret: float
    consistency_loss: float
    total: float
    belief_set_size: int
    guards_active: int


CSV_HEADER = [
    "episode",
    "task_loss",
    "epistemic_regret",
    "consistency_loss",
    "total",
    "belief_set_size",
    "guards_active",
]


def run_scenario(
    scenario: Scenario,
    episodes: int,
    seed: int,
    cfg: ErmConfig | None = None,
    source=None,
) -> tuple[list[EpisodeRow], object]:
    """Drive the scenario's subtasks for a number of episodes; returns the
    per-episode metric rows and the final agent state."""
    cfg = cfg or scenario.erm
    state = build_agent_state(scenario, cfg=cfg)
    if source is None:
        if any(s.scripted is not None for s in scenario.subtasks):
            source = ScriptedSource()
        else:
            source = GraphFaithfulSource(tables=state.tables, uniform_prior=cfg.uniform_prior)
    rows = []
    for ep in range(1, episodes + 1):
        episode = run_episode(
            env=scenario.scm,
            state=state,
            source=source,
            subtasks=scenario.subtasks,
            cfg=cfg,
            episode_seed=seed * 100_000 + ep,
            task_class=scenario.name,
        )
        n = max(1, len(episode.losses))
        rows.append(
            EpisodeRow(
                episode=ep,
                task_loss=sum(l.task for l in episode.losses) / n,
                epistemic_regret=episode.mean_regret,
                consistency_loss=sum(l.consistency for l in episode.losses) / n,
                total=sum(l.total for l in episode.losses) / n,
                belief_set_size=len(belief_set(state.graph)),
                guards_active=len(state.registry.active_guards()),
            )
        )
    return rows, state


def episodes_to_contraction(
    scenario: Scenario,
    lam: float,
    max_episodes: int,
    seed: int,
    watched: CausalClaim | None = None,
) -> float:
    """First episode at which the watched claim leaves the belief set;
    math.inf when it survives the whole run."""
    cfg = replace(scenario.erm, lam=lam)
    state = build_agent_state(scenario, cfg=cfg)
    source = GraphFaithfulSource(tables=state.tables)
    if watched is None:
        if not scenario.agent_edges:
            raise ValueError("scenario has no initial agent edges to watch")
        watched = CausalClaim(*next(iter(scenario.agent_edges)))
    for ep in range(1, max_episodes + 1):
        run_episode(
            env=scenario.scm,
            state=state,
            source=source,
            subtasks=scenario.subtasks,
            cfg=cfg,
            episode_seed=seed * 100_000 + ep,
            task_class=scenario.name,
        )
        if watched not in belief_set(state.graph):
            return ep
    return math.inf


def grounding_gap(scm, iv: Intervention, outcome: str, n: int, seed: int) -> float:
    """Sup-norm gap between empirical interventional frequencies and the
    enumeration oracle."""
    states = sample_interventional(scm, iv, n, seed=seed)
    empirical = empirical_distribution(states, outcome)
    exact = exact_do_distribution(scm, outcome, iv)
    return sup_norm_gap(empirical, exact)


def hoeffding_coverage(
    scm,
    iv: Intervention,
    outcome: str,
    epsilon: float = 0.05,
    delta: float = 0.05,
    trials: int = 200,
    base_seed: int = 0,
) -> tuple[int, int, int]:
    """(violations, trials, N): trials whose sup-norm error exceeds epsilon
    when each uses the bound-prescribed number of interventions."""
    domain_size = len(scm.domains[outcome])
    n = required_samples(epsilon, delta, domain_size)
    exact = exact_do_distribution(scm, outcome, iv)
    violations = 0
    for trial in range(trials):
        states = sample_interventional(scm, iv, n, seed=base_seed + 7_919 * (trial + 1))
        gap = sup_norm_gap(empirical_distribution(states, outcome), exact)
        if gap > epsilon:
            violations += 1
    return violations, trials, n


def run_swarm_rounds(
    scenario: Scenario,
    m: int,
    theta_q: float,
    rounds: int,
    seed: int,
    drop_prob: float = 0.0,
) -> list[GlobalGraph]:
    """Synchronous rounds: every agent runs one episode on its own seed
    stream, then the closed logs are aggregated and broadcast."""
    cfg = scenario.erm
    swarm_cfg = SwarmConfig(
        m=m, theta_q=theta_q, vote_theta_max=cfg.theta_max, eps_conf=cfg.eps_conf,
        drop_prob=drop_prob,
    )
    agents = [build_agent_state(scenario, cfg=cfg) for _ in range(m)]
    source = ScriptedSource()
    rng = np.random.default_rng(seed)
    history: list[GlobalGraph] = []
    for rnd in range(1, rounds + 1):
        for idx, agent in enumerate(agents):
            run_episode(
                env=scenario.scm,
                state=agent,
                source=source,
                subtasks=scenario.subtasks,
                cfg=cfg,
                episode_seed=(seed * m + idx) * 10_000 + rnd,
                task_class=scenario.name,
            )
        snapshot = aggregate([a.log for a in agents], swarm_cfg, rng=rng)
        history.append(snapshot)
        # Broadcast shares the quorum edges; local CTLs stay local.
        broadcast(snapshot, agents)
    return history


def rounds_to_correct_set(
    scenario: Scenario,
    m: int,
    theta_q: float,
    target: set[CausalClaim],
    max_rounds: int,
    seed: int,
) -> float:
    history = run_swarm_rounds(scenario, m, theta_q, max_rounds, seed)
    for rnd, snapshot in enumerate(history, start=1):
        if snapshot.included == target:
            return rnd
    return math.inf
