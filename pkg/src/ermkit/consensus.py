"""Multi-agent causal consensus by quorum voting over closed evidence.

An agent supports an edge when its own log confidence s/(s+r+eps) exceeds
theta_max. An edge enters the global graph iff the supporting fraction
strictly exceeds the quorum threshold; everything else that received any
vote is flagged underdetermined. The included set is passed through the
cycle breaker with vote fractions as weights, so two quorums can never
smuggle in a cycle.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .ctl import CtlLog
from .errors import EmptySwarm, InvalidParameter
from .graph import CausalClaim, CausalGraph, _greedy_cycle_removal


@dataclass
class SwarmConfig:
    m: int
    theta_q: float
    vote_theta_max: float = 0.8
    eps_conf: float = 1e-9
    drop_prob: float = 0.0  # simulated message loss: an agent's vote vanishes

    def __post_init__(self):
        if self.m < 1:
            raise InvalidParameter("swarm needs at least one agent")
        if not 0.0 < self.theta_q < 1.0:
            raise InvalidParameter("quorum threshold must lie strictly in (0, 1)")


@dataclass
class GlobalGraph:
    included: set[CausalClaim] = field(default_factory=set)
    underdetermined: set[CausalClaim] = field(default_factory=set)
    tally: dict[CausalClaim, int] = field(default_factory=dict)
    fraction: dict[CausalClaim, float] = field(default_factory=dict)


def _supports(source, claim: CausalClaim, cfg: SwarmConfig) -> bool:
    if isinstance(source, CtlLog):
        s = source.support(claim)
        r = source.refute(claim)
        conf = s / (s + r + cfg.eps_conf)
        return conf > cfg.vote_theta_max
    if isinstance(source, CausalGraph):
        return source.weight(claim) > cfg.vote_theta_max
    raise InvalidParameter(f"cannot read votes from {type(source).__name__}")


def _candidates(sources) -> set[CausalClaim]:
    out: set[CausalClaim] = set()
    for src in sources:
        if isinstance(src, CtlLog):
            out |= src.claims_seen()
        elif isinstance(src, CausalGraph):
            out |= {CausalClaim(a, b) for a, b in src.edges}
    return out


def aggregate(
    sources: list,
    cfg: SwarmConfig,
    candidates: set[CausalClaim] | None = None,
    rng: np.random.Generator | None = None,
) -> GlobalGraph:
    """Quorum-vote the agents' closed logs (or graphs) into a global graph."""
    if not sources:
        raise EmptySwarm("no agent evidence to aggregate")
    if len(sources) != cfg.m:
        raise InvalidParameter(f"expected {cfg.m} agents, got {len(sources)}")
    claims = sorted(candidates if candidates is not None else _candidates(sources))

    heard: list = sources
    if cfg.drop_prob > 0.0:
        if rng is None:
            rng = np.random.default_rng(0)
        heard = [src for src in sources if rng.random() >= cfg.drop_prob]

    out = GlobalGraph()
    for claim in claims:
        votes = sum(1 for src in heard if _supports(src, claim, cfg))
        fraction = votes / cfg.m
        out.tally[claim] = votes
        out.fraction[claim] = fraction
        if fraction > cfg.theta_q:
            out.included.add(claim)
        else:
            out.underdetermined.add(claim)

    # Acyclicity: break included-set cycles by vote weight; losers are
    # demoted to underdetermined so every voted edge lands in exactly one set.
    weighted = {c.edge(): out.fraction[c] for c in out.included}
    _, removed = _greedy_cycle_removal(weighted)
    for edge in removed:
        claim = CausalClaim(*edge)
        out.included.discard(claim)
        out.underdetermined.add(claim)
    return out


def broadcast(global_graph: GlobalGraph, agents: list) -> None:
    """Replace each agent's graph edges with the global included set at
    weight = vote fraction. Logs, registries, and guards are untouched."""
    for agent in agents:
        graph: CausalGraph = agent.graph
        graph.edges = {
            c.edge(): global_graph.fraction[c] for c in global_graph.included
        }
        for claim in global_graph.included:
            graph.variables.update(claim.edge())


def global_graph_to_json(g: GlobalGraph) -> str:
    doc = {
        "included": [[c.cause, c.effect, g.fraction[c]] for c in sorted(g.included)],
        "underdetermined": [
            [c.cause, c.effect, g.fraction[c]] for c in sorted(g.underdetermined)
        ],
        "tally": [[c.cause, c.effect, g.tally[c]] for c in sorted(g.tally)],
    }
    return json.dumps(doc, sort_keys=True, indent=2) + "\n"


def write_snapshot(g: GlobalGraph, directory: str | Path, round_index: int) -> Path:
    path = Path(directory) / f"global_round_{round_index:04d}.json"
    path.write_text(global_graph_to_json(g), encoding="utf-8")
    return path
