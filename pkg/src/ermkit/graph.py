"""The agent's external causal model: a weighted directed graph.

Weights live in [0, 1]; the belief set is the strict super-threshold edge
set {e : w(e) > theta_min}. Cycles can appear transiently after raw edge
insertions and are broken by a deterministic greedy pass that repeatedly
removes the minimum-weight edge on a detected cycle.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import networkx as nx

from .errors import NoEvidence, UnknownVariable
from .probs import uniform
from .scm import Intervention, Scm, WorldState, exact_conditional, exact_marginal

Edge = tuple[str, str]


@dataclass(frozen=True, order=True)
class CausalClaim:
    """A directed cause-effect assertion, 'cause -> effect'."""

    cause: str
    effect: str

    def __post_init__(self):
        if self.cause == self.effect:
            raise ValueError("a claim cannot relate a variable to itself")

    def edge(self) -> Edge:
        return (self.cause, self.effect)


@dataclass(frozen=True)
class BeliefSet:
    claims: frozenset[CausalClaim]

    def __contains__(self, claim: CausalClaim) -> bool:
        return claim in self.claims

    def __len__(self) -> int:
        return len(self.claims)

    def edges(self) -> set[Edge]:
        return {c.edge() for c in self.claims}


@dataclass
class EvidenceTables:
    """Empirical (or converged-observational) tables backing predictions.

    conditionals is keyed by (outcome, given_var, given_value); marginals
    by variable name. These are the only quantitative inputs the agent's
    graph has; nothing here is interventional unless the caller made it so.
    """

    domains: dict[str, list]
    marginals: dict[str, dict] = field(default_factory=dict)
    conditionals: dict[tuple, dict] = field(default_factory=dict)

    @classmethod
    def exact_observational(cls, scm: Scm) -> "EvidenceTables":
        """Tables a fully converged L1 observer would hold (oracle-computed)."""
        tables = cls(domains={v: list(scm.domains[v]) for v in scm.variables})
        for outcome in scm.variables:
            tables.marginals[outcome] = exact_marginal(scm, outcome)
            for given in scm.variables:
                if given == outcome:
                    continue
                for val in scm.domains[given]:
                    try:
                        dist = exact_conditional(scm, outcome, {given: val})
                    except Exception:
                        continue
                    tables.conditionals[(outcome, given, val)] = dist
        return tables

    @classmethod
    def from_states(
        cls, states: list[WorldState], domains: dict[str, list]
    ) -> "EvidenceTables":
        tables = cls(domains=domains)
        n = len(states)
        for outcome, dom in domains.items():
            counts = {v: 0 for v in dom}
            for s in states:
                counts[s.assignment[outcome]] += 1
            if n:
                tables.marginals[outcome] = {v: c / n for v, c in counts.items()}
            for given, gdom in domains.items():
                if given == outcome:
                    continue
                for gval in gdom:
                    sub = [s for s in states if s.assignment[given] == gval]
                    if not sub:
                        continue
                    counts = {v: 0 for v in dom}
                    for s in sub:
                        counts[s.assignment[outcome]] += 1
                    tables.conditionals[(outcome, given, gval)] = {
                        v: c / len(sub) for v, c in counts.items()
                    }
        return tables


@dataclass
class CausalGraph:
    """Weighted directed edge set G = (V, E, w) with belief thresholds."""

    variables: set[str]
    edges: dict[Edge, float] = field(default_factory=dict)
    theta_min: float = 0.2
    theta_max: float = 0.8
    tables: EvidenceTables | None = None

    def __post_init__(self):
        if not self.theta_min < self.theta_max:
            raise ValueError("theta_min must be strictly below theta_max")
        for (a, b), w in self.edges.items():
            if not 0.0 <= w <= 1.0:
                raise ValueError(f"edge weight {w} for {a}->{b} outside [0, 1]")
            self.variables.update((a, b))

    def copy(self) -> "CausalGraph":
        return CausalGraph(
            variables=set(self.variables),
            edges=dict(self.edges),
            theta_min=self.theta_min,
            theta_max=self.theta_max,
            tables=self.tables,
        )

    def weight(self, claim: CausalClaim) -> float:
        return self.edges.get(claim.edge(), 0.0)

    def is_acyclic(self) -> bool:
        g = nx.DiGraph()
        g.add_nodes_from(self.variables)
        g.add_edges_from(self.edges)
        return nx.is_directed_acyclic_graph(g)


def belief_set(graph: CausalGraph) -> BeliefSet:
    """Edges strictly above theta_min; equality is excluded."""
    return BeliefSet(
        frozenset(
            CausalClaim(a, b)
            for (a, b), w in graph.edges.items()
            if w > graph.theta_min
        )
    )


def _greedy_cycle_removal(edges: dict[Edge, float]) -> tuple[dict[Edge, float], dict[Edge, float]]:
    """Break all cycles by repeatedly removing the minimum-weight edge on a
    detected cycle (ties resolved lexicographically on (from, to))."""
    g = nx.DiGraph()
    for (a, b) in sorted(edges):
        g.add_edge(a, b)
    removed: dict[Edge, float] = {}
    while True:
        try:
            cycle = nx.find_cycle(g)
        except nx.NetworkXNoCycle:
            break
        victim = min(
            ((u, v) for u, v, *_ in cycle),
            key=lambda e: (edges[e], e),
        )
        g.remove_edge(*victim)
        removed[victim] = edges[victim]
    kept = {e: w for e, w in edges.items() if e not in removed}
    return kept, removed


def enforce_dag(graph: CausalGraph) -> CausalGraph:
    kept, _ = _greedy_cycle_removal(graph.edges)
    out = graph.copy()
    out.edges = kept
    return out


def consistency_loss(graph: CausalGraph) -> float:
    """0 for a DAG; otherwise the total weight the greedy pass removes."""
    _, removed = _greedy_cycle_removal(graph.edges)
    return float(sum(removed.values()))


def _believed_path(graph: CausalGraph, source: str, target: str) -> list[str] | None:
    """Shortest directed path through believed edges, as a variable list."""
    believed = belief_set(graph).edges()
    g = nx.DiGraph()
    g.add_nodes_from(graph.variables)
    g.add_edges_from(sorted(believed))
    try:
        return nx.shortest_path(g, source, target)
    except (nx.NetworkXNoPath, nx.NodeNotFound):
        return None


def predict_do(
    graph: CausalGraph,
    iv: Intervention,
    outcome: str,
    tables: EvidenceTables | None = None,
    uniform_prior: bool = False,
) -> dict:
    """The agent's interventional prediction under its own graph.

    A believed direct edge target->outcome answers from the matching
    conditional table. A believed multi-hop path composes hop tables when
    every hop table exists. No believed path means the graph asserts no
    effect, so the prediction is the outcome marginal. Edges at or below
    theta_min never participate.
    """
    if outcome not in graph.variables:
        raise UnknownVariable(outcome)
    if iv.target not in graph.variables:
        raise UnknownVariable(iv.target)
    tables = tables if tables is not None else graph.tables

    def fallback(reason: str) -> dict:
        if uniform_prior and tables is not None and outcome in tables.domains:
            return uniform(tables.domains[outcome])
        raise NoEvidence(reason)

    if tables is None:
        return fallback("no evidence tables configured")

    path = _believed_path(graph, iv.target, outcome)
    if path is None:
        marg = tables.marginals.get(outcome)
        if marg is None:
            return fallback(f"no marginal table for {outcome!r}")
        return dict(marg)

    # Single believed edge: direct table lookup.
    if len(path) == 2:
        dist = tables.conditionals.get((outcome, iv.target, iv.value))
        if dist is None:
            return fallback(f"no conditional table for {outcome!r} | {iv.target}={iv.value!r}")
        return dict(dist)

    # Multi-hop: chain hop tables; every intermediate table must exist.
    current = {iv.value: 1.0}
    for prev, nxt in zip(path, path[1:]):
        out: dict = {}
        for pval, pmass in current.items():
            hop = tables.conditionals.get((nxt, prev, pval))
            if hop is None:
                return fallback(f"no conditional table for {nxt!r} | {prev}={pval!r}")
            for nval, q in hop.items():
                out[nval] = out.get(nval, 0.0) + pmass * q
        current = out
    return current


# -- serialization -----------------------------------------------------------


def graph_to_json(graph: CausalGraph) -> str:
    doc = {
        "variables": [{"name": v} for v in sorted(graph.variables)],
        "edges": [[a, b, w] for (a, b), w in sorted(graph.edges.items())],
        "theta_min": graph.theta_min,
        "theta_max": graph.theta_max,
    }
    return json.dumps(doc, sort_keys=True, indent=2) + "\n"


def graph_from_json(text: str) -> CausalGraph:
    doc = json.loads(text)
    return CausalGraph(
        variables={entry["name"] for entry in doc["variables"]},
        edges={(a, b): float(w) for a, b, w in doc["edges"]},
        theta_min=float(doc["theta_min"]),
        theta_max=float(doc["theta_max"]),
    )


def save_graph(graph: CausalGraph, path: str | Path) -> None:
    Path(path).write_text(graph_to_json(graph), encoding="utf-8")


def load_graph(path: str | Path) -> CausalGraph:
    return graph_from_json(Path(path).read_text(encoding="utf-8"))
