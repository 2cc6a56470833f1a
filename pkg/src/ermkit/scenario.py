"""Scenario files: one JSON document describing an environment and a run.

The SCM keys (variables / edges / cpts / seed) are mandatory; everything
else is optional: `erm` (loss weights and thresholds), `agent` (initial
graph edges), `subtasks` (the episode's decomposition, optionally with
scripted hypotheses), `transactions`, and `swarm`.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

from .agent import AgentState, Hypothesis, RoutingTable, Subtask
from .ctl import CtlLog
from .errors import InvalidParameter
from .failures import FailureRegistry
from .graph import CausalClaim, CausalGraph, EvidenceTables
from .revision import ErmConfig
from .scm import Intervention, Scm, WorldState, scm_from_json
from .transactions import PhysicalTransaction, TransactionStep


@dataclass
class Scenario:
    name: str
    scm: Scm
    erm: ErmConfig
    subtasks: list[Subtask] = field(default_factory=list)
    agent_edges: dict = field(default_factory=dict)
    transactions: list[PhysicalTransaction] = field(default_factory=list)
    swarm: dict = field(default_factory=dict)
    path: Path | None = None


def _parse_subtask(doc: dict, scm: Scm) -> Subtask:
    action = Intervention(doc["action"]["target"], doc["action"]["value"])
    scm.check_value(action.target, action.value)
    scripted = None
    if "scripted" in doc:
        s = doc["scripted"]
        scripted = Hypothesis(
            claims=[CausalClaim(c["from"], c["to"]) for c in s.get("claims", [])],
            predicted={
                _coerce_outcome(scm, doc["outcome"], k): float(v)
                for k, v in s["predicted"].items()
            },
            confidence=float(s.get("confidence", 0.5)),
        )
    return Subtask(
        name=doc.get("name", f"do({action.target}={action.value})"),
        action=action,
        outcome=doc["outcome"],
        desired=doc.get("desired"),
        tags=frozenset(doc.get("tags", [])),
        scenario_text=doc.get("scenario_text", ""),
        claim_text=doc.get("claim_text", ""),
        scripted=scripted,
    )


def _coerce_outcome(scm: Scm, outcome: str, raw):
    for v in scm.domains[outcome]:
        if raw == v or str(v) == raw:
            return v
    raise InvalidParameter(f"{raw!r} is not a value of {outcome!r}")


def _parse_transaction(doc: dict, scm: Scm) -> PhysicalTransaction:
    initial = WorldState(dict(doc["initial"]))
    steps = []
    for s in doc["steps"]:
        steps.append(
            TransactionStep(
                action=Intervention(s["action"]["target"], s["action"]["value"]),
                compensation=Intervention(
                    s["compensation"]["target"], s["compensation"]["value"]
                ),
                epsilon=float(s["epsilon"]),
                cost=float(s.get("cost", 1.0)),
                time=float(s.get("time", 1.0)),
            )
        )
    return PhysicalTransaction(initial_state=initial, steps=steps)


def load_scenario(path: str | Path) -> Scenario:
    path = Path(path)
    doc = json.loads(path.read_text(encoding="utf-8"))
    scm = scm_from_json(doc)
    erm = ErmConfig.from_dict(doc.get("erm", {}))
    subtasks = [_parse_subtask(s, scm) for s in doc.get("subtasks", [])]
    agent_edges = {}
    for entry in doc.get("agent", {}).get("edges", []):
        a, b, w = entry
        agent_edges[(a, b)] = float(w)
    transactions = [_parse_transaction(t, scm) for t in doc.get("transactions", [])]
    return Scenario(
        name=doc.get("name", path.stem),
        scm=scm,
        erm=erm,
        subtasks=subtasks,
        agent_edges=agent_edges,
        transactions=transactions,
        swarm=doc.get("swarm", {}),
        path=path,
    )


def build_agent_state(
    scenario: Scenario,
    cfg: ErmConfig | None = None,
    log_path: str | Path | None = None,
    theta_route: float = 0.2,
) -> AgentState:
    """Fresh agent over a scenario: initial graph from the scenario's agent
    block, evidence tables set to converged observational conditionals."""
    cfg = cfg or scenario.erm
    tables = EvidenceTables.exact_observational(scenario.scm)
    graph = CausalGraph(
        variables=set(scenario.scm.variables),
        edges=dict(scenario.agent_edges),
        theta_min=cfg.theta_min,
        theta_max=cfg.theta_max,
        tables=tables,
    )
    return AgentState(
        graph=graph,
        log=CtlLog(path=log_path, eps_err=cfg.eps_err),
        registry=FailureRegistry(),
        routing=RoutingTable(theta_route=theta_route),
        tables=tables,
    )
