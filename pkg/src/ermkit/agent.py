"""Three-layer episode driver.

Per subtask: fetch active guards, obtain a hypothesis (claims + predicted
distribution + confidence) from the configured source, execute the
subtask's intervention as one physical draw from the environment, log the
tuple to the CTL, and on epistemic failure run Layer-1 revision and
Layer-2 classification. Routing statistics (Layer 3) update per episode.

With lam = 0 the agent degrades into the outcome-only baseline: the
logged per-step error is the 0/1 task error, successful outcomes
reinforce the hypothesized edges, and failures carry no edge attribution,
so nothing is ever contracted. That is the entrenchment control.

One agent is one logical thread of control; multiple agents may run
concurrently over disjoint state, sharing nothing mid-episode.
"""

from __future__ import annotations

import json
import math
import os
import urllib.error
import urllib.request
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .ctl import CtlEntry, CtlLog
from .errors import NoEpisodes, SourceFailure
from .failures import ClassificationContext, FailureRegistry, classify
from .graph import (
    CausalClaim,
    CausalGraph,
    EvidenceTables,
    belief_set,
    graph_from_json,
    graph_to_json,
    predict_do,
)
from .harness import ZERO_SHOT_TEMPLATE, parse_verdict
from .probs import point_mass, tv_distance
from .revision import (
    ErmConfig,
    LossBreakdown,
    NEW_EDGE_WEIGHT,
    REINFORCE_STEP,
    epistemic_regret,
    erm_revise,
    total_loss,
)
from .scm import Intervention, Scm, exact_do_distribution, sample_interventional

_SEED_STRIDE = 1_000_003  # spreads (seed, step) pairs into disjoint noise keys


@dataclass
class Hypothesis:
    claims: list[CausalClaim]
    predicted: dict
    confidence: float = 0.5

    def __post_init__(self):
        if not 0.0 <= self.confidence <= 1.0:
            raise ValueError("confidence must lie in [0, 1]")


@dataclass
class Subtask:
    name: str
    action: Intervention
    outcome: str
    desired: object | None = None
    tags: frozenset = frozenset()
    scenario_text: str = ""
    claim_text: str = ""
    scripted: Hypothesis | None = None

    def __post_init__(self):
        if not self.scenario_text:
            self.scenario_text = (
                f"An intervention sets {self.action.target} to "
                f"{self.action.value!r}; the outcome {self.outcome} is then observed."
            )
        if not self.claim_text:
            self.claim_text = f"{self.action.target} -> {self.outcome}"


def render_prompt(graph: CausalGraph, guards: list[str], subtask: Subtask) -> str:
    """Deterministic prompt: belief-set block, guard block, then the
    zero-shot question template. Empty blocks are omitted entirely."""
    blocks = []
    believed = sorted(belief_set(graph).claims)
    if believed:
        lines = ["Causal context (believed edges):"]
        for claim in believed:
            lines.append(f"  {claim.cause} -> {claim.effect} (w={graph.weight(claim):.2f})")
        blocks.append("\n".join(lines))
    if guards:
        lines = ["Reasoning guards:"]
        for i, text in enumerate(guards, 1):
            lines.append(f"  {i}. {text}")
        blocks.append("\n".join(lines))
    blocks.append(
        ZERO_SHOT_TEMPLATE.format(
            scenario_text=subtask.scenario_text, causal_claim=subtask.claim_text
        )
    )
    return "\n\n".join(blocks)


# -- hypothesis sources --------------------------------------------------------


class ScriptedSource:
    """Replays fixed hypotheses; falls back to the subtask's own script."""

    def __init__(self, hypotheses: list[Hypothesis] | None = None):
        self.hypotheses = hypotheses or []
        self._i = 0

    def propose(self, subtask: Subtask, graph: CausalGraph, guards: list[str]) -> Hypothesis:
        if subtask.scripted is not None:
            return subtask.scripted
        if not self.hypotheses:
            raise SourceFailure("scripted source has no hypothesis for " + subtask.name)
        hyp = self.hypotheses[self._i % len(self.hypotheses)]
        self._i += 1
        return hyp


class GraphFaithfulSource:
    """Rational baseline: claims exactly what the current graph believes
    about the subtask's cause-effect pair and predicts through it."""

    def __init__(self, tables: EvidenceTables | None = None, uniform_prior: bool = False):
        self.tables = tables
        self.uniform_prior = uniform_prior

    def propose(self, subtask: Subtask, graph: CausalGraph, guards: list[str]) -> Hypothesis:
        predicted = predict_do(
            graph,
            subtask.action,
            subtask.outcome,
            tables=self.tables,
            uniform_prior=self.uniform_prior,
        )
        direct = CausalClaim(subtask.action.target, subtask.outcome)
        if direct in belief_set(graph):
            return Hypothesis(
                claims=[direct], predicted=predicted, confidence=graph.weight(direct)
            )
        return Hypothesis(claims=[], predicted=predicted, confidence=0.5)


def _http_transport(url: str, payload: dict, headers: dict, timeout: float) -> dict:
    body = json.dumps(payload).encode("utf-8")
    req = urllib.request.Request(url, data=body, headers=headers, method="POST")
    with urllib.request.urlopen(req, timeout=timeout) as resp:
        return json.loads(resp.read().decode("utf-8"))


class RemoteChatSource:
    """Hypotheses from a chat-completion endpoint.

    Endpoint, model, and key come from ERM_ENDPOINT / ERM_MODEL /
    ERM_API_KEY unless given explicitly. Decoding is greedy
    (temperature 0.0). A YES verdict asserts the subtask's direct claim;
    the predicted distribution is then read through the claim's table.
    """

    def __init__(
        self,
        endpoint: str | None = None,
        model: str | None = None,
        api_key: str | None = None,
        tables: EvidenceTables | None = None,
        timeout: float = 30.0,
        max_retries: int = 2,
        transport=None,
    ):
        self.endpoint = endpoint or os.environ.get("ERM_ENDPOINT")
        self.model = model or os.environ.get("ERM_MODEL")
        self.api_key = api_key or os.environ.get("ERM_API_KEY")
        self.tables = tables
        self.timeout = timeout
        self.max_retries = max_retries
        self.transport = transport or _http_transport
        if not self.endpoint or not self.model:
            raise SourceFailure(
                "remote source needs ERM_ENDPOINT and ERM_MODEL (env or arguments)"
            )

    def _request(self, prompt: str) -> str:
        payload = {
            "model": self.model,
            "messages": [{"role": "user", "content": prompt}],
            "temperature": 0.0,
        }
        headers = {"Content-Type": "application/json"}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        last_error = None
        for _ in range(self.max_retries + 1):
            try:
                doc = self.transport(self.endpoint, payload, headers, self.timeout)
                return doc["choices"][0]["message"]["content"]
            except (urllib.error.URLError, OSError, KeyError, IndexError, ValueError) as exc:
                last_error = exc
        raise SourceFailure(f"chat endpoint failed after retries: {last_error}")

    def propose(self, subtask: Subtask, graph: CausalGraph, guards: list[str]) -> Hypothesis:
        prompt = render_prompt(graph, guards, subtask)
        content = self._request(prompt)
        verdict = parse_verdict(content)
        confidence = _parse_confidence(content, default=0.8)
        claim = CausalClaim(subtask.action.target, subtask.outcome)
        if verdict == "YES" and self.tables is not None:
            key = (subtask.outcome, subtask.action.target, subtask.action.value)
            predicted = self.tables.conditionals.get(key) or self.tables.marginals.get(
                subtask.outcome
            )
            claims = [claim]
        else:
            predicted = self.tables.marginals.get(subtask.outcome) if self.tables else None
            claims = []
        if predicted is None:
            raise SourceFailure(f"no table to back a prediction for {subtask.outcome!r}")
        return Hypothesis(claims=claims, predicted=dict(predicted), confidence=confidence)


def _parse_confidence(text: str, default: float) -> float:
    for line in text.splitlines():
        stripped = line.strip()
        if stripped.upper().startswith("CONFIDENCE:"):
            try:
                value = float(stripped.split(":", 1)[1].strip())
            except ValueError:
                continue
            return min(1.0, max(0.0, value))
    return default


# -- routing (Layer 3) ----------------------------------------------------------


class RoutingTable:
    """Per task-class residual-regret rolling means and routing decisions."""

    def __init__(self, theta_route: float = 0.2, window: int = 5, route_target: str = "human"):
        self.theta_route = theta_route
        self.window = window
        self.route_target = route_target
        self.history: dict[str, deque] = {}

    def record(self, task_class: str, episode_regret: float) -> None:
        self.history.setdefault(task_class, deque(maxlen=self.window)).append(
            episode_regret
        )

    def residual_regret(self, task_class: str) -> float:
        hist = self.history.get(task_class)
        if not hist:
            raise NoEpisodes(f"no completed episodes for class {task_class!r}")
        return sum(hist) / len(hist)

    def should_route(self, task_class: str) -> bool:
        try:
            return self.residual_regret(task_class) > self.theta_route
        except NoEpisodes:
            return False

    def to_dict(self) -> dict:
        return {
            "theta_route": self.theta_route,
            "window": self.window,
            "route_target": self.route_target,
            "history": {k: list(v) for k, v in self.history.items()},
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "RoutingTable":
        table = cls(doc["theta_route"], doc["window"], doc["route_target"])
        for k, values in doc["history"].items():
            for v in values:
                table.record(k, v)
        return table


def residual_regret(episodes: list, task_class: str | None = None, window: int = 5) -> float:
    """Rolling mean of per-episode mean regret over the last ``window``
    completed episodes. Accepts Episode objects (optionally filtered by
    task class) or plain per-episode regret numbers."""
    regrets = []
    for item in episodes:
        if isinstance(item, Episode):
            if task_class is not None and item.task_class != task_class:
                continue
            regrets.append(item.mean_regret)
        else:
            regrets.append(float(item))
    if not regrets:
        raise NoEpisodes("need at least one completed episode")
    recent = regrets[-window:]
    return sum(recent) / len(recent)


# -- episodes --------------------------------------------------------------------


@dataclass
class Episode:
    goal: str
    task_class: str
    subtasks: list[str] = field(default_factory=list)
    entry_ts: list[int] = field(default_factory=list)
    losses: list[LossBreakdown] = field(default_factory=list)
    regrets: list[float] = field(default_factory=list)
    deltas: list[float] = field(default_factory=list)
    revisions: int = 0  # belief-changing Layer-1 events
    guards_injected: list[str] = field(default_factory=list)
    guards_retracted: list[str] = field(default_factory=list)
    routed: bool = False

    @property
    def mean_regret(self) -> float:
        finite = [r for r in self.regrets if math.isfinite(r)]
        if not self.regrets:
            return 0.0
        if len(finite) < len(self.regrets):
            return math.inf
        return sum(finite) / len(finite)

    @property
    def mean_task_loss(self) -> float:
        return sum(l.task for l in self.losses) / len(self.losses) if self.losses else 0.0


@dataclass
class AgentState:
    graph: CausalGraph
    log: CtlLog
    registry: FailureRegistry
    routing: RoutingTable
    tables: EvidenceTables | None = None
    clock: int = 0
    episode_count: int = 0
    attempts: dict = field(default_factory=dict)
    _do_cache: dict = field(default_factory=dict, repr=False)


def _true_do(env: Scm, state: AgentState, subtask: Subtask) -> dict:
    key = (subtask.action.target, subtask.action.value, subtask.outcome)
    if key not in state._do_cache:
        state._do_cache[key] = exact_do_distribution(env, subtask.outcome, subtask.action)
    return state._do_cache[key]


def _reinforce(graph: CausalGraph, claims: list[CausalClaim]) -> CausalGraph:
    g = graph.copy()
    for claim in claims:
        edge = claim.edge()
        g.variables.update(edge)
        w = g.edges.get(edge, NEW_EDGE_WEIGHT)
        g.edges[edge] = min(1.0, w + REINFORCE_STEP)
    return g


def run_episode(
    env: Scm,
    state: AgentState,
    source,
    subtasks: list[Subtask],
    cfg: ErmConfig,
    episode_seed: int,
    task_class: str = "default",
    goal: str = "episode",
) -> Episode:
    episode = Episode(goal=goal, task_class=task_class)
    for subtask in subtasks:
        guards = state.registry.active_guard_texts()
        hyp = source.propose(subtask, state.graph, guards)

        state.clock += 1
        t = state.clock
        attempt = state.attempts.get(subtask.name, 0)
        state.attempts[subtask.name] = attempt + 1

        world = sample_interventional(
            env, subtask.action, 1, seed=episode_seed * _SEED_STRIDE + t
        )[0]
        observed = world.assignment[subtask.outcome]
        task_loss = 0.0 if subtask.desired is None or observed == subtask.desired else 1.0

        if cfg.baseline:
            delta = task_loss  # outcome-only error metric
        else:
            domain = env.domains[subtask.outcome]
            delta = tv_distance(hyp.predicted, point_mass(observed, domain))

        state.log.append(
            CtlEntry(
                t=t,
                state=world,
                claims=list(hyp.claims),
                action=subtask.action,
                predicted=dict(hyp.predicted),
                observed=observed,
                delta=delta,
            )
        )

        truth = _true_do(env, state, subtask)
        regret = epistemic_regret(hyp.predicted, truth)
        episode.losses.append(total_loss(task_loss, state.graph, hyp.predicted, truth, cfg))
        episode.regrets.append(regret)
        episode.deltas.append(delta)
        episode.entry_ts.append(t)
        episode.subtasks.append(subtask.name)

        if cfg.baseline:
            # Outcome-only reward: success strengthens whatever was claimed;
            # failure names no edge, so nothing is contracted.
            if task_loss == 0.0 and hyp.claims:
                state.graph = _reinforce(state.graph, hyp.claims)
        elif delta > cfg.eps_err:
            before = belief_set(state.graph)
            state.graph = erm_revise(state.graph, hyp.claims, state.log, cfg)
            if belief_set(state.graph) != before:
                episode.revisions += 1
            kind = classify(
                hyp.claims,
                delta,
                ClassificationContext(
                    scm=env,
                    action=subtask.action,
                    outcome=subtask.outcome,
                    predicted=hyp.predicted,
                    confidence=hyp.confidence,
                    first_attempt=attempt == 0,
                    tags=subtask.tags,
                ),
                eps_err=cfg.eps_err,
            )
            if kind is not None:
                guard = state.registry.record_and_maybe_inject(kind, regret, t)
                if guard is not None:
                    episode.guards_injected.append(guard.text)

    retracted = state.registry.finish_episode(episode.mean_regret, state.clock)
    episode.guards_retracted.extend(g.text for g in retracted)
    state.routing.record(task_class, episode.mean_regret)
    episode.routed = state.routing.should_route(task_class)
    state.episode_count += 1
    return episode


# -- checkpointing -----------------------------------------------------------------


def save_checkpoint(state: AgentState, path: str | Path) -> None:
    doc = {
        "graph": json.loads(graph_to_json(state.graph)),
        "registry": state.registry.to_dict(),
        "routing": state.routing.to_dict(),
        "clock": state.clock,
        "episode_count": state.episode_count,
    }
    Path(path).write_text(json.dumps(doc, sort_keys=True, indent=2) + "\n", encoding="utf-8")


def load_checkpoint(
    path: str | Path,
    log: CtlLog | None = None,
    tables: EvidenceTables | None = None,
) -> AgentState:
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    state = AgentState(
        graph=graph_from_json(json.dumps(doc["graph"])),
        log=log if log is not None else CtlLog(),
        registry=FailureRegistry.from_dict(doc["registry"]),
        routing=RoutingTable.from_dict(doc["routing"]),
        tables=tables,
    )
    state.clock = doc["clock"]
    state.episode_count = doc["episode_count"]
    return state


def rng_for(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(key=seed & (2**64 - 1)))
