"""Epistemic regret, the three-term loss, and evidence-driven belief revision.

The revision operator recomputes each hypothesized claim's confidence as
s / (s + r + eps_conf) from log evidence, contracts below theta_min,
reinforces above theta_max, pins the weight to the confidence in between,
and re-enforces acyclicity last. Rationality of the result is checkable
against the four classic revision postulates (success, inclusion,
vacuity, consistency).
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .ctl import CtlLog
from .graph import (
    BeliefSet,
    CausalClaim,
    CausalGraph,
    belief_set,
    consistency_loss,
    enforce_dag,
)
from .probs import kl_divergence

NEW_EDGE_WEIGHT = 0.5  # neutral entry point between the default thresholds
REINFORCE_STEP = 0.1


@dataclass
class ErmConfig:
    """Weights and thresholds of the revision loop.

    lam = 0 switches the agent into the outcome-only baseline; lam > 0
    enables epistemic error as the revision signal.
    """

    lam: float = 1.0
    mu: float = 1.0
    theta_min: float = 0.2
    theta_max: float = 0.8
    eps_conf: float = 1e-9
    eps_err: float = 0.1
    task_tolerance: float = 0.0
    uniform_prior: bool = False

    def __post_init__(self):
        if self.lam < 0 or self.mu < 0:
            raise ValueError("loss weights must be nonnegative")
        if not self.theta_min < self.theta_max:
            raise ValueError("theta_min must be strictly below theta_max")
        if self.eps_conf <= 0:
            raise ValueError("eps_conf must be positive")

    @classmethod
    def from_dict(cls, doc: dict) -> "ErmConfig":
        aliases = {"lambda": "lam"}
        kwargs = {aliases.get(k, k): v for k, v in doc.items()}
        return cls(**kwargs)

    @property
    def baseline(self) -> bool:
        return self.lam == 0.0


@dataclass
class LossBreakdown:
    task: float
    epistemic: float
    consistency: float
    total: float


def epistemic_regret(predicted: dict, observed_do: dict) -> float:
    """KL divergence (nats) from the predicted interventional distribution
    to the observed one; +inf when the prediction puts mass on outcomes the
    observed distribution rules out."""
    return kl_divergence(predicted, observed_do)


def total_loss(
    task_loss: float,
    graph: CausalGraph,
    predicted: dict,
    observed_do: dict,
    cfg: ErmConfig,
) -> LossBreakdown:
    epi = epistemic_regret(predicted, observed_do)
    con = consistency_loss(graph)
    total = task_loss + cfg.lam * epi + cfg.mu * con
    return LossBreakdown(task=task_loss, epistemic=epi, consistency=con, total=total)


def detect_aleatoric_success(task_loss: float, regret: float, cfg: ErmConfig) -> bool:
    """Correct outcome, wrong model: task loss within tolerance while the
    epistemic regret still exceeds the error threshold."""
    return task_loss <= cfg.task_tolerance and regret > cfg.eps_err


def claim_confidence(claim: CausalClaim, log: CtlLog, cfg: ErmConfig) -> float:
    s = log.support(claim)
    r = log.refute(claim)
    return s / (s + r + cfg.eps_conf)


def erm_revise(
    graph: CausalGraph,
    hypothesis: list[CausalClaim],
    log: CtlLog,
    cfg: ErmConfig,
) -> CausalGraph:
    """Layer-1 revision of the graph against cumulative log evidence."""
    g = graph.copy()
    for claim in hypothesis:
        conf = claim_confidence(claim, log, cfg)
        edge = claim.edge()
        g.variables.update(edge)
        w = g.edges.get(edge, NEW_EDGE_WEIGHT)
        if conf < cfg.theta_min:
            g.edges.pop(edge, None)  # contraction
        elif conf > cfg.theta_max:
            g.edges[edge] = min(1.0, w + REINFORCE_STEP)  # reinforcement
        else:
            g.edges[edge] = conf
    return enforce_dag(g)


@dataclass
class AgmReport:
    """Postulate check for one revision step. ``vacuity`` is None when the
    evidence contradicted something (the postulate does not apply)."""

    success: bool
    inclusion: bool
    vacuity: bool | None
    consistency: bool
    violations: list[str] = field(default_factory=list)

    @property
    def all_applicable_pass(self) -> bool:
        return not self.violations


def check_agm_postulates(
    before: CausalGraph,
    hypothesis: list[CausalClaim],
    log: CtlLog,
    cfg: ErmConfig,
    after: CausalGraph,
) -> AgmReport:
    confs = {c: claim_confidence(c, log, cfg) for c in hypothesis}
    bs_before: BeliefSet = belief_set(before)
    bs_after: BeliefSet = belief_set(after)
    violations: list[str] = []

    success = all(c in bs_after for c, conf in confs.items() if conf > cfg.theta_max)
    if not success:
        violations.append("success: a high-confidence claim is missing from the belief set")

    allowed = set(bs_before.claims) | set(hypothesis)
    inclusion = set(bs_after.claims) <= allowed
    if not inclusion:
        violations.append("inclusion: belief set gained a claim that was never asserted")

    contradicted = any(conf < cfg.theta_min for conf in confs.values())
    would_cycle = not before.copy().is_acyclic() or _introduces_cycle(before, confs, cfg)
    vacuity: bool | None
    if contradicted or would_cycle:
        vacuity = None
    else:
        vacuity = set(bs_before.claims) <= set(bs_after.claims)
        if not vacuity:
            violations.append("vacuity: non-contradicting evidence shrank the belief set")

    consistency = after.is_acyclic()
    if not consistency:
        violations.append("consistency: revised graph contains a cycle")

    return AgmReport(success, inclusion, vacuity, consistency, violations)


def _introduces_cycle(before: CausalGraph, confs: dict, cfg: ErmConfig) -> bool:
    g = before.copy()
    for claim, conf in confs.items():
        if conf >= cfg.theta_min:
            g.edges.setdefault(claim.edge(), NEW_EDGE_WEIGHT)
            g.variables.update(claim.edge())
    return not g.is_acyclic()


