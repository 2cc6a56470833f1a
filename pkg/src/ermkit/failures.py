"""Layer 2: failure-mode taxonomy, frequency tracking, and guard lifecycle.

High-regret log entries are classified into five structural failure modes.
Classification runs evaluator-side and may consult ground truth (the SCM);
the agent never sees it. When a mode's count crosses the frequency
threshold, its guard text is injected into every future prompt. A guard
that fails to reduce regret over the evaluation window is retracted, and
only a fresh threshold crossing can bring it back.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

from .errors import InsufficientWindow, InvalidParameter
from .graph import CausalClaim
from .probs import tv_distance
from .scm import Intervention, Scm, exact_conditional


class FailureKind(str, Enum):
    RUNG_COLLAPSE = "RungCollapse"
    CONFOUNDER_BLIND = "ConfounderBlind"
    TRANSITION_COST_OMIT = "TransitionCostOmit"
    PREMATURE_CERTAINTY = "PrematureCertainty"
    NEGATIVE_CONSTRAINT_IGNORE = "NegativeConstraintIgnore"


# Corrective constraint per mode; these strings are injected verbatim into
# prompts and checkpoints, so they must stay byte-stable.
GUARD_TEXT: dict[FailureKind, str] = {
    FailureKind.RUNG_COLLAPSE: (
        "Verify evidence level matches query level before concluding causation."
    ),
    FailureKind.CONFOUNDER_BLIND: (
        "Enumerate potential common causes of X and Y before accepting X → Y."
    ),
    FailureKind.TRANSITION_COST_OMIT: (
        "Explicitly calculate buffer/transition time between sequential phases."
    ),
    FailureKind.PREMATURE_CERTAINTY: (
        "When confidence > 0.9 on first pass, search for at least one alternative."
    ),
    FailureKind.NEGATIVE_CONSTRAINT_IGNORE: (
        "List constraints that prohibit actions before generating a plan."
    ),
}

RUNG_COLLAPSE_TV_TOL = 0.02
CONFIDENCE_CEILING = 0.9

TAG_TRANSITION_COST = "transition_cost"
TAG_NEGATIVE_CONSTRAINT = "negative_constraint"


@dataclass
class ClassificationContext:
    """Evaluator-side context for classifying one failure."""

    scm: Scm
    action: Intervention
    outcome: str
    predicted: dict
    confidence: float = 0.0
    first_attempt: bool = False
    tags: frozenset = frozenset()


def classify(
    hypothesis: list[CausalClaim],
    delta: float,
    ctx: ClassificationContext,
    eps_err: float = 0.1,
) -> FailureKind | None:
    """Rule-based failure label for one high-delta entry.

    Checked in fixed order: a prediction indistinguishable from the
    observational conditional is a rung collapse; a refuted claim whose
    endpoints share a ground-truth parent is confounder blindness; an
    overconfident first attempt is premature certainty; the last two modes
    fire only on scenario context tags.
    """
    if delta <= eps_err:
        raise InvalidParameter("only failures (delta > eps_err) are classified")

    observational = exact_conditional(
        ctx.scm, ctx.outcome, {ctx.action.target: ctx.action.value}
    )
    if tv_distance(ctx.predicted, observational) <= RUNG_COLLAPSE_TV_TOL:
        return FailureKind.RUNG_COLLAPSE

    for claim in hypothesis:
        if claim.cause in ctx.scm.parents and claim.effect in ctx.scm.parents:
            shared = set(ctx.scm.parents[claim.cause]) & set(ctx.scm.parents[claim.effect])
            if shared:
                return FailureKind.CONFOUNDER_BLIND

    if ctx.first_attempt and ctx.confidence > CONFIDENCE_CEILING:
        return FailureKind.PREMATURE_CERTAINTY

    if TAG_TRANSITION_COST in ctx.tags:
        return FailureKind.TRANSITION_COST_OMIT
    if TAG_NEGATIVE_CONSTRAINT in ctx.tags:
        return FailureKind.NEGATIVE_CONSTRAINT_IGNORE
    return None


@dataclass
class FailureMode:
    kind: FailureKind
    count: int = 0
    ewma_regret: float = 0.0
    _seeded: bool = False


@dataclass
class Guard:
    mode: FailureKind
    text: str
    active: bool
    injected_at: int
    regret_before: float
    regret_after: list[float] = field(default_factory=list)
    retracted_at: int | None = None


class FailureRegistry:
    """Per-agent registry of failure modes and their guards."""

    def __init__(
        self,
        freq_threshold: int = 3,
        ewma_alpha: float = 0.3,
        window: int = 5,
    ):
        self.freq_threshold = freq_threshold
        self.ewma_alpha = ewma_alpha
        self.window = window
        self.modes: dict[FailureKind, FailureMode] = {}
        self.guards: list[Guard] = []

    # -- recording ---------------------------------------------------------

    def record_and_maybe_inject(
        self, kind: FailureKind, regret: float, t: int = 0
    ) -> Guard | None:
        mode = self.modes.setdefault(kind, FailureMode(kind=kind))
        mode.count += 1
        if mode._seeded:
            mode.ewma_regret = (
                self.ewma_alpha * regret + (1 - self.ewma_alpha) * mode.ewma_regret
            )
        else:
            mode.ewma_regret = regret
            mode._seeded = True
        if mode.count >= self.freq_threshold and not self._has_active_guard(kind):
            guard = Guard(
                mode=kind,
                text=GUARD_TEXT[kind],
                active=True,
                injected_at=t,
                regret_before=mode.ewma_regret,
            )
            self.guards.append(guard)
            return guard
        return None

    def _has_active_guard(self, kind: FailureKind) -> bool:
        return any(g.active for g in self.guards if g.mode == kind)

    # -- guard lifecycle ----------------------------------------------------

    def active_guards(self) -> list[Guard]:
        return sorted((g for g in self.guards if g.active), key=lambda g: g.injected_at)

    def active_guard_texts(self) -> list[str]:
        return [g.text for g in self.active_guards()]

    def finish_episode(self, mean_regret: float, t: int) -> list[Guard]:
        """Feed one episode's mean regret to every active guard and retract
        the ones whose window shows regret got worse. Returns retractions."""
        retracted = []
        for guard in self.active_guards():
            guard.regret_after.append(mean_regret)
            if len(guard.regret_after) >= self.window:
                if evaluate_guard(guard, guard.regret_after, self.window) == "retract":
                    self._retract(guard, t)
                    retracted.append(guard)
        return retracted

    def _retract(self, guard: Guard, t: int) -> None:
        guard.active = False
        guard.retracted_at = t
        # A retracted guard only returns after a fresh threshold crossing.
        if guard.mode in self.modes:
            self.modes[guard.mode].count = 0

    # -- serialization -------------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "freq_threshold": self.freq_threshold,
            "ewma_alpha": self.ewma_alpha,
            "window": self.window,
            "modes": [
                {
                    "kind": m.kind.value,
                    "count": m.count,
                    "ewma_regret": m.ewma_regret,
                    "seeded": m._seeded,
                }
                for m in self.modes.values()
            ],
            "guards": [
                {
                    "mode": g.mode.value,
                    "text": g.text,
                    "active": g.active,
                    "injected_at": g.injected_at,
                    "regret_before": g.regret_before,
                    "regret_after": list(g.regret_after),
                    "retracted_at": g.retracted_at,
                }
                for g in self.guards
            ],
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "FailureRegistry":
        reg = cls(
            freq_threshold=doc["freq_threshold"],
            ewma_alpha=doc["ewma_alpha"],
            window=doc["window"],
        )
        for m in doc["modes"]:
            kind = FailureKind(m["kind"])
            reg.modes[kind] = FailureMode(
                kind=kind,
                count=m["count"],
                ewma_regret=m["ewma_regret"],
                _seeded=m["seeded"],
            )
        for g in doc["guards"]:
            reg.guards.append(
                Guard(
                    mode=FailureKind(g["mode"]),
                    text=g["text"],
                    active=g["active"],
                    injected_at=g["injected_at"],
                    regret_before=g["regret_before"],
                    regret_after=list(g["regret_after"]),
                    retracted_at=g["retracted_at"],
                )
            )
        return reg


def evaluate_guard(guard: Guard, window_regrets_after: list[float], window: int = 5) -> str:
    """'retract' when the post-injection window mean exceeds the pre-injection
    regret level, 'keep' otherwise."""
    if len(window_regrets_after) < window:
        raise InsufficientWindow(
            f"need {window} post-injection episodes, have {len(window_regrets_after)}"
        )
    recent = window_regrets_after[-window:]
    mean_after = sum(recent) / len(recent)
    return "retract" if mean_after > guard.regret_before else "keep"
