"""Physical transactions: ordered action/compensation pairs with rollback.

A compensation is registered before its action runs. Physical undo is
approximate and costly: compensating step i returns the world to within a
declared deviation budget eps_i of the pre-action state (measured by a
state metric, normalized Hamming by default). On failure at step k the
compensations run in strict reverse order k..1 and the recovery state is
guaranteed within sum(eps_1..eps_k) of the initial state.

The slack model: an honest compensation restores the recorded pre-action
assignment, applies its registered intervention, and then corrupts at most
ceil(eps_i * |V|) - 1 variables, which keeps the per-step deviation
strictly below eps_i. Fixtures can override the slack budget or the
compensation target to build adversarial violators.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .ctl import CtlEntry, CtlLog
from .errors import CompensationFailure, InvalidParameter
from .probs import point_mass
from .scm import Intervention, Scm, WorldState, apply_intervention_to_state


def normalized_hamming(a: WorldState, b: WorldState) -> float:
    """Fraction of variables on which two assignments disagree."""
    keys = set(a.assignment) | set(b.assignment)
    if not keys:
        return 0.0
    mismatches = sum(
        1 for k in keys if a.assignment.get(k) != b.assignment.get(k)
    )
    return mismatches / len(keys)


@dataclass
class TransactionStep:
    action: Intervention
    compensation: Intervention
    epsilon: float
    cost: float
    time: float
    slack_vars: int | None = None  # fixture hook: overrides the honest budget
    fail_compensation: bool = False  # fixture hook: compensation itself errors

    def __post_init__(self):
        if self.epsilon < 0:
            raise InvalidParameter("deviation budget must be nonnegative")
        if self.cost <= 0 or self.time <= 0:
            raise InvalidParameter("compensations have strictly positive cost and time")


@dataclass
class PhysicalTransaction:
    initial_state: WorldState
    steps: list[TransactionStep]
    final_state: WorldState | None = None

    def __post_init__(self):
        if not self.steps:
            raise InvalidParameter("a transaction needs at least one step")


@dataclass
class TransactionTrace:
    initial_state: WorldState
    action_states: list[tuple[int, WorldState]] = field(default_factory=list)
    compensation_states: list[tuple[int, WorldState, float]] = field(default_factory=list)
    compensation_cost: float = 0.0
    compensation_time: float = 0.0

    def compensation_order(self) -> list[int]:
        return [i for i, _, _ in self.compensation_states]


@dataclass
class Committed:
    final_state: WorldState
    trace: TransactionTrace


@dataclass
class RolledBack:
    recovery_state: WorldState
    deviation_bound: float
    failed_at: int
    trace: TransactionTrace


def _honest_slack_budget(epsilon: float, n_vars: int) -> int:
    # Strict inequality d < eps: corrupting ceil(eps*n)-1 variables at most.
    return max(0, math.ceil(epsilon * n_vars) - 1)


def _compensate(
    env: Scm,
    step: TransactionStep,
    pre_action_state: WorldState,
    rng: np.random.Generator,
) -> WorldState:
    if step.fail_compensation:
        raise RuntimeError("compensation actuator fault (injected)")
    assignment = dict(pre_action_state.assignment)
    assignment[step.compensation.target] = step.compensation.value
    budget = (
        step.slack_vars
        if step.slack_vars is not None
        else _honest_slack_budget(step.epsilon, len(env.variables))
    )
    if budget > 0:
        k = int(rng.integers(0, budget + 1))
        if k > 0:
            victims = rng.choice(len(env.variables), size=k, replace=False)
            for vi in victims:
                var = env.variables[int(vi)]
                dom = env.domains[var]
                assignment[var] = dom[int(rng.integers(0, len(dom)))]
    return WorldState(assignment)


def _log_txn_entry(log: CtlLog | None, state: WorldState, iv: Intervention, comp: bool):
    if log is None:
        return
    t = (log.entries[-1].t + 1) if log.entries else 1
    observed = state.assignment[iv.target]
    log.append(
        CtlEntry(
            t=t,
            state=state,
            claims=[],
            action=iv,
            predicted=point_mass(iv.value),
            observed=observed,
            delta=0.0 if observed == iv.value else 1.0,
            compensation=comp,
        )
    )


def execute(
    txn: PhysicalTransaction,
    env: Scm,
    metric=normalized_hamming,
    fail_at: int | None = None,
    seed: int = 0,
    log: CtlLog | None = None,
):
    """Run the transaction; on step-k failure roll back compensations k..1.

    Returns Committed or RolledBack. A failing compensation raises
    CompensationFailure with the partial trace attached (poisoned state).
    """
    if fail_at is not None and not 1 <= fail_at <= len(txn.steps):
        raise InvalidParameter(f"fail_at must be in 1..{len(txn.steps)}")
    rng = np.random.Generator(np.random.Philox(key=seed & (2**64 - 1)))
    trace = TransactionTrace(initial_state=txn.initial_state)
    states = [txn.initial_state]

    failed_at = None
    for i, step in enumerate(txn.steps, start=1):
        new_state = apply_intervention_to_state(env, states[-1], step.action, rng)
        states.append(new_state)
        trace.action_states.append((i, new_state))
        _log_txn_entry(log, new_state, step.action, comp=False)
        if fail_at == i:
            failed_at = i
            break

    if failed_at is None:
        return Committed(final_state=states[-1], trace=trace)

    current = states[-1]
    for j in range(failed_at, 0, -1):
        step = txn.steps[j - 1]
        try:
            current = _compensate(env, step, states[j - 1], rng)
        except Exception as exc:
            raise CompensationFailure(
                f"compensation for step {j} failed: {exc}", trace=trace
            ) from exc
        measured = metric(current, states[j - 1])
        trace.compensation_states.append((j, current, measured))
        trace.compensation_cost += step.cost
        trace.compensation_time += step.time
        _log_txn_entry(log, current, step.compensation, comp=True)

    bound = sum(txn.steps[i].epsilon for i in range(failed_at))
    return RolledBack(
        recovery_state=current,
        deviation_bound=bound,
        failed_at=failed_at,
        trace=trace,
    )


def verify_recovery_bound(result: RolledBack, metric=normalized_hamming) -> bool:
    """True iff the measured recovery deviation honors the declared bound."""
    measured = metric(result.recovery_state, result.trace.initial_state)
    return measured <= result.deviation_bound
