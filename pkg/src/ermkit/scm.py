"""Discrete structural causal models with exact enumeration oracles.

The environment side of the sandbox: finite-domain SCMs defined by
conditional probability tables, observational and interventional sampling
via graph surgery, and a brute-force joint-enumeration oracle that backs
every expected value used in tests.

Noise is counter-based (numpy Philox) keyed by (seed, variable index), so
the i-th draw for a variable is a pure function of the key and the counter.
Identical seeds reproduce identical traces on any platform.

SCMs are immutable after construction and safe to share across threads;
samplers take explicit seeds, so parallel callers never share mutable state.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import (
    InvalidParameter,
    InvalidScm,
    StateSpaceTooLarge,
    UnknownVariable,
    ValueOutOfDomain,
    ZeroProbabilityEvidence,
)
from .probs import check_same_domain, tv_distance

MAX_JOINT_STATES = 10_000_000
_CPT_ROW_ATOL = 1e-9


@dataclass(frozen=True)
class Intervention:
    """do(target = value): replace the target's mechanism by a constant."""

    target: str
    value: object


@dataclass
class WorldState:
    """A full assignment of values to an SCM's variables.

    ``metric_embedding`` is an optional numeric vector for state metrics
    used by transaction rollback accounting; plain assignments suffice
    for the default normalized-Hamming metric.
    """

    assignment: dict
    metric_embedding: tuple | None = None

    def value(self, var: str):
        return self.assignment[var]


@dataclass
class Scm:
    """Ground-truth structural causal model over finite domains.

    mechanisms[v] maps a tuple of parent values (ordered like parents[v])
    to a distribution dict over v's domain. Rows may omit zero-probability
    values; each row must sum to 1 within 1e-9 and every parent-value
    combination must have exactly one row.
    """

    variables: list[str]
    domains: dict[str, list]
    parents: dict[str, list[str]]
    mechanisms: dict[str, dict[tuple, dict]]
    exogenous_seed: int = 0

    _topo: list[str] = field(init=False, repr=False)

    def __post_init__(self):
        self._validate()

    # -- validation -------------------------------------------------------

    def _validate(self):
        names = self.variables
        if len(set(names)) != len(names):
            raise InvalidScm("duplicate variable names")
        for v in names:
            if v not in self.domains or not self.domains[v]:
                raise InvalidScm(f"variable {v!r} has no domain")
            if v not in self.parents:
                raise InvalidScm(f"variable {v!r} has no parent list")
            for p in self.parents[v]:
                if p not in self.domains:
                    raise InvalidScm(f"unknown parent {p!r} of {v!r}")
        self._topo = self._topological_order()
        for v in names:
            self._validate_cpt(v)

    def _topological_order(self) -> list[str]:
        indeg = {v: len(self.parents[v]) for v in self.variables}
        children: dict[str, list[str]] = {v: [] for v in self.variables}
        for v in self.variables:
            for p in self.parents[v]:
                children[p].append(v)
        ready = [v for v in self.variables if indeg[v] == 0]
        order = []
        while ready:
            v = ready.pop(0)
            order.append(v)
            for c in children[v]:
                indeg[c] -= 1
                if indeg[c] == 0:
                    ready.append(c)
        if len(order) != len(self.variables):
            raise InvalidScm("parent relation contains a cycle")
        return order

    def _validate_cpt(self, v: str):
        rows = self.mechanisms.get(v)
        if rows is None:
            raise InvalidScm(f"variable {v!r} has no mechanism")
        expected = set(itertools.product(*(self.domains[p] for p in self.parents[v])))
        seen = set(rows.keys())
        if seen != expected:
            raise InvalidScm(
                f"CPT of {v!r} must have exactly one row per parent assignment "
                f"({len(seen)} rows for {len(expected)} assignments)"
            )
        dom = set(self.domains[v])
        for combo, dist in rows.items():
            if not set(dist) <= dom:
                raise InvalidScm(f"CPT of {v!r} assigns mass outside its domain")
            if any(p < 0 for p in dist.values()):
                raise InvalidScm(f"negative probability in CPT of {v!r}")
            if abs(sum(dist.values()) - 1.0) > _CPT_ROW_ATOL:
                raise InvalidScm(f"CPT row of {v!r} at {combo} does not sum to 1")

    # -- convenience ------------------------------------------------------

    @property
    def topological_order(self) -> list[str]:
        return list(self._topo)

    def index(self, var: str) -> int:
        try:
            return self.variables.index(var)
        except ValueError:
            raise UnknownVariable(var) from None

    def check_value(self, var: str, value) -> None:
        if var not in self.domains:
            raise UnknownVariable(var)
        if value not in self.domains[var]:
            raise ValueOutOfDomain(f"{value!r} not in domain of {var!r}")

    def descendants(self, var: str) -> set[str]:
        children: dict[str, set[str]] = {v: set() for v in self.variables}
        for v in self.variables:
            for p in self.parents[v]:
                children[p].add(v)
        out: set[str] = set()
        frontier = [var]
        while frontier:
            for c in children[frontier.pop()]:
                if c not in out:
                    out.add(c)
                    frontier.append(c)
        return out


def validate_intervention(scm: Scm, iv: Intervention) -> None:
    scm.check_value(iv.target, iv.value)


# -- graph surgery ---------------------------------------------------------


def do_surgery(scm: Scm, iv: Intervention) -> Scm:
    """Mutilated model: the target becomes a root pinned at iv.value.

    Every non-target mechanism is shared by reference with the original,
    which is the modularity property in its strongest checkable form.
    """
    validate_intervention(scm, iv)
    parents = dict(scm.parents)
    parents[iv.target] = []
    mechanisms = dict(scm.mechanisms)
    mechanisms[iv.target] = {(): {iv.value: 1.0}}
    return Scm(
        variables=list(scm.variables),
        domains=scm.domains,
        parents=parents,
        mechanisms=mechanisms,
        exogenous_seed=scm.exogenous_seed,
    )


# -- sampling --------------------------------------------------------------


def _var_rng(seed: int, var_index: int, stream: int = 0) -> np.random.Generator:
    key = ((seed & 0xFFFFFFFFFFFFFFFF) << 32) | (var_index << 1) | stream
    return np.random.Generator(np.random.Philox(key=key))


def _cumulative_table(scm: Scm, v: str):
    """(rows, cum) where rows maps mixed-radix parent index -> cumulative probs."""
    ps = scm.parents[v]
    dom = scm.domains[v]
    combos = list(itertools.product(*(range(len(scm.domains[p])) for p in ps)))
    cum = np.empty((len(combos), len(dom)))
    for ri, combo in enumerate(combos):
        key = tuple(scm.domains[p][ci] for p, ci in zip(ps, combo))
        dist = scm.mechanisms[v][key]
        cum[ri] = np.cumsum([dist.get(val, 0.0) for val in dom])
    return cum


def _mechanism_draw(scm: Scm, v: str, columns: dict[str, np.ndarray], u: np.ndarray):
    ps = scm.parents[v]
    n = len(u)
    rows = np.zeros(n, dtype=np.int64)
    for p in ps:
        rows = rows * len(scm.domains[p]) + columns[p]
    cum = _cumulative_table(scm, v)
    c = cum[rows]
    return (u[:, None] >= c[:, :-1]).sum(axis=1)


def _sample_columns(
    scm: Scm,
    n: int,
    seed: int,
    pinned: dict[str, object] | None = None,
    leak: float = 0.0,
) -> dict[str, np.ndarray]:
    pinned = pinned or {}
    columns: dict[str, np.ndarray] = {}
    for v in scm._topo:
        vi = scm.index(v)
        u = _var_rng(seed, vi).random(n)
        if v in pinned:
            fixed = np.full(n, scm.domains[v].index(pinned[v]), dtype=np.int64)
            if leak > 0.0 and scm.parents[v]:
                # Leaky actuator: with probability `leak` the achieved value
                # comes from the native mechanism, i.e. from Pa(v), breaking
                # actuator independence on purpose.
                mech = _mechanism_draw(scm, v, columns, u)
                mask = _var_rng(seed, vi, stream=1).random(n) < leak
                columns[v] = np.where(mask, mech, fixed)
            else:
                columns[v] = fixed
        else:
            columns[v] = _mechanism_draw(scm, v, columns, u)
    return columns


def _columns_to_states(scm: Scm, columns: dict[str, np.ndarray]) -> list[WorldState]:
    decoded = [
        [scm.domains[v][i] for i in columns[v]] for v in scm.variables
    ]
    names = scm.variables
    return [WorldState(dict(zip(names, row))) for row in zip(*decoded)]


def sample_observational(scm: Scm, n: int, seed: int | None = None) -> list[WorldState]:
    """n i.i.d. joint samples drawn in topological order."""
    if n < 1:
        raise InvalidParameter("n must be >= 1")
    seed = scm.exogenous_seed if seed is None else seed
    return _columns_to_states(scm, _sample_columns(scm, n, seed))


def sample_interventional(
    scm: Scm,
    iv: Intervention,
    n: int,
    seed: int | None = None,
    leak: float = 0.0,
) -> list[WorldState]:
    """Samples from the mutilated model: the target is pinned, all other
    mechanisms untouched. ``leak`` > 0 simulates an actuator that violates
    actuator independence (see _sample_columns)."""
    if n < 1:
        raise InvalidParameter("n must be >= 1")
    validate_intervention(scm, iv)
    seed = scm.exogenous_seed if seed is None else seed
    cols = _sample_columns(scm, n, seed, pinned={iv.target: iv.value}, leak=leak)
    return _columns_to_states(scm, cols)


def apply_intervention_to_state(
    scm: Scm, state: WorldState, iv: Intervention, rng: np.random.Generator
) -> WorldState:
    """One physical do() on a concrete world: pin the target, then resample
    its descendants in topological order under their unchanged mechanisms."""
    validate_intervention(scm, iv)
    new = dict(state.assignment)
    new[iv.target] = iv.value
    affected = scm.descendants(iv.target)
    for v in scm._topo:
        if v not in affected:
            continue
        key = tuple(new[p] for p in scm.parents[v])
        dist = scm.mechanisms[v][key]
        u = rng.random()
        acc = 0.0
        chosen = scm.domains[v][-1]
        for val in scm.domains[v]:
            acc += dist.get(val, 0.0)
            if u < acc:
                chosen = val
                break
        new[v] = chosen
    return WorldState(new)


def empirical_distribution(states: list[WorldState], var: str) -> dict:
    counts: dict = {}
    for s in states:
        v = s.assignment[var]
        counts[v] = counts.get(v, 0) + 1
    n = len(states)
    return {k: c / n for k, c in counts.items()}


# -- exact enumeration oracle -----------------------------------------------


def _joint_tensor(scm: Scm) -> np.ndarray:
    sizes = [len(scm.domains[v]) for v in scm.variables]
    total = 1
    for s in sizes:
        total *= s
    if total > MAX_JOINT_STATES:
        raise StateSpaceTooLarge(f"joint state space has {total} cells")
    pos = {v: i for i, v in enumerate(scm.variables)}
    k = len(sizes)
    joint = np.ones([1] * k)
    for v in scm.variables:
        ps = scm.parents[v]
        axes = [pos[p] for p in ps] + [pos[v]]
        dense = np.zeros([sizes[a] for a in axes])
        for combo in itertools.product(*(range(len(scm.domains[p])) for p in ps)):
            key = tuple(scm.domains[p][ci] for p, ci in zip(ps, combo))
            dist = scm.mechanisms[v][key]
            dense[combo] = [dist.get(val, 0.0) for val in scm.domains[v]]
        order = sorted(range(len(axes)), key=lambda i: axes[i])
        arr = np.transpose(dense, order)
        bshape = [sizes[a] if a in axes else 1 for a in range(k)]
        joint = joint * arr.reshape(bshape)
    return joint


def exact_conditional(scm: Scm, outcome: str, given: dict | None = None) -> dict:
    """Exact P(outcome | given) by full enumeration of the joint."""
    given = given or {}
    if outcome not in scm.domains:
        raise UnknownVariable(outcome)
    for var, val in given.items():
        scm.check_value(var, val)
    joint = _joint_tensor(scm)
    pos = {v: i for i, v in enumerate(scm.variables)}
    for var, val in given.items():
        idx = scm.domains[var].index(val)
        joint = np.take(joint, [idx], axis=pos[var])
    denom = float(joint.sum())
    if denom <= 0.0:
        raise ZeroProbabilityEvidence(f"conditioning event {given} has probability 0")
    other_axes = tuple(pos[v] for v in scm.variables if v != outcome)
    vec = joint.sum(axis=other_axes).reshape(-1)
    return {val: float(p / denom) for val, p in zip(scm.domains[outcome], vec)}


def exact_marginal(scm: Scm, outcome: str) -> dict:
    return exact_conditional(scm, outcome, {})


def exact_do_distribution(
    scm: Scm, outcome: str, iv: Intervention, given: dict | None = None
) -> dict:
    """Exact P(outcome | do(iv), given) over the mutilated model."""
    if outcome not in scm.domains:
        raise UnknownVariable(outcome)
    return exact_conditional(do_surgery(scm, iv), outcome, given)


def detect_rung_collapse(answer_source: dict, l2_truth: dict, tol: float) -> bool:
    """True iff the answer's backing distribution is farther than ``tol``
    (total variation) from the interventional truth."""
    check_same_domain(answer_source, l2_truth)
    return tv_distance(answer_source, l2_truth) > tol


# -- SCM file format ---------------------------------------------------------


def _coerce(raw, domain):
    """Map a JSON-object key back onto a declared domain value."""
    for v in domain:
        if raw == v or str(v) == raw:
            return v
    raise ValueOutOfDomain(f"{raw!r} does not match any declared domain value")


def scm_from_json(doc: dict) -> Scm:
    try:
        variables = [entry["name"] for entry in doc["variables"]]
        domains = {entry["name"]: list(entry["domain"]) for entry in doc["variables"]}
        edges = [tuple(e) for e in doc.get("edges", [])]
        parents = {v: [p for p, c in edges if c == v] for v in variables}
        mechanisms: dict[str, dict[tuple, dict]] = {}
        for v in variables:
            rows = {}
            for row in doc["cpts"][v]:
                given = {
                    g: _coerce(val, domains[g]) for g, val in row["given"].items()
                }
                key = tuple(given[p] for p in parents[v])
                rows[key] = {
                    _coerce(raw, domains[v]): float(p)
                    for raw, p in row["dist"].items()
                }
            mechanisms[v] = rows
        seed = int(doc.get("seed", 0))
    except (KeyError, TypeError) as exc:
        raise InvalidScm(f"malformed SCM document: {exc}") from exc
    return Scm(variables, domains, parents, mechanisms, exogenous_seed=seed)


def scm_to_json(scm: Scm) -> dict:
    return {
        "variables": [{"name": v, "domain": scm.domains[v]} for v in scm.variables],
        "edges": [[p, v] for v in scm.variables for p in scm.parents[v]],
        "cpts": {
            v: [
                {
                    "given": {p: key[i] for i, p in enumerate(scm.parents[v])},
                    "dist": {str(val): p for val, p in dist.items()},
                }
                for key, dist in scm.mechanisms[v].items()
            ]
            for v in scm.variables
        },
        "seed": scm.exogenous_seed,
    }


def load_scm(path: str | Path) -> Scm:
    with open(path, encoding="utf-8") as fh:
        return scm_from_json(json.load(fh))
