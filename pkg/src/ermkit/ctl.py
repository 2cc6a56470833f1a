"""Append-only causal transaction log.

One entry per executed action: timestamp, post-action world state, the
hypothesis behind the action (claims + predicted distribution), the action
itself, the observed outcome, and the per-step epistemic error delta.

Persistence is JSONL, one entry per line, flushed on every append so a
crash leaves a readable prefix. Entries are never mutated or removed.

One log per agent, single writer. Readers (and the consensus layer) work
on closed snapshots only.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

from .errors import (
    InvalidParameter,
    NoInterventionRecords,
    NonMonotonicTimestamp,
    PersistenceFailure,
)
from .graph import CausalClaim
from .scm import Intervention, WorldState


@dataclass
class CtlEntry:
    t: int
    state: WorldState
    claims: list[CausalClaim]
    action: Intervention
    predicted: dict
    observed: object
    delta: float
    compensation: bool = False  # rollback steps log here but never vote

    def __post_init__(self):
        if self.delta < 0:
            raise InvalidParameter("per-step error delta must be nonnegative")


def _encode_value(v):
    return v


def _dist_to_pairs(dist: dict) -> list:
    return [[k, float(p)] for k, p in sorted(dist.items(), key=lambda kv: str(kv[0]))]


def _pairs_to_dist(pairs: list) -> dict:
    return {k: float(p) for k, p in pairs}


def entry_to_json(entry: CtlEntry) -> str:
    doc = {
        "t": entry.t,
        "state": {"assignment": entry.state.assignment},
        "claims": [{"from": c.cause, "to": c.effect} for c in entry.claims],
        "action": {"target": entry.action.target, "value": entry.action.value},
        "predicted": _dist_to_pairs(entry.predicted),
        "observed": entry.observed,
        "delta": float(entry.delta),
    }
    if entry.state.metric_embedding is not None:
        doc["state"]["metric_embedding"] = list(entry.state.metric_embedding)
    if entry.compensation:
        doc["compensation"] = True
    return json.dumps(doc, sort_keys=True, separators=(",", ":"))


def entry_from_json(line: str) -> CtlEntry:
    doc = json.loads(line)
    emb = doc["state"].get("metric_embedding")
    return CtlEntry(
        t=int(doc["t"]),
        state=WorldState(
            assignment=doc["state"]["assignment"],
            metric_embedding=tuple(emb) if emb is not None else None,
        ),
        claims=[CausalClaim(c["from"], c["to"]) for c in doc["claims"]],
        action=Intervention(doc["action"]["target"], doc["action"]["value"]),
        predicted=_pairs_to_dist(doc["predicted"]),
        observed=doc["observed"],
        delta=float(doc["delta"]),
        compensation=bool(doc.get("compensation", False)),
    )


class CtlLog:
    """Single-writer append-only log with support/refute evidence counters.

    eps_err is the epistemic error threshold: an entry carrying a claim
    supports it when delta <= eps_err and refutes it otherwise.
    Compensation-tagged entries are excluded from both counts.
    """

    def __init__(self, path: str | Path | None = None, eps_err: float = 0.1):
        self.eps_err = eps_err
        self.path = Path(path) if path is not None else None
        self.entries: list[CtlEntry] = []
        self._counts: dict[CausalClaim, list[int]] = {}
        self._fh = None
        if self.path is not None:
            try:
                self._fh = open(self.path, "a", encoding="utf-8")
            except OSError as exc:
                raise PersistenceFailure(str(exc)) from exc

    def __len__(self) -> int:
        return len(self.entries)

    def append(self, entry: CtlEntry) -> None:
        if self.entries and entry.t <= self.entries[-1].t:
            raise NonMonotonicTimestamp(
                f"timestamp {entry.t} not after {self.entries[-1].t}"
            )
        if self._fh is not None:
            try:
                self._fh.write(entry_to_json(entry) + "\n")
                self._fh.flush()
            except OSError as exc:
                raise PersistenceFailure(str(exc)) from exc
        self.entries.append(entry)
        if not entry.compensation:
            for claim in entry.claims:
                bucket = self._counts.setdefault(claim, [0, 0])
                bucket[0 if entry.delta <= self.eps_err else 1] += 1

    def support(self, claim: CausalClaim) -> int:
        return self._counts.get(claim, [0, 0])[0]

    def refute(self, claim: CausalClaim) -> int:
        return self._counts.get(claim, [0, 0])[1]

    def claims_seen(self) -> set[CausalClaim]:
        return set(self._counts)

    def empirical_do(self, outcome: str, iv: Intervention) -> tuple[dict, int]:
        """Ratio-of-indicators estimate of P(outcome | do(iv)) over logged
        actions equal to iv, plus the number of such actions."""
        counts: dict = {}
        n = 0
        for e in self.entries:
            if e.action != iv:
                continue
            n += 1
            y = e.state.assignment[outcome]
            counts[y] = counts.get(y, 0) + 1
        if n == 0:
            raise NoInterventionRecords(f"no logged actions match {iv}")
        return {y: c / n for y, c in counts.items()}, n

    def close(self) -> None:
        if self._fh is not None:
            self._fh.close()
            self._fh = None

    @classmethod
    def load(cls, path: str | Path, eps_err: float = 0.1) -> "CtlLog":
        log = cls(path=None, eps_err=eps_err)
        with open(path, encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if line:
                    log.append(entry_from_json(line))
        return log


def required_samples_exact(epsilon: float, delta: float, domain_size: int) -> float:
    """Hoeffding + union bound sample size (pre-ceiling)."""
    if not 0.0 < epsilon < 1.0:
        raise InvalidParameter("epsilon must be in (0, 1)")
    if not 0.0 < delta < 1.0:
        raise InvalidParameter("delta must be in (0, 1)")
    if domain_size < 2:
        raise InvalidParameter("domain_size must be >= 2")
    return (1.0 / (2.0 * epsilon * epsilon)) * math.log(2.0 * domain_size / delta)


def required_samples(epsilon: float, delta: float, domain_size: int) -> int:
    """Interventions sufficient for epsilon-accurate recovery w.p. >= 1-delta."""
    return math.ceil(required_samples_exact(epsilon, delta, domain_size))
