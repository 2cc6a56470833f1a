"""Helpers for finite discrete distributions represented as plain dicts.

A distribution is a ``dict`` mapping outcome values to probabilities.
Operations that compare two distributions require identical key sets;
a value with probability zero must still be present as a key.
"""

from __future__ import annotations

import math

from .errors import DomainMismatch


def check_same_domain(p: dict, q: dict) -> None:
    if set(p) != set(q):
        raise DomainMismatch(
            f"distributions cover different domains: {sorted(map(repr, p))} "
            f"vs {sorted(map(repr, q))}"
        )


def tv_distance(p: dict, q: dict) -> float:
    """Total variation distance, 0.5 * L1 over the union domain."""
    keys = set(p) | set(q)
    return 0.5 * sum(abs(p.get(k, 0.0) - q.get(k, 0.0)) for k in keys)


def kl_divergence(p: dict, q: dict) -> float:
    """D_KL(p || q) in nats; +inf when p puts mass where q has none."""
    check_same_domain(p, q)
    total = 0.0
    for k, pk in p.items():
        if pk <= 0.0:
            continue
        qk = q[k]
        if qk <= 0.0:
            return math.inf
        total += pk * math.log(pk / qk)
    return max(total, 0.0)


def point_mass(value, domain=None) -> dict:
    """Degenerate distribution at ``value``, zero-filled over ``domain`` if given."""
    dist = {v: 0.0 for v in domain} if domain is not None else {}
    dist[value] = 1.0
    return dist


def uniform(domain) -> dict:
    values = list(domain)
    if not values:
        raise DomainMismatch("cannot build a uniform distribution on an empty domain")
    w = 1.0 / len(values)
    return {v: w for v in values}


def normalize(counts: dict) -> dict:
    total = float(sum(counts.values()))
    if total <= 0.0:
        raise DomainMismatch("cannot normalize an all-zero table")
    return {k: v / total for k, v in counts.items()}


def sup_norm_gap(p: dict, q: dict) -> float:
    keys = set(p) | set(q)
    return max(abs(p.get(k, 0.0) - q.get(k, 0.0)) for k in keys)
