import math

import pytest
from hypothesis import given
from hypothesis import strategies as st

from ermkit.ctl import (
    CtlEntry,
    CtlLog,
    entry_from_json,
    entry_to_json,
    required_samples,
    required_samples_exact,
)
from ermkit.errors import (
    InvalidParameter,
    NoInterventionRecords,
    NonMonotonicTimestamp,
)
from ermkit.graph import CausalClaim
from ermkit.probs import sup_norm_gap
from ermkit.scm import (
    Intervention,
    WorldState,
    empirical_distribution,
    exact_do_distribution,
    sample_interventional,
)

XY = CausalClaim("X", "Y")


def entry(t, delta=0.0, claims=(XY,), y=1, compensation=False):
    return CtlEntry(
        t=t,
        state=WorldState({"X": 1, "Y": y, "Z": 0}),
        claims=list(claims),
        action=Intervention("X", 1),
        predicted={0: 0.36, 1: 0.64},
        observed=y,
        delta=delta,
        compensation=compensation,
    )


# -- append ----------------------------------------------------------------


def test_append_grows_log():
    log = CtlLog()
    log.append(entry(1))
    assert len(log) == 1


def test_non_monotonic_timestamp_rejected():
    log = CtlLog()
    log.append(entry(1))
    with pytest.raises(NonMonotonicTimestamp):
        log.append(entry(1))


def test_disk_round_trip_1000(tmp_path):
    path = tmp_path / "trace.jsonl"
    log = CtlLog(path=path)
    for t in range(1, 1001):
        log.append(entry(t, delta=0.01 * (t % 30), y=t % 2))
    log.close()
    again = CtlLog.load(path)
    assert len(again) == 1000
    assert again.entries == log.entries


def test_jsonl_line_stable(tmp_path):
    e = entry(3, delta=0.25)
    line = entry_to_json(e)
    assert entry_to_json(entry_from_json(line)) == line
    doc_keys = set(__import__("json").loads(line))
    assert {"t", "state", "claims", "action", "predicted", "observed", "delta"} <= doc_keys


entries_strategy = st.builds(
    entry,
    t=st.integers(min_value=1, max_value=10**9),
    delta=st.floats(min_value=0.0, max_value=1.0),
    y=st.sampled_from([0, 1]),
    compensation=st.booleans(),
)


@given(entries_strategy)
def test_jsonl_round_trip_random(e):
    line = entry_to_json(e)
    back = entry_from_json(line)
    assert back == e
    assert entry_to_json(back) == line


def test_jsonl_round_trip_metric_embedding():
    e = entry(5)
    e.state.metric_embedding = (0.25, 1.5, -3.0)
    back = entry_from_json(entry_to_json(e))
    assert back.state.metric_embedding == (0.25, 1.5, -3.0)


# -- support / refute ----------------------------------------------------------


def test_support_refute_fixture():
    log = CtlLog(eps_err=0.1)
    t = 0
    for _ in range(8):
        t += 1
        log.append(entry(t, delta=0.05))
    for _ in range(2):
        t += 1
        log.append(entry(t, delta=0.5))
    assert log.support(XY) == 8
    assert log.refute(XY) == 2


def test_unhypothesized_claim_counts_zero():
    log = CtlLog()
    log.append(entry(1, claims=()))
    other = CausalClaim("A", "B")
    assert log.support(other) == 0 and log.refute(other) == 0


def test_zero_delta_never_refutes():
    log = CtlLog()
    for t in range(1, 6):
        log.append(entry(t, delta=0.0))
    assert log.refute(XY) == 0


def test_compensation_entries_excluded_from_counts():
    log = CtlLog()
    log.append(entry(1, delta=0.0))
    log.append(entry(2, delta=0.0, compensation=True))
    assert log.support(XY) == 1


@given(st.lists(st.floats(min_value=0.0, max_value=1.0), min_size=1, max_size=40))
def test_support_plus_refute_is_carrier_count(deltas):
    log = CtlLog()
    for i, d in enumerate(deltas, start=1):
        log.append(entry(i, delta=d))
    assert log.support(XY) + log.refute(XY) == len(deltas)


# -- empirical do ------------------------------------------------------------------


def test_empirical_do_counting():
    log = CtlLog()
    ys = [1] * 7 + [0] * 3
    for t, y in enumerate(ys, start=1):
        log.append(entry(t, y=y))
    dist, n = log.empirical_do("Y", Intervention("X", 1))
    assert n == 10
    assert dist[1] == pytest.approx(0.7)


def test_empirical_do_requires_matching_action():
    log = CtlLog()
    log.append(entry(1))
    with pytest.raises(NoInterventionRecords):
        log.empirical_do("Y", Intervention("X", 0))


def test_empirical_do_matches_oracle(dock_scm):
    iv = Intervention("X", 1)
    states = sample_interventional(dock_scm, iv, 20000, seed=13)
    log = CtlLog()
    for t, s in enumerate(states, start=1):
        log.append(
            CtlEntry(
                t=t, state=s, claims=[], action=iv,
                predicted={0: 0.5, 1: 0.5}, observed=s.assignment["Y"], delta=0.0,
            )
        )
    dist, n = log.empirical_do("Y", iv)
    assert n == 20000
    exact = exact_do_distribution(dock_scm, "Y", iv)
    assert sup_norm_gap(dist, exact) <= 0.02


def test_slln_error_shrinks(dock_scm):
    # Distributional shrinkage: the estimator error at N=1e5 beats the error
    # at N=1e2 in at least 19 of 20 fixed seeds.
    iv = Intervention("X", 1)
    exact = exact_do_distribution(dock_scm, "Y", iv)
    wins = 0
    for seed in range(20):
        small = empirical_distribution(
            sample_interventional(dock_scm, iv, 100, seed=1000 + seed), "Y"
        )
        large = empirical_distribution(
            sample_interventional(dock_scm, iv, 100_000, seed=1000 + seed), "Y"
        )
        if sup_norm_gap(large, exact) < sup_norm_gap(small, exact):
            wins += 1
    assert wins >= 19


# -- sample-size bound ------------------------------------------------------------------


def test_required_samples_reference_value():
    assert required_samples(0.05, 0.05, 2) == 877
    assert required_samples_exact(0.05, 0.05, 2) == pytest.approx(876.4053269, abs=1e-6)


def test_required_samples_boundary_small():
    # Smallest admissible domain (2) and near-vacuous failure probability:
    # ln(4/0.99) ~ 1.396, times 1 for eps = 1/sqrt(2).
    assert required_samples(1 / math.sqrt(2), 0.99, 2) == 2


def test_required_samples_log_linear_in_domain():
    eps = 0.07
    delta = 0.2
    for k in (2, 4, 8, 16):
        diff = required_samples_exact(eps, delta, 2 * k) - required_samples_exact(
            eps, delta, k
        )
        assert diff == pytest.approx(math.log(2.0) / (2 * eps * eps), rel=1e-12)


def test_required_samples_parameter_validation():
    for bad in ((0.0, 0.05, 2), (0.05, 1.0, 2), (0.05, 0.05, 1)):
        with pytest.raises(InvalidParameter):
            required_samples(*bad)


@given(
    st.floats(min_value=0.01, max_value=0.9),
    st.floats(min_value=0.01, max_value=0.9),
    st.integers(min_value=2, max_value=64),
)
def test_required_samples_monotonicity(eps, delta, k):
    base = required_samples_exact(eps, delta, k)
    assert required_samples_exact(eps / 2, delta, k) > base
    assert required_samples_exact(eps, delta / 2, k) > base
    assert required_samples_exact(eps, delta, k + 1) > base


def test_persistence_failure_on_unwritable_path(tmp_path):
    from ermkit.errors import PersistenceFailure

    with pytest.raises(PersistenceFailure):
        CtlLog(path=tmp_path)  # a directory is not a writable log file


def test_negative_delta_rejected():
    with pytest.raises(InvalidParameter):
        entry(1, delta=-0.1)
