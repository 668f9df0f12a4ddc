import math
import warnings

import numpy as np
import pytest

from seqnet.consensus_weights import (
    averaging_matrix,
    equal_weight_matrix,
    matrix_power,
    weight_matrix_from_array,
)
from seqnet.detectors import (
    CONTINUE,
    DECIDE_0,
    DECIDE_1,
    ConsensusEngine,
    ExplicitDissemination,
    Thresholds,
    ca_dsprt_trial,
    ca_statistic_direct,
    csprt_trial,
    local_dsprt_trial,
    sd_dsprt_trial_closed_form,
    sd_dsprt_trial_explicit,
    sprt_decide,
)
from seqnet.hypothesis_models import HypothesisModel, ModelSet
from seqnet.streams import CounterStream
from seqnet.topology import (
    complete_topology,
    delay_matrix,
    from_edge_list,
    random_connected_topology,
    ring_topology,
)

GAUSS = HypothesisModel("gaussian", 0.3)


def test_sprt_decide_boundaries_are_inclusive():
    th = Thresholds(1.0, 2.0)
    assert sprt_decide(2.0, th) == DECIDE_1
    assert sprt_decide(-1.0, th) == DECIDE_0
    assert sprt_decide(0.0, th) == CONTINUE
    with pytest.raises(ValueError):
        sprt_decide(float("nan"), th)
    with pytest.raises(ValueError):
        Thresholds(0.0, 1.0)


def test_explicit_sets_on_a_path():
    proto = ExplicitDissemination(from_edge_list(3, [(0, 1), (1, 2)]))
    proto.step(np.array([1.0, 10.0, 100.0]))
    assert proto.info[2] == {(1, 1), (2, 1)}
    assert proto.info[1] == {(0, 1), (1, 1), (2, 1)}
    assert proto.last_messages[1] == {(1, 1)}
    proto.step(np.array([2.0, 20.0, 200.0]))
    # sensor 1 relays the external samples it first received last slot
    assert proto.last_messages[1] == {(1, 2), (0, 1), (2, 1)}
    assert proto.info[2] == {(0, 1), (1, 1), (2, 1), (1, 2), (2, 2)}
    assert proto.set_sum(2) == 1.0 + 10.0 + 100.0 + 20.0 + 200.0


@pytest.mark.parametrize("topo", [ring_topology(12, 2), ring_topology(9, 1),
                                  from_edge_list(5, [(0, 1), (1, 2), (2, 3), (3, 4), (1, 4)])])
def test_information_sets_follow_delay_matrix(topo):
    nu = delay_matrix(topo)
    proto = ExplicitDissemination(topo)
    rng = np.random.default_rng(0)
    for t in range(1, 9):
        proto.step(rng.normal(size=topo.n_sensors))
        for k in range(topo.n_sensors):
            expect = {(ell, j) for ell in range(topo.n_sensors) for j in range(1, t - nu[ell, k] + 2)}
            assert proto.info[k] == expect


def _compare_sd(topo, trials, th):
    for trial in range(trials):
        trace = []
        explicit = sd_dsprt_trial_explicit(topo, GAUSS, th, trial % 2, CounterStream(7, 0, trial), trace=trace)
        closed = sd_dsprt_trial_closed_form(topo, GAUSS, th, trial % 2, CounterStream(7, 0, trial))
        for e, c in zip(explicit, closed):
            assert (e.stopping_time, e.decision) == (c.stopping_time, c.decision)
            assert abs(e.terminal_statistic - c.terminal_statistic) <= 1e-10


def test_explicit_equals_closed_form_on_ring():
    _compare_sd(ring_topology(12, 2), 100, Thresholds(6.0, 6.0))


def test_explicit_equals_closed_form_on_random_graphs():
    rng = np.random.default_rng(123)
    for _ in range(20):
        topo = random_connected_topology(int(rng.integers(3, 12)), float(rng.uniform(0.1, 0.6)), rng)
        _compare_sd(topo, 5, Thresholds(3.0, 3.0))


@pytest.mark.parametrize("n,q", [(12, 1), (20, 1), (26, 1), (12, 2), (20, 3)])
def test_ca_recursion_matches_direct_sum(n, q):
    wm = equal_weight_matrix(ring_topology(n, 2))
    eng = ConsensusEngine(wm, q)
    eng.reset(1)
    rng = np.random.default_rng(n + q)
    hist = []
    for t in range(1, 101):
        s = rng.normal(0.045, 0.3, size=n)
        hist.append(s)
        eta = eng.step(s[None, :])[0]
        if t in (1, 2, 10, 50, 100):
            assert np.max(np.abs(eta - ca_statistic_direct(wm, q, hist))) <= 1e-10


def test_q2_equals_squared_matrix():
    wm = equal_weight_matrix(ring_topology(12, 2))
    w2 = weight_matrix_from_array(matrix_power(wm.w, 2))
    th = Thresholds(0.4, 0.4)
    for trial in range(20):
        a = ca_dsprt_trial(wm, GAUSS, th, 2, 1, CounterStream(1, 0, trial))
        b = ca_dsprt_trial(w2, GAUSS, th, 1, 1, CounterStream(1, 0, trial))
        assert [(v.stopping_time, v.decision) for v in a] == [(v.stopping_time, v.decision) for v in b]
        assert all(abs(x.terminal_statistic - y.terminal_statistic) < 1e-10 for x, y in zip(a, b))


def test_averaging_weights_reduce_to_centralized():
    k = 12
    j = weight_matrix_from_array(averaging_matrix(k))
    th = Thresholds(0.5, 0.5)
    for trial in range(50):
        ca = ca_dsprt_trial(j, GAUSS, th, 1, trial % 2, CounterStream(2, 0, trial))
        cs = csprt_trial(GAUSS, k, Thresholds(k * 0.5, k * 0.5), trial % 2, CounterStream(2, 0, trial))
        for v in ca:
            assert (v.stopping_time, v.decision) == (cs.stopping_time, cs.decision)
            assert v.terminal_statistic * k == pytest.approx(cs.terminal_statistic, abs=1e-9)


def test_single_sensor_detectors_coincide():
    topo = from_edge_list(1, [])
    th = Thresholds(2.0, 2.0)
    for trial in range(30):
        runs = [
            [csprt_trial(GAUSS, 1, th, 1, CounterStream(3, 0, trial))],
            local_dsprt_trial(topo, GAUSS, th, 1, CounterStream(3, 0, trial)),
            sd_dsprt_trial_closed_form(topo, GAUSS, th, 1, CounterStream(3, 0, trial)),
            ca_dsprt_trial(topo, GAUSS, th, 1, 1, CounterStream(3, 0, trial)),
        ]
        assert len({(r[0].stopping_time, r[0].decision, r[0].terminal_statistic) for r in runs}) == 1


def test_complete_graph_dissemination_is_centralized():
    topo = complete_topology(8)
    th = Thresholds(4.0, 4.0)
    for trial in range(30):
        sd = sd_dsprt_trial_closed_form(topo, GAUSS, th, 0, CounterStream(4, 0, trial))
        cs = csprt_trial(GAUSS, 8, th, 0, CounterStream(4, 0, trial))
        assert all((v.stopping_time, v.decision, v.terminal_statistic) ==
                   (cs.stopping_time, cs.decision, cs.terminal_statistic) for v in sd)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            loc = local_dsprt_trial(topo, GAUSS, th, 0, CounterStream(4, 0, trial))
        assert all(v.stopping_time == cs.stopping_time for v in loc)


def test_censoring_reports_none():
    v = csprt_trial(HypothesisModel("gaussian", 0.0), 3, Thresholds(50.0, 50.0), 1,
                    CounterStream(0), max_steps=5)
    assert v.censored and v.decision is None


def test_heterogeneous_models_run():
    ms = ModelSet([HypothesisModel("gaussian", 0.3), HypothesisModel("laplace", 0.2),
                   HypothesisModel("gaussian", 0.1), HypothesisModel("laplace", 0.5)])
    topo = ring_topology(4, 1)
    out = sd_dsprt_trial_closed_form(topo, ms, Thresholds(2.0, 2.0), 1, CounterStream(9))
    assert all(not v.censored for v in out)
    assert math.isfinite(out[0].terminal_statistic)
