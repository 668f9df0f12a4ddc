import math

import numpy as np
import pytest

from seqnet.analytics import (
    ErrorTargets,
    RefinedConstants,
    ca_error_exponent,
    ca_thresholds,
    centralized_asymptotic_et,
    lemma1_et_prediction,
    local_asymptotic_et,
    predictions,
    refined_constants,
    sahu_alpha_bound,
    sahu_et_factor,
    sd_delay_constant,
    sd_error_bound,
    simple_thresholds,
)
from seqnet.consensus_weights import averaging_matrix, default_t0, equal_weight_matrix, weight_matrix_from_array
from seqnet.detectors import Thresholds
from seqnet.hypothesis_models import HypothesisModel, ModelSet
from seqnet.montecarlo import DetectorSpec, simulate_cell
from seqnet.topology import complete_topology, delay_matrix, from_edge_list, ring_topology

GAUSS = HypothesisModel("gaussian", 0.3)
LAPLACE = HypothesisModel("laplace", 0.2)
E6 = ErrorTargets(math.exp(-6), math.exp(-6))


def test_centralized_examples():
    et1, et0 = centralized_asymptotic_et(GAUSS, E6, k=12)
    assert et1 == pytest.approx(11.111, abs=1e-3)
    assert et0 == et1
    et1, _ = centralized_asymptotic_et(LAPLACE, ErrorTargets(math.exp(-5), 0.5), k=26)
    assert et1 == pytest.approx(10.268, abs=2e-3)


def test_local_examples():
    t = ring_topology(12, 2)
    assert local_asymptotic_et(t, GAUSS, E6, 0)[0] == pytest.approx(6 / (5 * 0.045))
    ratio = local_asymptotic_et(t, GAUSS, E6, 3)[0] / centralized_asymptotic_et(GAUSS, E6, 12)[0]
    assert ratio == pytest.approx(12 / 5)
    c = complete_topology(6)
    assert local_asymptotic_et(c, GAUSS, E6, 2) == pytest.approx(centralized_asymptotic_et(GAUSS, E6, 6))


def test_sd_delay_constant_examples():
    nu = delay_matrix(ring_topology(12, 2))
    assert sd_delay_constant(nu, GAUSS, 0, 1) == pytest.approx(10 / 12)
    assert sd_delay_constant(delay_matrix(complete_topology(5)), GAUSS, 0, 1) == 0
    assert sd_delay_constant(delay_matrix(from_edge_list(1, [])), GAUSS, 0, 0) == 0


def test_simple_thresholds_examples():
    assert simple_thresholds(E6) == Thresholds(6.0, 6.0)
    assert simple_thresholds(ErrorTargets(0.01, 0.5)).b == pytest.approx(4.6052, abs=1e-4)
    assert simple_thresholds(ErrorTargets(1 - 1e-12, 0.5)).b < 1e-11
    with pytest.raises(ValueError):
        ErrorTargets(0.0, 0.1)


def test_sd_bound_and_exponent():
    assert sd_error_bound(Thresholds(6.0, 6.0))[0] == pytest.approx(2.4788e-3, abs=1e-7)
    assert sd_error_bound(Thresholds(1e-300, 1e-300)) == (1.0, 1.0)
    assert ca_error_exponent(12, Thresholds(0.5, 0.5)) == (-6.0, -6.0)
    assert ca_error_exponent(1, Thresholds(2.0, 3.0)) == (-3.0, -2.0)


def test_ca_threshold_examples():
    unit = RefinedConstants(1.0, 1.0, 0.0, 0.0, 1, 1, 0, 1)
    th = ca_thresholds(ErrorTargets(math.exp(-12), math.exp(-12)), unit, 12)
    assert th.a == pytest.approx(1.0) and th.b == pytest.approx(1.0)
    bigger = RefinedConstants(5.0, 1.0, 0.0, 0.0, 1, 1, 0, 1)
    assert ca_thresholds(E6, bigger, 12).b > ca_thresholds(E6, unit, 12).b
    assert ca_thresholds(E6, unit, 1) == simple_thresholds(E6)
    with pytest.raises(ValueError):
        ca_thresholds(ErrorTargets(0.5, 0.5), RefinedConstants(0.4, 1.0, 0, 0, 1, 1, 0, 1), 1)


def test_refined_constants_trivial_for_averaging_matrix():
    j = weight_matrix_from_array(averaging_matrix(8))
    c = refined_constants(j, 1, 5, GAUSS, 0, 1000)
    assert c.c_alpha == pytest.approx(1.0, abs=1e-12) and c.c_beta == pytest.approx(1.0, abs=1e-12)


def test_refined_constants_truncation_stability():
    wm = equal_weight_matrix(ring_topology(12, 2))
    t0 = math.ceil(math.log(1e-12) / math.log(wm.sigma2))
    a = refined_constants(wm, 1, t0, GAUSS, 0, 100_000, seed=1)
    b = refined_constants(wm, 1, t0 + 10, GAUSS, 0, 100_000, seed=1)
    assert abs(a.c_alpha - b.c_alpha) < 3 * a.c_alpha_se + 1e-9
    assert math.isfinite(a.c_alpha) and a.c_alpha > 0


def test_refined_constants_deterministic():
    wm = equal_weight_matrix(ring_topology(12, 2))
    assert refined_constants(wm, 2, 4, LAPLACE, 3, 2000, seed=4) == refined_constants(wm, 2, 4, LAPLACE, 3, 2000, seed=4)


def test_prior_bound_values():
    spread = 12 * 0.6511**2 + 1
    direct = 2 * math.exp(-0.6511 * 12 * 1.0 / (8 * spread)) / (1 - math.exp(-12 * 0.045 / (4 * spread)))
    assert sahu_alpha_bound(12, 0.6511, 1.0, 0.045) == pytest.approx(direct, rel=1e-12)
    assert sahu_alpha_bound(12, 0.6511, 1.0, 0.045) == pytest.approx(77.66744599950158, rel=1e-12)
    assert sahu_et_factor(12, 0.0) == pytest.approx(10 / 7)
    with pytest.raises(ValueError):
        sahu_alpha_bound(3, 0.5, 1.0, [0.1, 0.2, 0.1])
    with pytest.raises(ZeroDivisionError):
        sahu_alpha_bound(3, 0.5, 1.0, 0.0)


def test_prior_bound_looser_than_refined_approximation():
    wm = equal_weight_matrix(ring_topology(12, 2))
    c = refined_constants(wm, 1, 10, GAUSS, 0, 50_000)
    for b in (0.4, 0.6, 1.0):
        assert sahu_alpha_bound(12, wm.sigma2, b, 0.045) > c.c_alpha * math.exp(-12 * b)


def test_consensus_center_and_gap_scale():
    center, gap1 = lemma1_et_prediction(12, GAUSS, Thresholds(0.5, 0.5), 0.6511, 1)
    assert center == pytest.approx(11.111, abs=1e-3)
    _, gap2 = lemma1_et_prediction(12, GAUSS, Thresholds(0.5, 0.5), 0.6511, 2)
    assert gap2 < gap1
    assert lemma1_et_prediction(20, GAUSS, Thresholds(1, 1), 0.8571, 1)[1] == pytest.approx(5.998, abs=1e-3)
    with pytest.raises(ValueError):
        lemma1_et_prediction(12, GAUSS, Thresholds(1, 1), 1.0, 1)


def test_predictions_bundle():
    t = ring_topology(12, 2)
    wm = equal_weight_matrix(t)
    p = predictions(t, ModelSet.homogeneous(GAUSS, 12), wm, Thresholds(0.5, 0.5), 1, delay_matrix(t))
    assert p["cs_et1"] == pytest.approx(11.111, abs=1e-3)
    assert p["sd_alpha_bound"] == pytest.approx(2.4788e-3, abs=1e-7)
    assert p["sd_delay_h1"][0] == pytest.approx(10 / 12)
    assert "prior_alpha_bound" in p and "ca_gap_scale" in p
    het = ModelSet([GAUSS] * 11 + [HypothesisModel("gaussian", 0.5)])
    assert "prior_alpha_bound" not in predictions(t, het, wm, Thresholds(0.5, 0.5), 1, delay_matrix(t))


def test_refined_constant_matches_gaussian_closed_form():
    # the exponent is Gaussian with zero mean, so C = exp(K^2 mu^2 / 2 * sum_j |Delta_j row|^2)
    wm = equal_weight_matrix(ring_topology(12, 2))
    j = averaging_matrix(12)
    var = sum(np.sum((np.linalg.matrix_power(wm.w, t) - j)[0] ** 2) for t in range(1, 11))
    exact = math.exp(144 * 0.09 / 2 * var)
    c = refined_constants(wm, 1, 10, GAUSS, 0, 200_000, seed=3)
    assert abs(c.c_alpha - exact) < 4 * c.c_alpha_se


_LOOSE = pytest.mark.xfail(strict=True, reason="refined constant is huge for slowly mixing rings; "
                                               "the approximation overestimates alpha by >10x here")


@pytest.mark.slow
@pytest.mark.parametrize("n,model,alpha", [
    (12, GAUSS, 1e-2),
    (12, GAUSS, 3e-3),
    pytest.param(20, GAUSS, 1e-2, marks=_LOOSE),
    pytest.param(26, LAPLACE, 1e-2, marks=_LOOSE),
])
def test_refined_threshold_round_trip_on_ring_networks(n, model, alpha):
    topo = ring_topology(n, 2)
    wm = equal_weight_matrix(topo)
    target = ErrorTargets(alpha, alpha)
    t0 = 10 if n == 12 else default_t0(wm.sigma2, 1)
    c = refined_constants(wm, 1, t0, model, 0, 100_000, seed=2)
    th = ca_thresholds(target, c, n)
    ms = ModelSet.homogeneous(model, n)
    batch = simulate_cell(topo, ms, DetectorSpec("ca", 1), 0, th, 17, 0, 100_000, weights=wm)
    alpha = float(np.mean(batch.decision[:, 0] == 1))
    assert target.alpha / 3 <= alpha <= 3 * target.alpha


@pytest.mark.slow
def test_center_slope_matches_simulated_consensus_slope():
    topo = ring_topology(12, 2)
    ms = ModelSet.homogeneous(GAUSS, 12)
    bs = [1.0, 1.5, 2.0]
    et = []
    for i, b in enumerate(bs):
        batch = simulate_cell(topo, ms, DetectorSpec("ca", 1), 1, Thresholds(b, b), 8, 2 * i + 1, 20_000)
        et.append(batch.stopping_time[:, 0].mean())
    slope = np.polyfit(bs, et, 1)[0]
    assert abs(slope / (12 / 0.54) - 1) < 0.10
