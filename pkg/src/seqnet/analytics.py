"""Closed-form predictions and bounds for the four detectors.

Overshoot constants are never computed here; every stopping-time prediction
is the leading term only.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .consensus_weights import WeightMatrix, as_weight_matrix, averaging_matrix, matrix_power
from .detectors import Thresholds
from .hypothesis_models import ModelSet, as_model_set
from .streams import counter_uniforms, stream_keys
from .topology import Topology

# Cell id reserved for refined-constant streams; simulation cells are 2*i + h.
CONSTANTS_CELL = (1 << 62) + 17


@dataclass(frozen=True)
class ErrorTargets:
    alpha: float
    beta: float

    def __post_init__(self):
        for name in ("alpha", "beta"):
            v = getattr(self, name)
            if not (0.0 < v < 1.0):
                raise ValueError(f"{name} must lie strictly inside (0, 1), got {v!r}")


@dataclass(frozen=True)
class RefinedConstants:
    """Monte Carlo estimates of the consensus error-approximation factors."""

    c_alpha: float
    c_beta: float
    c_alpha_se: float
    c_beta_se: float
    t0: int
    q: int
    sensor: int
    mc_samples: int

    def to_dict(self) -> dict:
        return {
            "c_alpha": self.c_alpha,
            "c_beta": self.c_beta,
            "c_alpha_se": self.c_alpha_se,
            "c_beta_se": self.c_beta_se,
            "t0": self.t0,
            "q": self.q,
            "sensor": self.sensor,
            "mc_samples": self.mc_samples,
        }


def _kld_sums(models: ModelSet, members=None) -> tuple[float, float]:
    d1 = models.klds(1)
    d0 = models.klds(0)
    if members is not None:
        d1, d0 = d1[list(members)], d0[list(members)]
    s1, s0 = float(np.sum(d1)), float(np.sum(d0))
    if s1 <= 0 or s0 <= 0:
        raise ValueError("KL divergences must be positive")
    return s1, s0


def centralized_asymptotic_et(models, targets: ErrorTargets, k: int | None = None) -> tuple[float, float]:
    """(E1 T, E0 T) = (-log alpha / sum D1, -log beta / sum D0)."""
    ms = as_model_set(models, k)
    s1, s0 = _kld_sums(ms)
    return -math.log(targets.alpha) / s1, -math.log(targets.beta) / s0


def local_asymptotic_et(topology: Topology, models, targets: ErrorTargets, k: int) -> tuple[float, float]:
    """As the centralized value, summing divergences over sensor k and its neighbours only."""
    ms = as_model_set(models, topology.n_sensors)
    s1, s0 = _kld_sums(ms, topology.neighborhood(k))
    return -math.log(targets.alpha) / s1, -math.log(targets.beta) / s0


def sd_delay_constant(nu, models, k: int, hypothesis: int) -> float:
    """sum_l (nu[l,k] - 1) D_i^(l) / sum_l D_i^(l): extra slots spent waiting for samples."""
    nu = np.asarray(nu)
    ms = as_model_set(models, nu.shape[0])
    d = ms.klds(hypothesis)
    return float(np.sum((nu[:, k] - 1) * d) / np.sum(d))


def simple_thresholds(targets: ErrorTargets) -> Thresholds:
    """a = -log beta, b = -log alpha (statistics that are sums of true LLRs)."""
    return Thresholds(-math.log(targets.beta), -math.log(targets.alpha))


def refined_constants(weights, q: int, t0: int, models, sensor: int, mc_samples: int,
                      seed: int = 0, chunk: int = 50_000) -> RefinedConstants:
    """Estimate C_alpha = E1 exp(K e_k^T sum_{j<=t0} Delta_{qj} s_j) and C_beta (same under H0).

    Sample ``i`` reads the counter stream ``(seed, CONSTANTS_CELL, i)``, with
    the H1 and H0 draws sharing uniforms.
    """
    wm = as_weight_matrix(weights)
    w = np.asarray(wm.w)
    k = w.shape[0]
    if t0 < 1:
        raise ValueError("t0 must be at least 1")
    if not 0 <= sensor < k:
        raise ValueError(f"sensor {sensor} outside [0, {k})")
    ms = as_model_set(models, k)
    j_mat = averaging_matrix(k)
    # coef[j-1, l] = K * (W^{qj} - J)[sensor, l]
    coef = np.empty((t0, k))
    power = np.eye(k)
    wq = matrix_power(w, q)
    for j in range(t0):
        power = power @ wq
        coef[j] = k * (power - j_mat)[sensor]
    n_u = t0 * k
    sums = {0: 0.0, 1: 0.0}
    squares = {0: 0.0, 1: 0.0}
    for start in range(0, mc_samples, chunk):
        stop = min(start + chunk, mc_samples)
        keys = stream_keys(seed, CONSTANTS_CELL, np.arange(start, stop, dtype=np.uint64))
        u = counter_uniforms(keys, np.arange(n_u, dtype=np.uint64)).reshape(stop - start, t0, k)
        for h in (0, 1):
            s = ms.llr_from_uniforms(h, u)
            vals = np.exp(np.einsum("njk,jk->n", s, coef))
            if not np.all(np.isfinite(vals)):
                raise FloatingPointError("non-finite Monte Carlo value in refined constant")
            sums[h] += float(np.sum(vals))
            squares[h] += float(np.sum(vals * vals))

    def mean_se(h):
        m = sums[h] / mc_samples
        var = max(0.0, squares[h] / mc_samples - m * m) * mc_samples / max(1, mc_samples - 1)
        return m, math.sqrt(var / mc_samples)

    ca, ca_se = mean_se(1)
    cb, cb_se = mean_se(0)
    return RefinedConstants(ca, cb, ca_se, cb_se, int(t0), int(q), int(sensor), int(mc_samples))


def ca_thresholds(targets: ErrorTargets, constants: RefinedConstants, k: int) -> Thresholds:
    """a = -(1/K) log(beta / C_beta), b = -(1/K) log(alpha / C_alpha)."""
    if targets.alpha >= constants.c_alpha or targets.beta >= constants.c_beta:
        raise ValueError("target error rate is not below the refined constant; threshold would be non-positive")
    return Thresholds(-math.log(targets.beta / constants.c_beta) / k,
                      -math.log(targets.alpha / constants.c_alpha) / k)


def sd_error_bound(th: Thresholds) -> tuple[float, float]:
    """(e^{-b}, e^{-a}) for a statistic that is a sum of true LLRs."""
    return math.exp(-th.b), math.exp(-th.a)


def ca_error_exponent(k: int, th: Thresholds) -> tuple[float, float]:
    """Log error-probability slopes (-K b, -K a) of the consensus detector."""
    return -k * th.b, -k * th.a


def _homogeneous_kld(kld1) -> float:
    arr = np.atleast_1d(np.asarray(kld1, dtype=float))
    if not np.allclose(arr, arr[0], rtol=1e-12, atol=0.0):
        raise ValueError("comparison bounds are defined for homogeneous divergences only")
    return float(arr[0])


def sahu_alpha_bound(k: int, sigma2: float, b: float, kld1) -> float:
    """Earlier closed-form false-alarm bound for the consensus detector with q = 1."""
    d1 = _homogeneous_kld(kld1)
    spread = k * sigma2 * sigma2 + 1.0
    denom = -math.expm1(-k * d1 / (4.0 * spread))
    if denom <= 1e-300:
        raise ZeroDivisionError("denominator of the comparison bound vanishes")
    return 2.0 * math.exp(-sigma2 * k * b / (8.0 * spread)) / denom


def sahu_et_factor(k: int, sigma2: float) -> float:
    """Earlier stopping-time inflation factor 10 (K sigma2^2 + 1) / 7."""
    return 10.0 * (k * sigma2 * sigma2 + 1.0) / 7.0


def lemma1_et_prediction(k: int, models, th: Thresholds, sigma2: float, q: int) -> tuple[float, float]:
    """(K b / sum D1, sigma2^q / (1 - sigma2^q)).

    The first value is the leading stopping-time term of the consensus
    detector; the second only scales its unspecified constant gap.
    """
    ms = as_model_set(models, k)
    s1, _ = _kld_sums(ms)
    r = sigma2 ** q
    if r >= 1.0:
        raise ValueError("sigma2^q must be below 1")
    return k * th.b / s1, r / (1.0 - r)


def predictions(topology: Topology, models, weights: WeightMatrix, th_average: Thresholds,
                q: int, nu) -> dict:
    """Closed-form reference values at per-sensor-average thresholds ``th_average``."""
    k = topology.n_sensors
    ms = as_model_set(models, k)
    kb = k * th_average.b
    ka = k * th_average.a
    et1_c = kb / _kld_sums(ms)[0]
    out = {
        "a": th_average.a,
        "b": th_average.b,
        "q": q,
        "sigma2": weights.sigma2,
        "sd_alpha_bound": math.exp(-kb),
        "sd_beta_bound": math.exp(-ka),
        "ca_log_alpha_exponent": -kb,
        "ca_log_beta_exponent": -ka,
        "cs_et1": et1_c,
        "cs_et0": ka / _kld_sums(ms)[1],
        "local_et1": [kb / _kld_sums(ms, topology.neighborhood(j))[0] for j in range(k)],
        "sd_delay_h1": [sd_delay_constant(nu, ms, j, 1) for j in range(k)],
        "sd_delay_h0": [sd_delay_constant(nu, ms, j, 0) for j in range(k)],
    }
    if weights.sigma2 < 1.0 and k > 1:
        center, gap = lemma1_et_prediction(k, ms, th_average, weights.sigma2, q)
        out["ca_et1_center"] = center
        out["ca_gap_scale"] = gap
    if ms.is_homogeneous and q == 1:
        d1 = ms.klds(1)
        out["prior_alpha_bound"] = min(1.0, sahu_alpha_bound(k, weights.sigma2, th_average.b, d1))
        out["prior_et1"] = sahu_et_factor(k, weights.sigma2) * et1_c
    return out
