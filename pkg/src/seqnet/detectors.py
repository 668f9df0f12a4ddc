"""Sequential detectors: centralized SPRT, local, sample-dissemination and consensus.

Every detector is a per-slot state machine. Within slot ``t`` each sensor
samples, then messages are exchanged (one dissemination round, or ``q``
consensus rounds), then each still-running sensor checks its statistic
against ``(-a, b)``. Stopped sensors keep sampling and relaying; a trial ends
once every sensor has stopped or ``max_steps`` slots have elapsed.

The vectorized engines advance a batch of independent trials in lock-step.
All cross-sensor sums are accumulated in sensor-index order with elementwise
operations, so a trial's floating-point results do not depend on the batch it
was simulated in.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .consensus_weights import WeightMatrix, as_weight_matrix, matrix_power
from .hypothesis_models import ModelSet, as_model_set
from .topology import Topology, delay_matrix

DEFAULT_MAX_STEPS = 1_000_000

CONTINUE = "continue"
DECIDE_1 = "decide_1"
DECIDE_0 = "decide_0"

DETECTORS = ("cs", "local", "sd", "ca")


@dataclass(frozen=True)
class Thresholds:
    """Continuation region ``(-a, b)``; hitting either boundary stops the test."""

    a: float
    b: float

    def __post_init__(self):
        for name in ("a", "b"):
            v = getattr(self, name)
            if not (isinstance(v, (int, float)) and math.isfinite(v) and v > 0):
                raise ValueError(f"threshold {name} must be a positive finite number, got {v!r}")

    def scaled(self, factor: float) -> "Thresholds":
        return Thresholds(self.a * factor, self.b * factor)


@dataclass(frozen=True)
class SensorVerdict:
    """Outcome at one sensor. ``stopping_time`` and ``decision`` are None when censored."""

    stopping_time: int | None
    decision: int | None
    terminal_statistic: float

    @property
    def censored(self) -> bool:
        return self.stopping_time is None


def sprt_decide(statistic: float, th: Thresholds) -> str:
    if math.isnan(statistic):
        raise ValueError("statistic is NaN")
    if statistic >= th.b:
        return DECIDE_1
    if statistic <= -th.a:
        return DECIDE_0
    return CONTINUE


@dataclass
class TrialBatch:
    """Per-trial, per-sensor results of a batch of trials.

    ``stopping_time`` is 0 and ``decision`` is -1 for censored sensors.
    """

    stopping_time: np.ndarray
    decision: np.ndarray
    statistic: np.ndarray

    @property
    def n_trials(self) -> int:
        return self.stopping_time.shape[0]

    def verdicts(self, trial: int) -> list[SensorVerdict]:
        out = []
        for k in range(self.stopping_time.shape[1]):
            t = int(self.stopping_time[trial, k])
            d = int(self.decision[trial, k])
            out.append(SensorVerdict(t if t > 0 else None, d if d >= 0 else None,
                                     float(self.statistic[trial, k])))
        return out

    @staticmethod
    def concatenate(parts: Sequence["TrialBatch"]) -> "TrialBatch":
        return TrialBatch(
            np.concatenate([p.stopping_time for p in parts]),
            np.concatenate([p.decision for p in parts]),
            np.concatenate([p.statistic for p in parts]),
        )


# --- engines -----------------------------------------------------------------


def _ordered_sum(cols: np.ndarray) -> np.ndarray:
    """Sum over the last axis, strictly left to right."""
    acc = np.zeros(cols.shape[:-1])
    for k in range(cols.shape[-1]):
        acc = acc + cols[..., k]
    return acc


class _Engine:
    n_sensors: int

    def reset(self, n: int) -> None:
        raise NotImplementedError

    def step(self, s: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def keep(self, mask: np.ndarray) -> None:
        raise NotImplementedError


class CentralizedEngine(_Engine):
    """Every sensor sees S_t = sum_k S_t^(k)."""

    def __init__(self, k: int):
        self.n_sensors = k

    def reset(self, n):
        self.cum = np.zeros((n, self.n_sensors))

    def step(self, s):
        self.cum += s
        total = _ordered_sum(self.cum)
        return np.repeat(total[:, None], self.n_sensors, axis=1)

    def keep(self, mask):
        self.cum = self.cum[mask]


class LocalEngine(_Engine):
    """Sensor k sums the cumulative LLRs of itself and its neighbours."""

    def __init__(self, topology: Topology):
        k = topology.n_sensors
        self.n_sensors = k
        member = np.zeros((k, k))
        for j in range(k):
            for ell in topology.neighborhood(j):
                member[ell, j] = 1.0
        self.member = member

    def reset(self, n):
        self.cum = np.zeros((n, self.n_sensors))

    def step(self, s):
        self.cum += s
        acc = np.zeros_like(self.cum)
        for ell in range(self.n_sensors):
            acc = acc + self.cum[:, ell:ell + 1] * self.member[ell]
        return acc

    def keep(self, mask):
        self.cum = self.cum[mask]


class DisseminationEngine(_Engine):
    """Closed-form dissemination statistic zeta_t^(k) = sum_l S^(l)_{(t - nu[l,k] + 1)+}.

    Keeps the last ``max(nu)`` cumulative LLR vectors, so memory is O(K max nu)
    per trial.
    """

    def __init__(self, topology: Topology):
        self.n_sensors = topology.n_sensors
        self.lag = np.asarray(delay_matrix(topology)) - 1
        self.depth = int(self.lag.max()) + 1

    def reset(self, n):
        self.cum = np.zeros((n, self.n_sensors))
        self.hist = np.zeros((n, self.depth, self.n_sensors))

    def step(self, s):
        self.cum += s
        if self.depth > 1:
            self.hist[:, 1:, :] = self.hist[:, :-1, :]
        self.hist[:, 0, :] = self.cum
        acc = np.zeros_like(self.cum)
        for ell in range(self.n_sensors):
            acc = acc + self.hist[:, self.lag[ell], ell]
        return acc

    def keep(self, mask):
        self.cum = self.cum[mask]
        self.hist = self.hist[mask]


class ConsensusEngine(_Engine):
    """eta_t = W^q (eta_{t-1} + s_t), applied as q successive averaging rounds."""

    def __init__(self, weights: WeightMatrix, q: int = 1):
        if int(q) != q or q < 1:
            raise ValueError(f"q must be a positive integer, got {q!r}")
        self.w = np.asarray(weights.w)
        self.q = int(q)
        self.n_sensors = self.w.shape[0]

    def reset(self, n):
        self.eta = np.zeros((n, self.n_sensors))

    def step(self, s):
        x = self.eta + s
        for _ in range(self.q):
            y = np.zeros_like(x)
            for ell in range(self.n_sensors):
                y = y + x[:, ell:ell + 1] * self.w[:, ell]
            x = y
        self.eta = x
        return x

    def keep(self, mask):
        self.eta = self.eta[mask]


UniformSource = Callable[[int, np.ndarray], np.ndarray]


def run_engine(
    engine: _Engine,
    models: ModelSet,
    hypothesis: int,
    th: Thresholds,
    uniforms: UniformSource,
    n_trials: int,
    max_steps: int = DEFAULT_MAX_STEPS,
) -> TrialBatch:
    """Drive ``n_trials`` trials until every sensor of every trial has stopped.

    ``uniforms(t, trial_ids)`` must return the slot-``t`` uniforms, shape
    ``(len(trial_ids), K)``, for the given trials.
    """
    k = engine.n_sensors
    if len(models) != k:
        raise ValueError(f"{len(models)} sensor models for {k} sensors")
    stop_t = np.zeros((n_trials, k), dtype=np.int64)
    decision = np.full((n_trials, k), -1, dtype=np.int8)
    stat_out = np.zeros((n_trials, k))
    active = np.arange(n_trials)
    running = np.ones((n_trials, k), dtype=bool)
    engine.reset(n_trials)
    stat = np.zeros((n_trials, k))
    for t in range(1, max_steps + 1):
        s = models.llr_from_uniforms(hypothesis, uniforms(t, active))
        stat = engine.step(s)
        if np.isnan(stat).any():
            raise FloatingPointError("detector statistic became NaN")
        up = running & (stat >= th.b)
        down = running & (stat <= -th.a)
        hit = up | down
        if hit.any():
            rows, cols = np.nonzero(hit)
            gi = active[rows]
            stop_t[gi, cols] = t
            decision[gi, cols] = up[rows, cols].astype(np.int8)
            stat_out[gi, cols] = stat[rows, cols]
            running = running & ~hit
            alive = running.any(axis=1)
            if not alive.all():
                active = active[alive]
                running = running[alive]
                stat = stat[alive]
                engine.keep(alive)
        if active.size == 0:
            break
    if active.size:
        rows, cols = np.nonzero(running)
        stat_out[active[rows], cols] = stat[rows, cols]
    return TrialBatch(stop_t, decision, stat_out)


def make_engine(detector: str, topology: Topology, weights=None, q: int = 1) -> _Engine:
    if detector == "cs":
        return CentralizedEngine(topology.n_sensors)
    if detector == "local":
        return LocalEngine(topology)
    if detector == "sd":
        return DisseminationEngine(topology)
    if detector == "ca":
        return ConsensusEngine(as_weight_matrix(weights if weights is not None else topology), q)
    raise ValueError(f"unknown detector {detector!r}; expected one of {DETECTORS}")


def _rng_source(rng, k: int) -> UniformSource:
    return lambda t, ids: np.asarray(rng.random(k), dtype=float).reshape(1, k)


def _single(engine, models, k, th, hypothesis, rng, max_steps) -> list[SensorVerdict]:
    ms = as_model_set(models, k)
    batch = run_engine(engine, ms, hypothesis, th, _rng_source(rng, k), 1, max_steps)
    return batch.verdicts(0)


# --- single-trial API ------------------------------------------------------------


def csprt_trial(models, k: int, th: Thresholds, hypothesis: int, rng,
                max_steps: int = DEFAULT_MAX_STEPS) -> SensorVerdict:
    """Centralized SPRT on S_t = sum over sensors of S_t^(k)."""
    return _single(CentralizedEngine(k), models, k, th, hypothesis, rng, max_steps)[0]


cspsrt_trial = csprt_trial


def local_dsprt_trial(topology: Topology, models, th: Thresholds, hypothesis: int, rng,
                      max_steps: int = DEFAULT_MAX_STEPS) -> list[SensorVerdict]:
    return _single(LocalEngine(topology), models, topology.n_sensors, th, hypothesis, rng, max_steps)


def sd_dsprt_trial_closed_form(topology: Topology, models, th: Thresholds, hypothesis: int, rng,
                               max_steps: int = DEFAULT_MAX_STEPS) -> list[SensorVerdict]:
    return _single(DisseminationEngine(topology), models, topology.n_sensors, th, hypothesis, rng,
                   max_steps)


def ca_dsprt_trial(network, models, th: Thresholds, q: int, hypothesis: int, rng,
                   max_steps: int = DEFAULT_MAX_STEPS) -> list[SensorVerdict]:
    """Consensus detector; ``network`` is a Topology (equal weights), WeightMatrix or array."""
    wm = as_weight_matrix(network)
    return _single(ConsensusEngine(wm, q), models, wm.n_sensors, th, hypothesis, rng, max_steps)


def ca_statistic_direct(weights, q: int, llr_history) -> np.ndarray:
    """eta_t = sum_j W^{q (t - j + 1)} s_j for an LLR history of shape (t, K)."""
    w = np.asarray(weights.w if isinstance(weights, WeightMatrix) else weights, dtype=float)
    hist = np.atleast_2d(np.asarray(llr_history, dtype=float))
    t = hist.shape[0]
    eta = np.zeros(w.shape[0])
    for j in range(1, t + 1):
        eta = eta + matrix_power(w, q * (t - j + 1)) @ hist[j - 1]
    return eta


# --- explicit sample dissemination ------------------------------------------------


class ExplicitDissemination:
    """Literal indexed-sample relay protocol for one trial.

    Samples are identified by ``(origin sensor, slot)``. In slot ``t`` sensor
    ``k`` broadcasts its fresh sample plus the external samples it first
    received in slot ``t - 1``, then merges everything its neighbours sent.
    """

    def __init__(self, topology: Topology):
        self.topology = topology
        k = topology.n_sensors
        self.n_sensors = k
        self.t = 0
        self.values: list[np.ndarray] = []
        self.info: list[set[tuple[int, int]]] = [set() for _ in range(k)]
        self._prev: list[set[tuple[int, int]]] = [set() for _ in range(k)]
        self._partial = np.zeros((k, k))

    def step(self, s: np.ndarray) -> np.ndarray:
        """Advance one slot with LLR vector ``s``; returns every sensor's statistic."""
        self.t += 1
        t = self.t
        self.values.append(np.asarray(s, dtype=float).copy())
        # M_{t-1} - M_{t-2} - {own sample of t-1}
        messages = []
        for k in range(self.n_sensors):
            fresh_external = self.info[k] - self._prev[k] - {(k, t - 1)}
            messages.append({(k, t)} | fresh_external)
        new_info = []
        for k in range(self.n_sensors):
            merged = set(self.info[k])
            merged.add((k, t))
            for ell in self.topology.neighbor_lists[k]:
                merged |= messages[ell]
            new_info.append(merged)
        for k in range(self.n_sensors):
            for origin, slot in sorted(new_info[k] - self.info[k]):
                self._partial[k, origin] += self.values[slot - 1][origin]
        self._prev = self.info
        self.info = new_info
        self.last_messages = messages
        zeta = np.zeros(self.n_sensors)
        for k in range(self.n_sensors):
            acc = 0.0
            for ell in range(self.n_sensors):
                acc = acc + self._partial[k, ell]
            zeta[k] = acc
        return zeta

    def set_sum(self, k: int) -> float:
        """zeta recomputed directly from the stored information set."""
        return float(sum(self.values[slot - 1][origin] for origin, slot in self.info[k]))


def sd_dsprt_trial_explicit(topology: Topology, models, th: Thresholds, hypothesis: int, rng,
                            max_steps: int = DEFAULT_MAX_STEPS,
                            trace: list | None = None) -> list[SensorVerdict]:
    """Sample-dissemination detector run on the literal message sets.

    If ``trace`` is a list, the statistic vector of every slot is appended.
    """
    k = topology.n_sensors
    ms = as_model_set(models, k)
    proto = ExplicitDissemination(topology)
    verdicts: list[SensorVerdict | None] = [None] * k
    zeta = np.zeros(k)
    for t in range(1, max_steps + 1):
        s = ms.llr_from_uniforms(hypothesis, np.asarray(rng.random(k), dtype=float))
        zeta = proto.step(s)
        if trace is not None:
            trace.append(zeta.copy())
        for j in range(k):
            if verdicts[j] is None:
                action = sprt_decide(float(zeta[j]), th)
                if action != CONTINUE:
                    verdicts[j] = SensorVerdict(t, 1 if action == DECIDE_1 else 0, float(zeta[j]))
        if all(v is not None for v in verdicts):
            break
    return [v if v is not None else SensorVerdict(None, None, float(zeta[j]))
            for j, v in enumerate(verdicts)]

