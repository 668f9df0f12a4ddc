"""Monte Carlo harness: repeated network trials, summary statistics, sweeps.

A *cell* is one (threshold, hypothesis) pair. Trial ``i`` of a cell draws its
uniforms from the counter stream keyed on ``(master_seed, cell, i)``; every
detector in the experiment reads the same streams, so detector comparisons
within a cell use common random numbers.
"""

from __future__ import annotations

import csv
import io
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from .consensus_weights import WeightMatrix, equal_weight_matrix, weight_matrix_from_array
from .detectors import DEFAULT_MAX_STEPS, Thresholds, TrialBatch, make_engine, run_engine
from .hypothesis_models import ModelSet
from .streams import counter_uniforms, stream_keys
from .topology import Topology

CHUNK_SIZE = 25_000
Z95 = 1.959963984540054

CSV_COLUMNS = (
    "detector", "sensor", "hyp", "a", "b", "q", "trials",
    "alpha_hat", "beta_hat", "alpha_lo", "alpha_hi",
    "et0", "et0_se", "et1", "et1_se", "overshoot1", "censored",
)


@dataclass(frozen=True)
class DetectorSpec:
    name: str
    q: int = 1

    @property
    def label(self) -> str:
        return f"ca(q={self.q})" if self.name == "ca" else self.name


@dataclass
class ExperimentConfig:
    """Declarative description of one experiment.

    ``threshold_units`` fixes how ``(a, b)`` are read. ``"average"`` puts every
    detector on the scale of a per-sensor average LLR, so the LLR-sum
    detectors (cs, local, sd) compare against ``(K a, K b)`` while the
    consensus statistic is used as is. ``"sum"`` is the LLR-sum scale: cs,
    local and sd use ``(a, b)`` directly and the consensus detector compares
    against ``(a / K, b / K)``.
    """

    topology: Topology
    models: ModelSet
    detectors: tuple[DetectorSpec, ...]
    thresholds: tuple[Thresholds, ...]
    hypotheses: tuple[int, ...] = (0, 1)
    threshold_units: str = "average"
    trials: int = 100_000
    master_seed: int = 0
    max_steps: int = DEFAULT_MAX_STEPS
    weights: WeightMatrix | None = None
    t0: int | None = None
    mc_samples: int = 100_000
    sensor: int | None = None
    targets: tuple[float, float] | None = None
    source: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.trials < 1:
            raise ValueError("trials must be at least 1")
        if self.threshold_units not in ("average", "sum"):
            raise ValueError("threshold_units must be 'average' or 'sum'")
        if not self.thresholds:
            raise ValueError("at least one threshold pair is required")
        for h in self.hypotheses:
            if h not in (0, 1):
                raise ValueError(f"hypothesis must be 0 or 1, got {h!r}")
        if len(self.models) != self.topology.n_sensors:
            raise ValueError("one model per sensor is required")

    @property
    def n_sensors(self) -> int:
        return self.topology.n_sensors

    def weight_matrix(self) -> WeightMatrix:
        if self.weights is not None:
            return self.weights
        if self.n_sensors == 1:
            return weight_matrix_from_array(np.ones((1, 1)))
        return equal_weight_matrix(self.topology)

    def native_scale(self, detector: str) -> float:
        """Factor converting configured thresholds to the detector's own statistic."""
        k = self.n_sensors
        if detector == "ca":
            return 1.0 / k if self.threshold_units == "sum" else 1.0
        return float(k) if self.threshold_units == "average" else 1.0


def cell_index(threshold_index: int, hypothesis: int) -> int:
    return 2 * threshold_index + hypothesis


# --- confidence intervals -------------------------------------------------------


def proportion_ci(successes: int, trials: int, z: float = Z95) -> tuple[float, float]:
    """Wilson score interval."""
    if trials < 1:
        raise ValueError("trials must be at least 1")
    p = successes / trials
    denom = 1.0 + z * z / trials
    centre = (p + z * z / (2 * trials)) / denom
    half = z * math.sqrt(p * (1 - p) / trials + z * z / (4 * trials * trials)) / denom
    # the interval touches the edge exactly at 0 or all successes
    lo = 0.0 if successes == 0 else max(0.0, centre - half)
    hi = 1.0 if successes == trials else min(1.0, centre + half)
    return lo, hi


def mean_ci(samples, z: float = Z95) -> tuple[float, float]:
    """Normal-approximation interval for a mean."""
    x = np.asarray(samples, dtype=float)
    if x.size == 0:
        return math.nan, math.nan
    m = float(np.mean(x))
    if x.size < 2:
        return m, m
    se = float(np.std(x, ddof=1)) / math.sqrt(x.size)
    return m - z * se, m + z * se


# --- simulation ------------------------------------------------------------------


def _simulate_chunk(args) -> TrialBatch:
    (topology, models, weights, det, hypothesis, th_native, seed, cell, start, stop,
     max_steps) = args
    k = topology.n_sensors
    engine = make_engine(det.name, topology, weights, det.q)
    keys = stream_keys(seed, cell, np.arange(start, stop, dtype=np.uint64))
    offsets = np.arange(k, dtype=np.uint64)

    def uniforms(t, ids):
        return counter_uniforms(keys[ids], np.uint64((t - 1) * k) + offsets)

    return run_engine(engine, models, hypothesis, th_native, uniforms, stop - start, max_steps)


def simulate_cell(
    topology: Topology,
    models: ModelSet,
    detector: DetectorSpec,
    hypothesis: int,
    th_native: Thresholds,
    master_seed: int,
    cell: int,
    trials: int,
    *,
    weights: WeightMatrix | None = None,
    max_steps: int = DEFAULT_MAX_STEPS,
    workers: int = 1,
    chunk_size: int = CHUNK_SIZE,
    trial_offset: int = 0,
) -> TrialBatch:
    """Run trials ``trial_offset .. trial_offset + trials - 1`` of one cell.

    Results are concatenated in trial order and do not depend on ``workers``
    or ``chunk_size``.
    """
    if detector.name == "ca" and weights is None:
        weights = equal_weight_matrix(topology) if topology.n_sensors > 1 \
            else weight_matrix_from_array(np.ones((1, 1)))
    tasks = []
    for start in range(trial_offset, trial_offset + trials, chunk_size):
        stop = min(start + chunk_size, trial_offset + trials)
        tasks.append((topology, models, weights, detector, hypothesis, th_native, master_seed,
                      cell, start, stop, max_steps))
    if workers > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(_simulate_chunk, tasks))
    else:
        parts = [_simulate_chunk(t) for t in tasks]
    return TrialBatch.concatenate(parts)


@dataclass
class CellStats:
    """Summary of one (detector, sensor, hypothesis, threshold) cell.

    Thresholds and overshoot are in the configured units.
    """

    detector: str
    sensor: int
    hyp: int
    a: float
    b: float
    q: int | None
    trials: int
    error_rate: float
    error_lo: float
    error_hi: float
    errors: int
    et: float
    et_se: float
    et_lo: float
    et_hi: float
    overshoot: float
    censored: int
    flags: tuple[str, ...] = ()

    @property
    def alpha_hat(self) -> float | None:
        return self.error_rate if self.hyp == 0 else None

    @property
    def beta_hat(self) -> float | None:
        return self.error_rate if self.hyp == 1 else None

    def csv_row(self) -> dict:
        h0 = self.hyp == 0
        return {
            "detector": self.detector,
            "sensor": self.sensor,
            "hyp": self.hyp,
            "a": self.a,
            "b": self.b,
            "q": "" if self.q is None else self.q,
            "trials": self.trials,
            "alpha_hat": self.error_rate if h0 else "",
            "beta_hat": "" if h0 else self.error_rate,
            "alpha_lo": self.error_lo if h0 else "",
            "alpha_hi": self.error_hi if h0 else "",
            "et0": self.et if h0 else "",
            "et0_se": self.et_se if h0 else "",
            "et1": "" if h0 else self.et,
            "et1_se": "" if h0 else self.et_se,
            "overshoot1": "" if h0 else self.overshoot,
            "censored": self.censored,
        }

    def to_dict(self) -> dict:
        d = asdict(self)
        d["flags"] = list(self.flags)
        d["alpha_hat"] = self.alpha_hat
        d["beta_hat"] = self.beta_hat
        return d


def summarize(batch: TrialBatch, detector: DetectorSpec, hypothesis: int, th: Thresholds,
              th_native: Thresholds, scale: float) -> list[CellStats]:
    """Per-sensor statistics for one cell; ``th`` is in configured units."""
    rows = []
    n = batch.n_trials
    for k in range(batch.stopping_time.shape[1]):
        st = batch.stopping_time[:, k]
        dec = batch.decision[:, k]
        stat = batch.statistic[:, k]
        done = st > 0
        censored = int(n - np.count_nonzero(done))
        wrong = 1 if hypothesis == 0 else 0
        errors = int(np.count_nonzero(dec == wrong))
        lo, hi = proportion_ci(errors, n)
        times = st[done].astype(float)
        if times.size:
            et = float(np.mean(times))
            se = float(np.std(times, ddof=1)) / math.sqrt(times.size) if times.size > 1 else 0.0
        else:
            et = se = math.nan
        over = np.where(dec == 1, stat - th_native.b, -th_native.a - stat)[done] / scale
        flags = []
        if errors < 10:
            flags.append("under-resolved")
        if censored:
            flags.append("censored")
        if censored == n:
            flags.append("all-censored")
        rows.append(CellStats(
            detector=detector.name, sensor=k, hyp=hypothesis, a=th.a, b=th.b,
            q=detector.q if detector.name == "ca" else None, trials=n,
            error_rate=errors / n, error_lo=lo, error_hi=hi, errors=errors,
            et=et, et_se=se, et_lo=et - Z95 * se, et_hi=et + Z95 * se,
            overshoot=float(np.mean(over)) if over.size else math.nan,
            censored=censored, flags=tuple(flags),
        ))
    return rows


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    rows: list[CellStats]
    records: dict = field(default_factory=dict)

    def select(self, detector: str | None = None, q: int | None = None, hyp: int | None = None,
               b: float | None = None, sensor: int | None = None) -> list[CellStats]:
        out = []
        for r in self.rows:
            if detector is not None and r.detector != detector:
                continue
            if q is not None and r.q is not None and r.q != q:
                continue
            if hyp is not None and r.hyp != hyp:
                continue
            if b is not None and not math.isclose(r.b, b, rel_tol=1e-12, abs_tol=1e-15):
                continue
            if sensor is not None and r.sensor != sensor:
                continue
            out.append(r)
        return out


def run_experiment(config: ExperimentConfig, *, workers: int = 1, keep_records: bool = False,
                   chunk_size: int = CHUNK_SIZE) -> ExperimentResult:
    """Simulate every (threshold, hypothesis) cell for every detector.

    With ``keep_records`` the raw :class:`TrialBatch` of each run is kept under
    ``records[(detector label, threshold index, hypothesis)]``.
    """
    weights = None
    if any(d.name == "ca" for d in config.detectors):
        weights = config.weight_matrix()
    rows: list[CellStats] = []
    records = {}
    for ti, th in enumerate(config.thresholds):
        for det in config.detectors:
            scale = config.native_scale(det.name)
            th_native = th.scaled(scale)
            for h in config.hypotheses:
                batch = simulate_cell(
                    config.topology, config.models, det, h, th_native, config.master_seed,
                    cell_index(ti, h), config.trials, weights=weights,
                    max_steps=config.max_steps, workers=workers, chunk_size=chunk_size,
                )
                rows.extend(summarize(batch, det, h, th, th_native, scale))
                if keep_records:
                    records[(det.label, ti, h)] = batch
    return ExperimentResult(config, rows, records)


def threshold_sweep(config: ExperimentConfig, b_values, **kwargs) -> dict[float, list[CellStats]]:
    """Run ``config`` with ``a = b`` for each ``b``; rows keyed by ``b``."""
    b_values = [float(b) for b in b_values]
    if len(b_values) < 2:
        raise ValueError("a sweep needs at least two thresholds")
    swept = ExperimentConfig(**{**config.__dict__, "thresholds": tuple(Thresholds(b, b) for b in b_values)})
    result = run_experiment(swept, **kwargs)
    table: dict[float, list[CellStats]] = {b: [] for b in b_values}
    for row in result.rows:
        table[row.b].append(row)
    return table


# --- output ------------------------------------------------------------------------


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v) if math.isfinite(v) else ""
    return str(v)


def rows_to_csv(rows, extra: list[dict] | None = None) -> str:
    """CSV text for ``rows``; ``extra`` holds per-row additional columns."""
    buf = io.StringIO()
    extra_cols = list(extra[0].keys()) if extra else []
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(list(CSV_COLUMNS) + extra_cols)
    for i, r in enumerate(rows):
        rec = r.csv_row()
        line = [_fmt(rec[c]) for c in CSV_COLUMNS]
        if extra:
            line += [_fmt(extra[i][c]) for c in extra_cols]
        writer.writerow(line)
    return buf.getvalue()


def rows_to_json(rows, extra: list[dict] | None = None) -> str:
    out = []
    for i, r in enumerate(rows):
        rec = {c: _json_value(v) for c, v in r.csv_row().items()}
        rec["flags"] = list(r.flags)
        if extra:
            rec.update({c: _json_value(v) for c, v in extra[i].items()})
        out.append(rec)
    return json.dumps(out, indent=2, allow_nan=False, default=_json_default)


def _json_value(v):
    if isinstance(v, str) and v == "":
        return None
    if isinstance(v, float) and not math.isfinite(v):
        return None
    return v


def _json_default(v):
    if isinstance(v, (np.floating, np.integer)):
        return v.item()
    raise TypeError(f"cannot serialize {type(v).__name__}")
