import math

import numpy as np
import pytest

from seqnet.detectors import Thresholds, sd_dsprt_trial_closed_form, ca_dsprt_trial
from seqnet.hypothesis_models import HypothesisModel, ModelSet
from seqnet.montecarlo import (
    CSV_COLUMNS,
    DetectorSpec,
    ExperimentConfig,
    cell_index,
    mean_ci,
    proportion_ci,
    rows_to_csv,
    rows_to_json,
    run_experiment,
    simulate_cell,
    threshold_sweep,
)
from seqnet.streams import CounterStream
from seqnet.topology import ring_topology

TOPO = ring_topology(12, 2)
MODELS = ModelSet.homogeneous(HypothesisModel("gaussian", 0.3), 12)


def config(**kw):
    base = dict(topology=TOPO, models=MODELS, detectors=(DetectorSpec("sd"), DetectorSpec("ca", 1)),
                thresholds=(Thresholds(0.3, 0.3),), trials=300, master_seed=5)
    base.update(kw)
    return ExperimentConfig(**base)


def test_proportion_ci_examples():
    lo, hi = proportion_ci(0, 100)
    assert lo == 0.0 and hi < 0.05
    lo, hi = proportion_ci(50, 100)
    assert math.isclose((lo + hi) / 2, 0.5, abs_tol=1e-12)
    assert mean_ci(np.full(10, 3.0)) == (3.0, 3.0)


def test_batched_trials_match_single_trial_api():
    th = Thresholds(6.0, 6.0)
    batch = simulate_cell(TOPO, MODELS, DetectorSpec("sd"), 0, th, 9, cell_index(0, 0), 20)
    for i in range(20):
        ref = sd_dsprt_trial_closed_form(TOPO, MODELS, th, 0, CounterStream(9, cell_index(0, 0), i))
        assert batch.verdicts(i) == ref
    th_ca = Thresholds(0.5, 0.5)
    batch = simulate_cell(TOPO, MODELS, DetectorSpec("ca", 2), 1, th_ca, 9, 3, 10)
    for i in range(10):
        assert batch.verdicts(i) == ca_dsprt_trial(TOPO, MODELS, th_ca, 2, 1, CounterStream(9, 3, i))


def test_results_invariant_to_workers_and_chunking():
    a = run_experiment(config())
    b = run_experiment(config(), workers=3, chunk_size=37)
    assert rows_to_csv(a.rows) == rows_to_csv(b.rows)


def test_single_trial_rerun_is_identical():
    a = run_experiment(config(trials=1), keep_records=True)
    b = run_experiment(config(trials=1), keep_records=True)
    for key, batch in a.records.items():
        other = b.records[key]
        assert np.array_equal(batch.stopping_time, other.stopping_time)
        assert np.array_equal(batch.statistic, other.statistic)


def test_csv_schema_and_row_count():
    cfg = config(thresholds=(Thresholds(0.3, 0.3), Thresholds(0.4, 0.4)))
    res = run_experiment(cfg)
    text = rows_to_csv(res.rows)
    lines = text.strip().split("\n")
    assert lines[0] == ",".join(CSV_COLUMNS)
    assert len(lines) - 1 == 2 * 2 * 2 * 12
    assert rows_to_json(res.rows).count('"detector"') == len(res.rows)


def test_summary_invariants():
    res = run_experiment(config(trials=500))
    for r in res.rows:
        assert 0 <= r.error_rate <= 1
        assert r.et >= 1
        assert r.overshoot >= 0
        assert r.error_lo <= r.error_rate <= r.error_hi


def test_symmetric_model_has_equal_stopping_times():
    res = run_experiment(config(detectors=(DetectorSpec("sd"),), trials=4000))
    for k in range(12):
        r0 = res.select(hyp=0, sensor=k)[0]
        r1 = res.select(hyp=1, sensor=k)[0]
        assert abs(r0.et - r1.et) < 1.96 * math.hypot(r0.et_se, r1.et_se) * 1.5


def test_all_censored_cells_are_flagged():
    cfg = config(detectors=(DetectorSpec("cs"),), thresholds=(Thresholds(50.0, 50.0),), trials=5, max_steps=3)
    rows = run_experiment(cfg).rows
    assert all("all-censored" in r.flags and r.censored == 5 and math.isnan(r.et) for r in rows)
    assert '"et0": null' in rows_to_json(rows)


def test_ci_width_shrinks_with_trials():
    def width(n):
        b = simulate_cell(TOPO, MODELS, DetectorSpec("cs"), 1, Thresholds(4.0, 4.0), 1, 1, n)
        return np.diff(mean_ci(b.stopping_time[:, 0]))[0]

    ratio = width(20_000) / width(10_000)
    assert abs(ratio - 1 / math.sqrt(2)) < 0.2 / math.sqrt(2)


def test_csprt_error_below_bound_in_repeated_experiments():
    b = 4.0
    hits = 0
    for seed in range(20):
        batch = simulate_cell(TOPO, MODELS, DetectorSpec("cs"), 0, Thresholds(b, b), seed, 0, 2000)
        hits += np.mean(batch.decision[:, 0] == 1) <= math.exp(-b)
    assert hits >= 19


def test_threshold_sweep_centralized_wald_slope():
    cfg = config(detectors=(DetectorSpec("cs"),), hypotheses=(1,), threshold_units="sum", trials=10_000)
    table = threshold_sweep(cfg, [6.0, 8.0, 10.0])
    et = [table[b][0].et for b in (6.0, 8.0, 10.0)]
    slope = np.polyfit([6.0, 8.0, 10.0], et, 1)[0]
    assert abs(slope / (1 / 0.54) - 1) < 0.05


def test_config_validation():
    with pytest.raises(ValueError):
        config(trials=0)
    with pytest.raises(ValueError):
        config(threshold_units="mean")
    with pytest.raises(ValueError):
        config(hypotheses=(2,))
