"""JSON experiment configs: decoding, validation and canonical digests."""

from __future__ import annotations

import hashlib
import json
import math
import os
from pathlib import Path

import numpy as np

from .consensus_weights import WeightMatrixError, averaging_matrix, weight_matrix_from_array
from .detectors import DEFAULT_MAX_STEPS, DETECTORS, Thresholds
from .hypothesis_models import FAMILIES, model_set_from_spec
from .montecarlo import DetectorSpec, ExperimentConfig
from .topology import TopologyError, topology_from_spec

SEED_ENV = "SEQNET_SEED"


class ConfigError(ValueError):
    """Invalid configuration; ``field`` names the offending key path."""

    def __init__(self, field: str, message: str):
        super().__init__(f"{field}: {message}" if field else message)
        self.field = field


def load_config_file(path) -> dict:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError("", f"cannot read config {path}: {exc}") from exc
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError("", f"JSON parse error at line {exc.lineno}, column {exc.colno}: {exc.msg}") from exc
    if not isinstance(data, dict):
        raise ConfigError("", "top level must be a JSON object")
    return data


def _require(d: dict, key: str, where: str):
    if key not in d:
        raise ConfigError(f"{where}.{key}" if where else key, "missing required field")
    return d[key]


def _number(value, field: str, positive: bool = False) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)) or not math.isfinite(value):
        raise ConfigError(field, f"expected a finite number, got {value!r}")
    if positive and value <= 0:
        raise ConfigError(field, f"must be positive, got {value!r}")
    return float(value)


def _integer(value, field: str, minimum: int | None = None) -> int:
    if isinstance(value, bool) or not isinstance(value, (int, float)) or int(value) != value:
        raise ConfigError(field, f"expected an integer, got {value!r}")
    value = int(value)
    if minimum is not None and value < minimum:
        raise ConfigError(field, f"must be at least {minimum}, got {value}")
    return value


def _detectors(raw: dict) -> tuple[DetectorSpec, ...]:
    default_q = _integer(raw.get("q", 1), "q", 1)
    if "detectors" in raw:
        items = raw["detectors"]
        if not isinstance(items, list) or not items:
            raise ConfigError("detectors", "expected a non-empty list")
    elif "detector" in raw:
        items = [raw["detector"]]
    else:
        raise ConfigError("detector", "missing required field")
    specs = []
    for i, item in enumerate(items):
        where = f"detectors[{i}]" if "detectors" in raw else "detector"
        if isinstance(item, str):
            name, q = item, default_q
        elif isinstance(item, dict):
            name = _require(item, "detector", where)
            q = _integer(item.get("q", default_q), f"{where}.q", 1)
        else:
            raise ConfigError(where, f"expected a name or object, got {item!r}")
        if name not in DETECTORS:
            raise ConfigError(where, f"unknown detector {name!r}; expected one of {list(DETECTORS)}")
        specs.append(DetectorSpec(name, q if name == "ca" else 1))
    return tuple(specs)


def _thresholds(raw: dict) -> tuple[Thresholds, ...]:
    if "b_values" in raw:
        vals = raw["b_values"]
        if not isinstance(vals, list) or not vals:
            raise ConfigError("b_values", "expected a non-empty list")
        return tuple(Thresholds(*(2 * [_number(b, f"b_values[{i}]", positive=True)]))
                     for i, b in enumerate(vals))
    if "thresholds" not in raw:
        if "targets" in raw:
            return ()
        raise ConfigError("thresholds", "missing required field (or give b_values / targets)")
    items = raw["thresholds"]
    single = isinstance(items, dict)
    items = [items] if single else items
    if not isinstance(items, list) or not items:
        raise ConfigError("thresholds", "expected an object or a non-empty list")
    out = []
    for i, item in enumerate(items):
        where = "thresholds" if single else f"thresholds[{i}]"
        if not isinstance(item, dict):
            raise ConfigError(where, "expected an object with fields a and b")
        a = _number(_require(item, "a", where), f"{where}.a", positive=True)
        b = _number(_require(item, "b", where), f"{where}.b", positive=True)
        out.append(Thresholds(a, b))
    return tuple(out)


def _weights(raw: dict, k: int):
    spec = raw.get("weights")
    if spec is None:
        return None
    if not isinstance(spec, dict):
        raise ConfigError("weights", "expected an object")
    kind = spec.get("kind", "equal")
    try:
        if kind == "equal":
            return None
        if kind == "averaging":
            return weight_matrix_from_array(averaging_matrix(k))
        if kind == "matrix":
            w = np.asarray(_require(spec, "w", "weights"), dtype=float)
            if w.shape != (k, k):
                raise ConfigError("weights.w", f"expected a {k}x{k} matrix, got shape {w.shape}")
            return weight_matrix_from_array(w)
    except WeightMatrixError as exc:
        raise ConfigError("weights", str(exc)) from exc
    raise ConfigError("weights.kind", f"unknown kind {kind!r}; expected equal, averaging or matrix")


def resolve_seed(raw: dict, override: int | None = None) -> int:
    if override is not None:
        return int(override)
    if "seed" in raw:
        return _integer(raw["seed"], "seed", 0)
    env = os.environ.get(SEED_ENV)
    if env:
        try:
            return int(env)
        except ValueError as exc:
            raise ConfigError(SEED_ENV, f"not an integer: {env!r}") from exc
    return 0


def parse_config(raw: dict, *, seed: int | None = None, trials: int | None = None) -> ExperimentConfig:
    """Turn a decoded JSON object into an :class:`ExperimentConfig`."""
    topo_spec = _require(raw, "topology", "")
    if not isinstance(topo_spec, dict):
        raise ConfigError("topology", "expected an object")
    kind = _require(topo_spec, "kind", "topology")
    for key in {"ring": ("n", "m"), "edges": ("n", "edges"), "complete": ("n",)}.get(kind, ()):
        _require(topo_spec, key, "topology")
    try:
        topology = topology_from_spec(topo_spec)
    except (TopologyError, TypeError, ValueError) as exc:
        raise ConfigError("topology", str(exc)) from exc
    k = topology.n_sensors

    model_spec = _require(raw, "model", "")
    if not isinstance(model_spec, dict):
        raise ConfigError("model", "expected an object")
    family = _require(model_spec, "family", "model")
    mu = _require(model_spec, "mu", "model")
    for i, f in enumerate(family if isinstance(family, list) else [family]):
        if f not in FAMILIES:
            raise ConfigError("model.family", f"unknown family {f!r}; expected one of {list(FAMILIES)}")
    for i, m in enumerate(mu if isinstance(mu, list) else [mu]):
        if _number(m, "model.mu") < 0:
            raise ConfigError("model.mu", "must be non-negative")
    try:
        models = model_set_from_spec(model_spec, k)
    except ValueError as exc:
        raise ConfigError("model", str(exc)) from exc

    detectors = _detectors(raw)
    thresholds = _thresholds(raw)
    hyps = raw.get("hypotheses", [0, 1])
    if not isinstance(hyps, list) or not hyps or any(h not in (0, 1) or isinstance(h, bool) for h in hyps):
        raise ConfigError("hypotheses", "expected a non-empty list drawn from {0, 1}")
    units = raw.get("threshold_units", "average")
    if units not in ("average", "sum"):
        raise ConfigError("threshold_units", f"expected 'average' or 'sum', got {units!r}")
    n_trials = trials if trials is not None else _integer(raw.get("trials", 100_000), "trials", 1)
    max_steps = _integer(raw.get("max_steps", DEFAULT_MAX_STEPS), "max_steps", 1)
    t0 = raw.get("t0")
    t0 = None if t0 is None else _integer(t0, "t0", 1)
    mc_samples = _integer(raw.get("mc_samples", 100_000), "mc_samples", 2)
    sensor = raw.get("sensor")
    if sensor is not None:
        sensor = _integer(sensor, "sensor", 0)
        if sensor >= k:
            raise ConfigError("sensor", f"must be below {k}")
    targets = None
    if "targets" in raw:
        tg = raw["targets"]
        if not isinstance(tg, dict):
            raise ConfigError("targets", "expected an object with alpha and beta")
        alpha = _number(_require(tg, "alpha", "targets"), "targets.alpha")
        beta = _number(_require(tg, "beta", "targets"), "targets.beta")
        for name, v in (("alpha", alpha), ("beta", beta)):
            if not 0 < v < 1:
                raise ConfigError(f"targets.{name}", "must lie strictly inside (0, 1)")
        targets = (alpha, beta)
    weights = _weights(raw, k)
    if weights is None and k > 1 and any(d.name == "ca" for d in detectors):
        try:
            from .consensus_weights import equal_weight_matrix
            import warnings
            with warnings.catch_warnings():
                warnings.simplefilter("ignore")
                weights = equal_weight_matrix(topology)
        except WeightMatrixError as exc:
            raise ConfigError("weights", str(exc)) from exc
    return ExperimentConfig(
        topology=topology,
        models=models,
        detectors=detectors,
        thresholds=thresholds or (Thresholds(1.0, 1.0),),
        hypotheses=tuple(hyps),
        threshold_units=units,
        trials=n_trials,
        master_seed=resolve_seed(raw, seed),
        max_steps=max_steps,
        weights=weights,
        t0=t0,
        mc_samples=mc_samples,
        sensor=sensor,
        targets=targets,
        source=raw,
    )


def _normalize(value):
    if isinstance(value, dict):
        return {str(k): _normalize(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_normalize(v) for v in value]
    if isinstance(value, float) and value.is_integer():
        return int(value)
    return value


def canonical_json(raw: dict) -> str:
    return json.dumps(_normalize(raw), sort_keys=True, separators=(",", ":"))


def config_digest(raw: dict) -> str:
    return hashlib.sha256(canonical_json(raw).encode()).hexdigest()
