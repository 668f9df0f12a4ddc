"""Counter-based uniform streams keyed on (master seed, cell, trial).

Each uniform is a pure function of ``(key, counter)``, so a trial's draws do
not depend on how trials are batched or spread over workers. The mixer is
the SplitMix64 finalizer applied to ``key + (counter + 1) * golden``.
"""

from __future__ import annotations

import numpy as np

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_MASK = (1 << 64) - 1


def _mix(z: np.ndarray) -> np.ndarray:
    z = (z ^ (z >> np.uint64(30))) * _M1
    z = (z ^ (z >> np.uint64(27))) * _M2
    return z ^ (z >> np.uint64(31))


def _u64(value: int) -> np.uint64:
    return np.uint64(int(value) & _MASK)


def stream_keys(master_seed: int, cell: int, trials) -> np.ndarray:
    """64-bit keys for the given trial indices of one cell."""
    with np.errstate(over="ignore"):
        k = _mix(_u64(master_seed) + _GOLDEN)
        k = _mix(k ^ (_u64(cell) * _M1 + _GOLDEN))
        t = np.asarray(trials, dtype=np.uint64)
        return _mix(k ^ (t * _M2 + _GOLDEN))


def counter_uniforms(keys: np.ndarray, counters: np.ndarray) -> np.ndarray:
    """Uniforms in the open interval (0, 1), shape ``keys.shape + counters.shape``."""
    keys = np.asarray(keys, dtype=np.uint64)
    counters = np.asarray(counters, dtype=np.uint64)
    with np.errstate(over="ignore"):
        z = keys.reshape(keys.shape + (1,) * counters.ndim) + (counters + np.uint64(1)) * _GOLDEN
        bits = _mix(z) >> np.uint64(11)
    return (bits.astype(np.float64) + 0.5) * (1.0 / 9007199254740992.0)


class CounterStream:
    """Sequential view of one trial's counter-based stream.

    Exposes ``random(size)`` like :class:`numpy.random.Generator`, so it can be
    passed wherever the single-trial detectors expect an ``rng``.
    """

    def __init__(self, master_seed: int, cell: int = 0, trial: int = 0):
        self.key = stream_keys(master_seed, cell, [trial])[0]
        self.position = 0

    def random(self, size=None):
        n = 1 if size is None else int(np.prod(size))
        out = counter_uniforms(self.key, np.arange(self.position, self.position + n, dtype=np.uint64))
        self.position += n
        if size is None:
            return float(out[0])
        return out.reshape(size)
