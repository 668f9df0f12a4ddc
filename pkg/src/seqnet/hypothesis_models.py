"""Mean-shift hypothesis pairs and their log-likelihood ratios.

H0: X ~ F(0, 1), H1: X ~ F(mu, 1), with F Gaussian or Laplace. Samples are
produced from uniforms by inverse-CDF transforms, so any source with a
``random(size)`` method (a numpy Generator or a
:class:`~seqnet.streams.CounterStream`) drives them reproducibly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.special import log_ndtr, ndtri

FAMILIES = ("gaussian", "laplace")


@dataclass(frozen=True)
class HypothesisModel:
    family: str
    mu: float

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown family {self.family!r}; expected one of {FAMILIES}")
        if not math.isfinite(self.mu) or self.mu < 0:
            raise ValueError(f"mu must be a finite non-negative number, got {self.mu!r}")

    def mean(self, hypothesis: int) -> float:
        return self.mu if hypothesis == 1 else 0.0

    def sample_from_uniform(self, hypothesis: int, u):
        u = np.asarray(u, dtype=float)
        loc = self.mean(hypothesis)
        if self.family == "gaussian":
            return loc + ndtri(u)
        # Laplace(loc, 1) inverse CDF
        return loc + np.where(u < 0.5, np.log(2.0 * u), -np.log(2.0 * (1.0 - u)))

    def llr(self, x):
        """log f1(x) / f0(x)."""
        x = np.asarray(x, dtype=float)
        mu = self.mu
        if self.family == "gaussian":
            return x * mu - 0.5 * mu * mu
        # |x| - |x - mu|: -mu below 0, 2x - mu on [0, mu], +mu above mu
        return np.clip(2.0 * x - mu, -mu, mu)

    def llr_from_uniform(self, hypothesis: int, u):
        return self.llr(self.sample_from_uniform(hypothesis, u))

    def kld(self, hypothesis: int) -> float:
        """KL divergence D_i = E_i log f_i / f_{1-i}; symmetric for both families."""
        mu = abs(self.mu)
        if self.family == "gaussian":
            return 0.5 * mu * mu
        return mu - 1.0 + math.exp(-mu)

    def condition2_log_margin(self, k: int) -> float:
        """log E[exp(K sqrt(K) |s|)], identical under both hypotheses.

        Laplace returns the bound ``K sqrt(K) mu`` (|s| <= mu); Gaussian is exact.
        """
        if k < 1:
            raise ValueError("K must be positive")
        c = k * math.sqrt(k)
        mu = self.mu
        if self.family == "laplace":
            return c * mu
        upper = (c + 1.0) * c * mu * mu / 2.0 + float(log_ndtr((c + 0.5) * mu))
        lower = (c - 1.0) * c * mu * mu / 2.0 + float(log_ndtr((c - 0.5) * mu))
        return float(np.logaddexp(upper, lower))

    def to_dict(self) -> dict:
        return {"family": self.family, "mu": self.mu}


def draw_llr(model: HypothesisModel, hypothesis: int, rng) -> float:
    return float(model.llr_from_uniform(hypothesis, rng.random()))


class ModelSet:
    """Per-sensor models with vectorized LLR generation.

    Sensors sharing a model are transformed together; uniforms are consumed in
    sensor order so a trial's LLRs depend only on its own stream.
    """

    def __init__(self, models: Sequence[HypothesisModel]):
        if len(models) == 0:
            raise ValueError("need at least one sensor model")
        self.models = tuple(models)
        groups: dict[HypothesisModel, list[int]] = {}
        for idx, m in enumerate(self.models):
            groups.setdefault(m, []).append(idx)
        self._groups = [(m, np.array(ix)) for m, ix in groups.items()]

    @classmethod
    def homogeneous(cls, model: HypothesisModel, k: int) -> "ModelSet":
        return cls([model] * k)

    def __len__(self) -> int:
        return len(self.models)

    def __getitem__(self, k: int) -> HypothesisModel:
        return self.models[k]

    @property
    def is_homogeneous(self) -> bool:
        return len(self._groups) == 1

    def llr_from_uniforms(self, hypothesis: int, u: np.ndarray) -> np.ndarray:
        """Map uniforms of shape (..., K) to per-sensor LLRs."""
        u = np.asarray(u, dtype=float)
        if len(self._groups) == 1:
            return self._groups[0][0].llr_from_uniform(hypothesis, u)
        out = np.empty_like(u)
        for m, ix in self._groups:
            out[..., ix] = m.llr_from_uniform(hypothesis, u[..., ix])
        return out

    def klds(self, hypothesis: int) -> np.ndarray:
        return np.array([m.kld(hypothesis) for m in self.models])

    def to_dict(self) -> dict:
        if self.is_homogeneous:
            return self.models[0].to_dict()
        return {"family": [m.family for m in self.models], "mu": [m.mu for m in self.models]}


def as_model_set(models, k: int | None = None) -> ModelSet:
    if isinstance(models, ModelSet):
        return models
    if isinstance(models, HypothesisModel):
        if k is None:
            raise ValueError("K is required to replicate a single model")
        return ModelSet.homogeneous(models, k)
    return ModelSet(list(models))


def draw_llr_vector(models, hypothesis: int, rng) -> np.ndarray:
    """One slot of LLRs, one independent draw per sensor."""
    ms = as_model_set(models)
    return ms.llr_from_uniforms(hypothesis, rng.random(len(ms)))


def model_set_from_spec(spec: dict, k: int) -> ModelSet:
    """Decode ``{"family": ..., "mu": value-or-list}``; lists must have length K."""
    family = spec["family"]
    mu = spec["mu"]
    families = family if isinstance(family, list) else [family] * k
    mus = mu if isinstance(mu, list) else [mu] * k
    if len(families) != k or len(mus) != k:
        raise ValueError(f"per-sensor model lists must have length {k}")
    return ModelSet([HypothesisModel(f, float(m)) for f, m in zip(families, mus)])
