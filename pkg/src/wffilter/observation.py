"""Emission channels and the conjugate Bayes update.

Each channel's likelihood is a monomial ``coef(y) * x**u * (1 - x)**v`` in the
hidden frequency, so multiplying a component ``(i, j)`` by it lands on
``(i + u, j + v)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.special import betaln, gammaln

from .errors import DomainError, ImpossibleObservationError
from .kernel import ModelParams, log_beta_ratio
from .mixture import BetaMixture

__all__ = [
    "ObservationModel",
    "component_marginal",
    "negbin_tail",
    "predictive_prob",
    "sample_observation",
    "update",
]

_KINDS = ("bernoulli", "binomial", "negbinomial")


@dataclass(frozen=True)
class ObservationModel:
    """Observation channel: ``bernoulli``, ``binomial`` (size N) or ``negbinomial`` (size m)."""

    kind: str = "bernoulli"
    size: int = 1

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise DomainError(f"unknown channel {self.kind!r}; expected one of {_KINDS}")
        if self.kind == "bernoulli" and self.size != 1:
            raise DomainError("the Bernoulli channel has size 1")
        if int(self.size) != self.size or self.size < 1:
            raise DomainError(f"channel size must be a positive integer, got {self.size!r}")
        object.__setattr__(self, "size", int(self.size))

    @classmethod
    def bernoulli(cls) -> "ObservationModel":
        return cls("bernoulli", 1)

    @classmethod
    def binomial(cls, n: int) -> "ObservationModel":
        return cls("binomial", n)

    @classmethod
    def negbinomial(cls, m: int) -> "ObservationModel":
        return cls("negbinomial", m)

    @classmethod
    def from_config(cls, cfg: dict) -> "ObservationModel":
        """Build from ``{"channel": ..., "N": ..., "m": ...}``."""
        kind = str(cfg.get("channel", "bernoulli")).lower()
        if kind == "binomial":
            return cls.binomial(int(cfg["N"]))
        if kind == "negbinomial":
            return cls.negbinomial(int(cfg["m"]))
        return cls(kind, 1)

    def to_config(self) -> dict:
        cfg: dict = {"channel": self.kind}
        if self.kind == "binomial":
            cfg["N"] = self.size
        elif self.kind == "negbinomial":
            cfg["m"] = self.size
        return cfg

    @property
    def support_max(self) -> int | None:
        """Largest observable value, ``None`` for the unbounded channel."""
        return None if self.kind == "negbinomial" else self.size

    def validate(self, y) -> int:
        if int(y) != y or y < 0:
            raise DomainError(f"observations are nonnegative integers, got {y!r}")
        y = int(y)
        top = self.support_max
        if top is not None and y > top:
            raise DomainError(f"observation {y} outside the {self.kind} support 0..{top}")
        return y

    def shift(self, y: int) -> tuple[int, int]:
        """Exponents ``(u, v)`` of ``x**u (1 - x)**v`` in the likelihood of ``y``."""
        if self.kind == "negbinomial":
            return self.size, y
        return y, self.size - y

    def log_coef(self, y: int) -> float:
        if self.kind == "bernoulli":
            return 0.0
        if self.kind == "binomial":
            return math.log(math.comb(self.size, y))
        return math.log(math.comb(self.size + y - 1, y))

    def emission(self, x, y: int):
        """Likelihood ``f_x(y)``, vectorized over ``x``."""
        u, v = self.shift(y)
        x = np.asarray(x, dtype=float)
        return math.exp(self.log_coef(y)) * x**u * (1 - x) ** v


def component_marginal(idx, y: int, om: ObservationModel, params: ModelParams) -> float:
    """Predictive probability of ``y`` under the single component ``idx``."""
    y = om.validate(y)
    i, j = idx
    u, v = om.shift(y)
    return math.exp(om.log_coef(y) + log_beta_ratio((i, j), (i + u, j + v), params))


@lru_cache(maxsize=1024)
def _log_marginal_grid(params: ModelParams, om: ObservationModel, y: int, rows: int, cols: int) -> np.ndarray:
    u, v = om.shift(y)
    i = np.arange(rows)[:, None] + params.beta_a
    j = np.arange(cols)[None, :] + params.beta_b
    grid = om.log_coef(y) + betaln(i + u, j + v) - betaln(i, j)
    grid.setflags(write=False)
    return grid


def marginal_grid(params: ModelParams, om: ObservationModel, y: int, shape: tuple[int, int]) -> np.ndarray:
    """Component predictive probabilities of ``y`` on a dense index grid."""
    return np.exp(_log_marginal_grid(params, om, y, int(shape[0]), int(shape[1])))


def update_dense(table: np.ndarray, y: int, om: ObservationModel, params: ModelParams):
    """Bayes update of a dense weight table; returns ``(posterior, predictive)``."""
    probs = table * marginal_grid(params, om, y, table.shape)
    pred = math.fsum(probs.ravel())
    if not pred > 0:
        raise ImpossibleObservationError(f"observation {y} has zero predictive probability")
    u, v = om.shift(y)
    out = np.zeros((table.shape[0] + u, table.shape[1] + v))
    out[u:, v:] = probs / pred
    return out, pred


def update(m: BetaMixture, y: int, om: ObservationModel) -> BetaMixture:
    """Posterior mixture after observing ``y``."""
    y = om.validate(y)
    post, _ = update_dense(m.to_dense(), y, om, m.params)
    return BetaMixture.from_dense(m.params, post)


def predictive_prob(m: BetaMixture, y: int, om: ObservationModel) -> float:
    """Probability of ``y`` under the mixture (weights taken as given)."""
    y = om.validate(y)
    u, v = om.shift(y)
    p = m.params
    i = m.indices[:, 0] + p.beta_a
    j = m.indices[:, 1] + p.beta_b
    logs = om.log_coef(y) + betaln(i + u, j + v) - betaln(i, j)
    return math.fsum(m.weights * np.exp(logs))


def negbin_tail(idx, threshold: int, om: ObservationModel, params: ModelParams) -> float:
    """``P(y >= threshold)`` under component ``idx`` for the negative-binomial channel.

    Uses ``P(NB >= K) = P(Binomial(K + m - 1, x) <= m - 1)`` integrated
    against the component, a finite sum independent of the pmf.
    """
    if om.kind != "negbinomial":
        raise DomainError("tail probabilities are only needed for the unbounded channel")
    if threshold <= 0:
        return 1.0
    i, j = idx
    m = om.size
    trials = threshold + m - 1
    s = np.arange(m)
    logs = (
        gammaln(trials + 1) - gammaln(s + 1) - gammaln(trials - s + 1)
        + betaln(i + params.beta_a + s, j + params.beta_b + trials - s)
        - betaln(i + params.beta_a, j + params.beta_b)
    )
    return math.fsum(np.exp(logs))


def sample_observation(x: float, om: ObservationModel, rng: np.random.Generator) -> int:
    """Draw ``y`` from the channel given hidden frequency ``x``."""
    if not 0 <= x <= 1:
        raise DomainError(f"x must lie in [0, 1], got {x}")
    if om.kind == "negbinomial":
        # numpy counts failures before the m-th success, success probability x
        return int(rng.negative_binomial(om.size, min(max(x, 1e-300), 1.0)))
    return int(rng.binomial(om.size, x))
