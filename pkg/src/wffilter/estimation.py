"""Maximum-likelihood estimation of the mutation parameters.

The exact log-likelihood is cheap enough to drive a Nelder-Mead search
directly.  Each coordinate is mapped to ``u = log(d - 2 + eps)``, which
keeps every evaluated point inside ``[2, upper]`` without penalties.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.optimize import minimize

from .errors import DomainError, WFFilterError
from .filter import log_likelihood
from .kernel import DEFAULT_MAX_DEPTH, ModelParams
from .mixture import DEFAULT_PRUNE_EPSILON
from .observation import ObservationModel

__all__ = ["MLEConfig", "MLEResult", "estimate_mle", "profile_loglik"]


def profile_loglik(
    obs: Sequence[int],
    gaps,
    om: ObservationModel,
    grid: Sequence[tuple[float, float]],
    prune_epsilon: float = DEFAULT_PRUNE_EPSILON,
    depth: int = DEFAULT_MAX_DEPTH,
) -> np.ndarray:
    """Log-likelihood at each ``(delta, delta_prime)`` of ``grid``."""
    out = np.empty(len(grid))
    for k, (d, dp) in enumerate(grid):
        out[k] = log_likelihood(obs, gaps, om, ModelParams(d, dp), prune_epsilon=prune_epsilon, depth=depth)
    return out


@dataclass(frozen=True)
class MLEConfig:
    """Search settings.

    Attributes
    ----------
    lower, upper : float
        Box for both coordinates; ``lower`` may not go below 2.
    restarts : int
        Starting points: the centre of the box, then the four corners (pulled
        ``inset`` of the way toward the centre in the ``u`` coordinates so the
        initial simplex is not flat against the boundary).
    tol : float
        Convergence tolerance on the log-likelihood.
    """

    lower: float = 2.0
    upper: float = 200.0
    restarts: int = 5
    tol: float = 1e-8
    xtol: float = 1e-6
    max_iter: int = 500
    eps: float = 1e-3
    inset: float = 0.1
    boundary_rtol: float = 1e-3
    prune_epsilon: float = DEFAULT_PRUNE_EPSILON
    depth: int = DEFAULT_MAX_DEPTH

    def __post_init__(self):
        if self.lower < 2 or not self.upper > self.lower:
            raise DomainError(f"invalid box [{self.lower}, {self.upper}]; need 2 <= lower < upper")
        if not 1 <= self.restarts <= 5:
            raise DomainError("restarts must be between 1 and 5")
        if not self.tol > 0 or self.max_iter < 1:
            raise DomainError("tolerance must be positive and max_iter at least 1")

    @classmethod
    def from_dict(cls, cfg: dict) -> "MLEConfig":
        unknown = set(cfg) - set(cls.__dataclass_fields__)
        if unknown:
            raise DomainError(f"unknown estimation settings: {', '.join(sorted(unknown))}")
        return cls(**cfg)


@dataclass
class MLEResult:
    delta: float
    delta_prime: float
    loglik: float
    converged: bool
    iterations: int
    evaluations: int
    simplex_size: float
    at_lower: tuple[bool, bool]
    at_upper: tuple[bool, bool]
    starts: list[dict] = field(default_factory=list)
    message: str = ""

    @property
    def at_boundary(self) -> bool:
        return any(self.at_lower) or any(self.at_upper)

    def to_dict(self) -> dict:
        return {
            "delta": self.delta,
            "delta_prime": self.delta_prime,
            "loglik": self.loglik,
            "converged": self.converged,
            "iterations": self.iterations,
            "evaluations": self.evaluations,
            "simplex_size": self.simplex_size,
            "at_lower": list(self.at_lower),
            "at_upper": list(self.at_upper),
            "starts": self.starts,
            "message": self.message,
        }


class _Transform:
    def __init__(self, cfg: MLEConfig):
        self.cfg = cfg
        self.u_lo = math.log(cfg.lower - 2 + cfg.eps)
        self.u_hi = math.log(cfg.upper - 2 + cfg.eps)

    def to_params(self, u) -> tuple[float, float]:
        c = self.cfg
        d = np.clip(2 - c.eps + np.exp(np.clip(u, self.u_lo, self.u_hi)), c.lower, c.upper)
        return float(d[0]), float(d[1])

    def starts(self) -> list[np.ndarray]:
        lo, hi, f = self.u_lo, self.u_hi, self.cfg.inset
        mid = 0.5 * (lo + hi)
        a, b = lo + f * (hi - lo), hi - f * (hi - lo)
        pts = [(mid, mid), (a, a), (a, b), (b, a), (b, b)]
        return [np.array(p) for p in pts[: self.cfg.restarts]]


def estimate_mle(obs: Sequence[int], gaps, om: ObservationModel, config: MLEConfig | None = None) -> MLEResult:
    """Maximize the exact log-likelihood over the box with restarted Nelder-Mead.

    Non-convergence is reported in the result rather than raised.  A
    coordinate is flagged as on the boundary when it lies within
    ``boundary_rtol`` (relative to the box width) of an edge.
    """
    cfg = config or MLEConfig()
    obs = list(obs)
    if not obs:
        raise DomainError("no observations")
    tf = _Transform(cfg)
    cache: dict[tuple[float, float], float] = {}

    def negll(u):
        key = tf.to_params(u)
        if key not in cache:
            try:
                cache[key] = -log_likelihood(
                    obs, gaps, om, ModelParams(*key), prune_epsilon=cfg.prune_epsilon, depth=cfg.depth
                )
            except WFFilterError:
                cache[key] = math.inf
        return cache[key]

    best = None
    starts = []
    total_evals = 0
    total_iters = 0
    for x0 in tf.starts():
        res = minimize(
            negll,
            x0,
            method="Nelder-Mead",
            bounds=[(tf.u_lo, tf.u_hi)] * 2,
            options={"fatol": cfg.tol, "xatol": cfg.xtol, "maxiter": cfg.max_iter, "maxfev": 4 * cfg.max_iter},
        )
        simplex = res.final_simplex[0]
        size = float(np.max(np.abs(simplex - simplex[0])))
        d, dp = tf.to_params(res.x)
        starts.append(
            {"start": list(tf.to_params(x0)), "delta": d, "delta_prime": dp, "loglik": -float(res.fun),
             "converged": bool(res.success), "iterations": int(res.nit)}
        )
        total_evals += int(res.nfev)
        total_iters += int(res.nit)
        if best is None or res.fun < best[0].fun:
            best = (res, size)
    res, size = best
    d, dp = tf.to_params(res.x)
    width = cfg.upper - cfg.lower
    at_lower = (d - cfg.lower <= cfg.boundary_rtol * width, dp - cfg.lower <= cfg.boundary_rtol * width)
    at_upper = (cfg.upper - d <= cfg.boundary_rtol * width, cfg.upper - dp <= cfg.boundary_rtol * width)
    return MLEResult(
        delta=d,
        delta_prime=dp,
        loglik=-float(res.fun),
        converged=bool(res.success),
        iterations=total_iters,
        evaluations=total_evals,
        simplex_size=size,
        at_lower=at_lower,
        at_upper=at_upper,
        starts=starts,
        message=str(res.message),
    )
