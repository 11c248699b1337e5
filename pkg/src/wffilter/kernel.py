"""Scalar coefficients of the Wright-Fisher generator.

The generator acts on the monomials ``h_{n,p}(x) = x**n * (1 - x)**p`` through
three families of numbers:

* eigen-rates ``a_n = n * (2 * (n - 1) + delta + delta_prime)``,
* drift coefficients ``c_n(r) = n * (2 * (n - 1) + r)``,
* exponential divided differences ``B_t(a_n, ..., a_{n-k})``, i.e. ``(-1)**k``
  times the divided difference of ``x -> exp(-x * t)`` over the nodes.

Numerical strategy for ``B_t``
------------------------------
The scaled quantity ``G[i, j] = a_j * a_{j-1} * ... * a_{i+1} * B_t(a_j, ..., a_i)``
is the probability that a pure-death chain with death rate ``a_m`` in state
``m`` moves from ``j`` to ``i`` within time ``t``.  ``G = expm(t * Q)`` for the
bidiagonal generator ``Q``, a matrix with nonnegative entries.  It is computed
by uniformization on ``t / 2**m`` (a Poisson-weighted sum of powers of a
stochastic matrix) followed by ``m`` squarings.  Every operation adds or
multiplies nonnegative numbers, so no cancellation occurs for any ``t``.
Unscaled values are recovered in the log domain.
"""
from __future__ import annotations

import math
import os
import threading
from dataclasses import dataclass
from functools import lru_cache
from typing import Sequence

import numpy as np
from scipy.special import betaln

from .errors import DepthError, DistinctRatesError, DomainError, NumericalError

__all__ = [
    "DEFAULT_MAX_DEPTH",
    "ModelParams",
    "RateLadder",
    "beta_ratio_from_rates",
    "drift_coeff",
    "eigen_rate",
    "exp_divided_difference",
    "get_ladder",
    "log_beta_ratio",
]

DEFAULT_MAX_DEPTH = int(os.environ.get("WFFILTER_MAX_DEPTH", "64"))

# Negative values within this fraction of the upper bound are rounding noise.
NEGATIVE_CLAMP_RTOL = 1e-14


@dataclass(frozen=True)
class ModelParams:
    """Mutation rates of the diffusion.

    ``delta`` pushes the frequency towards 0, ``delta_prime`` towards 1.
    Both must be at least 2 so that the boundaries are never reached.
    """

    delta: float
    delta_prime: float

    def __post_init__(self):
        for name in ("delta", "delta_prime"):
            value = getattr(self, name)
            if not math.isfinite(value):
                raise DomainError(f"{name} must be finite, got {value!r}")
            if value < 2:
                raise DomainError(f"{name} must be >= 2, got {value!r}")
        object.__setattr__(self, "delta", float(self.delta))
        object.__setattr__(self, "delta_prime", float(self.delta_prime))

    @property
    def beta_a(self) -> float:
        """First shape parameter of the stationary Beta law."""
        return self.delta_prime / 2

    @property
    def beta_b(self) -> float:
        """Second shape parameter of the stationary Beta law."""
        return self.delta / 2

    def swapped(self) -> "ModelParams":
        """Parameters of the mirrored process ``1 - x``."""
        return ModelParams(self.delta_prime, self.delta)


def eigen_rate(n: int, params: ModelParams) -> float:
    """Return ``a_n``, the decay rate of the degree-``n`` eigenfunction."""
    if n < 0:
        raise DomainError(f"n must be nonnegative, got {n}")
    return n * (2.0 * (n - 1) + params.delta + params.delta_prime)


def drift_coeff(n: int, rate: float) -> float:
    """Return ``c_n(rate) = n * (2 * (n - 1) + rate)``."""
    if n < 0:
        raise DomainError(f"n must be nonnegative, got {n}")
    if not rate > 0:
        raise DomainError(f"rate must be positive, got {rate}")
    return n * (2.0 * (n - 1) + rate)


def _uniformized_expm(rates: np.ndarray, t: float) -> np.ndarray:
    """Transition matrix of the pure-death chain with the given rates.

    ``rates[0]`` must be 0 and the others positive.  Entry ``[i, j]`` is the
    probability of being in state ``i`` at time ``t`` when started in ``j``
    (columns sum to one, upper triangular).
    """
    size = rates.shape[0]
    if t == 0.0 or size == 1:
        return np.eye(size)
    lam = float(rates.max())
    squarings = max(0, math.ceil(math.log2(lam * t))) if lam * t > 1.0 else 0
    tau = t / 2.0**squarings
    # stochastic jump matrix of the uniformized chain
    jump = np.eye(size) - np.diag(rates / lam)
    jump[np.arange(size - 1), np.arange(1, size)] = rates[1:] / lam
    mean_jumps = lam * tau
    weight = math.exp(-mean_jumps)
    power = np.eye(size)
    result = weight * power
    # entry [i, j] first appears at power j - i; 20 further terms shrink the
    # Poisson weights by 1/20! < 1e-18 relative to that first contribution
    for r in range(1, size + 20):
        power = power @ jump
        weight *= mean_jumps / r
        result += weight * power
    for _ in range(squarings):
        result = result @ result
    # the diagonal is known in closed form; drop the rounding from squaring
    result[np.diag_indices(size)] = np.exp(-rates * t)
    # squaring leaves absolute errors near 1e-12 on the absorbed mass; where it
    # dominates, the complement of the (relatively accurate) other entries is
    # exact to rounding
    complement = 1.0 - np.sum(result[1:, 1:], axis=0)
    dominant = result[0, 1:] > 0.5
    result[0, 1:][dominant] = complement[dominant]
    return result


class RateLadder:
    """Eigen-rates and coefficient products for one parameter pair.

    Tables are precomputed up to ``depth`` and are read-only afterwards.

    Attributes
    ----------
    rates : ndarray, shape (depth + 1,)
        ``a_0, ..., a_depth``.
    log_aprod : ndarray, shape (depth + 1, depth + 1)
        ``log_aprod[j, s] = log(a_j * ... * a_{j-s+1})`` for ``s <= j``.
    log_cprod_prime, log_cprod : ndarray, shape (depth + 1, depth + 1)
        ``log(c_n(r) * ... * c_{n-k+1}(r))`` at ``[n, k]`` for ``r`` equal to
        ``delta_prime`` and ``delta`` respectively.
    """

    def __init__(self, params: ModelParams, depth: int = DEFAULT_MAX_DEPTH):
        self.params = params
        self.depth = depth
        n = np.arange(depth + 1, dtype=float)
        self.rates = n * (2.0 * (n - 1) + params.delta + params.delta_prime)
        self.log_aprod = self._log_products(self.rates)
        self.log_cprod_prime = self._log_products(n * (2.0 * (n - 1) + params.delta_prime))
        self.log_cprod = self._log_products(n * (2.0 * (n - 1) + params.delta))
        self._lock = threading.Lock()
        self._transfer_cache: dict[tuple[float, int], np.ndarray] = {}

    @staticmethod
    def _log_products(values: np.ndarray) -> np.ndarray:
        size = values.shape[0]
        logs = np.zeros(size)
        logs[1:] = np.log(values[1:])
        cums = np.concatenate([[0.0], np.cumsum(logs[1:])])  # cums[j] = sum_{m<=j}
        j = np.arange(size)[:, None]
        s = np.arange(size)[None, :]
        table = np.full((size, size), -np.inf)
        valid = s <= j
        lo = np.where(valid, j - s, 0)
        table[valid] = (cums[j] - cums[lo])[valid]
        return table

    def check_depth(self, depth: int) -> None:
        if depth > self.depth:
            raise DepthError(f"depth {depth} exceeds the maximum depth {self.depth}")

    def bucket(self, depth: int | None) -> int:
        """Table size used for requests up to ``depth`` (multiples of 16)."""
        if depth is None:
            return self.depth
        self.check_depth(depth)
        return min(self.depth, 16 * (depth // 16 + 1) - 1)

    def transfer(self, t: float, depth: int | None = None) -> np.ndarray:
        """Depth-transfer matrix ``G`` at time ``t`` (see module docstring).

        The returned table covers at least ``0..depth``; its size depends only
        on ``depth`` so results are reproducible.
        """
        if t < 0 or not math.isfinite(t):
            raise DomainError(f"time must be finite and nonnegative, got {t}")
        key = (float(t), self.bucket(depth))
        cached = self._transfer_cache.get(key)
        if cached is None:
            cached = _uniformized_expm(self.rates[: key[1] + 1], key[0])
            cached.setflags(write=False)
            with self._lock:
                if len(self._transfer_cache) > 256:
                    self._transfer_cache.clear()
                self._transfer_cache[key] = cached
        return cached

    def log_divided_differences(self, t: float, depth: int | None = None) -> np.ndarray:
        """``log B_t(a_j, ..., a_i)`` at ``[i, j]`` for ``i <= j``; ``-inf`` elsewhere."""
        g = self.transfer(t, depth)
        size = g.shape[0]
        i = np.arange(size)[:, None]
        j = np.arange(size)[None, :]
        out = np.full((size, size), -np.inf)
        upper = i <= j
        with np.errstate(divide="ignore"):
            logg = np.log(g)
        out[upper] = (logg - self.log_aprod[j, np.where(upper, j - i, 0)])[upper]
        # exact on the diagonal, where the value can be far below double range
        out[np.diag_indices(size)] = -self.rates[:size] * t
        return out

    def divided_difference(self, n: int, k: int, t: float) -> float:
        """``B_t(a_n, a_{n-1}, ..., a_{n-k})`` from the cached table."""
        if not 0 <= k <= n:
            raise DomainError(f"need 0 <= k <= n, got n={n}, k={k}")
        g = self.transfer(t, n)[n - k, n]
        if g == 0.0:
            return 0.0
        return math.exp(math.log(g) - self.log_aprod[n, k])


@lru_cache(maxsize=128)
def get_ladder(params: ModelParams, depth: int = DEFAULT_MAX_DEPTH) -> RateLadder:
    """Shared, cached :class:`RateLadder` for ``params``."""
    return RateLadder(params, depth)


def exp_divided_difference(rates: Sequence[float], t: float) -> float:
    """Return ``B_t(rates)`` for strictly decreasing nodes.

    ``B_t(z_0, ..., z_k) = (-1)**k * f[z_0, ..., z_k]`` with ``f(x) = exp(-x t)``.
    The value lies between ``t**k exp(-z_0 t) / k!`` and ``t**k exp(-z_k t) / k!``.
    """
    z = np.asarray(rates, dtype=float)
    if z.ndim != 1 or z.size == 0:
        raise DomainError("rates must be a nonempty 1-d sequence")
    if t < 0 or not math.isfinite(t):
        raise DomainError(f"t must be finite and nonnegative, got {t}")
    diffs = np.diff(z)
    if np.any(diffs == 0):
        raise DistinctRatesError("divided-difference nodes must be pairwise distinct")
    if np.any(diffs > 0):
        raise DomainError("rates must be listed in decreasing order")
    k = z.size - 1
    zmin = z[-1]
    if k == 0:
        return math.exp(-zmin * t)
    if t == 0.0:
        return 0.0
    shifted = (z - zmin)[::-1]  # increasing, shifted[0] == 0
    g = _uniformized_expm(shifted, t)[0, k]
    if g < 0:
        upper = t**k * math.exp(-zmin * t) / math.factorial(k)
        if -g > NEGATIVE_CLAMP_RTOL * upper:
            raise NumericalError(f"negative divided difference {g!r}")
        return 0.0
    if g == 0.0:
        return 0.0
    return math.exp(math.log(g) - np.log(shifted[1:]).sum() - zmin * t)


def log_beta_ratio(idx_from, idx_to, params: ModelParams) -> float:
    """``log[B(i + d'/2, j + d/2) / B(n + d'/2, p + d/2)]``.

    ``idx_to = (i, j)``, ``idx_from = (n, p)``; evaluated with log-Gamma.
    """
    n, p = idx_from
    i, j = idx_to
    a, b = params.beta_a, params.beta_b
    return float(betaln(i + a, j + b) - betaln(n + a, p + b))


def beta_ratio_from_rates(idx_from, idx_to, params: ModelParams) -> float:
    """Same ratio as :func:`log_beta_ratio` (not logged) via rate products.

    Valid for ``i <= n`` and ``j <= p``.  Independent of log-Gamma, so it
    serves as a cross-check.
    """
    n, p = idx_from
    i, j = idx_to
    if not (0 <= i <= n and 0 <= j <= p):
        raise DomainError("rate-product form needs idx_to <= idx_from componentwise")
    num = math.comb(i + j, j) * math.prod(eigen_rate(m, params) for m in range(i + j + 1, n + p + 1))
    den = (
        math.comb(n + p, p)
        * math.prod(drift_coeff(m, params.delta_prime) for m in range(i + 1, n + 1))
        * math.prod(drift_coeff(m, params.delta) for m in range(j + 1, p + 1))
    )
    return num / den
