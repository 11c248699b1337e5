"""Transition operator on Beta mixtures and on polynomials.

For a component ``(n, p)`` at time ``t`` the transported law is a mixture over
the rectangle ``{(n - k, p - l)}``.  Its weight at ``(i, j)`` factorizes as

    hyper(n, p; i, j) * G[i + j, n + p]

where ``hyper`` is the hypergeometric probability of keeping ``i`` of the
``n`` and ``j`` of the ``p`` factors, and ``G`` is the depth-transfer matrix
from :mod:`wffilter.kernel`.  The action on monomials, ``P_t h_{n,p}``, uses
the coefficient products of the generator directly.
"""
from __future__ import annotations

import math
from functools import lru_cache
from typing import Mapping

import numpy as np
from scipy.special import gammaln

from .errors import DepthError, DomainError, NumericalError
from .kernel import DEFAULT_MAX_DEPTH, ModelParams, get_ladder
from .mixture import DEFAULT_PRUNE_EPSILON, BetaMixture, LatticeIndex, prune

__all__ = [
    "HPolynomial",
    "moment_expansion",
    "propagate",
    "propagate_component",
]

# weight sums may drift from one by rounding only
SUM_TOLERANCE = 1e-8


class HPolynomial:
    """``exp(log_scale) * sum c[i, j] * x**i * (1 - x)**j``.

    Coefficients live in a dense table indexed by ``(i, j)``.
    """

    __slots__ = ("params", "coefficients", "log_scale")

    def __init__(self, params: ModelParams, coefficients, log_scale: float = 0.0):
        self.params = params
        if isinstance(coefficients, Mapping):
            if not coefficients:
                coefficients = {(0, 0): 0.0}
            rows = max(i for i, _ in coefficients) + 1
            cols = max(j for _, j in coefficients) + 1
            table = np.zeros((rows, cols))
            for (i, j), c in coefficients.items():
                table[i, j] += c
            coefficients = table
        self.coefficients = np.array(coefficients, dtype=float, ndmin=2)
        self.log_scale = float(log_scale)

    @classmethod
    def constant(cls, params: ModelParams, value: float = 1.0) -> "HPolynomial":
        return cls(params, np.array([[value]]))

    @property
    def terms(self) -> dict[LatticeIndex, float]:
        """Nonzero terms with the scale folded in."""
        scale = math.exp(self.log_scale)
        ii, jj = np.nonzero(self.coefficients)
        return {LatticeIndex(int(i), int(j)): float(self.coefficients[i, j] * scale) for i, j in zip(ii, jj)}

    @property
    def n_terms(self) -> int:
        return int(np.count_nonzero(self.coefficients))

    def evaluate(self, x):
        x = np.asarray(x, dtype=float)
        rows, cols = self.coefficients.shape
        xp = x[..., None] ** np.arange(rows)
        yp = (1 - x)[..., None] ** np.arange(cols)
        val = np.einsum("...i,ij,...j->...", xp, self.coefficients, yp)
        return np.exp(self.log_scale) * val

    def times_monomial(self, u: int, v: int, log_coef: float = 0.0) -> "HPolynomial":
        """Product with ``exp(log_coef) * x**u * (1 - x)**v``."""
        rows, cols = self.coefficients.shape
        table = np.zeros((rows + u, cols + v))
        table[u:, v:] = self.coefficients
        return HPolynomial(self.params, table, self.log_scale + log_coef)

    def rescaled(self) -> "HPolynomial":
        """Same function with the largest coefficient equal to one."""
        peak = float(np.max(np.abs(self.coefficients)))
        if peak == 0.0:
            return self
        return HPolynomial(self.params, self.coefficients / peak, self.log_scale + math.log(peak))

    def __repr__(self) -> str:
        return f"HPolynomial({self.terms})"


@lru_cache(maxsize=None)
def _log_factorials(size: int) -> np.ndarray:
    return gammaln(np.arange(size) + 1.0)


def _grids(rows: int, cols: int):
    n = np.arange(rows)[:, None, None, None]
    p = np.arange(cols)[None, :, None, None]
    i = np.arange(rows)[None, None, :, None]
    j = np.arange(cols)[None, None, None, :]
    valid = (i <= n) & (j <= p)
    k = np.where(valid, n - i, 0)
    l = np.where(valid, p - j, 0)
    return n, p, i, j, k, l, valid


@lru_cache(maxsize=64)
def _hypergeometric(rows: int, cols: int) -> np.ndarray:
    """``C(n, i) C(p, j) / C(n + p, i + j)`` at ``[n, p, i, j]``."""
    n, p, i, j, k, l, valid = _grids(rows, cols)
    lf = _log_factorials(rows + cols)
    logh = (lf[n] - lf[i] - lf[k]) + (lf[p] - lf[j] - lf[l]) - (lf[n + p] - lf[i + j] - lf[k + l])
    out = np.where(valid, np.exp(np.where(valid, logh, 0.0)), 0.0)
    out.setflags(write=False)
    return out


def _check_shape(rows: int, cols: int, ladder) -> None:
    if rows + cols - 2 > ladder.depth:
        raise DepthError(f"lattice depth {rows + cols - 2} exceeds the maximum depth {ladder.depth}")


@lru_cache(maxsize=64)
def _transfer_tensor(params: ModelParams, t: float, rows: int, cols: int, depth: int) -> np.ndarray:
    """Mixture weights: ``[n, p, i, j]`` is the weight of ``(i, j)`` in ``nu_{n,p} P_t``."""
    ladder = get_ladder(params, depth)
    _check_shape(rows, cols, ladder)
    g = ladder.transfer(t, rows + cols - 2)
    n, p, i, j, _, _, valid = _grids(rows, cols)
    out = np.where(valid, _hypergeometric(rows, cols) * g[i + j, n + p], 0.0)
    out.setflags(write=False)
    return out


@lru_cache(maxsize=64)
def _expansion_tensor(params: ModelParams, t: float, rows: int, cols: int, depth: int) -> np.ndarray:
    """Monomial coefficients: ``[n, p, i, j]`` multiplies ``h_{i,j}`` in ``P_t h_{n,p}``."""
    ladder = get_ladder(params, depth)
    _check_shape(rows, cols, ladder)
    logb = ladder.log_divided_differences(t, rows + cols - 2)
    n, p, i, j, k, l, valid = _grids(rows, cols)
    lf = _log_factorials(rows + cols)
    with np.errstate(invalid="ignore"):
        logc = (lf[k + l] - lf[k] - lf[l]) + ladder.log_cprod_prime[n, k] + ladder.log_cprod[p, l]
        logc = logc + logb[i + j, n + p]
    out = np.where(valid, np.exp(np.where(valid, logc, -np.inf)), 0.0)
    out.setflags(write=False)
    return out


def _bucket(size: int) -> int:
    return 4 * ((size + 3) // 4)


def _padded_apply(table: np.ndarray, tensor_fn, params: ModelParams, t: float, depth: int) -> np.ndarray:
    rows, cols = table.shape
    br, bc = _bucket(rows), _bucket(cols)
    ladder_depth = depth
    if br + bc - 2 > ladder_depth:
        br, bc = rows, cols
    padded = np.zeros((br, bc))
    padded[:rows, :cols] = table
    tensor = tensor_fn(params, float(t), br, bc, ladder_depth)
    out = np.tensordot(padded, tensor, axes=([0, 1], [0, 1]))
    return out[:rows, :cols]


def propagate_dense(table: np.ndarray, t: float, params: ModelParams, depth: int = DEFAULT_MAX_DEPTH) -> np.ndarray:
    """Transport a dense weight table through time ``t``.

    The total weight is preserved; the rounding residual is folded into
    the ``(0, 0)`` component.
    """
    if t < 0:
        raise DomainError(f"time must be nonnegative, got {t}")
    if t == 0:
        return np.array(table, dtype=float)
    before = math.fsum(table.ravel())
    out = _padded_apply(table, _transfer_tensor, params, t, depth)
    after = math.fsum(out.ravel())
    if abs(after - before) > SUM_TOLERANCE * before:
        raise NumericalError(f"propagation changed the total weight from {before!r} to {after!r}")
    residual = before - after
    if out[0, 0] + residual >= 0:
        out[0, 0] += residual
    return out


def expand_dense(coefficients: np.ndarray, t: float, params: ModelParams, depth: int = DEFAULT_MAX_DEPTH) -> np.ndarray:
    """Apply ``P_t`` to a polynomial given by its dense coefficient table."""
    if t == 0:
        return np.array(coefficients, dtype=float)
    return _padded_apply(coefficients, _expansion_tensor, params, t, depth)


def moment_expansion(idx, t: float, params: ModelParams, depth: int = DEFAULT_MAX_DEPTH) -> HPolynomial:
    """``P_t h_{n,p}`` as a nonnegative combination of ``h_{n-k,p-l}``."""
    n, p = idx
    if n + p > depth:
        raise DepthError(f"index {idx} exceeds the maximum depth {depth}")
    if t < 0:
        raise DomainError(f"time must be nonnegative, got {t}")
    unit = np.zeros((n + 1, p + 1))
    unit[n, p] = 1.0
    return HPolynomial(params, expand_dense(unit, t, params, depth))


def propagate_component(idx, t: float, params: ModelParams, depth: int = DEFAULT_MAX_DEPTH) -> BetaMixture:
    """``nu_{n,p} P_t`` as a Beta mixture over the index rectangle below ``idx``."""
    n, p = idx
    if n + p > depth:
        raise DepthError(f"index {idx} exceeds the maximum depth {depth}")
    if t < 0:
        raise DomainError(f"time must be nonnegative, got {t}")
    if t == 0:
        return BetaMixture(params, {(n, p): 1.0})
    ladder = get_ladder(params, depth)
    g = ladder.transfer(float(t), n + p)
    lf = _log_factorials(n + p + 1)
    i = np.arange(n + 1)[:, None]
    j = np.arange(p + 1)[None, :]
    # hypergeometric probability of keeping i of n and j of p factors
    hyper = np.exp((lf[n] - lf[i] - lf[n - i]) + (lf[p] - lf[j] - lf[p - j]) - (lf[n + p] - lf[i + j] - lf[n + p - i - j]))
    weights = hyper * g[i + j, n + p]
    total = math.fsum(weights.ravel())
    if abs(total - 1.0) > SUM_TOLERANCE:
        raise NumericalError(f"mixture weights of {idx} sum to {total!r}")
    return BetaMixture.from_dense(params, weights)


def propagate(
    m: BetaMixture,
    t: float,
    epsilon: float = DEFAULT_PRUNE_EPSILON,
    depth: int = DEFAULT_MAX_DEPTH,
) -> BetaMixture:
    """Transport a mixture through time ``t``, then normalize and prune."""
    if m.max_depth > depth:
        raise DepthError(f"mixture depth {m.max_depth} exceeds the maximum depth {depth}")
    out = propagate_dense(m.to_dense(), t, m.params, depth)
    result, _ = prune(BetaMixture.from_dense(m.params, out), epsilon)
    return result
