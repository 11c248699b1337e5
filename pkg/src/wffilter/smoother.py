"""Marginal smoothing by forward-backward combination.

The backward function for the observations after step ``l`` is a polynomial
in the basis ``x**a * (1 - x)**b``.  It is built right-to-left: multiply by
the emission monomial of the next observation, then apply the transition
operator over the gap.  Multiplying the filter mixture at ``l`` by it gives
the smoothing law, and the lost mass is the likelihood of the suffix.

Backward coefficients shrink like products of predictive probabilities, so
they are kept with a separate log scale.
"""
from __future__ import annotations

import math
from typing import Sequence

import numpy as np
from scipy.signal import convolve2d
from scipy.special import betaln

from .errors import DegenerateMixtureError, DomainError
from .filter import FilterTrace
from .kernel import DEFAULT_MAX_DEPTH, ModelParams
from .mixture import BetaMixture
from .observation import ObservationModel
from .propagation import HPolynomial, expand_dense

__all__ = [
    "BACKWARD_PRUNE_RTOL",
    "backward_functions",
    "backward_init",
    "backward_step",
    "smooth_all",
    "smooth_marginal",
    "smoothing_log_mass",
]

# backward terms below this fraction of the largest coefficient are dropped
BACKWARD_PRUNE_RTOL = 1e-14


def backward_init(params: ModelParams) -> HPolynomial:
    """The empty-suffix backward function, identically one."""
    return HPolynomial.constant(params)


def _trim(table: np.ndarray) -> np.ndarray:
    rows = np.nonzero(table.any(axis=1))[0]
    cols = np.nonzero(table.any(axis=0))[0]
    return table[: rows[-1] + 1, : cols[-1] + 1]


def backward_step(
    bf: HPolynomial,
    y: int,
    om: ObservationModel,
    delta: float,
    prune_rtol: float = BACKWARD_PRUNE_RTOL,
    depth: int = DEFAULT_MAX_DEPTH,
) -> HPolynomial:
    """One step of the backward recursion.

    Returns ``x -> E[f_X(y) bf(X) | X_0 = x]`` where ``X`` is the state
    ``delta`` time units later.
    """
    y = om.validate(y)
    if not delta > 0:
        raise DomainError(f"the gap must be positive, got {delta}")
    u, v = om.shift(y)
    shifted = bf.times_monomial(u, v, om.log_coef(y))
    out = expand_dense(shifted.coefficients, delta, bf.params, depth)
    peak = float(out.max())
    if not peak > 0:
        raise DegenerateMixtureError("backward function vanished")
    out = np.where(out < prune_rtol * peak, 0.0, out / peak)
    return HPolynomial(bf.params, _trim(out), shifted.log_scale + math.log(peak))


def backward_functions(
    trace: FilterTrace,
    prune_rtol: float = BACKWARD_PRUNE_RTOL,
    depth: int = DEFAULT_MAX_DEPTH,
) -> list[HPolynomial]:
    """Backward functions for ``l = 1..n`` (list position ``l - 1``)."""
    n = len(trace)
    out = [backward_init(trace.params)]
    for l in range(n - 1, 0, -1):
        # observation l + 1 sits at position l; the gap before it at l - 1
        out.append(backward_step(out[-1], trace.observations[l], trace.om, trace.gaps[l - 1], prune_rtol, depth))
    out.reverse()
    return out


def _combine(filtered: BetaMixture, backward: HPolynomial) -> tuple[np.ndarray, float]:
    """Unnormalized product table and the log of its total mass."""
    p = filtered.params
    f = filtered.to_dense()
    c = backward.coefficients
    if c.shape == (1, 1):
        # a constant backward function leaves the filter law untouched
        if not c[0, 0] > 0:
            raise DegenerateMixtureError("smoothing product has zero mass")
        return f, math.log(c[0, 0]) + backward.log_scale
    ii = np.arange(f.shape[0])[:, None] + p.beta_a
    jj = np.arange(f.shape[1])[None, :] + p.beta_b
    lf = -betaln(ii, jj)
    shift = lf.max()
    scaled = f * np.exp(lf - shift)
    prod = convolve2d(scaled, c)
    kk = np.arange(prod.shape[0])[:, None] + p.beta_a
    ll = np.arange(prod.shape[1])[None, :] + p.beta_b
    table = prod * np.exp(betaln(kk, ll) + shift)
    mass = math.fsum(table.ravel())
    if not mass > 0:
        raise DegenerateMixtureError("smoothing product has zero mass")
    return table / mass, math.log(mass) + backward.log_scale


def _check_index(trace: FilterTrace, l: int) -> None:
    if not 1 <= l <= len(trace):
        raise DomainError(f"smoothing index must lie in 1..{len(trace)}, got {l}")


def smooth_marginal(trace: FilterTrace, l: int, backward: HPolynomial) -> BetaMixture:
    """Law of the hidden state at step ``l`` (1-based) given every observation.

    ``backward`` must be the backward function of the observations after
    ``l``; see :func:`backward_functions`.
    """
    _check_index(trace, l)
    table, _ = _combine(trace.steps[l - 1].updated, backward)
    return BetaMixture.from_dense(trace.params, table)


def smoothing_log_mass(trace: FilterTrace, l: int, backward: HPolynomial) -> float:
    """Log of the unnormalized smoothing mass at ``l``.

    Equals the log-likelihood of observations ``l + 1..n`` given the first
    ``l``, i.e. the sum of the trace's log predictive probabilities after ``l``.
    """
    _check_index(trace, l)
    return _combine(trace.steps[l - 1].updated, backward)[1]


def smooth_all(
    trace: FilterTrace,
    prune_rtol: float = BACKWARD_PRUNE_RTOL,
    depth: int = DEFAULT_MAX_DEPTH,
) -> list[BetaMixture]:
    """Smoothing marginals for every step, in one backward sweep."""
    return [
        smooth_marginal(trace, l, bf)
        for l, bf in enumerate(backward_functions(trace, prune_rtol, depth), start=1)
    ]


def smoothed_moments(marginals: Sequence[BetaMixture]) -> tuple[np.ndarray, np.ndarray]:
    """Means and variances of a list of smoothing marginals."""
    return np.array([m.mean() for m in marginals]), np.array([m.variance() for m in marginals])
