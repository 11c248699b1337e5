"""Forward recursion: alternate Bayes updates and transport between observations.

Starting from ``init`` (the law of the first hidden state), each observation
is absorbed with the conjugate update and the result is transported over the
gap to the next observation time.  Every intermediate law is a finite Beta
mixture; the product of one-step predictive probabilities is the exact
likelihood.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from numba import njit

from .errors import (
    DegenerateMixtureError,
    DepthError,
    DomainError,
    ImpossibleObservationError,
    NumericalError,
    WFFilterError,
)
from .kernel import DEFAULT_MAX_DEPTH, ModelParams
from .mixture import DEFAULT_PRUNE_EPSILON, BetaMixture, normalize, stationary
from .observation import ObservationModel, marginal_grid, update_dense
from .propagation import SUM_TOLERANCE, _transfer_tensor, propagate_dense

__all__ = [
    "FilterState",
    "FilterTrace",
    "StepRecord",
    "gaps_from_times",
    "log_likelihood",
    "predict_h",
    "run_filter",
]


@dataclass(frozen=True)
class StepRecord:
    """One observation step: the law before and after absorbing ``y``."""

    y: int
    predicted: BetaMixture
    updated: BetaMixture
    predictive_prob: float
    n_components: int


@dataclass(frozen=True)
class FilterState:
    current: BetaMixture
    phase: str  # "updated" or "predicted"
    step_index: int
    cumulative_loglik: float


@dataclass
class FilterTrace:
    params: ModelParams
    om: ObservationModel
    observations: list[int]
    gaps: np.ndarray
    steps: list[StepRecord] = field(default_factory=list)
    loglik: float = 0.0
    final_predicted: BetaMixture | None = None

    def __len__(self) -> int:
        return len(self.observations)

    @property
    def final_state(self) -> FilterState:
        last = self.steps[-1]
        return FilterState(last.updated, "updated", len(self.steps), self.loglik)

    def filter_means(self) -> np.ndarray:
        return np.array([s.updated.mean() for s in self.steps])

    def filter_variances(self) -> np.ndarray:
        return np.array([s.updated.variance() for s in self.steps])

    def predictive_probs(self) -> np.ndarray:
        return np.array([s.predictive_prob for s in self.steps])

    def to_dict(self) -> dict:
        return {
            "delta": self.params.delta,
            "delta_prime": self.params.delta_prime,
            "observation_model": self.om.to_config(),
            "loglik": self.loglik,
            "steps": [
                {
                    "index": k + 1,
                    "y": s.y,
                    "predictive_prob": s.predictive_prob,
                    "n_components": s.n_components,
                    "predicted": s.predicted.to_dict()["components"],
                    "updated": s.updated.to_dict()["components"],
                }
                for k, s in enumerate(self.steps)
            ],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict())


def gaps_from_times(times: Sequence[float]) -> np.ndarray:
    """Inter-observation gaps from strictly increasing cumulative times."""
    t = np.asarray(times, dtype=float)
    gaps = np.diff(t)
    if np.any(gaps <= 0):
        raise DomainError("observation times must be strictly increasing")
    return gaps


def _as_gaps(gaps, n: int) -> np.ndarray:
    if np.ndim(gaps) == 0:
        out = np.full(max(n - 1, 0), float(gaps))
    else:
        out = np.asarray(gaps, dtype=float)
        if out.shape[0] not in (n - 1, n) and not (n == 0 and out.shape[0] == 0):
            raise DomainError(f"expected {n - 1} gaps (or {n} with a trailing one), got {out.shape[0]}")
    if np.any(out <= 0) or not np.all(np.isfinite(out)):
        raise DomainError("gaps must be positive and finite")
    return out


def prune_dense(table: np.ndarray, epsilon: float) -> np.ndarray:
    """Zero weights below ``epsilon``, renormalize and trim empty trailing rows/columns."""
    if epsilon > 0:
        table = np.where(table < epsilon, 0.0, table)
    total = math.fsum(table.ravel())
    if not total > 0:
        raise DegenerateMixtureError(f"pruning at {epsilon} removes every component")
    table = table / total
    rows = np.nonzero(table.any(axis=1))[0]
    cols = np.nonzero(table.any(axis=0))[0]
    return table[: rows[-1] + 1, : cols[-1] + 1]


def _step(k, y, table, loglik, steps, gaps, n, om, params, epsilon, depth, keep_trace):
    y = om.validate(y)
    predicted = table
    table, pred = update_dense(table, y, om, params)
    loglik += math.log(pred)
    if keep_trace:
        steps.append(
            StepRecord(
                y=y,
                predicted=BetaMixture.from_dense(params, predicted),
                updated=BetaMixture.from_dense(params, table),
                predictive_prob=pred,
                n_components=int(np.count_nonzero(table)),
            )
        )
    final = None
    if k < gaps.shape[0]:
        table = prune_dense(propagate_dense(table, gaps[k], params, depth), epsilon)
        if k == n - 1 and keep_trace:
            final = BetaMixture.from_dense(params, table)
    return table, loglik, final


def _forward(obs, gaps, om, params, init, epsilon, depth, keep_trace):
    if init is None:
        init = stationary(params)
    if init.params != params:
        raise DomainError("the initial mixture was built for different parameters")
    table = normalize(init).to_dense()
    loglik = 0.0
    steps = []
    final_predicted = None
    n = len(obs)
    for k, y in enumerate(obs):
        try:
            table, loglik, final = _step(k, y, table, loglik, steps, gaps, n, om, params, epsilon, depth, keep_trace)
        except WFFilterError as exc:
            raise type(exc)(f"step {k + 1}: {exc}") from exc
        final_predicted = final if final is not None else final_predicted
    return steps, loglik, final_predicted


def run_filter(
    obs: Sequence[int],
    gaps,
    om: ObservationModel,
    params: ModelParams,
    init: BetaMixture | None = None,
    prune_epsilon: float = DEFAULT_PRUNE_EPSILON,
    depth: int = DEFAULT_MAX_DEPTH,
) -> FilterTrace:
    """Run the exact filter over ``obs``.

    Parameters
    ----------
    obs : sequence of int
        Observations ``y_1, ..., y_n``.
    gaps : float or sequence of float
        Time between consecutive observations; a scalar means equal spacing.
        A sequence of length ``n`` adds a final transport step whose result is
        stored as ``final_predicted``.
    om : ObservationModel
    params : ModelParams
    init : BetaMixture, optional
        Law of the first hidden state; the stationary law by default.
    prune_epsilon : float
        Components lighter than this are dropped after every transport.
    """
    obs = list(obs)
    gap_array = _as_gaps(gaps, len(obs))
    steps, loglik, final_predicted = _forward(obs, gap_array, om, params, init, prune_epsilon, depth, True)
    return FilterTrace(params, om, [s.y for s in steps], gap_array, steps, loglik, final_predicted)


# status codes returned by the compiled likelihood loop
_OK, _GROW, _IMPOSSIBLE, _DRIFT, _EMPTY = 0, 1, 2, 3, 4


@njit(cache=True)
def _loglik_kernel(init, steps_y, steps_u, steps_v, steps_gap, marg, tensors, epsilon, sum_tol):
    """Dense forward loop on fixed-size buffers.

    Returns ``(status, step, loglik)``; a nonzero status names the reason the
    loop stopped at ``step`` (buffers too small, zero predictive, weight drift,
    everything pruned).
    """
    R, C = marg.shape[1], marg.shape[2]
    table = np.zeros((R, C))
    work = np.zeros((R, C))
    r, c = init.shape
    table[:r, :c] = init
    loglik = 0.0
    n = steps_y.shape[0]
    for k in range(n):
        u, v = steps_u[k], steps_v[k]
        if r + u > R or c + v > C:
            return _GROW, k, loglik
        pred = 0.0
        for i in range(r):
            for j in range(c):
                pred += table[i, j] * marg[steps_y[k], i, j]
        if not pred > 0.0:
            return _IMPOSSIBLE, k, loglik
        loglik += math.log(pred)
        work[:, :] = 0.0
        for i in range(r):
            for j in range(c):
                work[i + u, j + v] = table[i, j] * marg[steps_y[k], i, j] / pred
        r += u
        c += v
        g = steps_gap[k]
        if g < 0:
            table[:, :] = work
            continue
        # transport: out[i, j] = sum_{n >= i, p >= j} w[n, p] T[n, p, i, j]
        table[:, :] = 0.0
        before = 0.0
        for a in range(r):
            for b in range(c):
                w = work[a, b]
                if w == 0.0:
                    continue
                before += w
                for i in range(a + 1):
                    for j in range(b + 1):
                        table[i, j] += w * tensors[g, a, b, i, j]
        after = 0.0
        for i in range(r):
            for j in range(c):
                after += table[i, j]
        if abs(after - before) > sum_tol * before:
            return _DRIFT, k, loglik
        if table[0, 0] + (before - after) >= 0.0:
            table[0, 0] += before - after
        # prune, renormalize, trim
        total = 0.0
        rr, cc = 0, 0
        for i in range(r):
            for j in range(c):
                if table[i, j] < epsilon:
                    table[i, j] = 0.0
                else:
                    total += table[i, j]
                    if table[i, j] > 0.0:
                        rr = max(rr, i + 1)
                        cc = max(cc, j + 1)
        if not total > 0.0:
            return _EMPTY, k, loglik
        for i in range(r):
            for j in range(c):
                table[i, j] /= total
        r, c = rr, cc
    return _OK, n, loglik


def log_likelihood(
    obs: Sequence[int],
    gaps,
    om: ObservationModel,
    params: ModelParams,
    init: BetaMixture | None = None,
    prune_epsilon: float = DEFAULT_PRUNE_EPSILON,
    depth: int = DEFAULT_MAX_DEPTH,
) -> float:
    """Exact log-likelihood of ``obs``; no trace is kept.

    Same recursion as :func:`run_filter` but run by a compiled loop on dense
    buffers, which are enlarged and the run repeated if the lattice outgrows
    them.
    """
    obs = [om.validate(y) for y in obs]
    n = len(obs)
    if n == 0:
        return 0.0
    gap_array = _as_gaps(gaps, n)[: n - 1]
    if init is None:
        init = stationary(params)
    if init.params != params:
        raise DomainError("the initial mixture was built for different parameters")
    start = normalize(init).to_dense()
    values, y_code = np.unique(np.asarray(obs, dtype=np.int64), return_inverse=True)
    shifts = np.array([om.shift(int(y)) for y in values], dtype=np.int64)
    gap_values, gap_code = np.unique(gap_array, return_inverse=True)
    steps_gap = np.full(n, -1, dtype=np.int64)
    steps_gap[: n - 1] = gap_code
    rows = max(8, start.shape[0] + int(shifts[:, 0].max()) + 1)
    cols = max(8, start.shape[1] + int(shifts[:, 1].max()) + 1)
    if rows + cols - 2 > depth:
        rows, cols = min(rows, depth + 1 - start.shape[1]), min(cols, depth + 1 - start.shape[0])
    while True:
        if rows + cols - 2 > depth or rows < start.shape[0] or cols < start.shape[1]:
            raise DepthError(f"the filter lattice needs more than the maximum depth {depth}")
        marg = np.stack([marginal_grid(params, om, int(y), (rows, cols)) for y in values])
        tensors = np.stack([_transfer_tensor(params, float(t), rows, cols, depth) for t in gap_values]) if len(
            gap_values
        ) else np.zeros((1, rows, cols, rows, cols))
        status, step, loglik = _loglik_kernel(
            start, y_code.astype(np.int64), shifts[y_code, 0], shifts[y_code, 1], steps_gap,
            marg, tensors, float(prune_epsilon), SUM_TOLERANCE,
        )
        if status == _OK:
            return float(loglik)
        if status == _GROW:
            u, v = shifts[y_code[step]]
            new_rows, new_cols = (2 * rows if u else rows), (2 * cols if v else cols)
            if new_rows + new_cols - 2 > depth:
                # shrink the growth to fit under the depth cap
                excess = new_rows + new_cols - 2 - depth
                if u and v:
                    new_rows -= excess // 2
                    new_cols -= excess - excess // 2
                elif u:
                    new_rows -= excess
                else:
                    new_cols -= excess
            if new_rows <= rows and new_cols <= cols or new_rows < rows or new_cols < cols:
                raise DepthError(f"the filter lattice exceeds the maximum depth {depth} at step {step + 1}")
            rows, cols = new_rows, new_cols
            continue
        if status == _IMPOSSIBLE:
            raise ImpossibleObservationError(f"observation {obs[step]} at step {step + 1} has zero predictive probability")
        if status == _DRIFT:
            raise NumericalError(f"transport changed the total weight at step {step + 1}")
        raise DegenerateMixtureError(f"pruning removed every component at step {step + 1}")


def predict_h(
    state: FilterState,
    h: int,
    delta: float,
    prune_epsilon: float = DEFAULT_PRUNE_EPSILON,
    depth: int = DEFAULT_MAX_DEPTH,
) -> BetaMixture:
    """Law of the hidden state ``h`` sampling intervals after the last update."""
    if state.phase != "updated":
        raise DomainError("h-step prediction starts from an updated filter state")
    if h < 1:
        raise DomainError(f"h must be a positive integer, got {h}")
    params = state.current.params
    table = state.current.to_dense()
    for _ in range(h):
        table = prune_dense(propagate_dense(table, delta, params, depth), prune_epsilon)
    return BetaMixture.from_dense(params, table)
