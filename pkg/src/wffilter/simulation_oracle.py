"""Synthetic data and independent reference computations.

Everything here avoids the Beta-mixture machinery so that it can be used to
check it:

* :func:`simulate_path` / :func:`simulate_dataset` -- Euler-Maruyama paths of
  the diffusion with full truncation at the boundary.
* :func:`ode_moment_oracle` -- RK4 integration of the triangular linear ODE
  satisfied by ``E_x[X_t**n (1 - X_t)**p]``.
* :func:`build_grid_model` / :func:`grid_filter` -- a discrete HMM whose
  transition matrix comes from the Jacobi eigenfunction expansion of the
  transition density.
* :func:`particle_filter` -- bootstrap SMC with Euler propagation.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from numba import njit
from scipy import special, stats

from .errors import DegenerateWeightsError, DomainError, TruncationError
from .kernel import ModelParams, drift_coeff, eigen_rate
from .mixture import BetaMixture
from .observation import ObservationModel, sample_observation

__all__ = [
    "GridFilterResult",
    "GridModel",
    "ParticleFilterResult",
    "PathConfig",
    "SimulatedData",
    "SimulatedPath",
    "build_grid_model",
    "default_euler_step",
    "grid_filter",
    "jacobi_eigenfunctions",
    "ode_moment_oracle",
    "ode_moment_triangle",
    "particle_filter",
    "simulate_dataset",
    "simulate_path",
]

# truncation target for the eigenfunction series
SPECTRAL_TAIL = 1e-14


def default_euler_step(gap: float) -> float:
    """Euler step used when none is given: ``min(gap / 200, 1e-3)``."""
    return min(gap / 200.0, 1e-3)


# ---------------------------------------------------------------------------
# path simulation
# ---------------------------------------------------------------------------


@njit(cache=True)
def _euler_segment(x, h, delta, delta_prime, z):
    sq = math.sqrt(h)
    for k in range(z.shape[0]):
        xc = min(max(x, 0.0), 1.0)
        x = x + (-delta * x + delta_prime * (1.0 - x)) * h + 2.0 * math.sqrt(xc * (1.0 - xc)) * sq * z[k]
        x = min(max(x, 0.0), 1.0)
    return x


@dataclass(frozen=True)
class PathConfig:
    """Euler discretization settings.

    ``step`` of ``None`` picks :func:`default_euler_step` of the recording
    interval.  States are recorded every ``record_interval`` time units up to
    ``horizon`` unless explicit times are passed to :func:`simulate_path`.
    """

    horizon: float = 1.0
    step: float | None = None
    record_interval: float = 1.0
    boundary: str = "truncate"
    seed: int | None = None

    def __post_init__(self):
        if not self.horizon > 0:
            raise DomainError(f"horizon must be positive, got {self.horizon}")
        if self.step is not None and not self.step > 0:
            raise DomainError(f"step must be positive, got {self.step}")
        if not self.record_interval > 0:
            raise DomainError(f"record interval must be positive, got {self.record_interval}")
        if self.boundary != "truncate":
            raise DomainError(f"only the 'truncate' boundary policy is available, got {self.boundary!r}")


@dataclass(frozen=True)
class SimulatedPath:
    times: np.ndarray
    states: np.ndarray


@dataclass(frozen=True)
class SimulatedData:
    """Observation times, hidden states at those times, and observations."""

    times: np.ndarray
    states: np.ndarray
    obs: np.ndarray
    params: ModelParams
    om: ObservationModel

    @property
    def gaps(self) -> np.ndarray:
        return np.diff(self.times)


def simulate_path(
    params: ModelParams,
    cfg: PathConfig,
    rng: np.random.Generator | None = None,
    times=None,
    x0: float | None = None,
) -> SimulatedPath:
    """Simulate the diffusion and record it at ``times`` (cumulative, starting at 0).

    The initial state is drawn from the stationary Beta law unless ``x0`` is
    given.  Each inter-record interval is split into equal Euler steps no
    longer than the configured step.
    """
    if rng is None:
        rng = np.random.default_rng(cfg.seed)
    if times is None:
        n_rec = int(math.floor(cfg.horizon / cfg.record_interval + 1e-9))
        times = cfg.record_interval * np.arange(n_rec + 1)
    times = np.asarray(times, dtype=float)
    if times.ndim != 1 or times.size == 0 or times[0] < 0 or np.any(np.diff(times) <= 0):
        raise DomainError("record times must be nonnegative and strictly increasing")
    if x0 is None:
        x = float(rng.beta(params.beta_a, params.beta_b))
    else:
        if not 0 <= x0 <= 1:
            raise DomainError(f"x0 must lie in [0, 1], got {x0}")
        x = float(x0)
    states = np.empty(times.size)
    prev = 0.0
    for k, t in enumerate(times):
        gap = t - prev
        if gap > 0:
            h_max = cfg.step if cfg.step is not None else default_euler_step(gap)
            nsteps = max(1, int(math.ceil(gap / h_max - 1e-9)))
            z = rng.standard_normal(nsteps)
            x = _euler_segment(x, gap / nsteps, params.delta, params.delta_prime, z)
        states[k] = x
        prev = t
    return SimulatedPath(times, states)


def simulate_dataset(
    params: ModelParams,
    n: int,
    delta: float,
    om: ObservationModel,
    rng: np.random.Generator | int | None = None,
    x0: float | None = None,
    step: float | None = None,
) -> SimulatedData:
    """``n`` equally spaced observations, ``delta`` apart, starting at time 0."""
    if n < 1:
        raise DomainError(f"need at least one observation, got n={n}")
    if not delta > 0:
        raise DomainError(f"the sampling interval must be positive, got {delta}")
    rng = np.random.default_rng(rng)
    times = delta * np.arange(n)
    path = simulate_path(params, PathConfig(horizon=max(times[-1], delta), step=step), rng, times, x0)
    obs = np.array([sample_observation(x, om, rng) for x in path.states], dtype=np.int64)
    return SimulatedData(times, path.states, obs, params, om)


# ---------------------------------------------------------------------------
# moment ODE
# ---------------------------------------------------------------------------


def _rk4_moments(n: int, p: int, active: np.ndarray, t: float, params: ModelParams, x, max_rate_step: float):
    """RK4 on ``m_{k,l}`` for ``k <= n, l <= p``; entries outside ``active`` are frozen."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    k = np.arange(n + 1)[:, None, None]
    l = np.arange(p + 1)[None, :, None]
    y = x[None, None, :] ** k * (1 - x)[None, None, :] ** l
    if t == 0:
        return y
    mask = active[:, :, None].astype(float)
    rates = np.array([[eigen_rate(a + b, params) for b in range(p + 1)] for a in range(n + 1)])[:, :, None] * mask
    ck = np.array([drift_coeff(a, params.delta_prime) for a in range(n + 1)])[:, None, None]
    cl = np.array([drift_coeff(b, params.delta) for b in range(p + 1)])[None, :, None]

    def rhs(m):
        out = -rates * m
        out[1:] += ck[1:] * m[:-1]
        out[:, 1:] += cl[:, 1:] * m[:, :-1]
        return out * mask

    a_max = max(float(rates.max()), 1.0)
    steps = max(1, int(math.ceil(t * a_max / max_rate_step)))
    h = t / steps
    for _ in range(steps):
        k1 = rhs(y)
        k2 = rhs(y + 0.5 * h * k1)
        k3 = rhs(y + 0.5 * h * k2)
        k4 = rhs(y + h * k3)
        y = y + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
    return y


def ode_moment_oracle(idx, t: float, params: ModelParams, x_grid, max_rate_step: float = 0.01) -> np.ndarray:
    """``E_x[X_t**n (1 - X_t)**p]`` at each ``x`` by RK4.

    Integrates ``m_{k,l}' = -a_{k+l} m_{k,l} + c_k(delta') m_{k-1,l}
    + c_l(delta) m_{k,l-1}`` over the rectangle ``k <= n, l <= p`` with
    ``m_{k,l}(0, x) = x**k (1 - x)**l``.  The step keeps ``h * a_max``
    below ``max_rate_step``.
    """
    n, p = int(idx[0]), int(idx[1])
    if n < 0 or p < 0:
        raise DomainError("indices must be nonnegative")
    if n + p > 20:
        raise DomainError("the ODE oracle is limited to depth 20")
    active = np.ones((n + 1, p + 1), dtype=bool)
    return _rk4_moments(n, p, active, t, params, x_grid, max_rate_step)[n, p].copy()


def ode_moment_triangle(depth: int, t: float, params: ModelParams, x_grid, max_rate_step: float = 0.01) -> np.ndarray:
    """All ``m_{k,l}(t, x)`` with ``k + l <= depth`` from one RK4 run.

    Returns an array indexed ``[k, l, x]``; entries with ``k + l > depth``
    are NaN.
    """
    if not 0 <= depth <= 20:
        raise DomainError("the ODE oracle is limited to depth 20")
    k = np.arange(depth + 1)[:, None]
    active = k + k.T <= depth
    out = _rk4_moments(depth, depth, active, t, params, x_grid, max_rate_step)
    out[~active] = np.nan
    return out


# ---------------------------------------------------------------------------
# spectral grid HMM
# ---------------------------------------------------------------------------


def _jacobi_shapes(params: ModelParams) -> tuple[float, float]:
    # weight (1 - u)**alpha (1 + u)**beta with u = 2x - 1
    return params.delta / 2 - 1, params.delta_prime / 2 - 1


def jacobi_eigenfunctions(params: ModelParams, K: int, x) -> np.ndarray:
    """``Q_n(x)`` for ``n = 0..K``, shape ``(K + 1, len(x))``."""
    alpha, beta = _jacobi_shapes(params)
    u = 2 * np.asarray(x, dtype=float) - 1
    return np.array([special.eval_jacobi(n, alpha, beta, u) for n in range(K + 1)])


def _jacobi_norms(params: ModelParams, K: int) -> np.ndarray:
    """``c_n = int Q_n**2 dpi`` by Gauss-Jacobi quadrature (exact for these degrees)."""
    alpha, beta = _jacobi_shapes(params)
    u, w = special.roots_jacobi(K + 2, alpha, beta)
    w = w / w.sum()
    q = jacobi_eigenfunctions(params, K, (u + 1) / 2)
    return (q**2) @ w


def spectral_order(params: ModelParams, delta: float, tail: float = SPECTRAL_TAIL) -> int:
    """Smallest ``K`` with ``exp(-a_K delta) <= tail``."""
    K = 1
    while math.exp(-eigen_rate(K, params) * delta) > tail:
        K += 1
    return K


@dataclass
class GridModel:
    """Discrete-state approximation of the transition over one gap.

    ``transition[i, j]`` is the probability of moving from the midpoint of
    cell ``i`` into cell ``j``.
    """

    params: ModelParams
    delta: float
    edges: np.ndarray
    K: int
    transition: np.ndarray
    clipped_mass: np.ndarray = field(repr=False)

    @property
    def M(self) -> int:
        return self.midpoints.size

    @property
    def midpoints(self) -> np.ndarray:
        return 0.5 * (self.edges[1:] + self.edges[:-1])

    def stationary(self) -> np.ndarray:
        """Cell masses of the stationary Beta law."""
        cdf = stats.beta.cdf(self.edges, self.params.beta_a, self.params.beta_b)
        return np.diff(cdf)

    def cell_masses(self, m: BetaMixture) -> np.ndarray:
        """Cell masses of a Beta mixture (for initial laws)."""
        p = m.params
        cdf = np.zeros_like(self.edges)
        for (i, j), w in zip(m.indices, m.weights):
            cdf += w * stats.beta.cdf(self.edges, i + p.beta_a, j + p.beta_b)
        return np.diff(cdf)


def build_grid_model(
    params: ModelParams,
    delta: float,
    M: int = 400,
    K: int | None = None,
    quad_points: int = 8,
) -> GridModel:
    """Transition matrix of the cell chain from the truncated eigen-expansion.

    The density ``pi(y) sum_n exp(-a_n delta) Q_n(x) Q_n(y) / c_n`` is
    integrated over each target cell with Gauss-Legendre nodes.  Negative
    entries from truncation are clipped and rows renormalized.
    """
    if M < 50:
        raise DomainError(f"need at least 50 cells, got {M}")
    if not delta > 0:
        raise DomainError(f"delta must be positive, got {delta}")
    if K is None:
        K = spectral_order(params, delta)
    elif math.exp(-eigen_rate(K, params) * delta) > SPECTRAL_TAIL:
        raise TruncationError(f"K={K} leaves a series tail exp(-a_K delta) above {SPECTRAL_TAIL}")
    edges = np.linspace(0.0, 1.0, M + 1)
    mids = 0.5 * (edges[1:] + edges[:-1])
    gl_x, gl_w = np.polynomial.legendre.leggauss(quad_points)
    half = 0.5 * np.diff(edges)
    nodes = (mids[:, None] + half[:, None] * gl_x[None, :]).ravel()
    weights = (half[:, None] * gl_w[None, :]).ravel()
    dens = stats.beta.pdf(nodes, params.beta_a, params.beta_b)
    q_nodes = jacobi_eigenfunctions(params, K, nodes)
    # cell integrals of pi(y) Q_n(y): shape (K + 1, M)
    g = (q_nodes * (weights * dens)[None, :]).reshape(K + 1, M, quad_points).sum(axis=2)
    decay = np.exp(-np.array([eigen_rate(n, params) for n in range(K + 1)]) * delta)
    coef = decay / _jacobi_norms(params, K)
    q_mid = jacobi_eigenfunctions(params, K, mids)
    trans = (q_mid * coef[:, None]).T @ g
    negative = np.where(trans < 0, -trans, 0.0).sum(axis=1)
    trans = np.clip(trans, 0.0, None)
    trans /= trans.sum(axis=1, keepdims=True)
    return GridModel(params, float(delta), edges, K, trans, negative)


@dataclass
class GridFilterResult:
    posteriors: np.ndarray  # (n, M) cell masses after each update
    means: np.ndarray
    variances: np.ndarray
    predictive_probs: np.ndarray
    loglik: float


def grid_filter(obs, gaps, om: ObservationModel, grid: GridModel, init=None) -> GridFilterResult:
    """Forward algorithm on the cell chain, emissions evaluated at midpoints.

    ``gaps`` must equal the gap the grid was built for (scalar or array);
    ``init`` is a vector of cell masses, a :class:`BetaMixture`, or ``None``
    for the stationary law.
    """
    obs = [om.validate(y) for y in obs]
    g = np.atleast_1d(np.asarray(gaps, dtype=float))
    if g.size and not np.allclose(g, grid.delta, rtol=1e-12, atol=0):
        raise DomainError("the grid model was built for a different gap")
    if init is None:
        prior = grid.stationary()
    elif isinstance(init, BetaMixture):
        prior = grid.cell_masses(init)
    else:
        prior = np.asarray(init, dtype=float)
    prior = prior / prior.sum()
    mids = grid.midpoints
    n = len(obs)
    post = np.empty((n, grid.M))
    preds = np.empty(n)
    for k, y in enumerate(obs):
        joint = prior * om.emission(mids, y)
        preds[k] = joint.sum()
        post[k] = joint / preds[k]
        prior = post[k] @ grid.transition
    means = post @ mids
    variances = post @ mids**2 - means**2
    return GridFilterResult(post, means, variances, preds, float(np.log(preds).sum()))


# ---------------------------------------------------------------------------
# particle filter
# ---------------------------------------------------------------------------


@njit(cache=True)
def _propagate_particles(x, h, delta, delta_prime, z):
    # z has one row of standard normals per particle
    sq = math.sqrt(h)
    for i in range(x.shape[0]):
        xi = x[i]
        for k in range(z.shape[1]):
            xc = min(max(xi, 0.0), 1.0)
            xi = xi + (-delta * xi + delta_prime * (1.0 - xi)) * h + 2.0 * math.sqrt(xc * (1.0 - xc)) * sq * z[i, k]
            xi = min(max(xi, 0.0), 1.0)
        x[i] = xi


# Euler steps per batch of pre-drawn normals (bounds memory at ~2e6 draws)
_PF_CHUNK = 2_000_000


def _euler_particles(x, gap, step, params, rng):
    h_max = step if step is not None else default_euler_step(gap)
    nsteps = max(1, int(math.ceil(gap / h_max - 1e-9)))
    per_chunk = max(1, _PF_CHUNK // x.shape[0])
    x = np.array(x)
    done = 0
    while done < nsteps:
        s = min(per_chunk, nsteps - done)
        _propagate_particles(x, gap / nsteps, params.delta, params.delta_prime, rng.standard_normal((x.shape[0], s)))
        done += s
    return x


@dataclass
class ParticleFilterResult:
    means: np.ndarray
    std_errors: np.ndarray  # Monte Carlo standard error of each weighted mean
    ess: np.ndarray
    loglik: float
    particles: np.ndarray = field(repr=False)


def _sample_init(init, n: int, params: ModelParams, rng) -> np.ndarray:
    if init is None:
        return rng.beta(params.beta_a, params.beta_b, size=n)
    comp = rng.choice(init.n_components, size=n, p=init.weights / init.weights.sum())
    idx = init.indices[comp]
    return rng.beta(idx[:, 0] + params.beta_a, idx[:, 1] + params.beta_b)


def particle_filter(
    obs,
    gaps,
    om: ObservationModel,
    params: ModelParams,
    n_particles: int = 100_000,
    rng: np.random.Generator | int | None = None,
    init: BetaMixture | None = None,
    step: float | None = None,
) -> ParticleFilterResult:
    """Bootstrap particle filter with Euler propagation and multinomial resampling.

    The standard error reported for step ``k`` is
    ``sqrt(sum w_i**2 (x_i - mean)**2)`` with normalized weights ``w``.
    """
    if n_particles < 1000:
        raise DomainError(f"use at least 1000 particles, got {n_particles}")
    rng = np.random.default_rng(rng)
    obs = [om.validate(y) for y in obs]
    n = len(obs)
    g = np.full(max(n - 1, 0), float(gaps)) if np.ndim(gaps) == 0 else np.asarray(gaps, dtype=float)
    if g.size < n - 1:
        raise DomainError(f"expected {n - 1} gaps, got {g.size}")
    x = _sample_init(init, n_particles, params, rng)
    means = np.empty(n)
    ses = np.empty(n)
    ess = np.empty(n)
    loglik = 0.0
    for k, y in enumerate(obs):
        w = om.emission(x, y)
        total = w.sum()
        if not total > 0:
            raise DegenerateWeightsError(f"all particle weights vanished at step {k + 1}")
        loglik += math.log(total / n_particles)
        w = w / total
        means[k] = w @ x
        ses[k] = math.sqrt(np.sum(w**2 * (x - means[k]) ** 2))
        ess[k] = 1.0 / np.sum(w**2)
        if k < n - 1:
            x = x[rng.choice(n_particles, size=n_particles, p=w)]
            x = _euler_particles(x, g[k], step, params, rng)
    return ParticleFilterResult(means, ses, ess, loglik, x)
