"""Finite mixtures of Beta laws on a lattice of shape offsets.

Component ``(i, j)`` is the Beta law with shapes ``(i + delta_prime / 2,
j + delta / 2)``, i.e. the stationary law tilted by ``x**i * (1 - x)**j``.
"""
from __future__ import annotations

import json
import math
from typing import Iterable, Mapping, NamedTuple

import numpy as np
from scipy.special import betaln

from .errors import DegenerateMixtureError, DomainError
from .kernel import ModelParams

__all__ = [
    "DEFAULT_PRUNE_EPSILON",
    "BetaMixture",
    "LatticeIndex",
    "density_at",
    "moment",
    "normalize",
    "prune",
    "stationary",
]

DEFAULT_PRUNE_EPSILON = 1e-12


class LatticeIndex(NamedTuple):
    i: int
    j: int

    @property
    def depth(self) -> int:
        return self.i + self.j


class BetaMixture:
    """Immutable weighted set of lattice-indexed Beta components.

    Components are kept sorted by index; weights are nonnegative but are
    only guaranteed to sum to one after :func:`normalize`.
    """

    __slots__ = ("params", "_indices", "_weights")

    def __init__(self, params: ModelParams, components: Mapping | Iterable):
        items = components.items() if isinstance(components, Mapping) else components
        merged: dict[tuple[int, int], float] = {}
        for idx, w in items:
            i, j = int(idx[0]), int(idx[1])
            if i < 0 or j < 0:
                raise DomainError(f"lattice index must be nonnegative, got {(i, j)}")
            w = float(w)
            if not w >= 0 or not math.isfinite(w):
                raise DomainError(f"weights must be finite and nonnegative, got {w!r}")
            merged[(i, j)] = merged.get((i, j), 0.0) + w
        if not merged:
            raise DegenerateMixtureError("a mixture needs at least one component")
        keys = sorted(merged)
        self.params = params
        self._indices = np.array(keys, dtype=np.int64).reshape(-1, 2)
        self._weights = np.array([merged[k] for k in keys], dtype=float)
        self._indices.setflags(write=False)
        self._weights.setflags(write=False)

    @classmethod
    def _from_arrays(cls, params, indices, weights):
        obj = cls.__new__(cls)
        obj.params = params
        obj._indices = np.ascontiguousarray(indices, dtype=np.int64).reshape(-1, 2)
        obj._weights = np.ascontiguousarray(weights, dtype=float)
        obj._indices.setflags(write=False)
        obj._weights.setflags(write=False)
        return obj

    @classmethod
    def from_dense(cls, params: ModelParams, table: np.ndarray) -> "BetaMixture":
        """Mixture whose weight at ``(i, j)`` is ``table[i, j]``; zeros are dropped."""
        table = np.asarray(table, dtype=float)
        ii, jj = np.nonzero(table)
        if ii.size == 0:
            raise DegenerateMixtureError("all weights are zero")
        if np.any(table[ii, jj] < 0):
            raise DomainError("weights must be nonnegative")
        return cls._from_arrays(params, np.column_stack([ii, jj]), table[ii, jj])

    def to_dense(self, shape: tuple[int, int] | None = None) -> np.ndarray:
        """Weights on a dense ``(max_i + 1, max_j + 1)`` grid (or ``shape``)."""
        if shape is None:
            shape = (int(self._indices[:, 0].max()) + 1, int(self._indices[:, 1].max()) + 1)
        table = np.zeros(shape)
        table[self._indices[:, 0], self._indices[:, 1]] = self._weights
        return table

    @property
    def indices(self) -> np.ndarray:
        return self._indices

    @property
    def weights(self) -> np.ndarray:
        return self._weights

    @property
    def components(self) -> dict[LatticeIndex, float]:
        return {LatticeIndex(int(i), int(j)): float(w) for (i, j), w in zip(self._indices, self._weights)}

    @property
    def n_components(self) -> int:
        return int(self._weights.size)

    @property
    def max_depth(self) -> int:
        return int(self._indices.sum(axis=1).max())

    def total_weight(self) -> float:
        return math.fsum(self._weights)

    def weight(self, i: int, j: int) -> float:
        hit = np.nonzero((self._indices[:, 0] == i) & (self._indices[:, 1] == j))[0]
        return float(self._weights[hit[0]]) if hit.size else 0.0

    def mean(self) -> float:
        return moment(self, 1, 0) / moment(self, 0, 0)

    def variance(self) -> float:
        m0 = moment(self, 0, 0)
        m1 = moment(self, 1, 0) / m0
        return moment(self, 2, 0) / m0 - m1 * m1

    def __len__(self) -> int:
        return self.n_components

    def __eq__(self, other) -> bool:
        if not isinstance(other, BetaMixture):
            return NotImplemented
        return (
            self.params == other.params
            and np.array_equal(self._indices, other._indices)
            and np.array_equal(self._weights, other._weights)
        )

    def __hash__(self):
        return hash((self.params, self._indices.tobytes(), self._weights.tobytes()))

    def __repr__(self) -> str:
        shown = ", ".join(f"({i}, {j}): {w:.6g}" for (i, j), w in list(zip(self._indices.tolist(), self._weights))[:6])
        more = ", ..." if self.n_components > 6 else ""
        return f"BetaMixture({{{shown}{more}}}, delta={self.params.delta}, delta_prime={self.params.delta_prime})"

    # -- serialization ----------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "delta": self.params.delta,
            "delta_prime": self.params.delta_prime,
            "components": [
                {"i": int(i), "j": int(j), "w": float(w)} for (i, j), w in zip(self._indices, self._weights)
            ],
        }

    @classmethod
    def from_dict(cls, data: Mapping) -> "BetaMixture":
        params = ModelParams(data["delta"], data["delta_prime"])
        return cls(params, [((c["i"], c["j"]), c["w"]) for c in data["components"]])

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, text: str) -> "BetaMixture":
        return cls.from_dict(json.loads(text))


def stationary(params: ModelParams) -> BetaMixture:
    """The stationary Beta(delta_prime/2, delta/2) law as a one-component mixture."""
    return BetaMixture(params, {(0, 0): 1.0})


def normalize(m: BetaMixture) -> BetaMixture:
    total = m.total_weight()
    if not total > 0:
        raise DegenerateMixtureError("cannot normalize a mixture with zero total weight")
    return BetaMixture._from_arrays(m.params, m.indices, m.weights / total)


def prune(m: BetaMixture, epsilon: float = DEFAULT_PRUNE_EPSILON) -> tuple[BetaMixture, float]:
    """Drop components lighter than ``epsilon`` and renormalize.

    Returns the pruned mixture and the total weight removed.
    """
    if not 0 <= epsilon < 1:
        raise DomainError(f"epsilon must lie in [0, 1), got {epsilon}")
    keep = m.weights >= epsilon
    if keep.all():
        return normalize(m), 0.0
    if not keep.any():
        raise DegenerateMixtureError(f"pruning at {epsilon} removes every component")
    removed = math.fsum(m.weights[~keep])
    kept = BetaMixture._from_arrays(m.params, m.indices[keep], m.weights[keep])
    return normalize(kept), removed


def _log_beta_norms(m: BetaMixture) -> np.ndarray:
    p = m.params
    return betaln(m.indices[:, 0] + p.beta_a, m.indices[:, 1] + p.beta_b)


def density_at(m: BetaMixture, x):
    """Mixture density at ``x`` (scalar or array), all points in (0, 1)."""
    xa = np.asarray(x, dtype=float)
    if np.any(~((xa > 0) & (xa < 1))):
        raise DomainError("density is defined on the open interval (0, 1)")
    p = m.params
    i = m.indices[:, 0][:, None]
    j = m.indices[:, 1][:, None]
    flat = xa.reshape(1, -1)
    logpdf = (
        (i + p.beta_a - 1) * np.log(flat) + (j + p.beta_b - 1) * np.log1p(-flat) - _log_beta_norms(m)[:, None]
    )
    dens = m.weights @ np.exp(logpdf)
    return float(dens[0]) if xa.ndim == 0 else dens.reshape(xa.shape)


def moment(m: BetaMixture, a: int, b: int) -> float:
    """``E[x**a * (1 - x)**b]`` under the mixture (weights taken as given)."""
    if a < 0 or b < 0:
        raise DomainError("moment orders must be nonnegative")
    p = m.params
    shifted = betaln(m.indices[:, 0] + a + p.beta_a, m.indices[:, 1] + b + p.beta_b)
    return math.fsum(m.weights * np.exp(shifted - _log_beta_norms(m)))
