"""Collapsed conjugate normal mixture: allocation-level quantities.

Model: observations x_1..x_n are allocated by a vector g to one of k
components.  Component weights carry a symmetric Dirichlet(alpha) prior and
are integrated out, leaving a Dirichlet-multinomial prior over allocation
vectors.  Each component has mean m_j and precision r_j with the conjugate
Normal-Gamma prior

    r_j ~ Gamma(gamma, delta),    m_j | r_j ~ N(mu, 1/(tau * r_j)),

also integrated out in closed form.  Every quantity in this module is a
deterministic function of the per-component sufficient statistics
(count, sum, sum of squares) and is computed in the log domain.

Components are indexed 0..k-1 internally; occupancy summaries use 1-based
positions so that "t components" and "position t" agree.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import NamedTuple

import numpy as np
from numba import njit
from scipy.special import gammaln

LOG_2PI = math.log(2.0 * math.pi)

__all__ = [
    "LOG_2PI",
    "ModelSpec",
    "OccupancyPattern",
    "AllocationState",
    "occupancy_pattern",
    "log_allocation_prior",
    "log_prior_rescale",
    "log_component_marginal",
    "log_data_marginal",
    "log_joint",
    "log_predictive",
]


@dataclass(frozen=True)
class ModelSpec:
    """Number of components plus all fixed hyperparameters.

    Parameters
    ----------
    k : int
        Number of mixture components, >= 1.
    alpha : float
        Symmetric Dirichlet weight parameter, > 0.
    mu : float
        Prior mean of the component means.
    tau : float
        Prior precision multiplier: m_j | r_j ~ N(mu, 1/(tau r_j)), > 0.
    gamma : float
        Shape of the Gamma prior on component precisions, > 0.
    delta : float
        Rate of the Gamma prior on component precisions, > 0.
    """

    k: int
    alpha: float = 1.0
    mu: float = 0.0
    tau: float = 1.0
    gamma: float = 2.0
    delta: float = 1.0

    def __post_init__(self):
        if int(self.k) != self.k or self.k < 1:
            raise ValueError(f"k must be an integer >= 1, got {self.k}")
        for name in ("alpha", "tau", "gamma", "delta"):
            v = getattr(self, name)
            if not (v > 0.0) or not math.isfinite(v):
                raise ValueError(f"{name} must be positive and finite, got {v}")
        if not math.isfinite(self.mu):
            raise ValueError(f"mu must be finite, got {self.mu}")

    def with_k(self, k: int) -> "ModelSpec":
        return replace(self, k=k)


class OccupancyPattern(NamedTuple):
    """Occupancy summary of an allocation: h occupied components, the last
    occupied one sitting at 1-based position t (h <= t <= k)."""

    h: int
    t: int


def occupancy_pattern(counts) -> OccupancyPattern:
    counts = np.asarray(counts)
    occupied = np.flatnonzero(counts > 0)
    if occupied.size == 0:
        raise ValueError("allocation has no occupied component")
    return OccupancyPattern(h=int(occupied.size), t=int(occupied[-1] + 1))


def log_allocation_prior(counts, alpha: float) -> float:
    """Log prior probability of an allocation with the given component counts.

    The symmetric Dirichlet(alpha) weights are integrated out, so the prior
    depends on the allocation only through its counts:

        Gamma(k a) / Gamma(k a + n) * prod_j Gamma(a + n_j) / Gamma(a).

    ``k`` is ``len(counts)`` and empty components are legitimate (their
    factor is 1).
    """
    counts = np.asarray(counts)
    if np.any(counts < 0):
        raise ValueError("negative component count")
    k = counts.shape[0]
    n = int(counts.sum())
    a0 = k * alpha
    return float(
        gammaln(a0)
        - gammaln(a0 + n)
        + np.sum(gammaln(alpha + counts) - gammaln(alpha))
    )


def log_prior_rescale(k: int, t: int, alpha: float, n: int) -> float:
    """Log of the factor relating allocation priors across model sizes.

    For an allocation that only uses the first t components, its prior under
    a k-component model equals its prior under the t-component model times

        a(k, t) = Gamma(k a) Gamma(t a + n) / (Gamma(k a + n) Gamma(t a)).

    a(k, k) = 1 and a(k, t) = a(k, s) a(s, t) for any intermediate s.
    """
    if not (1 <= t <= k):
        raise ValueError(f"need 1 <= t <= k, got t={t}, k={k}")
    if n < 0:
        raise ValueError("n must be >= 0")
    if t == k:
        return 0.0
    return float(
        gammaln(k * alpha)
        - gammaln(k * alpha + n)
        + gammaln(t * alpha + n)
        - gammaln(t * alpha)
    )


@njit(cache=True, nogil=True)
def _ng_logmarg(c, sx, sxx, mu, tau, gam, dlt):
    # Marginal density of c observations in one component, Normal-Gamma
    # parameters integrated out.  c == 0 contributes log 1 = 0.
    if c == 0:
        return 0.0
    xbar = sx / c
    ss = sxx - c * xbar * xbar
    if ss < 0.0:
        ss = 0.0  # guard against float cancellation
    dev = xbar - mu
    d = dlt + 0.5 * (ss + tau * c * dev * dev / (tau + c))
    return (
        -0.5 * c * LOG_2PI
        + 0.5 * (math.log(tau) - math.log(tau + c))
        + math.lgamma(gam + 0.5 * c)
        - math.lgamma(gam)
        + gam * math.log(dlt)
        - (gam + 0.5 * c) * math.log(d)
    )


def log_component_marginal(count: int, sumx: float, sumxx: float, spec: ModelSpec) -> float:
    """Log marginal density of one component's data, parameters integrated out.

    With c = ``count`` observations of sum ``sumx`` and sum of squares
    ``sumxx``, the Normal-Gamma prior integrates to

        (2 pi)^(-c/2) sqrt(tau/(tau+c)) Gamma(gamma + c/2)/Gamma(gamma)
            * delta^gamma / D^(gamma + c/2),

    D = delta + [sum of squared deviations + tau c (xbar - mu)^2/(tau+c)] / 2.

    An empty component returns 0.  The exact closed form is cross-checked
    against 2-D quadrature in the oracle module.
    """
    if count < 0:
        raise ValueError("count must be >= 0")
    return float(
        _ng_logmarg(
            int(count), float(sumx), float(sumxx),
            spec.mu, spec.tau, spec.gamma, spec.delta,
        )
    )


def log_data_marginal(counts, sumx, sumxx, spec: ModelSpec) -> float:
    """Log marginal density of the data given an allocation: the product of
    independent component marginals (empty components contribute 1)."""
    counts = np.asarray(counts)
    sumx = np.asarray(sumx, dtype=float)
    sumxx = np.asarray(sumxx, dtype=float)
    total = 0.0
    for j in range(counts.shape[0]):
        total += _ng_logmarg(
            int(counts[j]), float(sumx[j]), float(sumxx[j]),
            spec.mu, spec.tau, spec.gamma, spec.delta,
        )
    return total


def log_joint(state: "AllocationState", spec: ModelSpec) -> float:
    """Log of prior(allocation) times marginal(data | allocation)."""
    return log_allocation_prior(state.counts, spec.alpha) + log_data_marginal(
        state.counts, state.sumx, state.sumxx, spec
    )


def log_predictive(x: float, count: int, sumx: float, sumxx: float, spec: ModelSpec) -> float:
    """Log predictive density of a new observation joining one component.

    Ratio of the component marginal with and without x.  For an empty
    component this is the prior predictive: a Student-t with 2*gamma degrees
    of freedom, location mu, scale sqrt(delta (tau+1) / (gamma tau)).
    """
    with_x = _ng_logmarg(
        int(count) + 1, float(sumx) + x, float(sumxx) + x * x,
        spec.mu, spec.tau, spec.gamma, spec.delta,
    )
    without = _ng_logmarg(
        int(count), float(sumx), float(sumxx),
        spec.mu, spec.tau, spec.gamma, spec.delta,
    )
    return float(with_x - without)


@dataclass
class AllocationState:
    """Allocation vector plus per-component sufficient statistics.

    ``g`` holds 0-based component labels.  ``counts``, ``sumx`` and ``sumxx``
    are maintained incrementally by :meth:`move`; :meth:`recompute` rebuilds
    them from scratch so tests can bound accumulated float drift.  A state is
    owned by a single sampler at a time; nothing here is thread-safe.
    """

    data: np.ndarray
    g: np.ndarray
    counts: np.ndarray
    sumx: np.ndarray
    sumxx: np.ndarray

    @classmethod
    def from_allocation(cls, data, g, k: int) -> "AllocationState":
        data = np.asarray(data, dtype=float)
        g = np.asarray(g, dtype=np.int64)
        if data.ndim != 1 or g.shape != data.shape:
            raise ValueError("data and g must be 1-D arrays of equal length")
        if g.size and (g.min() < 0 or g.max() >= k):
            raise ValueError("allocation labels out of range 0..k-1")
        counts = np.bincount(g, minlength=k).astype(np.int64)
        sumx = np.bincount(g, weights=data, minlength=k)
        sumxx = np.bincount(g, weights=data * data, minlength=k)
        return cls(data=data, g=g.copy(), counts=counts, sumx=sumx, sumxx=sumxx)

    @property
    def k(self) -> int:
        return int(self.counts.shape[0])

    @property
    def n(self) -> int:
        return int(self.data.shape[0])

    def move(self, i: int, j: int) -> None:
        """Reassign observation i to component j, updating statistics in O(1)."""
        old = int(self.g[i])
        if old == j:
            return
        x = float(self.data[i])
        self.counts[old] -= 1
        self.sumx[old] -= x
        self.sumxx[old] -= x * x
        if self.counts[old] == 0:
            # pin drained components to exact zero
            self.sumx[old] = 0.0
            self.sumxx[old] = 0.0
        self.counts[j] += 1
        self.sumx[j] += x
        self.sumxx[j] += x * x
        self.g[i] = j

    def occupancy(self) -> OccupancyPattern:
        return occupancy_pattern(self.counts)

    def clone(self) -> "AllocationState":
        return AllocationState(
            data=self.data,
            g=self.g.copy(),
            counts=self.counts.copy(),
            sumx=self.sumx.copy(),
            sumxx=self.sumxx.copy(),
        )

    def recompute(self) -> "AllocationState":
        """Fresh state with statistics rebuilt from (data, g)."""
        return AllocationState.from_allocation(self.data, self.g, self.k)

    def consistency_error(self) -> float:
        """Largest absolute deviation of the incremental statistics from a
        from-scratch recomputation."""
        fresh = self.recompute()
        return float(
            max(
                np.abs(self.counts - fresh.counts).max(initial=0),
                np.abs(self.sumx - fresh.sumx).max(initial=0.0),
                np.abs(self.sumxx - fresh.sumxx).max(initial=0.0),
            )
        )
