"""Marginal likelihoods of k-component models from allocation-chain output.

The marginal likelihood f_k of the k-component model admits several exact
representations in terms of restricted sums over allocations: by the position
t of the last occupied component, or by the number h of occupied components.
Combining those representations with empty-component visit frequencies from
fixed-k chains yields ratio estimators for the whole sequence of f_k at once;
this module implements them, their Monte Carlo standard errors, and the
purely analytic tables and posterior bounds that need no sampling at all.

Everything takes plain chain summaries (visit frequencies plus per-batch
frequencies) as input; nothing here runs a sampler.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np
from scipy.special import gammaln, logsumexp

from .core import log_prior_rescale

__all__ = [
    "PriorOnK",
    "prior_uniform",
    "prior_poisson1",
    "SupCheck",
    "check_sup_property",
    "mc_standard_error",
    "BayesFactor",
    "bayes_factor_empty",
    "MarlikResult",
    "fstar_sequence",
    "fdagger_sequence",
    "bf_chain",
    "posterior_over_k",
    "hypothetical_ratio_table",
    "posterior_bounds",
]

NEG_INF = float("-inf")


def _binomln(k, h):
    return gammaln(k + 1) - gammaln(h + 1) - gammaln(k - h + 1)


# ---------------------------------------------------------------------------
# priors on k

@dataclass(frozen=True)
class PriorOnK:
    """Normalized prior over k = 1..kmax, kept in the log domain."""

    log_pi: np.ndarray
    family: str = "custom"

    def __post_init__(self):
        lp = np.asarray(self.log_pi, dtype=float)
        if lp.ndim != 1 or lp.size < 1:
            raise ValueError("log_pi must be a non-empty 1-D array")
        lp = lp - logsumexp(lp)
        object.__setattr__(self, "log_pi", lp)

    @property
    def kmax(self) -> int:
        return int(self.log_pi.shape[0])

    @property
    def pi(self) -> np.ndarray:
        return np.exp(self.log_pi)


def prior_uniform(kmax: int) -> PriorOnK:
    return PriorOnK(log_pi=np.zeros(kmax), family="uniform")


def prior_poisson1(kmax: int) -> PriorOnK:
    """Poisson(1) truncated to 1..kmax: pi(k) proportional to 1/k!."""
    ks = np.arange(1, kmax + 1)
    return PriorOnK(log_pi=-gammaln(ks + 1.0), family="poisson1")


class SupCheck(NamedTuple):
    holds: bool
    worst_rel_violation: float


def check_sup_property(prior: PriorOnK, tol: float = 1e-10) -> SupCheck:
    """Check pi(h) = sup_{k>h} pi(k) C(k,h) for every h < kmax.

    The truncated Poisson(1) prior satisfies this with equality (the sup is
    attained at k = h+1); it is the property that makes that prior's
    posterior bounds collapse so slowly.  Returns the worst relative
    deviation |sup - pi(h)| / pi(h) over h.
    """
    kmax = prior.kmax
    if kmax < 2:
        raise ValueError("need kmax >= 2")
    lp = prior.log_pi
    worst = 0.0
    for h in range(1, kmax):
        ks = np.arange(h + 1, kmax + 1)
        sup = float(np.max(lp[ks - 1] + _binomln(ks, h)))
        worst = max(worst, abs(math.expm1(sup - lp[h - 1])))
    return SupCheck(holds=bool(worst <= tol), worst_rel_violation=worst)


# ---------------------------------------------------------------------------
# Monte Carlo standard errors

def mc_standard_error(trace, batches: int = 20) -> float:
    """Batch-means standard error of the mean of a (possibly autocorrelated)
    scalar trace.  Splits the trace into ``batches`` contiguous batches of
    equal length (trailing remainder dropped) and uses the spread of the
    batch means."""
    y = np.asarray(trace, dtype=float)
    if batches < 2:
        raise ValueError("need at least 2 batches")
    m = y.shape[0] // batches
    if m < 2:
        raise ValueError("need at least 2 draws per batch")
    z = y[: batches * m].reshape(batches, m).mean(axis=1)
    return float(np.sqrt(np.sum((z - z.mean()) ** 2) / (batches * (batches - 1))))


# ---------------------------------------------------------------------------
# single-chain Bayes factor from the empty-top-component frequency

class BayesFactor(NamedTuple):
    log_bf: float
    se_log_bf: float
    p_top: float


def bayes_factor_empty(summary, alpha: float) -> BayesFactor:
    """Bayes factor f_k / f_{k-1} from the k-component chain alone.

    Within the k-component model, f_{k-1} = f_k * Pr[component k empty] /
    a(k, k-1), so the Bayes factor is a(k, k-1) over the posterior
    probability that the last component is empty.  The standard error is the
    delta-method image of the batch-means error on the visit frequency.
    """
    k, n = summary.k, summary.n
    if k < 2:
        raise ValueError("Bayes factor needs k >= 2")
    p = float(summary.visits_star[k - 1])
    if p >= 1.0:
        raise ValueError(
            "the top component was never empty in this chain; the Bayes"
            " factor is undefined here. Run longer chains or use the pooled"
            " sequence estimators."
        )
    se_p = float(summary.se_star[k - 1])
    log_bf = log_prior_rescale(k, k - 1, alpha, n) - math.log1p(-p)
    return BayesFactor(log_bf=log_bf, se_log_bf=se_p / (1.0 - p), p_top=p)


# ---------------------------------------------------------------------------
# pooled sequence estimators

@dataclass
class MarlikResult:
    """Estimated marginal likelihoods over k = 1..kmax.

    ``log_f_norm`` always sums (in probability) to 1; ``log_f_unnorm`` is
    only available when the sequence stayed anchored to an exact f_1.
    ``log_seq`` is the estimated restricted-sum sequence the method chains
    together (its absolute scale is meaningful only when ``anchored``).
    ``log_bf[k-2]`` is the estimated log f_k/f_{k-1}.
    """

    method: str
    kmax: int
    log_f_norm: np.ndarray
    log_seq: np.ndarray
    log_bf: np.ndarray
    anchored: bool
    log_f_unnorm: np.ndarray | None = None
    se_f_norm: np.ndarray | None = None
    se_log_bf: np.ndarray | None = None
    truncated_at: int | None = None
    diagnostics: list = field(default_factory=list)


def _check_summaries(summaries) -> tuple[int, int]:
    kmax = len(summaries)
    if kmax < 1:
        raise ValueError("need at least one chain summary")
    n = summaries[0].n
    for idx, s in enumerate(summaries, start=1):
        if s.k != idx:
            raise ValueError(f"summaries must cover k = 1..kmax in order; slot {idx} has k={s.k}")
        if s.n != n:
            raise ValueError("summaries disagree on n")
    return kmax, n


def _step_weights(kind, se_rows, s, kmax, eps=1e-12):
    # inverse-variance weights for pooling step s -> s+1 (1-based s);
    # the same weight must multiply a chain's numerator and denominator cells
    w = np.zeros(kmax)
    for k in range(s + 1, kmax + 1):
        row = se_rows[k - 1]
        v = 0.0
        if s - 1 < row.shape[0]:
            v += float(row[s - 1]) ** 2
        if s < row.shape[0]:
            v += float(row[s]) ** 2
        w[k - 1] = 1.0 / (v + eps * eps)
    return w


def _sequence_scan(rows, kind, alpha, n, kmax, log_f1, weights=None):
    """Chain the step ratios into a log sequence with degenerate-cell rules.

    rows[k-1] holds the visit frequencies of chain k (by top position t for
    ``kind='star'``, by occupied count h for ``kind='tilde'``).  Cells that
    were never visited are structural zeros, never smoothed.  A step whose
    pooled numerator and denominator both vanish truncates the sequence; a
    step with a vanishing denominator but live numerator restarts the anchor
    (the earlier, unreachably small part of the sequence is dropped), after
    which only normalized output is meaningful.
    """
    log_seq = np.full(kmax, NEG_INF)
    anchored = log_f1 is not None
    log_seq[0] = log_f1 if anchored else 0.0
    diags = []
    truncated_at = None

    for s in range(1, kmax):  # step s -> s+1, 1-based
        num = 0.0
        den = 0.0
        for k in range(s + 1, kmax + 1):
            row = rows[k - 1]
            w = 1.0 if weights is None else weights[s - 1][k - 1]
            if s < row.shape[0]:
                num += w * float(row[s])
            if s - 1 < row.shape[0]:
                c = float(row[s - 1])
                if kind == "tilde":
                    c *= k - s
                den += w * c
        if num > 0.0 and den > 0.0:
            step = math.log(num) - math.log(den) + log_prior_rescale(s + 1, s, alpha, n)
            if kind == "tilde":
                step += math.log(s + 1)
            if log_seq[s - 1] == NEG_INF:
                # gap: the previous term was structurally zero yet both
                # neighbors are visited; cannot happen, guard anyway
                log_seq[s] = 0.0
                anchored = False
                diags.append(f"re-anchored at position {s + 1} after a support gap")
            else:
                log_seq[s] = log_seq[s - 1] + step
        elif num > 0.0:
            # nothing below position s+1 was ever visited by the pooled
            # chains: the sequence up to s is negligible, restart the scale
            log_seq[: s] = NEG_INF
            log_seq[s] = 0.0
            if anchored or s == 1:
                diags.append(
                    f"positions <= {s} unvisited; sequence re-anchored at {s + 1}"
                )
            anchored = False
        elif den > 0.0:
            log_seq[s] = NEG_INF  # structural zero, keep scanning
        else:
            truncated_at = s + 1
            diags.append(f"no visits on either side of step {s}->{s + 1}; sequence truncated")
            break

    return log_seq, anchored, diags, truncated_at


def _mix_logf(log_seq, kind, alpha, n, kmax):
    log_f = np.full(kmax, NEG_INF)
    for k in range(1, kmax + 1):
        top = k if kind == "star" else min(k, n)
        terms = []
        for t in range(1, top + 1):
            if log_seq[t - 1] == NEG_INF:
                continue
            v = log_prior_rescale(k, t, alpha, n) + log_seq[t - 1]
            if kind == "tilde":
                v += float(_binomln(k, t))
            terms.append(v)
        if terms:
            log_f[k - 1] = float(logsumexp(terms))
    return log_f


def _bf_chain_logf(rows, alpha, n, kmax, log_f1):
    log_f = np.full(kmax, NEG_INF)
    log_f[0] = log_f1 if log_f1 is not None else 0.0
    for k in range(2, kmax + 1):
        p = float(rows[k - 1][k - 1])
        if p >= 1.0:
            raise ValueError(
                f"chain k={k} never saw its top component empty; the chained"
                " Bayes factor is undefined. Use the pooled sequence estimators."
            )
        log_f[k - 1] = (
            log_f[k - 2] + log_prior_rescale(k, k - 1, alpha, n) - math.log1p(-p)
        )
    return log_f


def _finish(method, kind, rows_fn, summaries, alpha, log_f1, weighting):
    kmax, n = _check_summaries(summaries)
    rows = [rows_fn(s) for s in summaries]
    weights = None
    if weighting == "invvar":
        se_rows = [
            (s.se_star if kind == "star" else s.se_tilde) for s in summaries
        ]
        weights = [_step_weights(kind, se_rows, s, kmax) for s in range(1, kmax)]
    elif weighting != "equal":
        raise ValueError(f"unknown weighting {weighting!r}")

    if method == "bf":
        log_f = _bf_chain_logf(rows, alpha, n, kmax, log_f1)
        log_seq = log_f.copy()
        anchored = log_f1 is not None
        truncated_at = None
        diags = []
    else:
        log_seq, anchored, diags, truncated_at = _sequence_scan(
            rows, kind, alpha, n, kmax, log_f1, weights
        )
        log_f = _mix_logf(log_seq, kind, alpha, n, kmax)

    if np.all(log_f == NEG_INF):
        raise ValueError("estimated marginal likelihoods are all zero")
    log_f_norm = log_f - logsumexp(log_f[np.isfinite(log_f)])
    with np.errstate(invalid="ignore"):
        log_bf = log_f[1:] - log_f[:-1]

    result = MarlikResult(
        method=method,
        kmax=kmax,
        log_f_norm=log_f_norm,
        log_seq=log_seq,
        log_bf=log_bf,
        anchored=anchored,
        log_f_unnorm=log_f.copy() if (anchored and log_f1 is not None) else None,
        truncated_at=truncated_at,
        diagnostics=diags,
    )
    _attach_batch_se(result, method, kind, summaries, alpha, n, kmax, weights)
    return result


def _attach_batch_se(result, method, kind, summaries, alpha, n, kmax, weights):
    """Standard errors by replicating the whole pipeline over batch-level
    visit frequencies.  Batches are independent across chains, so running the
    estimator on batch b of every chain gives independent replicates of the
    full nonlinear map; the spread of those replicates estimates the error of
    the pooled estimate."""
    mats = [
        (s.star_batches if kind == "star" else s.tilde_batches) for s in summaries
    ]
    if any(m is None for m in mats):
        return
    n_batches = mats[0].shape[0]
    if any(m.shape[0] != n_batches for m in mats):
        return
    reps_f = []
    reps_bf = []
    for b in range(n_batches):
        rows_b = [np.asarray(m[b], dtype=float) for m in mats]
        try:
            if method == "bf":
                log_f = _bf_chain_logf(rows_b, alpha, n, kmax, None)
            else:
                seq_b, _, _, _ = _sequence_scan(rows_b, kind, alpha, n, kmax, None, weights)
                log_f = _mix_logf(seq_b, kind, alpha, n, kmax)
            if np.all(log_f == NEG_INF):
                continue
        except (ValueError, FloatingPointError):
            continue
        log_f_norm = log_f - logsumexp(log_f[np.isfinite(log_f)])
        reps_f.append(np.exp(log_f_norm))
        with np.errstate(invalid="ignore"):
            reps_bf.append(log_f[1:] - log_f[:-1])
    if len(reps_f) < 2:
        result.diagnostics.append("too few usable batches for replication SEs")
        return
    arr = np.vstack(reps_f)
    b_used = arr.shape[0]
    result.se_f_norm = arr.std(axis=0, ddof=1) / math.sqrt(b_used)
    bf_arr = np.vstack(reps_bf)
    fin = np.isfinite(bf_arr)
    se_bf = np.full(bf_arr.shape[1], np.nan)
    for j in range(bf_arr.shape[1]):
        col = bf_arr[fin[:, j], j]
        if col.size >= 2:
            se_bf[j] = col.std(ddof=1) / math.sqrt(col.size)
    result.se_log_bf = se_bf
    if b_used < n_batches:
        result.diagnostics.append(
            f"replication SEs used {b_used} of {n_batches} batches"
        )


def fstar_sequence(summaries: Sequence, alpha: float, log_f1: float | None = None,
                   weighting: str = "equal") -> MarlikResult:
    """Marginal likelihoods from pooled top-occupied-position frequencies.

    Chains the ratio of successive restricted sums (allocations whose last
    occupied component is exactly t), pooling the visit frequencies of every
    chain with k > t.  ``log_f1`` anchors the absolute scale with the exact
    one-component marginal; without it only normalized output is reported.
    """
    return _finish("fstar", "star", lambda s: np.asarray(s.visits_star, dtype=float),
                   summaries, alpha, log_f1, weighting)


def fdagger_sequence(summaries: Sequence, alpha: float, log_f1: float | None = None,
                     weighting: str = "equal") -> MarlikResult:
    """Marginal likelihoods from pooled occupied-component-count frequencies.

    Same chaining idea as :func:`fstar_sequence` but over the number h of
    occupied components, whose restricted sums enter f_k with binomial
    multiplicities.  Typically the lower-variance choice.
    """
    return _finish("fdagger", "tilde", lambda s: np.asarray(s.visits_tilde, dtype=float),
                   summaries, alpha, log_f1, weighting)


def bf_chain(summaries: Sequence, alpha: float, log_f1: float | None = None) -> MarlikResult:
    """Marginal likelihoods by multiplying single-chain Bayes factors.

    Each step uses only chain k's empty-top-component frequency, so a single
    never-empty chain breaks the whole chain; kept as the baseline method.
    """
    return _finish("bf", "star", lambda s: np.asarray(s.visits_star, dtype=float),
                   summaries, alpha, log_f1, "equal")


def posterior_over_k(log_f, prior: PriorOnK) -> np.ndarray:
    """Posterior over k from (possibly unnormalized) log marginal likelihoods."""
    log_f = np.asarray(log_f, dtype=float)
    if log_f.shape != (prior.kmax,):
        raise ValueError("log_f length must equal the prior's kmax")
    lp = prior.log_pi + log_f
    finite = np.isfinite(lp)
    if not finite.any():
        raise ValueError("posterior over k is identically zero")
    out = np.zeros(prior.kmax)
    out[finite] = np.exp(lp[finite] - logsumexp(lp[finite]))
    return out


# ---------------------------------------------------------------------------
# analytic tables: no data, no sampling

def hypothetical_ratio_table(n: int, h0: int, alpha: float, ks, mode: str) -> np.ndarray:
    """How the marginal likelihood of k components would scale with k if the
    data supported exactly h0 occupied components.

    Under a point hypothesis f-dagger concentrated at h0, f_k is proportional
    to C(k, h0) a(k, h0).  Modes:

    * ``"with-binomial"``: C(k, h0) a(k, h0), normalized to 1 at k = h0;
    * ``"without-binomial"``: a(k, h0) alone (the prior-rescale decay);
    * ``"poi1-posterior"``: posterior ratio pi(k|x)/pi(h0|x) under the
      Poisson(1) prior on k, i.e. (h0!/k!) C(k, h0) a(k, h0).
    """
    ks = np.asarray(ks, dtype=int)
    if h0 < 1 or n < 1:
        raise ValueError("need h0 >= 1 and n >= 1")
    if h0 > n:
        raise ValueError("h0 cannot exceed n")
    if np.any(ks < h0):
        raise ValueError("all k must be >= h0")
    out = np.empty(ks.shape[0])
    for i, k in enumerate(ks):
        la = log_prior_rescale(int(k), h0, alpha, n)
        if mode == "with-binomial":
            v = _binomln(int(k), h0) + la
        elif mode == "without-binomial":
            v = la
        elif mode == "poi1-posterior":
            v = _binomln(int(k), h0) + la + gammaln(h0 + 1.0) - gammaln(k + 1.0)
        else:
            raise ValueError(f"unknown mode {mode!r}")
        out[i] = math.exp(float(v))
    return out


def posterior_bounds(n: int, prior: PriorOnK, alpha: float) -> np.ndarray:
    """Data-free upper bounds on the posterior probability of each k.

    The posterior of k is a ratio of two linear functions of the (unknown,
    nonnegative) restricted sums f-dagger_h, so its supremum over all data
    sits at a single h:

        bound(k) = max_h  pi(k) C(k,h) a(k,h) /
                          sum_{j>=h} pi(j) C(j,h) a(j,h),

    h running over 1..min(k, n).  No dataset of size n can push the
    posterior of k above bound(k).
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    kmax = prior.kmax
    lp = prior.log_pi
    hmax = min(kmax, n)
    log_num = np.full((kmax, hmax), NEG_INF)
    for k in range(1, kmax + 1):
        for h in range(1, min(k, n) + 1):
            log_num[k - 1, h - 1] = (
                lp[k - 1]
                + float(_binomln(k, h))
                + log_prior_rescale(k, h, alpha, n)
            )
    log_den = np.array(
        [logsumexp(log_num[h - 1 :, h - 1]) for h in range(1, hmax + 1)]
    )
    bounds = np.empty(kmax)
    for k in range(1, kmax + 1):
        hs = np.arange(min(k, n))
        bounds[k - 1] = math.exp(float(np.max(log_num[k - 1, hs] - log_den[hs])))
    return bounds
