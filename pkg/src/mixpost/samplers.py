"""Allocation samplers: fixed-k collapsed Gibbs, variable-k birth/death moves,
and random-walk Metropolis on the (tau, delta) hyperparameters.

Weights and component parameters stay integrated out everywhere, so a chain
state is just an allocation vector (plus, when sampled, the two
hyperparameters).  The chain runners are numba kernels over per-component
sufficient statistics; the single-step functions at the bottom are plain
Python references used by the correctness tests.

Determinism: every runner derives one RNG stream from (seed, k, tag), so
identical inputs reproduce traces bit for bit, and per-k chains are
independent of scheduling order.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
from numba import njit

from .core import AllocationState, ModelSpec, _ng_logmarg, log_prior_rescale

__all__ = [
    "ChainConfig",
    "ChainSummary",
    "VarkResult",
    "HyperState",
    "HyperRunResult",
    "HyperTable",
    "SuggestedHyper",
    "run_fixed_k_chain",
    "run_all_k_chains",
    "run_vark_chain",
    "run_vark_hyper_chain",
    "default_delta_upper",
    "hyper_median_table",
    "suggest_hyper",
    "full_conditional_logweights",
    "gibbs_sweep_fixed_k",
    "vark_sweep",
    "mh_update_hyper",
]


# ---------------------------------------------------------------------------
# configuration and results

@dataclass(frozen=True)
class ChainConfig:
    """Run-length and scheduling knobs shared by all chain runners.

    ``sweeps`` counts post-burn-in sweeps; every ``thin``-th one is kept.
    ``batches`` contiguous batches of kept sweeps feed the batch-means
    standard errors, so a run must be long enough to form them.
    """

    sweeps: int = 20000
    burnin: int = 1000
    thin: int = 1
    seed: int = 1
    scan: str = "systematic"  # or "random"
    batches: int = 20
    init: str = "single"  # "single" (everything in component 1) or "given"
    init_g: np.ndarray | None = None
    dim_moves: int = 5  # dimension-move proposals per sweep (variable-k only)

    def __post_init__(self):
        if self.sweeps < 1 or self.burnin < 0 or self.thin < 1:
            raise ValueError("need sweeps >= 1, burnin >= 0, thin >= 1")
        if self.batches < 2:
            raise ValueError("need at least 2 batches")
        if self.sweeps < self.batches * self.thin:
            raise ValueError(
                f"sweeps={self.sweeps} cannot form {self.batches} batches at"
                f" thin={self.thin}; increase sweeps"
            )
        if self.scan not in ("systematic", "random"):
            raise ValueError(f"unknown scan {self.scan!r}")
        if self.init not in ("single", "given"):
            raise ValueError(f"unknown init {self.init!r}")
        if self.init == "given" and self.init_g is None:
            raise ValueError("init='given' needs init_g")
        if self.dim_moves < 1:
            raise ValueError("dim_moves must be >= 1")

    @property
    def kept(self) -> int:
        return self.sweeps // self.thin


@dataclass
class ChainSummary:
    """Visit frequencies of one fixed-k chain.

    ``visits_star[t-1]`` estimates the posterior probability that the last
    occupied component sits at position t; ``visits_tilde[h-1]`` that exactly
    h components are occupied.  The ``*_batches`` matrices hold the same
    frequencies per batch of kept sweeps; standard errors come from their
    spread, and downstream estimators replicate themselves over batches to
    get standard errors of nonlinear maps.
    """

    k: int
    n: int
    kept: int
    visits_star: np.ndarray
    visits_tilde: np.ndarray
    se_star: np.ndarray
    se_tilde: np.ndarray
    star_batches: np.ndarray
    tilde_batches: np.ndarray
    pattern_trace: np.ndarray  # (kept, 2) int32 columns (h, t)
    final_g: np.ndarray
    config: ChainConfig
    g_trace: np.ndarray | None = None  # (kept, n) when recorded


@dataclass
class VarkResult:
    """Posterior-of-k estimate from a variable-k run."""

    kmax: int
    n: int
    kept: int
    posterior_k: np.ndarray
    se_k: np.ndarray
    k_batches: np.ndarray
    k_trace: np.ndarray
    accept: dict
    final_k: int
    final_g: np.ndarray
    config: ChainConfig


@dataclass(frozen=True)
class HyperState:
    """Current (tau, delta) with proposal step sizes on transformed scales.

    tau is proposed on the log scale; delta on the logit of delta/delta_upper
    so it never leaves (0, delta_upper).
    """

    tau: float
    delta: float
    delta_upper: float
    step_log_tau: float = 1.0
    step_logit_delta: float = 1.0

    def __post_init__(self):
        if not (self.tau > 0.0):
            raise ValueError("tau must be positive")
        if not (0.0 < self.delta < self.delta_upper):
            raise ValueError("delta must lie strictly inside (0, delta_upper)")
        if self.step_log_tau <= 0 or self.step_logit_delta <= 0:
            raise ValueError("step sizes must be positive")


@dataclass
class HyperRunResult:
    """Joint (k, tau, delta) draws from a variable-k run with hyper updates."""

    kmax: int
    n: int
    kept: int
    k_draws: np.ndarray
    tau_draws: np.ndarray
    delta_draws: np.ndarray
    delta_upper: float
    accept: dict
    final_steps: tuple
    config: ChainConfig


def _stream_seed(seed: int, k: int, tag: int = 0) -> int:
    h = seed & 0xFFFFFFFF
    h = (h * 1000003 + k) & 0xFFFFFFFF
    h = (h * 1000003 + tag) & 0xFFFFFFFF
    return int(h)


# ---------------------------------------------------------------------------
# numba kernels

@njit(cache=True, nogil=True)
def _refresh_stats(x, g, counts, sx, sxx, lmarg, k, mu, tau, gam, dlt):
    for j in range(k):
        counts[j] = 0
        sx[j] = 0.0
        sxx[j] = 0.0
    for i in range(x.shape[0]):
        j = g[i]
        counts[j] += 1
        sx[j] += x[i]
        sxx[j] += x[i] * x[i]
    for j in range(k):
        lmarg[j] = _ng_logmarg(counts[j], sx[j], sxx[j], mu, tau, gam, dlt)


@njit(cache=True, nogil=True)
def _gibbs_update_obs(x, g, counts, sx, sxx, lmarg, k, i, alpha, mu, tau, gam, dlt, w, pred):
    xi = x[i]
    j0 = g[i]
    counts[j0] -= 1
    sx[j0] -= xi
    sxx[j0] -= xi * xi
    if counts[j0] == 0:
        sx[j0] = 0.0
        sxx[j0] = 0.0
    lmarg[j0] = _ng_logmarg(counts[j0], sx[j0], sxx[j0], mu, tau, gam, dlt)
    mx = -1.0e300
    for j in range(k):
        pj = _ng_logmarg(counts[j] + 1, sx[j] + xi, sxx[j] + xi * xi, mu, tau, gam, dlt)
        pred[j] = pj
        wj = math.log(alpha + counts[j]) + pj - lmarg[j]
        w[j] = wj
        if wj > mx:
            mx = wj
    tot = 0.0
    for j in range(k):
        wj = math.exp(w[j] - mx)
        w[j] = wj
        tot += wj
    u = np.random.random() * tot
    jn = k - 1
    acc = 0.0
    for j in range(k):
        acc += w[j]
        if u < acc:
            jn = j
            break
    g[i] = jn
    counts[jn] += 1
    sx[jn] += xi
    sxx[jn] += xi * xi
    lmarg[jn] = pred[jn]


@njit(cache=True, nogil=True)
def _log_a_next(t, alpha, n):
    # log a(t+1, t): prior rescale of one extra component
    return (
        math.lgamma((t + 1) * alpha)
        - math.lgamma((t + 1) * alpha + n)
        + math.lgamma(t * alpha + n)
        - math.lgamma(t * alpha)
    )


@njit(cache=True, nogil=True)
def _gibbs_chain(x, k, alpha, mu, tau, gam, dlt, g0, kept, thin, burnin, seed, random_scan, record_g):
    np.random.seed(seed)
    n = x.shape[0]
    g = g0.copy()
    counts = np.zeros(k, np.int64)
    sx = np.zeros(k)
    sxx = np.zeros(k)
    lmarg = np.zeros(k)
    _refresh_stats(x, g, counts, sx, sxx, lmarg, k, mu, tau, gam, dlt)
    w = np.empty(k)
    pred = np.empty(k)
    h_tr = np.empty(kept, np.int32)
    t_tr = np.empty(kept, np.int32)
    g_rows = kept if record_g else 0
    g_tr = np.empty((g_rows, n), np.int32)
    total = burnin + kept * thin
    idx = 0
    for s in range(total):
        for ii in range(n):
            i = np.random.randint(n) if random_scan else ii
            _gibbs_update_obs(x, g, counts, sx, sxx, lmarg, k, i, alpha, mu, tau, gam, dlt, w, pred)
        if (s + 1) % 4096 == 0:
            _refresh_stats(x, g, counts, sx, sxx, lmarg, k, mu, tau, gam, dlt)
        if s >= burnin and (s - burnin) % thin == thin - 1:
            hh = 0
            tt = 0
            for j in range(k):
                if counts[j] > 0:
                    hh += 1
                    tt = j + 1
            h_tr[idx] = hh
            t_tr[idx] = tt
            if record_g:
                for i in range(n):
                    g_tr[idx, i] = g[i]
            idx += 1
    return h_tr, t_tr, g, g_tr


@njit(cache=True, nogil=True)
def _count_empty(counts, k):
    e = 0
    for j in range(k):
        if counts[j] == 0:
            e += 1
    return e


@njit(cache=True, nogil=True)
def _insert_empty(g, counts, sx, sxx, lmarg, k, jpos):
    for j in range(k, jpos, -1):
        counts[j] = counts[j - 1]
        sx[j] = sx[j - 1]
        sxx[j] = sxx[j - 1]
        lmarg[j] = lmarg[j - 1]
    counts[jpos] = 0
    sx[jpos] = 0.0
    sxx[jpos] = 0.0
    lmarg[jpos] = 0.0
    for i in range(g.shape[0]):
        if g[i] >= jpos:
            g[i] += 1


@njit(cache=True, nogil=True)
def _delete_slot(g, counts, sx, sxx, lmarg, k, jpos):
    for j in range(jpos, k - 1):
        counts[j] = counts[j + 1]
        sx[j] = sx[j + 1]
        sxx[j] = sxx[j + 1]
        lmarg[j] = lmarg[j + 1]
    counts[k - 1] = 0
    sx[k - 1] = 0.0
    sxx[k - 1] = 0.0
    lmarg[k - 1] = 0.0
    for i in range(g.shape[0]):
        if g[i] > jpos:
            g[i] -= 1


@njit(cache=True, nogil=True)
def _occupied_loglik(counts, sx, sxx, k, mu, tau, gam, dlt):
    tot = 0.0
    for j in range(k):
        if counts[j] > 0:
            tot += _ng_logmarg(counts[j], sx[j], sxx[j], mu, tau, gam, dlt)
    return tot


@njit(cache=True, nogil=True)
def _vark_chain(
    x, kmax, alpha, mu, tau0, gam, dlt0, log_pi, k0, g0,
    kept, thin, burnin, seed, random_scan, dim_moves,
    sample_hyper, delta_upper, step_t0, step_d0, adapt_interval,
):
    np.random.seed(seed)
    n = x.shape[0]
    g = g0.copy()
    counts = np.zeros(kmax, np.int64)
    sx = np.zeros(kmax)
    sxx = np.zeros(kmax)
    lmarg = np.zeros(kmax)
    scratch = np.zeros(kmax)
    w = np.empty(kmax)
    pred = np.empty(kmax)
    tau = tau0
    dlt = dlt0
    k = k0
    _refresh_stats(x, g, counts, sx, sxx, lmarg, k, mu, tau, gam, dlt)

    k_tr = np.empty(kept, np.int32)
    tau_tr = np.empty(kept)
    dlt_tr = np.empty(kept)

    # move statistics: proposed/accepted after burn-in
    birth_prop = 0
    birth_acc = 0
    death_prop = 0
    death_acc = 0
    tprop = 0
    tacc = 0
    dprop = 0
    dacc = 0
    # adaptation windows (burn-in only)
    wt_prop = 0
    wt_acc = 0
    wd_prop = 0
    wd_acc = 0
    step_t = step_t0
    step_d = step_d0

    total = burnin + kept * thin
    idx = 0
    for s in range(total):
        for ii in range(n):
            i = np.random.randint(n) if random_scan else ii
            _gibbs_update_obs(x, g, counts, sx, sxx, lmarg, k, i, alpha, mu, tau, gam, dlt, w, pred)

        for _ in range(dim_moves):
            if np.random.random() < 0.5:
                # birth of an empty component at a uniform position; its
                # reverse is the uniform choice among the k+1 slots' empties
                if k < kmax:
                    e = _count_empty(counts, k)
                    logr = (
                        log_pi[k]
                        - log_pi[k - 1]
                        + _log_a_next(k, alpha, n)
                        + math.log((k + 1.0) / (e + 1.0))
                    )
                    if s >= burnin:
                        birth_prop += 1
                    if math.log(np.random.random()) < logr:
                        jpos = np.random.randint(k + 1)
                        _insert_empty(g, counts, sx, sxx, lmarg, k, jpos)
                        k += 1
                        if s >= burnin:
                            birth_acc += 1
            else:
                # death of a uniformly chosen empty component
                if k > 1:
                    e = _count_empty(counts, k)
                    if e > 0:
                        if s >= burnin:
                            death_prop += 1
                        logr = (
                            log_pi[k - 2]
                            - log_pi[k - 1]
                            - _log_a_next(k - 1, alpha, n)
                            + math.log(e / (k * 1.0))
                        )
                        if math.log(np.random.random()) < logr:
                            which = np.random.randint(e)
                            jpos = -1
                            cnt = 0
                            for j in range(k):
                                if counts[j] == 0:
                                    if cnt == which:
                                        jpos = j
                                        break
                                    cnt += 1
                            _delete_slot(g, counts, sx, sxx, lmarg, k, jpos)
                            k -= 1
                            if s >= burnin:
                                death_acc += 1

        if sample_hyper:
            # tau: Gaussian walk on log tau, prior density (1+tau)^-2
            ll0 = _occupied_loglik(counts, sx, sxx, k, mu, tau, gam, dlt)
            theta = math.log(tau)
            thetap = theta + step_t * np.random.normal()
            taup = math.exp(thetap)
            llp = _occupied_loglik(counts, sx, sxx, k, mu, taup, gam, dlt)
            logacc = (
                llp - ll0
                - 2.0 * (math.log1p(taup) - math.log1p(tau))
                + (thetap - theta)
            )
            if s < burnin:
                wt_prop += 1
            else:
                tprop += 1
            if math.log(np.random.random()) < logacc:
                tau = taup
                ll0 = llp
                if s < burnin:
                    wt_acc += 1
                else:
                    tacc += 1
                for j in range(k):
                    lmarg[j] = _ng_logmarg(counts[j], sx[j], sxx[j], mu, tau, gam, dlt)

            # delta: Gaussian walk on logit(delta/delta_upper), uniform prior
            wcur = math.log(dlt / (delta_upper - dlt))
            wprop = wcur + step_d * np.random.normal()
            dltp = delta_upper / (1.0 + math.exp(-wprop))
            if dltp <= 0.0 or dltp >= delta_upper:
                dltp = dlt  # saturated transform; reject via logacc = -inf
                logacc = -1.0e300
            else:
                llp = _occupied_loglik(counts, sx, sxx, k, mu, tau, gam, dltp)
                logacc = (
                    llp - ll0
                    + math.log(dltp) + math.log1p(-dltp / delta_upper)
                    - math.log(dlt) - math.log1p(-dlt / delta_upper)
                )
            if s < burnin:
                wd_prop += 1
            else:
                dprop += 1
            if math.log(np.random.random()) < logacc:
                dlt = dltp
                if s < burnin:
                    wd_acc += 1
                else:
                    dacc += 1
                for j in range(k):
                    lmarg[j] = _ng_logmarg(counts[j], sx[j], sxx[j], mu, tau, gam, dlt)

            # tune steps toward acceptance in [0.2, 0.4]; frozen after burn-in
            if s < burnin:
                if wt_prop >= adapt_interval:
                    rate = wt_acc / wt_prop
                    if rate > 0.4:
                        step_t *= 1.4
                    elif rate < 0.2:
                        step_t /= 1.4
                    if step_t < 1e-4:
                        step_t = 1e-4
                    if step_t > 20.0:
                        step_t = 20.0
                    wt_prop = 0
                    wt_acc = 0
                if wd_prop >= adapt_interval:
                    rate = wd_acc / wd_prop
                    if rate > 0.4:
                        step_d *= 1.4
                    elif rate < 0.2:
                        step_d /= 1.4
                    if step_d < 1e-4:
                        step_d = 1e-4
                    if step_d > 20.0:
                        step_d = 20.0
                    wd_prop = 0
                    wd_acc = 0

        if (s + 1) % 4096 == 0:
            _refresh_stats(x, g, counts, sx, sxx, lmarg, k, mu, tau, gam, dlt)
        if s >= burnin and (s - burnin) % thin == thin - 1:
            k_tr[idx] = k
            tau_tr[idx] = tau
            dlt_tr[idx] = dlt
            idx += 1

    stats = np.empty(8, np.int64)
    stats[0] = birth_prop
    stats[1] = birth_acc
    stats[2] = death_prop
    stats[3] = death_acc
    stats[4] = tprop
    stats[5] = tacc
    stats[6] = dprop
    stats[7] = dacc
    return k_tr, tau_tr, dlt_tr, g, k, stats, step_t, step_d


# ---------------------------------------------------------------------------
# chain runners

def _batch_freqs(values, kept, n_bins, batches):
    """Per-batch occupancy frequencies plus overall frequency and batch-means
    standard errors.  ``values`` holds 1-based bin labels per kept sweep."""
    m = kept // batches
    overall = np.bincount(values, minlength=n_bins + 1)[1:] / kept
    if m < 1:
        raise ValueError("not enough kept sweeps to form batches")
    used = values[: batches * m].reshape(batches, m)
    mat = np.empty((batches, n_bins))
    for b in range(batches):
        mat[b] = np.bincount(used[b], minlength=n_bins + 1)[1:] / m
    se = np.sqrt(np.sum((mat - mat.mean(axis=0)) ** 2, axis=0) / (batches * (batches - 1)))
    return overall, mat, se


def _resolve_init_g(config: ChainConfig, n: int, k: int) -> np.ndarray:
    if config.init == "single":
        return np.zeros(n, np.int64)
    g = np.asarray(config.init_g, dtype=np.int64)
    if g.shape != (n,):
        raise ValueError("init_g has the wrong length")
    if g.size and (g.min() < 0 or g.max() >= k):
        raise ValueError("init_g labels out of range for this k")
    return g.copy()


def run_fixed_k_chain(data, spec: ModelSpec, config: ChainConfig, record_g: bool = False) -> ChainSummary:
    """Systematic-scan collapsed Gibbs chain at fixed k.

    Returns occupancy-pattern visit frequencies with batch-means standard
    errors; these frequencies are everything the marginal-likelihood
    estimators need from the chain.  ``record_g`` additionally stores the
    kept allocation vectors (tests compare them against enumeration).
    """
    x = np.ascontiguousarray(np.asarray(data, dtype=float))
    n = x.shape[0]
    k = spec.k
    g0 = _resolve_init_g(config, n, k)
    seed = _stream_seed(config.seed, k, tag=1)
    h_tr, t_tr, g_final, g_tr = _gibbs_chain(
        x, k, spec.alpha, spec.mu, spec.tau, spec.gamma, spec.delta,
        g0, config.kept, config.thin, config.burnin, seed,
        config.scan == "random", record_g,
    )
    visits_star, star_batches, se_star = _batch_freqs(t_tr, config.kept, k, config.batches)
    hmax = min(k, n)
    visits_tilde, tilde_batches, se_tilde = _batch_freqs(h_tr, config.kept, hmax, config.batches)
    return ChainSummary(
        k=k,
        n=n,
        kept=config.kept,
        visits_star=visits_star,
        visits_tilde=visits_tilde,
        se_star=se_star,
        se_tilde=se_tilde,
        star_batches=star_batches,
        tilde_batches=tilde_batches,
        pattern_trace=np.stack([h_tr, t_tr], axis=1),
        final_g=np.asarray(g_final, dtype=np.int64),
        config=config,
        g_trace=np.asarray(g_tr) if record_g else None,
    )


def run_all_k_chains(
    data,
    spec: ModelSpec,
    kmax: int,
    config: ChainConfig,
    warm_start: bool = True,
    parallel: int = 1,
    progress=None,
) -> list[ChainSummary]:
    """Fixed-k chains for every k = 1..kmax.

    With ``warm_start`` each chain starts from the final allocation of the
    previous one (the chains then run sequentially); otherwise all chains
    start from the single-component allocation and can run on a thread pool
    (the kernels drop the GIL).  Results are deterministic either way: each
    chain has its own (seed, k) stream, and the returned list is ordered by
    k regardless of completion order.  ``progress``, when given, is called
    with each k as its chain finishes.
    """
    if kmax < 1:
        raise ValueError("kmax must be >= 1")
    if warm_start:
        out = []
        prev_g = None
        for k in range(1, kmax + 1):
            cfg = config
            if prev_g is not None:
                cfg = replace(config, init="given", init_g=prev_g)
            summary = run_fixed_k_chain(data, spec.with_k(k), cfg)
            out.append(summary)
            prev_g = summary.final_g
            if progress is not None:
                progress(k)
        return out
    if parallel <= 1:
        out = []
        for k in range(1, kmax + 1):
            out.append(run_fixed_k_chain(data, spec.with_k(k), config))
            if progress is not None:
                progress(k)
        return out
    from concurrent.futures import ThreadPoolExecutor, as_completed

    with ThreadPoolExecutor(max_workers=parallel) as pool:
        futs = {
            pool.submit(run_fixed_k_chain, data, spec.with_k(k), config): k
            for k in range(1, kmax + 1)
        }
        done = {}
        for fut in as_completed(futs):
            k = futs[fut]
            done[k] = fut.result()
            if progress is not None:
                progress(k)
        return [done[k] for k in range(1, kmax + 1)]


def _prepare_vark(data, spec, prior, config, k0=None):
    x = np.ascontiguousarray(np.asarray(data, dtype=float))
    n = x.shape[0]
    kmax = prior.kmax
    if k0 is None:
        k0 = 1
    if not (1 <= k0 <= kmax):
        raise ValueError("initial k out of range")
    g0 = _resolve_init_g(config, n, k0)
    return x, n, kmax, int(k0), g0


def run_vark_chain(
    data,
    spec: ModelSpec,
    prior,
    config: ChainConfig,
    k0: int | None = None,
) -> VarkResult:
    """Variable-k chain: Gibbs scans plus birth/death of empty components.

    The dimension moves only ever create or delete empty components, so the
    data marginal is untouched and the acceptance ratio is the prior-rescale
    factor times the prior-on-k ratio and the empty-count proposal
    correction.  The posterior over k is read off the visit frequencies.
    """
    x, n, kmax, k0, g0 = _prepare_vark(data, spec, prior, config, k0)
    seed = _stream_seed(config.seed, 0, tag=2)
    k_tr, _, _, g_final, k_final, stats, _, _ = _vark_chain(
        x, kmax, spec.alpha, spec.mu, spec.tau, spec.gamma, spec.delta,
        np.asarray(prior.log_pi, dtype=float), k0, g0,
        config.kept, config.thin, config.burnin, seed,
        config.scan == "random", config.dim_moves,
        False, 1.0, 1.0, 1.0, 50,
    )
    posterior_k, k_batches, se_k = _batch_freqs(k_tr, config.kept, kmax, config.batches)
    accept = {
        "birth": (int(stats[0]), int(stats[1])),
        "death": (int(stats[2]), int(stats[3])),
    }
    return VarkResult(
        kmax=kmax,
        n=n,
        kept=config.kept,
        posterior_k=posterior_k,
        se_k=se_k,
        k_batches=k_batches,
        k_trace=k_tr,
        accept=accept,
        final_k=int(k_final),
        final_g=np.asarray(g_final, dtype=np.int64),
        config=config,
    )


def default_delta_upper(data, gamma: float) -> float:
    """Upper end of the uniform prior on delta: (gamma - 1) times the sample
    variance, which makes the prior expectation of a component variance equal
    half the sample variance.  Needs gamma > 1."""
    if gamma <= 1.0:
        raise ValueError("the uniform-delta prior needs gamma > 1")
    v = float(np.var(np.asarray(data, dtype=float), ddof=1))
    if not (v > 0.0):
        raise ValueError("data variance must be positive")
    return (gamma - 1.0) * v


def run_vark_hyper_chain(
    data,
    spec: ModelSpec,
    prior,
    config: ChainConfig,
    hyper: HyperState | None = None,
    k0: int | None = None,
) -> HyperRunResult:
    """Variable-k chain with random-walk Metropolis on (tau, delta).

    ``spec.tau`` / ``spec.delta`` seed the chain when no explicit
    :class:`HyperState` is given; ``delta_upper`` then defaults to
    (gamma - 1) s^2.  Step sizes adapt toward acceptance rates in [0.2, 0.4]
    during burn-in and are frozen afterwards.
    """
    x, n, kmax, k0, g0 = _prepare_vark(data, spec, prior, config, k0)
    if hyper is None:
        du = default_delta_upper(x, spec.gamma)
        d0 = min(max(spec.delta, du * 1e-6), du * (1 - 1e-6))
        hyper = HyperState(tau=spec.tau, delta=d0, delta_upper=du)
    seed = _stream_seed(config.seed, 0, tag=3)
    k_tr, tau_tr, dlt_tr, _, _, stats, step_t, step_d = _vark_chain(
        x, kmax, spec.alpha, spec.mu, hyper.tau, spec.gamma, hyper.delta,
        np.asarray(prior.log_pi, dtype=float), k0, g0,
        config.kept, config.thin, config.burnin, seed,
        config.scan == "random", config.dim_moves,
        True, hyper.delta_upper, hyper.step_log_tau, hyper.step_logit_delta, 50,
    )
    accept = {
        "birth": (int(stats[0]), int(stats[1])),
        "death": (int(stats[2]), int(stats[3])),
        "tau": (int(stats[4]), int(stats[5])),
        "delta": (int(stats[6]), int(stats[7])),
    }
    return HyperRunResult(
        kmax=kmax,
        n=n,
        kept=config.kept,
        k_draws=k_tr,
        tau_draws=tau_tr,
        delta_draws=dlt_tr,
        delta_upper=hyper.delta_upper,
        accept=accept,
        final_steps=(float(step_t), float(step_d)),
        config=config,
    )


# ---------------------------------------------------------------------------
# hyperparameter summaries

@dataclass
class HyperTable:
    """Per-k quantiles of the (tau, delta) draws.

    ``ks`` lists the values of k that had at least ``min_draws`` draws;
    anything thinner is excluded and reported, not extrapolated.  Quantile
    matrices are (len(ks), len(quantiles)); 0.5 is always among the
    quantiles, so medians are available via ``tau_med`` / ``delta_med``.
    """

    ks: np.ndarray
    counts: np.ndarray
    quantiles: tuple
    tau_q: np.ndarray
    delta_q: np.ndarray
    min_draws: int
    excluded: list
    k_draws: np.ndarray = field(repr=False, default=None)
    tau_draws: np.ndarray = field(repr=False, default=None)
    delta_draws: np.ndarray = field(repr=False, default=None)

    @property
    def _med_col(self) -> int:
        return self.quantiles.index(0.5)

    @property
    def tau_med(self) -> np.ndarray:
        return self.tau_q[:, self._med_col]

    @property
    def delta_med(self) -> np.ndarray:
        return self.delta_q[:, self._med_col]


@dataclass(frozen=True)
class SuggestedHyper:
    tau: float
    delta: float
    k_cutoff: int
    leveled: bool


def hyper_median_table(
    k_draws,
    tau_draws,
    delta_draws,
    min_draws: int = 100,
    quantiles: tuple = (0.005, 0.25, 0.5, 0.75, 0.995),
) -> HyperTable:
    k_draws = np.asarray(k_draws)
    tau_draws = np.asarray(tau_draws, dtype=float)
    delta_draws = np.asarray(delta_draws, dtype=float)
    if not (k_draws.shape == tau_draws.shape == delta_draws.shape):
        raise ValueError("draw arrays must have equal length")
    q = tuple(sorted(set(float(v) for v in quantiles) | {0.5}))
    if q[0] < 0.0 or q[-1] > 1.0:
        raise ValueError("quantiles must lie in [0, 1]")
    ks, counts, t_rows, d_rows = [], [], [], []
    excluded = []
    for k in np.unique(k_draws):
        mask = k_draws == k
        cnt = int(mask.sum())
        if cnt < min_draws:
            excluded.append((int(k), cnt))
            continue
        ks.append(int(k))
        counts.append(cnt)
        t_rows.append(np.quantile(tau_draws[mask], q))
        d_rows.append(np.quantile(delta_draws[mask], q))
    return HyperTable(
        ks=np.asarray(ks, dtype=int),
        counts=np.asarray(counts, dtype=int),
        quantiles=q,
        tau_q=np.asarray(t_rows, dtype=float).reshape(len(ks), len(q)),
        delta_q=np.asarray(d_rows, dtype=float).reshape(len(ks), len(q)),
        min_draws=min_draws,
        excluded=excluded,
        k_draws=k_draws,
        tau_draws=tau_draws,
        delta_draws=delta_draws,
    )


def suggest_hyper(table: HyperTable, rel_tol: float = 0.25) -> SuggestedHyper:
    """Level-off heuristic for fixed (tau, delta).

    Scans the per-k medians for the first k whose tau and delta medians both
    change by less than ``rel_tol`` (relative) to k+1, then reports the
    medians of all draws at or beyond that k.  The cutoff is a convention;
    inspect the full table when it matters.
    """
    ks = table.ks
    if ks.size < 2:
        raise ValueError("need medians for at least two values of k")
    cutoff = None
    for i in range(ks.size - 1):
        if ks[i + 1] != ks[i] + 1:
            continue
        dt = abs(table.tau_med[i + 1] - table.tau_med[i]) <= rel_tol * abs(table.tau_med[i])
        dd = abs(table.delta_med[i + 1] - table.delta_med[i]) <= rel_tol * abs(table.delta_med[i])
        if dt and dd:
            cutoff = int(ks[i])
            break
    leveled = cutoff is not None
    if cutoff is None:
        cutoff = int(ks[-1])
    mask = table.k_draws >= cutoff
    return SuggestedHyper(
        tau=float(np.median(table.tau_draws[mask])),
        delta=float(np.median(table.delta_draws[mask])),
        k_cutoff=cutoff,
        leveled=leveled,
    )


# ---------------------------------------------------------------------------
# single-step reference implementations (tests and small experiments)

def full_conditional_logweights(state: AllocationState, i: int, spec: ModelSpec) -> np.ndarray:
    """Unnormalized log full-conditional of observation i's label.

    Proportional, as a function of the label, to prior(allocation) times
    marginal(data | allocation); the brute-force comparison test relies on
    exactly that.
    """
    xi = float(state.data[i])
    j0 = int(state.g[i])
    k = state.k
    w = np.empty(k)
    for j in range(k):
        c = int(state.counts[j])
        s = float(state.sumx[j])
        ss = float(state.sumxx[j])
        if j == j0:
            c -= 1
            s -= xi
            ss -= xi * xi
            if c == 0:
                s = 0.0
                ss = 0.0
        with_x = _ng_logmarg(c + 1, s + xi, ss + xi * xi, spec.mu, spec.tau, spec.gamma, spec.delta)
        without = _ng_logmarg(c, s, ss, spec.mu, spec.tau, spec.gamma, spec.delta)
        w[j] = math.log(spec.alpha + c) + with_x - without
    return w


def gibbs_sweep_fixed_k(state: AllocationState, spec: ModelSpec, rng: np.random.Generator) -> None:
    """One systematic scan of the collapsed Gibbs sampler, in place."""
    for i in range(state.n):
        w = full_conditional_logweights(state, i, spec)
        p = np.exp(w - w.max())
        p /= p.sum()
        state.move(i, int(rng.choice(state.k, p=p)))


def vark_sweep(
    state: AllocationState,
    spec: ModelSpec,
    prior,
    rng: np.random.Generator,
    dim_moves: int = 1,
) -> AllocationState:
    """One variable-k sweep: a Gibbs scan then empty-component birth/death
    proposals.  Returns the (possibly resized) state."""
    k = state.k
    kmax = prior.kmax
    n = state.n
    gibbs_sweep_fixed_k(state, spec.with_k(k), rng)
    lp = prior.log_pi
    for _ in range(dim_moves):
        k = state.k
        if rng.random() < 0.5:
            if k < kmax:
                e = int(np.sum(state.counts == 0))
                logr = (
                    lp[k] - lp[k - 1]
                    + log_prior_rescale(k + 1, k, spec.alpha, n)
                    + math.log((k + 1.0) / (e + 1.0))
                )
                if math.log(rng.random()) < logr:
                    jpos = int(rng.integers(k + 1))
                    g = state.g + (state.g >= jpos)
                    state = AllocationState.from_allocation(state.data, g, k + 1)
        else:
            if k > 1:
                e = int(np.sum(state.counts == 0))
                if e > 0:
                    logr = (
                        lp[k - 2] - lp[k - 1]
                        - log_prior_rescale(k, k - 1, spec.alpha, n)
                        + math.log(e / float(k))
                    )
                    if math.log(rng.random()) < logr:
                        empties = np.flatnonzero(state.counts == 0)
                        jpos = int(empties[rng.integers(e)])
                        g = state.g - (state.g > jpos)
                        state = AllocationState.from_allocation(state.data, g, k - 1)
    return state


def mh_update_hyper(
    state: AllocationState,
    hyper: HyperState,
    spec: ModelSpec,
    rng: np.random.Generator,
) -> tuple[HyperState, bool, bool]:
    """One Metropolis update of tau then delta given the allocation.

    tau moves on the log scale against the (1+tau)^-2 prior; delta moves on
    the logit of delta/delta_upper against its uniform prior; both acceptance
    ratios carry the change-of-variable Jacobians.  Step sizes are left
    untouched (adaptation belongs to the chain runner's burn-in).
    """
    mu, gam = spec.mu, spec.gamma

    def loglik(tau, dlt):
        tot = 0.0
        for j in range(state.k):
            c = int(state.counts[j])
            if c > 0:
                tot += _ng_logmarg(c, float(state.sumx[j]), float(state.sumxx[j]), mu, tau, gam, dlt)
        return tot

    tau, dlt = hyper.tau, hyper.delta
    du = hyper.delta_upper

    theta = math.log(tau)
    thetap = theta + hyper.step_log_tau * rng.standard_normal()
    taup = math.exp(thetap)
    logacc = (
        loglik(taup, dlt) - loglik(tau, dlt)
        - 2.0 * (math.log1p(taup) - math.log1p(tau))
        + (thetap - theta)
    )
    acc_tau = math.log(rng.random()) < logacc
    if acc_tau:
        tau = taup

    wcur = math.log(dlt / (du - dlt))
    wprop = wcur + hyper.step_logit_delta * rng.standard_normal()
    dltp = du / (1.0 + math.exp(-wprop))
    acc_delta = False
    if 0.0 < dltp < du:
        logacc = (
            loglik(tau, dltp) - loglik(tau, dlt)
            + math.log(dltp) + math.log1p(-dltp / du)
            - math.log(dlt) - math.log1p(-dlt / du)
        )
        acc_delta = math.log(rng.random()) < logacc
        if acc_delta:
            dlt = dltp

    return replace(hyper, tau=tau, delta=dlt), bool(acc_tau), bool(acc_delta)
