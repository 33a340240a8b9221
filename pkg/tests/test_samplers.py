"""Sampler tests: exactness of single moves against brute-force joints, and
long-run visit frequencies against exhaustive enumeration.

Every stochastic assertion runs at a frozen seed with a tolerance calibrated
to several times the observed deviation, so failures mean drift, not luck.
"""

import math
from collections import Counter

import numpy as np
import pytest
from scipy.special import logsumexp

from mixpost import (
    AllocationState,
    ChainConfig,
    HyperState,
    ModelSpec,
    default_delta_upper,
    enumerate_exact,
    exact_posterior_k,
    full_conditional_logweights,
    gibbs_sweep_fixed_k,
    hyper_median_table,
    log_joint,
    log_prior_rescale,
    mh_update_hyper,
    prior_poisson1,
    prior_uniform,
    run_all_k_chains,
    run_fixed_k_chain,
    run_vark_chain,
    run_vark_hyper_chain,
    suggest_hyper,
    toy_data,
    vark_sweep,
)
from mixpost.core import log_component_marginal
from mixpost.samplers import _stream_seed

SPEC = ModelSpec(k=2, alpha=1.0, mu=0.0, tau=1.0, gamma=2.0, delta=1.0)
DATA4 = np.array([-1.0, -0.6, 0.7, 1.1])


class TestChainConfig:
    def test_defaults_are_consistent(self):
        cfg = ChainConfig()
        assert cfg.kept == cfg.sweeps // cfg.thin

    def test_rejects_too_few_sweeps_for_batches(self):
        with pytest.raises(ValueError):
            ChainConfig(sweeps=30, thin=2, batches=20)

    def test_rejects_unknown_scan(self):
        with pytest.raises(ValueError):
            ChainConfig(scan="zigzag")

    def test_rejects_given_init_without_allocation(self):
        with pytest.raises(ValueError):
            ChainConfig(init="given")

    def test_rejects_single_batch(self):
        with pytest.raises(ValueError):
            ChainConfig(batches=1)

    def test_rejects_zero_dim_moves(self):
        with pytest.raises(ValueError):
            ChainConfig(dim_moves=0)


class TestFullConditional:
    def test_matches_brute_force_joint_differences(self):
        data = toy_data("n5")
        rng = np.random.default_rng(2)
        for k in (2, 3):
            spec = SPEC.with_k(k)
            for _ in range(20):
                g = rng.integers(k, size=data.shape[0])
                state = AllocationState.from_allocation(data, g, k)
                base = log_joint(state, spec)
                for i in range(state.n):
                    w = full_conditional_logweights(state, i, spec)
                    for j in range(k):
                        other = AllocationState.from_allocation(data, g, k)
                        other.move(i, j)
                        diff = log_joint(other, spec) - base
                        assert w[j] - w[g[i]] == pytest.approx(diff, abs=1e-10)


class TestBirthMoveTarget:
    def test_empty_insertion_changes_joint_by_rescale_constant(self):
        # inserting an empty slot must change the joint by exactly
        # a(k+1, k); the birth/death acceptance ratio is built on this
        data = toy_data("n6")
        n = data.shape[0]
        rng = np.random.default_rng(3)
        for k in (1, 2, 3):
            spec = SPEC.with_k(k)
            for _ in range(10):
                g = rng.integers(k, size=n)
                state = AllocationState.from_allocation(data, g, k)
                jpos = int(rng.integers(k + 1))
                gplus = g + (g >= jpos)
                bigger = AllocationState.from_allocation(data, gplus, k + 1)
                lhs = log_joint(bigger, spec.with_k(k + 1)) - log_joint(state, spec)
                rhs = log_prior_rescale(k + 1, k, spec.alpha, n)
                assert lhs == pytest.approx(rhs, abs=1e-12)


class TestFixedKChain:
    def test_k1_chain_is_degenerate(self):
        cfg = ChainConfig(sweeps=200, burnin=10, seed=1)
        s = run_fixed_k_chain(DATA4, SPEC.with_k(1), cfg)
        assert s.visits_star.tolist() == [1.0]
        assert s.visits_tilde.tolist() == [1.0]
        assert s.se_star.tolist() == [0.0]

    def test_visit_frequencies_are_distributions(self):
        cfg = ChainConfig(sweeps=5000, burnin=100, seed=4)
        s = run_fixed_k_chain(toy_data("n6"), SPEC.with_k(3), cfg)
        assert s.visits_star.sum() == pytest.approx(1.0, rel=1e-12)
        assert s.visits_tilde.sum() == pytest.approx(1.0, rel=1e-12)
        h = s.pattern_trace[:, 0]
        t = s.pattern_trace[:, 1]
        assert np.all((h >= 1) & (h <= 3))
        assert np.all((t >= h) & (t <= 3))

    def test_deterministic_given_seed(self):
        cfg = ChainConfig(sweeps=2000, burnin=50, seed=9)
        a = run_fixed_k_chain(toy_data("n5"), SPEC.with_k(3), cfg)
        b = run_fixed_k_chain(toy_data("n5"), SPEC.with_k(3), cfg)
        assert np.array_equal(a.pattern_trace, b.pattern_trace)
        assert np.array_equal(a.final_g, b.final_g)

    def test_allocation_posterior_total_variation(self):
        # k = 2 on four points is fully enumerable: 16 allocations
        enum = enumerate_exact(DATA4, SPEC, kmax=2, materialize_k=2)
        exact = {g: math.exp(lp) for g, lp in enum.allocation_posterior.items()}
        cfg = ChainConfig(sweeps=200000, burnin=2000, seed=5)
        s = run_fixed_k_chain(DATA4, SPEC.with_k(2), cfg, record_g=True)
        assert s.g_trace.shape == (cfg.kept, 4)
        counts = Counter(map(tuple, s.g_trace))
        tv = 0.5 * sum(abs(counts.get(g, 0) / s.kept - p) for g, p in exact.items())
        assert tv < 0.01, f"allocation TV {tv:.4f}"  # 0.0052 at this seed

    def test_visits_match_enumeration_within_4_se(self):
        data = toy_data("n5")
        enum = enumerate_exact(data, SPEC, kmax=3)
        summaries = run_all_k_chains(data, SPEC, 3, ChainConfig(sweeps=20000, burnin=1000, seed=3))
        for k in range(1, 4):
            s = summaries[k - 1]
            es = np.exp(enum.log_star_prob[k - 1, :k])
            et = np.exp(enum.log_tilde_prob[k - 1, : min(k, 5)])
            zs = np.abs(s.visits_star - es) / np.maximum(s.se_star, 1e-4)
            zt = np.abs(s.visits_tilde - et) / np.maximum(s.se_tilde, 1e-4)
            assert zs.max() < 4.0, f"star z {zs.max():.2f} at k={k}"
            assert zt.max() < 4.0, f"tilde z {zt.max():.2f} at k={k}"

    def test_parallel_matches_sequential(self):
        data = toy_data("n6")
        cfg = ChainConfig(sweeps=4000, burnin=100, seed=6)
        seq = run_all_k_chains(data, SPEC, 4, cfg, warm_start=False, parallel=1)
        par = run_all_k_chains(data, SPEC, 4, cfg, warm_start=False, parallel=3)
        for a, b in zip(seq, par):
            assert a.k == b.k
            assert np.array_equal(a.pattern_trace, b.pattern_trace)
            assert np.array_equal(a.visits_star, b.visits_star)

    def test_warm_start_threads_final_allocations(self):
        data = toy_data("n6")
        cfg = ChainConfig(sweeps=1000, burnin=50, seed=7)
        out = run_all_k_chains(data, SPEC, 3, cfg, warm_start=True)
        assert [s.k for s in out] == [1, 2, 3]
        for s in out:
            assert s.final_g.max() < s.k


class TestVarkChain:
    def test_posterior_matches_enumeration(self):
        data = toy_data("n5")
        enum = enumerate_exact(data, SPEC, kmax=3)
        prior = prior_uniform(3)
        exact = exact_posterior_k(enum, prior.log_pi)
        cfg = ChainConfig(sweeps=200000, burnin=2000, seed=7, dim_moves=3)
        vr = run_vark_chain(data, SPEC, prior, cfg)
        tv = 0.5 * np.abs(vr.posterior_k - exact).sum()
        assert tv < 0.02, f"vark TV {tv:.4f}"  # 0.0045 at this seed
        assert vr.posterior_k.sum() == pytest.approx(1.0, rel=1e-12)
        births, deaths = vr.accept["birth"], vr.accept["death"]
        assert 0 < births[1] <= births[0]
        assert 0 < deaths[1] <= deaths[0]

    def test_deterministic_given_seed(self):
        cfg = ChainConfig(sweeps=5000, burnin=100, seed=8)
        a = run_vark_chain(DATA4, SPEC, prior_uniform(3), cfg)
        b = run_vark_chain(DATA4, SPEC, prior_uniform(3), cfg)
        assert np.array_equal(a.k_trace, b.k_trace)
        assert a.final_k == b.final_k

    def test_k_stays_in_range(self):
        cfg = ChainConfig(sweeps=5000, burnin=100, seed=9)
        vr = run_vark_chain(DATA4, SPEC, prior_poisson1(4), cfg, k0=2)
        assert vr.k_trace.min() >= 1
        assert vr.k_trace.max() <= 4

    def test_python_reference_sweep_agrees(self):
        # slow pure-python twin of the compiled variable-k kernel
        prior = prior_uniform(2)
        enum = enumerate_exact(DATA4, SPEC, kmax=2)
        exact = exact_posterior_k(enum, prior.log_pi)
        rng = np.random.default_rng(10)
        state = AllocationState.from_allocation(DATA4, np.zeros(4, dtype=int), 1)
        visits = np.zeros(2)
        for sweep in range(12000):
            state = vark_sweep(state, SPEC, prior, rng, dim_moves=2)
            if sweep >= 500:
                visits[state.k - 1] += 1
        post = visits / visits.sum()
        tv = 0.5 * np.abs(post - exact).sum()
        assert tv < 0.05, f"python vark TV {tv:.4f}"

    def test_python_gibbs_sweep_moves_chain(self):
        rng = np.random.default_rng(11)
        state = AllocationState.from_allocation(toy_data("n6"), np.zeros(6, dtype=int), 3)
        seen = set()
        for _ in range(50):
            gibbs_sweep_fixed_k(state, SPEC.with_k(3), rng)
            seen.add(state.occupancy())
        assert state.consistency_error() < 1e-9
        assert len(seen) > 1  # 50 sweeps on n6 visit several patterns


class TestHyperChain:
    def test_default_delta_upper(self):
        data = toy_data("n8")
        assert default_delta_upper(data, 2.0) == pytest.approx(np.var(data, ddof=1), rel=1e-12)
        with pytest.raises(ValueError):
            default_delta_upper(data, 1.0)

    def test_draws_respect_support(self):
        data = toy_data("n8")
        cfg = ChainConfig(sweeps=20000, burnin=2000, seed=12)
        res = run_vark_hyper_chain(data, SPEC, prior_poisson1(5), cfg)
        assert np.all(res.tau_draws > 0)
        assert np.all(res.delta_draws > 0)
        assert np.all(res.delta_draws < res.delta_upper)
        assert res.k_draws.min() >= 1 and res.k_draws.max() <= 5
        for name in ("tau", "delta"):
            acc, prop = res.accept[name][1], res.accept[name][0]
            assert prop > 0
            rate = acc / prop
            assert 0.1 < rate < 0.55, f"{name} acceptance {rate:.2f}"
        assert all(s > 0 for s in res.final_steps)

    def test_deterministic_given_seed(self):
        data = toy_data("n8")
        cfg = ChainConfig(sweeps=4000, burnin=500, seed=13)
        a = run_vark_hyper_chain(data, SPEC, prior_poisson1(4), cfg)
        b = run_vark_hyper_chain(data, SPEC, prior_poisson1(4), cfg)
        assert np.array_equal(a.tau_draws, b.tau_draws)
        assert np.array_equal(a.delta_draws, b.delta_draws)

    def test_mh_kernel_targets_transformed_posterior(self):
        # freeze the allocation and check the (tau, delta) kernel against a
        # dense grid integration of its target density
        data = toy_data("n8")
        state = AllocationState.from_allocation(data, np.array([0, 0, 0, 0, 1, 1, 1, 1]), 2)
        du = 4.0

        th = np.linspace(-9, 7, 161)
        w = np.linspace(-9, 9, 161)
        lp = np.empty((th.size, w.size))
        for a, t in enumerate(th):
            tau = math.exp(t)
            for b, ww in enumerate(w):
                dlt = du / (1.0 + math.exp(-ww))
                sp = ModelSpec(k=2, alpha=1.0, mu=0.0, tau=tau, gamma=2.0, delta=dlt)
                ll = sum(
                    log_component_marginal(
                        int(state.counts[j]), float(state.sumx[j]), float(state.sumxx[j]), sp
                    )
                    for j in range(2)
                )
                # prior (1+tau)^-2 and uniform delta, with the log/logit
                # change-of-variable Jacobians
                lp[a, b] = ll + t - 2.0 * math.log1p(tau) + math.log(dlt) + math.log1p(-dlt / du)
        p = np.exp(lp - logsumexp(lp))
        p /= p.sum()
        grid_th = float((p.sum(axis=1) * th).sum())
        grid_w = float((p.sum(axis=0) * w).sum())

        rng = np.random.default_rng(11)
        hyp = HyperState(tau=1.0, delta=1.0, delta_upper=du, step_log_tau=2.0, step_logit_delta=2.0)
        ths, ws = [], []
        for it in range(60000):
            hyp, _, _ = mh_update_hyper(state, hyp, SPEC, rng)
            if it >= 2000:
                ths.append(math.log(hyp.tau))
                ws.append(math.log(hyp.delta / (du - hyp.delta)))
        # 0.0006 / 0.0245 observed at this seed
        assert abs(np.mean(ths) - grid_th) < 0.1
        assert abs(np.mean(ws) - grid_w) < 0.1

    def test_rejects_invalid_state(self):
        with pytest.raises(ValueError):
            HyperState(tau=-1.0, delta=1.0, delta_upper=4.0)
        with pytest.raises(ValueError):
            HyperState(tau=1.0, delta=5.0, delta_upper=4.0)


class TestStreamSeeds:
    def test_streams_are_distinct(self):
        seen = set()
        for seed in (1, 2, 123):
            for k in range(51):
                for tag in (1, 2, 3):
                    seen.add(_stream_seed(seed, k, tag))
        assert len(seen) == 3 * 51 * 3

    def test_fits_numba_seed_range(self):
        s = _stream_seed(2**31 - 1, 50, 3)
        assert 0 <= s < 2**32


def synthetic_table(tau_by_k, delta_by_k, per_k=200, min_draws=100):
    ks, taus, dlts = [], [], []
    for k, tv in tau_by_k.items():
        ks.extend([k] * per_k)
        taus.extend([tv] * per_k)
        dlts.extend([delta_by_k[k]] * per_k)
    return hyper_median_table(ks, taus, dlts, min_draws=min_draws)


class TestHyperSummaries:
    def test_median_table_excludes_thin_k(self):
        k_draws = [2] * 150 + [3] * 150 + [4] * 10
        tau = [1.0] * 150 + [0.5] * 150 + [0.4] * 10
        dlt = [3.0] * 310
        tbl = hyper_median_table(k_draws, tau, dlt, min_draws=100)
        assert tbl.ks.tolist() == [2, 3]
        assert tbl.excluded == [(4, 10)]
        assert tbl.tau_med.tolist() == [1.0, 0.5]

    def test_median_quantile_always_present(self):
        tbl = hyper_median_table([2] * 120, [1.5] * 120, [2.5] * 120,
                                 quantiles=(0.25, 0.75))
        assert 0.5 in tbl.quantiles
        assert tbl.tau_med.tolist() == [1.5]
        assert tbl.delta_med.tolist() == [2.5]

    def test_suggest_pools_from_first_leveled_pair(self):
        tbl = synthetic_table(
            {2: 1.0, 3: 0.5, 4: 0.45, 5: 0.44},
            {2: 10.0, 3: 6.0, 4: 5.5, 5: 5.4},
        )
        s = suggest_hyper(tbl, rel_tol=0.25)
        assert s.leveled
        assert s.k_cutoff == 3
        assert s.tau == pytest.approx(0.45)
        assert s.delta == pytest.approx(5.5)

    def test_suggest_skips_non_adjacent_pairs(self):
        tbl = synthetic_table(
            {2: 1.0, 3: 0.5, 5: 0.2, 6: 0.19},
            {2: 10.0, 3: 6.0, 5: 3.0, 6: 2.9},
        )
        s = suggest_hyper(tbl, rel_tol=0.25)
        assert s.leveled
        assert s.k_cutoff == 5

    def test_suggest_reports_failure_to_level(self):
        tbl = synthetic_table(
            {2: 1.0, 3: 0.5, 4: 0.25, 5: 0.125},
            {2: 8.0, 3: 4.0, 4: 2.0, 5: 1.0},
        )
        s = suggest_hyper(tbl, rel_tol=0.25)
        assert not s.leveled
        assert s.k_cutoff == 5
        assert s.tau == pytest.approx(0.125)
