"""Estimator tests against frozen closed-form values and exact enumeration.

The hypothetical-ratio values asserted to 12 digits were computed once with
exact rational arithmetic (fractions.Fraction over factorials) and frozen;
published reference rows are checked at their printed precision.
"""

import math
from types import SimpleNamespace

import numpy as np
import pytest
from scipy.special import logsumexp

from mixpost import (
    ModelSpec,
    PriorOnK,
    bayes_factor_empty,
    bf_chain,
    check_sup_property,
    enumerate_exact,
    fdagger_sequence,
    fstar_sequence,
    hypothetical_ratio_table,
    log_prior_rescale,
    mc_standard_error,
    posterior_bounds,
    posterior_over_k,
    prior_poisson1,
    prior_uniform,
    toy_data,
)

SPEC = ModelSpec(k=1, alpha=1.0, mu=0.0, tau=1.0, gamma=2.0, delta=1.0)

# reference rows, printed to 4 decimals in the source tables
BOUNDS_UNIFORM = {
    20: [.9000, .7286, .5299, .3456, .2880, .2419, .1954, .1756, .1505, .1335],
    50: [.9600, .8847, .7826, .6645, .5414, .4233, .3175, .3119, .2835, .2402],
    100: [.9800, .9412, .8858, .8170, .7385, .6541, .5677, .4828, .4023, .3322],
    500: [.9960, .9880, .9762, .9607, .9417, .9193, .8938, .8656, .8350, .8022],
}
BOUNDS_POISSON = {
    20: [.9525, .9114, .8756, .8441, .8162, .7913, .7690, .7488, .7306, .7140],
    50: [.9804, .9619, .9445, .9280, .9124, .8976, .8836, .8703, .8576, .8455],
    100: [.9901, .9805, .9712, .9621, .9533, .9447, .9364, .9283, .9204, .9128],
    500: [.9980, .9960, .9940, .9921, .9901, .9882, .9863, .9844, .9825, .9806],
}


class TestPriors:
    def test_uniform_weights(self):
        prior = prior_uniform(5)
        assert np.allclose(prior.pi, 0.2, rtol=1e-14)

    def test_poisson_weights(self):
        prior = prior_poisson1(6)
        w = np.array([1.0 / math.factorial(k) for k in range(1, 7)])
        assert np.allclose(prior.pi, w / w.sum(), rtol=1e-13)

    def test_sup_property_holds_for_truncated_poisson(self):
        chk = check_sup_property(prior_poisson1(30))
        assert chk.holds
        assert chk.worst_rel_violation < 1e-12

    def test_sup_property_fails_for_uniform(self):
        assert not check_sup_property(prior_uniform(30)).holds

    def test_sup_property_fails_for_geometric(self):
        ks = np.arange(1, 31)
        prior = PriorOnK(-ks * math.log(2.0))
        assert not check_sup_property(prior).holds


class TestHypotheticalRatios:
    def test_with_binomial(self):
        vals = hypothetical_ratio_table(80, 9, 1.0, range(9, 16), "with-binomial")
        frozen = [1.0, 1.01123595506, 0.61797752809, 0.298802321274,
                  0.12666620141, 0.0495768788313, 0.0184594761606]
        assert np.allclose(vals, frozen, rtol=1e-11)
        printed = [1., 1.011, .618, .299, .127, .050, .018]
        assert np.allclose(vals, printed, atol=5e-4)

    def test_without_binomial(self):
        vals = hypothetical_ratio_table(80, 9, 1.0, range(9, 16), "without-binomial")
        frozen = [1.0, 0.101123595506, 0.0112359550562, 0.00135819236943,
                  0.000177155526447, 2.47636757399e-05, 3.6882070251e-06]
        assert np.allclose(vals, frozen, rtol=1e-11)
        printed = [1., .10112, .01124, .00136, .00018, .00002, .00000]
        assert np.allclose(vals, printed, atol=1e-5)

    def test_poisson_posterior(self):
        vals = hypothetical_ratio_table(80, 9, 1.0, range(9, 16), "poi1-posterior")
        frozen = [1.0, 0.101123595506, 0.00561797752809, 0.000226365394905,
                  7.38148026863e-06, 2.06363964499e-07, 5.12250975708e-09]
        assert np.allclose(vals, frozen, rtol=1e-11)
        printed = [1., .10112, .00562, .00023, .00001]
        assert np.allclose(vals[:5], printed, atol=1e-5)

    def test_rejects_bad_arguments(self):
        with pytest.raises(ValueError):
            hypothetical_ratio_table(80, 9, 1.0, range(9, 12), "smoothed")
        with pytest.raises(ValueError):
            hypothetical_ratio_table(80, 9, 1.0, [8, 9, 10], "with-binomial")
        with pytest.raises(ValueError):
            hypothetical_ratio_table(5, 9, 1.0, [9, 10], "with-binomial")


class TestPosteriorBounds:
    @pytest.mark.parametrize("n,row", sorted(BOUNDS_UNIFORM.items()))
    def test_uniform_prior_rows(self, n, row):
        b = posterior_bounds(n, prior_uniform(60), 1.0)
        assert np.allclose(b[:10], row, atol=1e-4)

    @pytest.mark.parametrize("n,row", sorted(BOUNDS_POISSON.items()))
    def test_poisson_prior_rows(self, n, row):
        b = posterior_bounds(n, prior_poisson1(60), 1.0)
        assert np.allclose(b[:10], row, atol=1e-4)

    def test_bound_dominates_point_hypothesis_slice(self):
        # the bound is a sup over single-h slices, so the posterior implied
        # by any one slice must sit below it
        n, h0 = 80, 9
        ratios = hypothetical_ratio_table(n, h0, 1.0, range(h0, 41), "poi1-posterior")
        slice_post = ratios / ratios.sum()
        b = posterior_bounds(n, prior_poisson1(60), 1.0)
        for j, k in enumerate(range(h0, 41)):
            assert b[k - 1] >= slice_post[j] - 1e-9


class TestBatchSe:
    def test_constant_trace(self):
        assert mc_standard_error(np.ones(400)) == 0.0

    def test_alternating_trace_has_balanced_batches(self):
        trace = np.tile([0.0, 1.0], 200)
        assert mc_standard_error(trace) == pytest.approx(0.0, abs=1e-15)

    def test_iid_bernoulli_matches_theory(self):
        rng = np.random.default_rng(7)
        trace = (rng.random(20000) < 0.5).astype(float)
        se = mc_standard_error(trace)
        theory = math.sqrt(0.25 / 20000)
        assert abs(se - theory) / theory < 0.3


class TestBayesFactorEmpty:
    def make_summary(self, k, n, p, se_p):
        visits = np.zeros(k)
        visits[k - 1] = p
        se = np.zeros(k)
        se[k - 1] = se_p
        return SimpleNamespace(k=k, n=n, visits_star=visits, se_star=se)

    def test_arithmetic(self):
        s = self.make_summary(2, 10, 0.5, 0.01)
        bf = bayes_factor_empty(s, 1.0)
        # a(2,1) = Gamma(2)Gamma(11)/(Gamma(12)Gamma(1)) = 1/11
        assert math.exp(bf.log_bf) == pytest.approx(2.0 / 11.0, rel=1e-12)
        assert bf.se_log_bf == pytest.approx(0.02, rel=1e-12)
        assert bf.p_top == 0.5

    def test_rejects_saturated_top(self):
        with pytest.raises(ValueError):
            bayes_factor_empty(self.make_summary(2, 10, 1.0, 0.0), 1.0)

    def test_rejects_k_one(self):
        with pytest.raises(ValueError):
            bayes_factor_empty(self.make_summary(1, 10, 0.2, 0.0), 1.0)


def fake_summary(k, star, tilde=None, n=5):
    star = np.asarray(star, float)
    tilde = star if tilde is None else np.asarray(tilde, float)
    return SimpleNamespace(
        k=k, n=n,
        visits_star=star, se_star=np.zeros_like(star),
        visits_tilde=tilde, se_tilde=np.zeros_like(tilde),
        star_batches=np.tile(star, (20, 1)),
        tilde_batches=np.tile(tilde, (20, 1)),
    )


def summaries_from_enum(enum):
    """Fake chain summaries whose visit frequencies are the exact values."""
    out = []
    for k in range(1, enum.kmax + 1):
        star = np.exp(enum.log_star_prob[k - 1, :k])
        tilde = np.exp(enum.log_tilde_prob[k - 1, : min(k, enum.n)])
        out.append(fake_summary(k, star, tilde, enum.n))
    return out


@pytest.fixture(scope="module")
def enum():
    return enumerate_exact(toy_data("n5"), SPEC, kmax=3)


class TestSequenceEstimators:
    def test_fstar_recovers_exact(self, enum):
        res = fstar_sequence(summaries_from_enum(enum), 1.0, log_f1=enum.log_f[0])
        assert res.anchored
        assert res.truncated_at is None
        assert np.allclose(res.log_f_unnorm, enum.log_f, atol=1e-10)
        norm = enum.log_f - logsumexp(enum.log_f)
        assert np.allclose(res.log_f_norm, norm, atol=1e-10)

    def test_fdagger_recovers_exact(self, enum):
        res = fdagger_sequence(summaries_from_enum(enum), 1.0, log_f1=enum.log_f[0])
        assert np.allclose(res.log_f_unnorm, enum.log_f, atol=1e-10)

    def test_bf_chain_recovers_exact(self, enum):
        res = bf_chain(summaries_from_enum(enum), 1.0, log_f1=enum.log_f[0])
        assert np.allclose(res.log_f_unnorm, enum.log_f, atol=1e-10)

    def test_unanchored_normalization_matches(self, enum):
        res = fdagger_sequence(summaries_from_enum(enum), 1.0)
        assert not res.anchored
        assert res.log_f_unnorm is None
        norm = enum.log_f - logsumexp(enum.log_f)
        assert np.allclose(res.log_f_norm, norm, atol=1e-10)

    def test_fstar_matches_bf_at_two_models(self, enum):
        # with kmax=2 the pooled star estimator and the empty-top Bayes
        # factor are algebraically the same number
        summ = summaries_from_enum(enum)[:2]
        seq = fstar_sequence(summ, 1.0)
        bf = bayes_factor_empty(summ[1], 1.0)
        assert seq.log_bf[0] == pytest.approx(bf.log_bf, rel=1e-12)

    def test_invvar_equals_equal_when_ses_match(self, enum):
        summ = summaries_from_enum(enum)
        a = fstar_sequence(summ, 1.0, weighting="equal")
        b = fstar_sequence(summ, 1.0, weighting="invvar")
        assert np.allclose(a.log_f_norm, b.log_f_norm, atol=1e-12)

    def test_reanchoring_when_low_positions_unvisited(self):
        # no pooled chain ever put its top in position 1: the ratio to f*_1
        # is lost, the surviving tail is reported on its own scale
        summ = [
            fake_summary(1, [1.0]),
            fake_summary(2, [0.0, 1.0]),
            fake_summary(3, [0.0, 0.6, 0.4]),
        ]
        res = fstar_sequence(summ, 1.0, log_f1=0.0)
        assert not res.anchored
        assert res.log_seq[0] == -np.inf
        assert res.log_f_norm[0] == -np.inf
        assert np.isfinite(res.log_f_norm[1]) and np.isfinite(res.log_f_norm[2])
        # step 2 -> 3 is an ordinary pooled ratio: a(3,2) * 0.4 / 0.6
        expect = log_prior_rescale(3, 2, 1.0, 5) + math.log(0.4 / 0.6)
        assert res.log_seq[2] == pytest.approx(expect, rel=1e-12)
        assert any("re-anchored" in d for d in res.diagnostics)

    def test_structural_zero_in_last_position(self):
        # the k=2 chain never had its top in position 2, so fstar_2 = 0;
        # f_2 keeps its a(2,1) fstar_1 term and stays finite
        summ = [fake_summary(1, [1.0]), fake_summary(2, [1.0, 0.0])]
        res = fstar_sequence(summ, 1.0)
        assert res.log_seq[1] == -np.inf
        assert res.truncated_at is None
        assert np.isfinite(res.log_f_norm).all()
        assert res.log_bf[0] == pytest.approx(math.log(1.0 / 6.0), rel=1e-12)

    def test_truncation_when_no_information(self):
        summ = [
            fake_summary(1, [1.0]),
            fake_summary(2, [1.0, 0.0]),
            fake_summary(3, [1.0, 0.0, 0.0]),
        ]
        res = fstar_sequence(summ, 1.0)
        assert res.truncated_at == 3
        assert res.log_seq[1] == -np.inf and res.log_seq[2] == -np.inf
        assert any("truncated" in d for d in res.diagnostics)

    def test_bf_chain_needs_every_top_visited(self):
        summ = [fake_summary(1, [1.0]), fake_summary(2, [0.0, 1.0])]
        with pytest.raises(ValueError):
            bf_chain(summ, 1.0)


class TestPosteriorOverK:
    def test_uniform_prior_is_softmax(self):
        logf = np.array([0.0, 1.3, -0.4])
        post = posterior_over_k(logf, prior_uniform(3))
        assert np.allclose(post, np.exp(logf - logsumexp(logf)), rtol=1e-12)

    def test_prior_tilts_posterior(self):
        logf = np.zeros(4)
        post = posterior_over_k(logf, prior_poisson1(4))
        assert np.allclose(post, prior_poisson1(4).pi, rtol=1e-12)

    def test_minus_inf_maps_to_zero(self):
        logf = np.array([0.0, -np.inf, 1.0])
        post = posterior_over_k(logf, prior_uniform(3))
        assert post[1] == 0.0
        assert post.sum() == pytest.approx(1.0, rel=1e-12)


class TestRescaleConstant:
    def test_known_values(self):
        assert math.exp(log_prior_rescale(2, 1, 1.0, 5)) == pytest.approx(1 / 6, rel=1e-12)
        assert math.exp(log_prior_rescale(3, 1, 1.0, 5)) == pytest.approx(1 / 21, rel=1e-12)
