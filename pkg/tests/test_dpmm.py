import math

import numpy as np
import pytest
import scipy.stats

from gpev.core import DpmmHyper, make_rng
from gpev.dpmm import (
    DpmmState,
    categorical_rows,
    init_state,
    mixture_density,
    stick_to_weights,
    update_atoms,
    update_labels,
    update_sticks,
)


def state_of(nu, mu, tau, labels=()):
    return DpmmState.create(np.asarray(nu, float), np.asarray(mu, float),
                            np.asarray(tau, float), np.asarray(labels, np.int64))


class TestStickToWeights:
    def test_single_component(self):
        assert np.array_equal(stick_to_weights([1.0]), [1.0])

    def test_geometric_halving(self):
        assert np.allclose(stick_to_weights([0.5, 0.5, 1.0]), [0.5, 0.25, 0.25], atol=0)

    def test_two_components(self):
        assert np.allclose(stick_to_weights([0.3, 1.0]), [0.3, 0.7], atol=1e-16)

    def test_rejects_out_of_range(self):
        with pytest.raises(ValueError):
            stick_to_weights([0.5, 1.2])
        with pytest.raises(ValueError):
            stick_to_weights([0.0, 1.0])

    def test_simplex_when_last_stick_forced(self):
        rng = make_rng(1)
        for _ in range(200):
            nu = rng.uniform(1e-6, 1 - 1e-6, 12)
            nu[-1] = 1.0
            pi = stick_to_weights(nu)
            assert np.all(pi >= 0)
            assert abs(pi.sum() - 1.0) < 1e-12


class TestUpdateLabels:
    def test_single_component_all_zero(self):
        st = state_of([1.0], [0.0], [1.0])
        labels = update_labels(np.linspace(-5, 5, 20), st, make_rng(0))
        assert np.all(labels == 0)

    def test_far_component_dominates(self):
        st = state_of([0.5, 1.0], [-100.0, 100.0], [1.0, 1.0])
        x = np.full(1000, 100.0)
        labels = update_labels(x, st, make_rng(2))
        assert np.all(labels == 1)

    def test_symmetric_components_split_evenly(self):
        st = state_of([0.5, 1.0], [-1.0, 1.0], [1.0, 1.0])
        n = 10_000
        labels = update_labels(np.zeros(n), st, make_rng(3))
        freq = labels.mean()
        assert abs(freq - 0.5) < 3.0 * 0.5 / math.sqrt(n)

    def test_scale_invariance_in_log_space(self):
        rng = make_rng(4)
        log_masses = rng.normal(-300.0, 40.0, size=(50, 8))
        a = categorical_rows(log_masses, make_rng(9))
        b = categorical_rows(log_masses + 123.4, make_rng(9))
        assert np.array_equal(a, b)

    def test_extreme_offsets_do_not_underflow(self):
        st = state_of([0.5, 1.0], [-2000.0, 2000.0], [1.0, 1.0])
        labels = update_labels(np.array([2000.0, -2000.0]), st, make_rng(5))
        assert labels.tolist() == [1, 0]


class TestUpdateAtoms:
    hyper = DpmmHyper(truncation=3)

    def test_empty_components_draw_from_prior(self):
        rng = make_rng(6)
        hyper = DpmmHyper(truncation=2, mu0=3.0, kappa0=2.0, a_tau=2.0, b_tau=1.0)
        draws = np.array([
            update_atoms(np.empty(0), np.empty(0, np.int64), hyper, rng)[0]
            for _ in range(4000)
        ]).ravel()
        # prior marginal of mu is mu0 + sqrt(kappa0 * b_tau / a_tau) * t_{2 a_tau}
        ref = scipy.stats.t(df=2 * hyper.a_tau, loc=hyper.mu0,
                            scale=math.sqrt(hyper.kappa0 * hyper.b_tau / hyper.a_tau))
        assert scipy.stats.kstest(draws, ref.cdf).pvalue > 0.01

    def test_large_sample_posterior_mean_approaches_data(self):
        rng = make_rng(7)
        c, m = 2.5, 10_000
        x = np.full(m, c)
        labels = np.zeros(m, np.int64)
        mus = np.array([update_atoms(x, labels, self.hyper, rng)[0][0] for _ in range(400)])
        # conjugate posterior mean is (mu0 + kappa0 m c) / (1 + kappa0 m)
        target = (self.hyper.mu0 + self.hyper.kappa0 * m * c) / (1 + self.hyper.kappa0 * m)
        assert abs(mus.mean() - target) < 0.01
        assert abs(mus.mean() - c) < 0.01

    def test_single_symmetric_observation(self):
        rng = make_rng(8)
        mus = np.array([
            update_atoms(np.array([0.0]), np.zeros(1, np.int64), self.hyper, rng)[0][0]
            for _ in range(4000)
        ])
        assert abs(mus.mean()) < 3.0 * mus.std() / math.sqrt(len(mus))

    def test_precisions_positive(self):
        rng = make_rng(9)
        x = rng.standard_normal(30)
        labels = rng.integers(0, 3, 30)
        _, tau = update_atoms(x, labels, self.hyper, rng)
        assert np.all(tau > 0)


class TestUpdateSticks:
    def test_prior_recovery_with_no_data(self):
        rng = make_rng(10)
        alpha = 2.0
        draws = np.concatenate([
            update_sticks(np.empty(0, np.int64), alpha, 6, rng)[:-1] for _ in range(3000)
        ])
        ref = scipy.stats.beta(1.0, alpha)
        assert scipy.stats.kstest(draws, ref.cdf).pvalue > 0.01

    def test_loaded_first_component(self):
        rng = make_rng(11)
        n, alpha = 200, 1.0
        labels = np.zeros(n, np.int64)
        first = np.array([update_sticks(labels, alpha, 4, rng)[0] for _ in range(3000)])
        target = (1.0 + n) / (1.0 + n + alpha)
        se = first.std() / math.sqrt(len(first))
        assert abs(first.mean() - target) < 4.0 * se
        assert target > 0.99

    def test_large_alpha_shrinks_sticks(self):
        rng = make_rng(12)
        nu = np.concatenate([
            update_sticks(np.empty(0, np.int64), 1e4, 5, rng)[:-1] for _ in range(200)
        ])
        assert nu.mean() < 0.001  # Beta(1, alpha) mean is 1/(1 + alpha)

    def test_last_stick_is_one(self):
        nu = update_sticks(np.zeros(5, np.int64), 1.0, 3, make_rng(13))
        assert nu[-1] == 1.0


class TestMixtureDensity:
    def test_standard_normal_mode(self):
        st = state_of([1.0], [0.0], [1.0])
        assert mixture_density(st, 0.0) == pytest.approx(1.0 / math.sqrt(2 * math.pi), abs=1e-15)

    def test_integrates_to_one(self):
        rng = make_rng(14)
        st = DpmmState.create(
            nu=np.array([0.4, 0.7, 1.0]),
            mu=np.array([-2.0, 0.5, 3.0]),
            tau=np.array([1.0, 4.0, 0.25]),
            labels=np.empty(0, np.int64),
        )
        grid = np.linspace(-50, 50, 40_001)
        mass = np.trapezoid(mixture_density(st, grid), grid)
        assert abs(mass - 1.0) < 1e-6

    def test_mirrored_components_give_even_density(self):
        st = state_of([0.5, 1.0], [-1.5, 1.5], [2.0, 2.0])
        x = np.linspace(0.0, 4.0, 50)
        assert np.allclose(mixture_density(st, x), mixture_density(st, -x), atol=1e-15)


def test_prior_predictive_alternation_matches_iid_prior():
    # with no data, alternating atom and stick updates must reproduce
    # independent draws from the base measure
    hyper = DpmmHyper(truncation=5)
    rng = make_rng(15)
    empty_x = np.empty(0)
    empty_labels = np.empty(0, np.int64)
    mus = []
    for _ in range(2000):
        mu, tau = update_atoms(empty_x, empty_labels, hyper, rng)
        update_sticks(empty_labels, hyper.alpha, hyper.truncation, rng)
        mus.append(mu)
    draws = np.concatenate(mus)
    ref = scipy.stats.t(df=2 * hyper.a_tau, loc=hyper.mu0,
                        scale=math.sqrt(hyper.kappa0 * hyper.b_tau / hyper.a_tau))
    assert scipy.stats.kstest(draws, ref.cdf).pvalue > 0.01


def test_init_state_is_valid_and_deterministic():
    rng = make_rng(16)
    x = rng.uniform(-3, 3, 60)
    a = init_state(x, DpmmHyper(truncation=7), make_rng(17))
    b = init_state(x, DpmmHyper(truncation=7), make_rng(17))
    assert np.array_equal(a.mu, b.mu) and np.array_equal(a.labels, b.labels)
    assert a.pi.sum() == pytest.approx(1.0, abs=1e-12)


def test_state_rejects_inconsistent_weights():
    with pytest.raises(ValueError, match="stick-breaking"):
        DpmmState(nu=np.array([0.5, 1.0]), pi=np.array([0.6, 0.4]),
                  mu=np.zeros(2), tau=np.ones(2), labels=np.empty(0, np.int64))
