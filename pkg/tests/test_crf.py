import numpy as np
import pytest

from deepcrf.crf import (
    CrfParams,
    energy,
    hard_assignment_stats,
    log_partition,
    loglik_gradients,
    marginals,
    perceptron_gradients,
    unary_scores,
    viterbi,
)

from conftest import random_instance
from oracles import (
    brute_log_partition,
    brute_marginals,
    brute_viterbi,
    central_difference,
    energy_by_terms,
    enumerate_energies,
    max_rel_err,
)


class TestEnergy:
    def test_zero_params_any_input(self, rng):
        params = CrfParams.zeros(d_h=4, K=3)
        H = rng.standard_normal((5, 4))
        assert energy(params, H, [0, 2, 1, 1, 0]) == 0.0

    def test_single_frame_has_no_transition_term(self, rng):
        params, H, _ = random_instance(rng, K=3, T=1, d_h=4)
        y = 2
        expected = (params.pi[y] + params.tau[y] + H[0] @ params.W[:, y] + params.b[y])
        assert energy(params, H, [y]) == pytest.approx(expected, abs=1e-12)

    def test_matches_term_by_term_summation(self, rng):
        for _ in range(10):
            params, H, y = random_instance(rng, K=3, T=4, d_h=5)
            assert energy(params, H, y) == pytest.approx(
                energy_by_terms(params, H, y), abs=1e-12)

    def test_rejects_bad_labels(self, rng):
        params, H, y = random_instance(rng, K=3, T=4, d_h=5)
        with pytest.raises(ValueError):
            energy(params, H, y[:-1])
        with pytest.raises(ValueError):
            energy(params, H, [0, 1, 2, 3])


class TestLogPartition:
    def test_uniform_case(self):
        for K, T in [(2, 1), (3, 4), (4, 6)]:
            params = CrfParams.zeros(d_h=3, K=K)
            H = np.zeros((T, 3))
            assert log_partition(params, H) == pytest.approx(T * np.log(K), abs=1e-12)

    def test_matches_enumeration(self, rng):
        for _ in range(10):
            params, H, _ = random_instance(rng, K=3, T=4, d_h=4)
            assert log_partition(params, H) == pytest.approx(
                brute_log_partition(params, H), abs=1e-9)

    def test_single_node_chain(self, rng):
        params, H, _ = random_instance(rng, K=5, T=1, d_h=3)
        scores = unary_scores(params, H)[0]
        m = scores.max()
        expected = m + np.log(np.exp(scores - m).sum())
        assert log_partition(params, H) == pytest.approx(expected, abs=1e-12)


class TestMarginals:
    def test_uniform_case(self):
        params = CrfParams.zeros(d_h=2, K=3)
        H = np.zeros((4, 2))
        m = marginals(params, H)
        assert np.allclose(m.gamma, 1.0 / 3.0, atol=1e-12)
        assert np.allclose(m.xi, 1.0 / 9.0, atol=1e-12)

    def test_matches_enumeration(self, rng):
        for _ in range(10):
            params, H, _ = random_instance(rng, K=2, T=3, d_h=3)
            m = marginals(params, H)
            gamma, xi, log_Z = brute_marginals(params, H)
            assert np.max(np.abs(m.gamma - gamma)) < 1e-10
            assert np.max(np.abs(m.xi - xi)) < 1e-10
            assert m.log_Z == pytest.approx(log_Z, abs=1e-9)

    def test_peaked_scores_saturate(self, rng):
        params, H, y = random_instance(rng, K=3, T=4, d_h=3)
        params.b = np.zeros(3)
        planted = rng.integers(0, 3, size=4)
        U_boost = np.zeros((4, 3))
        U_boost[np.arange(4), planted] = 50.0
        # fold the boost through W by augmenting features
        boosted = CrfParams(A=params.A, W=np.vstack([params.W, np.eye(3)]),
                            b=params.b, pi=params.pi, tau=params.tau)
        H_aug = np.hstack([H, U_boost])
        m = marginals(boosted, H_aug)
        gamma, _, _ = brute_marginals(boosted, H_aug)
        one_hot = np.zeros((4, 3))
        one_hot[np.arange(4), planted] = 1.0
        assert np.max(np.abs(m.gamma - gamma)) < 1e-10
        assert np.max(np.abs(m.gamma - one_hot)) < 1e-10

    def test_rows_and_slices_normalize(self, rng):
        for _ in range(5):
            params, H, _ = random_instance(rng, K=4, T=5, d_h=3)
            m = marginals(params, H)
            assert np.allclose(m.gamma.sum(axis=1), 1.0, atol=1e-12)
            assert np.allclose(m.xi.sum(axis=(1, 2)), 1.0, atol=1e-12)

    def test_pairwise_consistent_with_unary(self, rng):
        for _ in range(5):
            params, H, _ = random_instance(rng, K=3, T=5, d_h=3)
            m = marginals(params, H)
            for t in range(4):
                assert np.max(np.abs(m.xi[t].sum(axis=1) - m.gamma[t])) < 1e-10
                assert np.max(np.abs(m.xi[t].sum(axis=0) - m.gamma[t + 1])) < 1e-10

    def test_log_z_agrees_with_forward_recursion(self, rng):
        for _ in range(10):
            params, H, _ = random_instance(rng, K=3, T=6, d_h=4)
            assert marginals(params, H).log_Z == pytest.approx(
                log_partition(params, H), abs=1e-12)

    def test_extreme_scores_stay_finite(self):
        params = CrfParams.zeros(d_h=1, K=2)
        params.b = np.array([700.0, -700.0])
        H = np.zeros((6, 1))
        m = marginals(params, H)
        assert np.isfinite(m.log_Z)
        assert np.all(np.isfinite(m.gamma)) and np.all(np.isfinite(m.xi))
        assert np.isfinite(log_partition(params, H))


class TestViterbi:
    def test_total_tie_decodes_to_zeros(self):
        params = CrfParams.zeros(d_h=2, K=4)
        result = viterbi(params, np.zeros((5, 2)))
        assert result.labels == [0, 0, 0, 0, 0]

    def test_matches_enumeration(self, rng):
        for _ in range(10):
            params, H, _ = random_instance(rng, K=4, T=5, d_h=3)
            result = viterbi(params, H)
            labels, score = brute_viterbi(params, H)
            assert result.labels == labels
            assert result.score == pytest.approx(score, abs=1e-9)

    def test_recovers_planted_sequence(self, rng):
        K, T, d_h = 26, 8, 10
        params, H, _ = random_instance(rng, K=K, T=T, d_h=d_h)
        planted = rng.integers(0, K, size=T)
        boost = np.zeros((T, K))
        boost[np.arange(T), planted] = 10.0 + np.abs(unary_scores(params, H)).max()
        boosted = CrfParams(A=params.A, W=np.vstack([params.W, np.eye(K)]),
                            b=params.b, pi=params.pi, tau=params.tau)
        result = viterbi(boosted, np.hstack([H, boost]))
        assert result.labels == list(planted)

    def test_score_is_energy_of_labels(self, rng):
        for _ in range(10):
            params, H, _ = random_instance(rng, K=3, T=6, d_h=4)
            result = viterbi(params, H)
            assert result.score == pytest.approx(energy(params, H, result.labels), abs=1e-9)
            assert result.log_prob == pytest.approx(
                result.score - log_partition(params, H), abs=1e-12)

    def test_beats_random_sequences(self, rng):
        params, H, _ = random_instance(rng, K=3, T=6, d_h=4)
        best = viterbi(params, H).score
        for _ in range(1000):
            y = rng.integers(0, 3, size=6)
            assert best >= energy(params, H, y) - 1e-12

    def test_probabilities_sum_to_one(self, rng):
        for K, T in [(2, 5), (3, 4)]:
            params, H, _ = random_instance(rng, K=K, T=T, d_h=3)
            _, E = enumerate_energies(params, H)
            total = np.exp(E - log_partition(params, H)).sum()
            assert total == pytest.approx(1.0, abs=1e-9)

    def test_bias_shift_invariance(self, rng):
        params, H, _ = random_instance(rng, K=3, T=5, d_h=4)
        shifted = params.copy()
        c = 2.7
        shifted.b = params.b + c
        assert log_partition(shifted, H) == pytest.approx(
            log_partition(params, H) + 5 * c, abs=1e-9)
        assert viterbi(shifted, H).labels == viterbi(params, H).labels
        assert np.max(np.abs(marginals(shifted, H).gamma - marginals(params, H).gamma)) < 1e-10


class TestLoglikGradients:
    def test_certain_and_correct_model_has_zero_gradient(self, rng):
        params, H, y = random_instance(rng, K=3, T=4, d_h=3)
        g = loglik_gradients(params, H, y, stats=hard_assignment_stats(y, 3))
        for block in (g.A, g.W, g.b, g.pi, g.tau, g.h):
            assert np.all(block == 0.0)

    def test_zero_params_initial_gradient(self, rng):
        K, T = 4, 3
        params = CrfParams.zeros(d_h=2, K=K)
        H = rng.standard_normal((T, 2))
        y = np.array([1, 0, 3])
        g = loglik_gradients(params, H, y)
        expected_pi = -np.full(K, 1.0 / K)
        expected_pi[y[0]] += 1.0
        assert np.allclose(g.pi, expected_pi, atol=1e-12)

    def test_matches_finite_differences(self, rng):
        for _ in range(5):
            params, H, y = random_instance(rng, K=2, T=3, d_h=3)
            g = loglik_gradients(params, H, y)

            def loss_for(name):
                def f(x):
                    p2 = params.copy()
                    setattr(p2, name, x)
                    return energy(p2, H, y) - log_partition(p2, H)
                return f

            for name in ("A", "W", "b", "pi", "tau"):
                fd = central_difference(loss_for(name), getattr(params, name).copy())
                assert max_rel_err(getattr(g, name), fd) < 1e-6

            fd_h = central_difference(
                lambda X: energy(params, X, y) - log_partition(params, X), H.copy())
            assert max_rel_err(g.h, fd_h) < 1e-6

    def test_outer_product_mode_is_an_approximation(self, rng):
        params, H, y = random_instance(rng, K=3, T=4, d_h=3)
        exact = loglik_gradients(params, H, y, pairwise="exact")
        outer = loglik_gradients(params, H, y, pairwise="outer")
        assert not np.allclose(exact.A, outer.A)  # generally different
        # identical blocks wherever xi is not involved
        assert np.array_equal(exact.W, outer.W)
        assert np.array_equal(exact.b, outer.b)

    def test_rejects_unknown_mode(self, rng):
        params, H, y = random_instance(rng, K=2, T=2, d_h=2)
        with pytest.raises(ValueError):
            loglik_gradients(params, H, y, pairwise="nope")


class TestPerceptronGradients:
    def test_zero_when_decode_is_correct(self, rng):
        params, H, y = random_instance(rng, K=3, T=4, d_h=3)
        g = perceptron_gradients(params, H, y, y)
        for block in (g.A, g.W, g.b, g.pi, g.tau, g.h):
            assert np.all(block == 0.0)

    def test_single_frame_hand_expansion(self, rng):
        params, H, _ = random_instance(rng, K=2, T=1, d_h=3)
        g = perceptron_gradients(params, H, [0], [1])
        assert np.allclose(g.W, np.outer(H[0], [1.0, -1.0]), atol=1e-15)
        assert np.allclose(g.b, [1.0, -1.0], atol=1e-15)
        assert np.allclose(g.pi, [1.0, -1.0], atol=1e-15)
        assert np.allclose(g.tau, [1.0, -1.0], atol=1e-15)
        assert np.all(g.A == 0.0)
        assert np.allclose(g.h[0], params.W[:, 0] - params.W[:, 1], atol=1e-15)

    def test_hard_substitution_reproduces_perceptron_bitwise(self, rng):
        for _ in range(20):
            params, H, y = random_instance(rng, K=3, T=5, d_h=4)
            y_star = viterbi(params, H).labels
            via_stats = loglik_gradients(
                params, H, y, stats=hard_assignment_stats(np.array(y_star), 3))
            direct = perceptron_gradients(params, H, y, y_star)
            for a, b in [(via_stats.A, direct.A), (via_stats.W, direct.W),
                         (via_stats.b, direct.b), (via_stats.pi, direct.pi),
                         (via_stats.tau, direct.tau), (via_stats.h, direct.h)]:
                assert np.array_equal(a, b)

    def test_rejects_length_mismatch(self, rng):
        params, H, y = random_instance(rng, K=2, T=3, d_h=2)
        with pytest.raises(ValueError):
            perceptron_gradients(params, H, y, [0, 1])

    def test_update_increases_margin(self, rng):
        # one perceptron step must raise E(gold) - E(decoded) on that instance
        params, H, y = random_instance(rng, K=3, T=4, d_h=3)
        result = viterbi(params, H)
        if result.labels == list(y):
            y = (np.asarray(y) + 1) % 3
        g = perceptron_gradients(params, H, y, result.labels)
        before = energy(params, H, y) - energy(params, H, result.labels)
        eta = 0.1
        stepped = CrfParams(
            A=params.A + eta * g.A, W=params.W + eta * g.W, b=params.b + eta * g.b,
            pi=params.pi + eta * g.pi, tau=params.tau + eta * g.tau)
        after = energy(stepped, H, y) - energy(stepped, H, result.labels)
        assert after > before
