import numpy as np
import pytest

from resbeam.channel import (
    LinkMatrix,
    OverallChannel,
    adversarial_failure,
    ball_point,
    compose_overall,
    dump_channels,
    load_channels,
    perturb_within_ball,
    rician_link,
)

RNG = lambda seed=0: np.random.default_rng(seed)


class TestRicianLink:
    def test_los_limit(self):
        # huge Rician factor: the draw collapses onto the LoS outer product
        link = rician_link(1e-3, 10.0, 2.2, 1e9, 4, 3, (0.3, -0.7), RNG(1))
        los = rician_link(1e-3, 10.0, 2.2, 1e12, 4, 3, (0.3, -0.7), RNG(2))
        rel = np.linalg.norm(link.entries - los.entries) / np.linalg.norm(link.entries)
        assert rel < 1e-4

    def test_unit_modulus_entries_in_los_limit(self):
        link = rician_link(1e-3, 1.0, 0.0, 1e14, 3, 2, (0.2, 1.1), RNG(3))
        assert np.allclose(np.abs(link.entries), np.sqrt(1e-3), rtol=1e-6)

    def test_mean_energy_matches_path_loss(self):
        # Monte Carlo oracle over the stated fading distribution
        L0, d, alpha, beta, rows, cols = 1e-3, 7.0, 2.5, 3.0, 4, 2
        rng = RNG(4)
        total = 0.0
        n = 10_000
        for _ in range(n):
            link = rician_link(L0, d, alpha, beta, rows, cols, (0.1, 0.4), rng)
            total += np.linalg.norm(link.entries) ** 2
        expected = L0 * d ** (-alpha) * rows * cols
        assert total / n == pytest.approx(expected, rel=0.05)

    def test_rejects_nonpositive_distance(self):
        with pytest.raises(ValueError):
            rician_link(1e-3, 0.0, 2.0, 1.0, 2, 2, (0.0, 0.0), RNG())


class TestComposeOverall:
    def test_direct_only(self):
        rng = RNG(5)
        N, M = 4, 3
        F = rng.standard_normal((N, M)) + 1j * rng.standard_normal((N, M))
        d = rng.standard_normal(M) + 1j * rng.standard_normal(M)
        ch = compose_overall(None, F, d)
        for _ in range(10):
            theta = rng.uniform(0, 2 * np.pi, N)
            v = np.concatenate([np.exp(1j * theta), [1.0]]).conj()
            assert np.allclose(np.conj(v) @ ch.matrix, np.conj(d), atol=1e-12)

    def test_scalar_hand_case(self):
        # N=1, M=1: h = 2 e^{j pi/2}, F = 1, d = 0, theta = 0
        h = np.array([2.0 * np.exp(1j * np.pi / 2)])
        F = np.array([[1.0 + 0j]])
        d = np.array([0.0 + 0j])
        ch = compose_overall(h, F, d)
        v = np.array([1.0, 1.0]).conj()  # theta = 0
        value = np.conj(v) @ ch.matrix
        assert value[0] == pytest.approx(2.0 * np.exp(-1j * np.pi / 2))

    def test_identity_against_direct_evaluation(self):
        rng = RNG(6)
        N, M = 5, 3
        h = rng.standard_normal(N) + 1j * rng.standard_normal(N)
        F = rng.standard_normal((N, M)) + 1j * rng.standard_normal((N, M))
        d = rng.standard_normal(M) + 1j * rng.standard_normal(M)
        ch = compose_overall(h, F, d)
        worst = 0.0
        for _ in range(100):
            theta = rng.uniform(0, 2 * np.pi, N)
            v = np.concatenate([np.exp(1j * theta), [1.0]]).conj()
            phi = np.diag(np.exp(1j * theta))
            direct = np.conj(h) @ phi @ F + np.conj(d)
            worst = max(worst, np.abs(np.conj(v) @ ch.matrix - direct).max())
        assert worst < 1e-10

    def test_direct_term_changes_only_last_row(self):
        rng = RNG(7)
        N, M = 3, 2
        h = rng.standard_normal(N) + 1j * rng.standard_normal(N)
        F = rng.standard_normal((N, M)) + 1j * rng.standard_normal((N, M))
        d1 = rng.standard_normal(M) + 1j * rng.standard_normal(M)
        d2 = d1 + (rng.standard_normal(M) + 1j * rng.standard_normal(M))
        diff = compose_overall(h, F, d2).matrix - compose_overall(h, F, d1).matrix
        assert np.allclose(diff[:N], 0.0)
        assert not np.allclose(diff[N], 0.0)

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            compose_overall(np.zeros(3), np.zeros((4, 2)), np.zeros(2))


class TestPerturbation:
    def _nominal(self, rng, shape=(4, 3)):
        H = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
        return OverallChannel(matrix=H, nominal=H, delta=np.zeros_like(H), epsilon=0.0)

    def test_zero_radius_is_exact(self):
        ch = self._nominal(RNG(8))
        out = perturb_within_ball(ch, 0.0, RNG(9))
        assert np.array_equal(out.matrix, ch.nominal)

    def test_radial_distribution(self):
        rng = RNG(10)
        norms = [np.linalg.norm(ball_point((4, 3), 1.0, rng)) for _ in range(10_000)]
        norms = np.array(norms)
        assert norms.max() <= 1.0
        assert norms.max() > 0.99

    def test_composition_invariant(self):
        ch = self._nominal(RNG(11))
        out = perturb_within_ball(ch, 0.5, RNG(12))
        assert np.array_equal(out.matrix, out.nominal + out.delta)

    def test_vec_norm_equals_frobenius(self):
        # the uncertainty-norm transfer behind the vectorized reductions
        rng = RNG(13)
        for _ in range(20):
            delta = ball_point((5, 2), 2.0, rng)
            assert np.linalg.norm(np.conj(delta).reshape(-1)) == pytest.approx(
                np.linalg.norm(delta), rel=1e-12)


class TestAdversarialFailure:
    def _setup(self, seed=14):
        rng = RNG(seed)
        N, M, K = 4, 3, 2
        H = rng.standard_normal((N + 1, M)) + 1j * rng.standard_normal((N + 1, M))
        ch = OverallChannel(matrix=H, nominal=H, delta=np.zeros_like(H), epsilon=0.0)
        v = np.concatenate([np.exp(1j * rng.uniform(0, 2 * np.pi, N)), [1.0]]).conj()
        beams = [rng.standard_normal(M) + 1j * rng.standard_normal(M) for _ in range(K)]
        return ch, v, beams

    @staticmethod
    def _rate(H, v, beams, k, noise):
        u = np.conj(v) @ H
        p = np.array([np.abs(u @ w) ** 2 for w in beams])
        return np.log2(1 + p[k] / (p.sum() - p[k] + noise))

    def test_boundary_norm(self):
        ch, v, beams = self._setup()
        out = adversarial_failure(ch, 0.3, v, beams, 0, 1.0, 1, RNG(15))
        assert np.linalg.norm(out.delta) == pytest.approx(0.3, rel=1e-12)

    def test_monotone_in_candidate_count(self):
        ch, v, beams = self._setup()
        few = adversarial_failure(ch, 0.3, v, beams, 0, 1.0, 1, RNG(16))
        many = adversarial_failure(ch, 0.3, v, beams, 0, 1.0, 500, RNG(16))
        rate_few = self._rate(few.matrix, v, beams, 0, 1.0)
        rate_many = self._rate(many.matrix, v, beams, 0, 1.0)
        assert rate_many <= rate_few + 1e-12

    def test_small_radius_small_drop(self):
        ch, v, beams = self._setup()
        base = self._rate(ch.matrix, v, beams, 0, 1.0)
        out = adversarial_failure(ch, 1e-6, v, beams, 0, 1.0, 50, RNG(17))
        dropped = self._rate(out.matrix, v, beams, 0, 1.0)
        assert base - dropped <= 1e-3


class TestChannelDump:
    def test_round_trip(self, tmp_path):
        rng = RNG(18)
        named = {
            "user_0": rng.standard_normal((3, 2)) + 1j * rng.standard_normal((3, 2)),
            "eve_0": rng.standard_normal((3, 2)) + 1j * rng.standard_normal((3, 2)),
        }
        path = tmp_path / "channels.txt"
        dump_channels(path, named)
        back = load_channels(path)
        assert set(back) == set(named)
        for name in named:
            assert np.array_equal(back[name], named[name])


class TestLinkMatrix:
    def test_kind_validation(self):
        with pytest.raises(ValueError):
            LinkMatrix(entries=np.ones(3), kind="nonsense")

    def test_matrix_kind_needs_2d(self):
        with pytest.raises(ValueError):
            LinkMatrix(entries=np.ones(3), kind="bs_irs")


class TestOverallChannelInvariants:
    def test_norm_violation_rejected(self):
        H = np.ones((2, 2), complex)
        with pytest.raises(ValueError):
            OverallChannel(matrix=H + 1.0, nominal=H, delta=np.ones((2, 2)), epsilon=0.1)

    def test_split_must_be_exact(self):
        H = np.ones((2, 2), complex)
        with pytest.raises(ValueError):
            OverallChannel(matrix=H, nominal=H, delta=np.full((2, 2), 1e-18), epsilon=1.0)
