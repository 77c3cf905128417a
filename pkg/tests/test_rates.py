import numpy as np
import pytest

from resbeam.rates import (
    BeamformingSolution,
    IrsConfiguration,
    leakage_eve,
    rate_user,
    resilience_metrics,
    sample_eve_leakage_max,
    sample_user_rate_min,
    sinr_user,
)
from resbeam.scenario import build_codebook

RNG = lambda seed=0: np.random.default_rng(seed)


def random_instance(rng, N=3, M=2, K=2, rank_one=True):
    H = rng.standard_normal((N + 1, M)) + 1j * rng.standard_normal((N + 1, M))
    theta = rng.uniform(0, 2 * np.pi, N)
    v = np.concatenate([np.exp(1j * theta), [1.0]]).conj()
    V = np.outer(v, v.conj())
    ws, Ws = [], []
    for _ in range(K):
        w = rng.standard_normal(M) + 1j * rng.standard_normal(M)
        ws.append(w)
        if rank_one:
            Ws.append(np.outer(w, w.conj()))
        else:
            A = rng.standard_normal((M, M)) + 1j * rng.standard_normal((M, M))
            Ws.append(A @ A.conj().T)
    return H, v, V, ws, Ws


class TestSinr:
    def test_unit_sinr_gives_unit_rate(self):
        # single user with signal power equal to the noise floor
        H = np.eye(2, 1).astype(complex)
        v = np.array([1.0, 1.0], complex)
        V = np.outer(v, v.conj())
        signal = np.real(np.trace(H.conj().T @ V @ H))  # power per unit W
        W = [np.eye(1, dtype=complex) / signal]          # scale to make it 1
        assert sinr_user(H, V, W, 0, 1.0) == pytest.approx(1.0, rel=1e-12)
        assert rate_user(H, V, W, 0, 1.0) == pytest.approx(1.0, rel=1e-12)

    def test_zero_beams_zero_sinr(self):
        H, v, V, ws, _ = random_instance(RNG(1))
        W = [np.zeros((2, 2), complex)] * 2
        assert sinr_user(H, V, W, 0, 1e-3) == 0.0

    def test_trace_form_matches_vector_form(self):
        rng = RNG(2)
        for _ in range(25):
            H, v, V, ws, Ws = random_instance(rng)
            u = np.conj(v) @ H
            p = np.array([np.abs(u @ w) ** 2 for w in ws])
            direct = p[0] / (p[1] + 0.7)
            assert sinr_user(H, V, Ws, 0, 0.7) == pytest.approx(direct, rel=1e-10)

    def test_scale_covariance(self):
        # scaling every covariance by c maps SINR through c*S/(c*I + noise)
        rng = RNG(3)
        H, v, V, ws, Ws = random_instance(rng)
        noise, c = 0.5, 3.0
        u = np.conj(v) @ H
        p = np.array([np.abs(u @ w) ** 2 for w in ws])
        expected = c * p[0] / (c * p[1] + noise)
        assert sinr_user(H, V, [c * W for W in Ws], 0, noise) == pytest.approx(
            expected, rel=1e-9)
        cap = leakage_eve(H, V, c * Ws[0], noise)
        assert 2.0 ** cap - 1.0 == pytest.approx(c * (2.0 ** leakage_eve(H, V, Ws[0], noise) - 1.0),
                                                 rel=1e-9)


class TestLeakage:
    def test_zero_beam(self):
        H, v, V, ws, Ws = random_instance(RNG(4))
        assert leakage_eve(H, V, np.zeros((2, 2), complex), 1e-3) == 0.0

    def test_threshold_boundary(self):
        # received power exactly at the cap noise*(2^R - 1) leaks exactly R
        H, v, V, ws, Ws = random_instance(RNG(5))
        noise, r_cap = 0.3, 0.5
        power = np.real(np.trace(H.conj().T @ V @ H @ Ws[0]))
        W = Ws[0] * (noise * (2.0 ** r_cap - 1.0) / power)
        assert leakage_eve(H, V, W, noise) == pytest.approx(r_cap, rel=1e-10)

    def test_matches_vector_form(self):
        rng = RNG(6)
        for _ in range(25):
            H, v, V, ws, Ws = random_instance(rng)
            direct = np.log2(1.0 + np.abs(np.conj(v) @ H @ ws[0]) ** 2 / 0.2)
            assert leakage_eve(H, V, Ws[0], 0.2) == pytest.approx(direct, rel=1e-10)


class TestResilienceMetrics:
    def test_outage_free_boundary(self):
        r_abs, r_ada = resilience_metrics([3.0, 3.0], [3.0, 3.0], [3.0, 3.0])
        assert (r_abs, r_ada) == (1.0, 1.0)

    def test_mean_of_ratios(self):
        r_abs, _ = resilience_metrics([1.5, 4.5], [1.0, 1.0], [3.0, 3.0])
        assert r_abs == pytest.approx(1.0)

    def test_direct_formula(self):
        r_abs, r_ada = resilience_metrics([1.5], [3.0], [3.0])
        assert (r_abs, r_ada) == (0.5, 1.0)

    def test_permutation_invariance(self):
        rng = RNG(7)
        t0 = rng.uniform(0.1, 5.0, 6)
        tn = rng.uniform(0.1, 5.0, 6)
        des = rng.uniform(1.0, 4.0, 6)
        perm = rng.permutation(6)
        assert resilience_metrics(t0, tn, des) == pytest.approx(
            resilience_metrics(t0[perm], tn[perm], des[perm]))

    def test_rejects_negative_rates(self):
        with pytest.raises(ValueError):
            resilience_metrics([-0.1], [1.0], [3.0])


class TestIrsConfiguration:
    def test_from_indices_valid(self):
        cb = build_codebook(4)
        irs = IrsConfiguration.from_indices([0, 1, 2, 3], cb)
        assert np.allclose(np.abs(irs.v), 1.0)
        assert irs.v[-1] == pytest.approx(1.0)
        assert np.allclose(np.diag(irs.V), 1.0)
        assert np.linalg.matrix_rank(irs.V, tol=1e-9) == 1

    def test_rejects_non_one_hot(self):
        cb = build_codebook(2)
        B = np.array([[0.5, 1.0, 1.0], [0.5, 0.0, 0.0]])
        v = B.T @ cb.phasors
        with pytest.raises(ValueError):
            IrsConfiguration(B=B, v=v, V=np.outer(v, v.conj()))

    def test_random_is_deterministic(self):
        cb = build_codebook(4)
        a = IrsConfiguration.random(6, cb, np.random.default_rng(3))
        b = IrsConfiguration.random(6, cb, np.random.default_rng(3))
        assert np.array_equal(a.B, b.B)


class TestSampledCertification:
    def test_min_rate_bounds_nominal(self):
        rng = RNG(8)
        H, v, V, ws, Ws = random_instance(rng)
        nominal = rate_user(H, V, [np.outer(w, w.conj()) for w in ws], 0, 1.0)
        low = sample_user_rate_min(H, 0.1, v, ws, 0, 1.0, 500, RNG(9))
        assert low <= nominal + 1e-9

    def test_leakage_max_bounds_nominal(self):
        rng = RNG(10)
        H, v, V, ws, Ws = random_instance(rng)
        nominal = leakage_eve(H, V, Ws[0], 1.0)
        high = sample_eve_leakage_max(H, 0.1, v, ws[0], 1.0, 500, RNG(11))
        assert high >= nominal - 1e-9

    def test_zero_radius_matches_exactly(self):
        rng = RNG(12)
        H, v, V, ws, Ws = random_instance(rng)
        nominal = rate_user(H, V, [np.outer(w, w.conj()) for w in ws], 0, 1.0)
        low = sample_user_rate_min(H, 0.0, v, ws, 0, 1.0, 50, RNG(13))
        assert low == pytest.approx(nominal, rel=1e-10)


class TestBeamformingSolution:
    def test_total_power(self):
        ws = [np.array([1.0, 0.0], complex), np.array([0.0, 2.0], complex)]
        sol = BeamformingSolution(W=[np.outer(w, w.conj()) for w in ws], w=ws,
                                  rank_ratio=[0.0, 0.0])
        assert sol.total_power() == pytest.approx(5.0)
