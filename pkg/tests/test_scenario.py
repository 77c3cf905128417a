import numpy as np
import pytest

from resbeam.scenario import (
    Scenario,
    build_codebook,
    dbm_to_watts,
    default_paper_scenario,
    desk_scenario,
    make_layout,
    stream,
    watts_to_dbm,
)


class TestDefaults:
    def test_paper_power_is_one_watt(self):
        sc = default_paper_scenario()
        assert sc.P_max == pytest.approx(1.0, rel=1e-12)

    def test_paper_noise_level(self):
        sc = default_paper_scenario()
        assert np.allclose(sc.noise_user, 1e-12, rtol=1e-12)
        assert np.allclose(sc.noise_eve, 1e-12, rtol=1e-12)

    def test_paper_uncertainty_radii(self):
        sc = default_paper_scenario()
        assert np.all(sc.kappa_user == 0.15)
        assert np.all(sc.kappa_eve == 0.2)

    def test_paper_geometry_and_targets(self):
        sc = default_paper_scenario()
        assert (sc.M, sc.K, sc.J) == (6, 4, 2)
        assert (sc.D, sc.r, sc.r_e) == (40.0, 5.0, 20.0)
        assert (sc.alpha_bi, sc.alpha_bu, sc.alpha_be) == (2.2, 3.6, 3.6)
        assert (sc.alpha_iu, sc.alpha_ie) == (2.2, 2.2)
        assert (sc.beta_bi, sc.beta_bu, sc.beta_be, sc.beta_iu, sc.beta_ie) == (3, 1, 1, 3, 3)
        assert np.all(sc.R_leak == 0.5)
        assert np.all(sc.R_des == 3.0)


class TestUnits:
    def test_dbm_round_trip(self):
        for dbm in (-90.0, 0.0, 17.5, 30.0):
            assert watts_to_dbm(dbm_to_watts(dbm)) == pytest.approx(dbm, abs=1e-12)

    def test_30_dbm_is_one_watt(self):
        assert dbm_to_watts(30.0) == pytest.approx(1.0, rel=1e-12)


class TestValidation:
    def test_rejects_bad_counts(self):
        with pytest.raises(ValueError):
            Scenario(M=0)

    def test_rejects_kappa_out_of_range(self):
        with pytest.raises(ValueError):
            Scenario(kappa_user=1.0)

    def test_rejects_bad_tolerance(self):
        with pytest.raises(ValueError):
            Scenario(mu=0.0)

    def test_scalar_broadcast(self):
        sc = Scenario(K=3, noise_user=2e-12)
        assert sc.noise_user.shape == (3,)
        assert np.all(sc.noise_user == 2e-12)

    def test_leakage_matrix_shapes(self):
        sc = Scenario(K=2, J=3, R_leak=np.arange(6, dtype=float))
        assert sc.R_leak.shape == (2, 3)


class TestCodebook:
    def test_two_levels(self):
        cb = build_codebook(2)
        assert np.allclose(cb.levels, [0.0, np.pi])

    def test_four_levels(self):
        cb = build_codebook(4)
        assert np.allclose(cb.levels, [0.0, np.pi / 2, np.pi, 3 * np.pi / 2])

    def test_roots_of_unity_cancel(self):
        cb = build_codebook(8)
        assert len(set(np.round(cb.levels, 12))) == 8
        assert abs(cb.phasors.sum()) < 1e-12

    def test_unit_modulus(self):
        cb = build_codebook(5)
        assert np.allclose(np.abs(cb.phasors), 1.0)

    def test_too_few_levels(self):
        with pytest.raises(ValueError):
            build_codebook(1)

    def test_quantize_wraps_around(self):
        cb = build_codebook(4)
        assert cb.quantize(2 * np.pi - 0.01) == 0
        assert cb.quantize(np.pi / 2 + 0.1) == 1


class TestLayout:
    def test_single_user_distance(self):
        sc = Scenario(K=1)
        layout = make_layout(sc)
        assert layout.irs_point_distance(layout.users[0]) == pytest.approx(sc.r)

    def test_all_user_distances_equal_radius(self):
        sc = Scenario(K=4, r=5.0)
        layout = make_layout(sc)
        for k in range(4):
            assert layout.irs_point_distance(layout.users[k]) == pytest.approx(5.0)

    def test_bs_irs_distance(self):
        sc = Scenario(D=40.0)
        layout = make_layout(sc)
        assert layout.bs_irs_distance() == pytest.approx(40.0)

    def test_pairwise_distances_positive(self):
        sc = Scenario()
        layout = make_layout(sc)
        points = [layout.bs, layout.irs] + list(layout.users) + list(layout.eves)
        for i in range(len(points)):
            for j in range(i + 1, len(points)):
                assert np.linalg.norm(points[i] - points[j]) > 0

    def test_random_placement_deterministic(self):
        sc = Scenario(random_placement=True, seed=5)
        a = make_layout(sc)
        b = make_layout(sc)
        assert np.array_equal(a.users, b.users)
        assert np.array_equal(a.eves, b.eves)


class TestConfigRoundTrip:
    def test_round_trip_bitwise(self):
        sc = desk_scenario(seed=9).replace(kappa_user=np.array([0.1, 0.2]))
        text = sc.to_config_text()
        back = Scenario.from_config_text(text)
        assert back.to_config_text() == text

    def test_unknown_key_rejected(self):
        with pytest.raises(ValueError, match="unknown key"):
            Scenario.from_config_text("bogus = 3\n")

    def test_comments_and_blanks_ignored(self):
        sc = Scenario.from_config_text("# hi\n\nM = 4  # antennas\n")
        assert sc.M == 4


class TestStreams:
    def test_identical_keys_reproduce(self):
        a = stream(3, 1, 2).standard_normal(8)
        b = stream(3, 1, 2).standard_normal(8)
        assert np.array_equal(a, b)

    def test_distinct_keys_differ(self):
        a = stream(3, 1, 2).standard_normal(8)
        b = stream(3, 1, 3).standard_normal(8)
        assert not np.array_equal(a, b)
