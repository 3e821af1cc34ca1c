"""Parameter objects, bath laws, and collision kinematics."""

import numpy as np
import pytest

from kacbath.core import (
    KacParams,
    MomentRecord,
    ThermostatSpec,
    ks_statistic,
    pair_collision,
    thermostat_collision,
)


class TestKacParams:
    def test_gamma_balanced_rates(self):
        p = KacParams(lam=1.0, mu=1.0, n_particles=2)
        assert p.gamma == 0.5

    def test_gamma_general(self):
        p = KacParams(lam=0.25, mu=1.0, n_particles=2)
        assert np.isclose(p.gamma, 0.2)

    def test_gamma_frozen_chain_is_zero(self):
        assert KacParams(lam=0.0, mu=0.0, n_particles=3).gamma == 0.0

    def test_total_rate(self):
        p = KacParams(lam=2.0, mu=1.0, n_particles=10)
        assert p.total_rate == 30.0

    def test_rejects_negative_rates(self):
        with pytest.raises(ValueError):
            KacParams(lam=-1.0, mu=1.0, n_particles=2)
        with pytest.raises(ValueError):
            KacParams(lam=1.0, mu=-0.5, n_particles=2)

    def test_rejects_bad_particle_count(self):
        with pytest.raises(ValueError):
            KacParams(lam=1.0, mu=1.0, n_particles=0)
        with pytest.raises(ValueError):
            KacParams(lam=1.0, mu=1.0, n_particles=2.5)

    def test_single_particle_needs_no_pair_rate(self):
        with pytest.raises(ValueError):
            KacParams(lam=1.0, mu=1.0, n_particles=1)
        p = KacParams(lam=0.0, mu=1.0, n_particles=1)
        assert p.gamma == 0.0


class TestCollisions:
    def test_pair_collision_preserves_energy(self):
        rng = np.random.default_rng(7)
        v_i, v_j = rng.normal(size=100), rng.normal(size=100)
        theta = rng.uniform(0.0, 2.0 * np.pi, size=100)
        a, b = pair_collision(v_i, v_j, theta)
        np.testing.assert_allclose(a**2 + b**2, v_i**2 + v_j**2, rtol=1e-12)

    def test_pair_collision_identity_at_zero_angle(self):
        a, b = pair_collision(1.5, -2.0, 0.0)
        assert a == 1.5 and b == -2.0

    def test_pair_collision_quarter_turn(self):
        a, b = pair_collision(1.0, 2.0, np.pi / 2.0)
        assert np.isclose(a, 2.0) and np.isclose(b, -1.0)

    def test_thermostat_collision_energy_bookkeeping(self):
        rng = np.random.default_rng(8)
        v, w = rng.normal(size=50), rng.normal(size=50)
        theta = rng.uniform(0.0, 2.0 * np.pi, size=50)
        vp, wp = thermostat_collision(v, w, theta)
        np.testing.assert_allclose(vp**2 + wp**2, v**2 + w**2, rtol=1e-12)

    def test_thermostat_collision_full_swap(self):
        vp, _ = thermostat_collision(3.0, 0.5, np.pi / 2.0)
        assert np.isclose(vp, 0.5)


class TestThermostatSpec:
    def test_dirac_zero_second_moment(self):
        assert ThermostatSpec.dirac_zero().second_moment == 0.0

    def test_rademacher_sample_second_moment(self):
        g = ThermostatSpec.rademacher(scale=1.0)
        rng = np.random.default_rng(42)
        w = g.sample(rng, size=1_000_000)
        assert abs(np.mean(w**2) - 1.0) < 0.005

    def test_uniform_sample_second_moment(self):
        # analytic m2 = half_width^2 / 3 = 1 at half_width = sqrt(3)
        g = ThermostatSpec.uniform(half_width=np.sqrt(3.0))
        assert np.isclose(g.second_moment, 1.0)
        rng = np.random.default_rng(43)
        w = g.sample(rng, size=1_000_000)
        assert abs(np.mean(w**2) - 1.0) < 0.01

    def test_gaussian_moments(self):
        g = ThermostatSpec.gaussian(sigma=2.0)
        assert np.isclose(g.second_moment, 4.0)
        assert np.isclose(g.fourth_moment, 48.0)

    def test_two_point_is_centered(self):
        g = ThermostatSpec.two_point(a=2.0, b=-0.5)
        atoms = dict(g.atoms())
        mean = sum(v * p for v, p in atoms.items())
        assert abs(mean) < 1e-15
        assert np.isclose(g.second_moment, sum(v**2 * p for v, p in atoms.items()))

    def test_two_point_needs_opposite_signs(self):
        with pytest.raises(ValueError):
            ThermostatSpec.two_point(a=1.0, b=2.0)

    def test_rejects_nonpositive_shape(self):
        with pytest.raises(ValueError):
            ThermostatSpec.gaussian(sigma=0.0)
        with pytest.raises(ValueError):
            ThermostatSpec.uniform(half_width=-1.0)

    def test_charfun_at_zero_is_one(self):
        for g in _all_kinds():
            assert g.charfun(0.0) == pytest.approx(1.0)

    def test_charfun_closed_forms(self):
        xi = np.linspace(-4.0, 4.0, 41)
        np.testing.assert_allclose(
            ThermostatSpec.gaussian(1.0).charfun(xi), np.exp(-0.5 * xi**2), atol=1e-14
        )
        np.testing.assert_allclose(
            ThermostatSpec.rademacher(1.5).charfun(xi), np.cos(1.5 * xi), atol=1e-14
        )
        np.testing.assert_allclose(
            ThermostatSpec.dirac_zero().charfun(xi), np.ones_like(xi), atol=0.0
        )

    def test_charfun_matches_sample_average(self):
        # transform of the empirical law converges to the closed form
        rng = np.random.default_rng(11)
        xi = np.array([0.3, 1.1, 2.4])
        for g in _all_kinds():
            w = g.sample(rng, size=200_000)
            emp = np.exp(-1j * np.outer(w, xi)).mean(axis=0)
            np.testing.assert_allclose(emp, g.charfun(xi), atol=0.01)

    def test_sampler_matches_law_ks(self):
        rng = np.random.default_rng(12)
        for g in _all_kinds():
            d = ks_statistic(g.sample(rng, size=100_000), g)
            assert d < 0.01, f"{g.kind}: KS = {d}"

    def test_sample_fourth_moments(self):
        rng = np.random.default_rng(13)
        for g in _all_kinds():
            w = g.sample(rng, size=400_000)
            assert abs(np.mean(w**4) - g.fourth_moment) < 0.05 * (1.0 + g.fourth_moment)

    def test_cdf_monotone(self):
        x = np.linspace(-5.0, 5.0, 401)
        for g in _all_kinds():
            f = g.cdf(x)
            assert np.all(np.diff(f) >= -1e-15)
            assert f[0] == pytest.approx(0.0, abs=1e-6)
            assert f[-1] == pytest.approx(1.0, abs=1e-6)

    def test_unknown_kind_rejected(self):
        with pytest.raises(ValueError):
            ThermostatSpec("levy", (), 1.0, 1.0)


def _all_kinds():
    return (
        ThermostatSpec.gaussian(1.0),
        ThermostatSpec.uniform(half_width=np.sqrt(3.0)),
        ThermostatSpec.rademacher(1.0),
        ThermostatSpec.two_point(a=2.0, b=-0.5),
        ThermostatSpec.dirac_zero(),
    )


class TestKsStatistic:
    def test_exact_atoms(self):
        # empirical law == target law on the atoms: statistic must be tiny
        g = ThermostatSpec.rademacher(1.0)
        samples = np.array([-1.0, 1.0] * 500)
        assert ks_statistic(samples, g) < 1e-12

    def test_detects_wrong_law(self):
        g = ThermostatSpec.gaussian(1.0)
        rng = np.random.default_rng(3)
        bad = rng.normal(0.0, 2.0, size=10_000)
        assert ks_statistic(bad, g) > 0.05


class TestMomentRecord:
    def test_shape_validation(self):
        with pytest.raises(ValueError):
            MomentRecord(
                time=0.0,
                energy=1.0,
                energy_stderr=0.0,
                first=np.zeros(3),
                first_stderr=np.zeros(2),
                mixed=np.zeros((3, 3)),
                mixed_stderr=np.zeros((3, 3)),
            )

    def test_offdiagonal_mean(self):
        mixed = np.array([[2.0, 0.5], [0.5, 2.0]])
        rec = MomentRecord(
            time=0.0,
            energy=4.0,
            energy_stderr=0.0,
            first=np.zeros(2),
            first_stderr=np.zeros(2),
            mixed=mixed,
            mixed_stderr=np.zeros((2, 2)),
        )
        assert rec.mixed_offdiag_mean() == pytest.approx(0.5)
