"""Tests for the event-driven particle simulator."""

import math
from functools import partial

import numpy as np
import pytest

from kacbath.core import KacParams, ThermostatSpec
from kacbath.particles import (
    CoupledTrajectory,
    JumpEvent,
    coupled_simulate,
    empirical_charfun,
    estimate_moments,
    gaussian_init,
    gaussian_pair_init,
    iter_events,
    simulate,
    simulate_states,
)
from kacbath.ratefit import fit_rate


GAUSS = ThermostatSpec.gaussian(1.0)


class TestJumpEvent:
    def test_pair_requires_ordered_indices(self):
        with pytest.raises(ValueError, match="i < j"):
            JumpEvent(0.5, "pair", 3, 1, 1.0, 0.0)

    def test_unknown_kind_rejected(self):
        with pytest.raises(ValueError, match="kind"):
            JumpEvent(0.5, "flip", 0, 1, 1.0, 0.0)

    def test_theta_range_enforced(self):
        with pytest.raises(ValueError, match="theta"):
            JumpEvent(0.5, "pair", 0, 1, 7.0, 0.0)

    def test_valid_events(self):
        JumpEvent(0.1, "pair", 0, 4, 3.1, 0.0)
        JumpEvent(0.1, "thermostat", 2, 2, 0.0, -1.7)


class TestIterEvents:
    def test_zero_rate_is_silent(self):
        p = KacParams(n_particles=3, lam=0.0, mu=0.0)
        assert list(iter_events(p, GAUSS, 10.0, np.random.default_rng(0))) == []

    def test_stream_is_ordered_and_in_range(self):
        p = KacParams(n_particles=4, lam=2.0, mu=1.0)
        evs = list(iter_events(p, GAUSS, 5.0, np.random.default_rng(1)))
        times = [e.time for e in evs]
        assert times == sorted(times)
        assert all(0.0 < e.time < 5.0 for e in evs)
        for e in evs:
            if e.kind == "pair":
                assert 0 <= e.i < e.j < 4
            else:
                assert 0 <= e.j < 4

    def test_channel_split_matches_gamma(self):
        # lam=3, mu=1 -> gamma=0.75 of events are pair collisions
        p = KacParams(n_particles=5, lam=3.0, mu=1.0)
        evs = list(iter_events(p, GAUSS, 250.0, np.random.default_rng(2)))
        frac = np.mean([e.kind == "pair" for e in evs])
        assert len(evs) > 3000
        assert abs(frac - 0.75) < 0.03

    def test_bath_draws_follow_the_bath_law(self):
        p = KacParams(n_particles=2, lam=0.0, mu=2.0)
        coin = ThermostatSpec.rademacher(1.0)
        evs = list(iter_events(p, coin, 100.0, np.random.default_rng(3)))
        assert evs and all(e.w in (-1.0, 1.0) for e in evs)


class TestSimulateBasics:
    def test_record_times_validation(self):
        p = KacParams(n_particles=2, lam=1.0, mu=1.0)
        init = partial(gaussian_init, 0.0, 1.0)
        with pytest.raises(ValueError):
            simulate(p, GAUSS, init, 1.0, np.array([]), seed=0)
        with pytest.raises(ValueError):
            simulate(p, GAUSS, init, 1.0, np.array([0.5, 0.5]), seed=0)
        with pytest.raises(ValueError):
            simulate(p, GAUSS, init, 1.0, np.array([0.5, 2.0]), seed=0)

    def test_zero_rates_freeze_the_state(self):
        p = KacParams(n_particles=3, lam=0.0, mu=0.0)
        init = partial(gaussian_init, 0.3, 1.0)
        st = simulate_states(p, GAUSS, init, 4.0, np.array([1.0, 4.0]), seed=4,
                             n_replicas=50)
        assert np.array_equal(st[0], st[1])

    def test_no_thermostat_conserves_energy_pathwise(self):
        # pair rotations preserve sum v^2 exactly, so with mu=0 each
        # replica's energy is a pathwise invariant
        p = KacParams(n_particles=5, lam=2.0, mu=0.0)
        init = partial(gaussian_init, 0.0, 1.0)
        st = simulate_states(p, GAUSS, init, 3.0, np.array([0.5, 3.0]), seed=5,
                             n_replicas=300)
        en = np.sum(st**2, axis=2)
        assert np.max(np.abs(en[1] - en[0])) < 1e-10

    def test_bitwise_determinism(self):
        p = KacParams(n_particles=4, lam=1.0, mu=1.0)
        init = partial(gaussian_init, 1.0, 1.0)
        rec = np.array([0.5, 1.5])
        a = simulate(p, GAUSS, init, 1.5, rec, seed=6, n_replicas=500)
        b = simulate(p, GAUSS, init, 1.5, rec, seed=6, n_replicas=500)
        for ra, rb in zip(a.records, b.records):
            assert np.array_equal(ra.first, rb.first)
            assert np.array_equal(ra.mixed, rb.mixed)
            assert ra.energy == rb.energy

    def test_results_independent_of_worker_count(self):
        # 5000 replicas span three blocks; block seeds are fixed by index
        p = KacParams(n_particles=3, lam=1.0, mu=1.0)
        init = partial(gaussian_init, 0.0, 1.0)
        rec = np.array([0.5, 1.0])
        a = simulate_states(p, GAUSS, init, 1.0, rec, seed=7, n_replicas=5000,
                            n_workers=1)
        b = simulate_states(p, GAUSS, init, 1.0, rec, seed=7, n_replicas=5000,
                            n_workers=3)
        assert np.array_equal(a, b)

    def test_exchangeability_of_marginal_moments(self):
        p = KacParams(n_particles=5, lam=1.0, mu=1.0)
        init = partial(gaussian_init, 1.0, 1.0)
        s = simulate(p, GAUSS, init, 0.5, np.array([0.5]), seed=8,
                     n_replicas=8000)
        r = s.records[0]
        spread = np.abs(r.first - r.first.mean())
        assert np.all(spread <= 4.0 * r.first_stderr)
        diag = np.diag(r.mixed)
        assert np.all(np.abs(diag - diag.mean()) <= 4.0 * np.diag(r.mixed_stderr))


class TestMomentEstimation:
    def test_hand_computed_moments(self):
        states = np.array([[1.0, 2.0], [3.0, 4.0]])
        r = estimate_moments(states, time=0.25)
        assert r.time == 0.25
        assert r.energy == 15.0
        assert r.energy_stderr == pytest.approx(10.0)
        assert np.allclose(r.first, [2.0, 3.0])
        assert np.allclose(r.mixed, [[5.0, 7.0], [7.0, 10.0]])

    def test_single_replica_has_zero_stderr(self):
        r = estimate_moments(np.array([[1.0, -1.0, 2.0]]))
        assert r.energy_stderr == 0.0
        assert np.all(r.first_stderr == 0.0)

    def test_rejects_bad_shapes(self):
        with pytest.raises(ValueError):
            estimate_moments(np.zeros((0, 3)))
        with pytest.raises(ValueError):
            estimate_moments(np.zeros(5))


class TestEmpiricalCharfun:
    def test_at_origin_is_one(self):
        states = np.random.default_rng(9).normal(size=(40, 3))
        assert empirical_charfun(states, np.zeros(3)) == 1.0 + 0.0j

    def test_single_state_is_exact_phase(self):
        states = np.array([[0.5, -1.0]])
        xi = np.array([2.0, 1.0])
        expected = np.exp(-1j * (0.5 * 2.0 - 1.0))
        assert empirical_charfun(states, xi) == pytest.approx(expected)

    def test_batch_of_probes(self):
        states = np.random.default_rng(10).normal(size=(100, 2))
        pts = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
        vals = empirical_charfun(states, pts)
        assert vals.shape == (3,)
        assert vals[0] == 1.0 + 0.0j

    def test_dim_mismatch_rejected(self):
        with pytest.raises(ValueError):
            empirical_charfun(np.zeros((5, 2)), np.zeros(3))

    def test_gaussian_pair_matches_closed_form(self):
        # (1/M) sum exp(-i v.xi) -> exp(-|xi|^2/2) for iid N(0,1); at
        # xi=(1,1) that is e^{-1}, and the noise scale is 1/sqrt(M)
        m = 100_000
        states = np.random.default_rng(11).normal(size=(m, 2))
        val = empirical_charfun(states, np.array([1.0, 1.0]))
        assert abs(val - math.exp(-1.0)) < 3.0 / math.sqrt(m)


class TestMomentRates:
    def test_energy_relaxes_at_half_mu(self):
        # E sum v^2 - N*Kg decays at mu/2 + O(MC error)
        p = KacParams(n_particles=10, lam=1.0, mu=1.0)
        init = partial(gaussian_init, 1.0, 1.0)
        rec = np.linspace(1.0, 8.0, 15)
        s = simulate(p, GAUSS, init, 8.0, rec, seed=11, n_replicas=10_000)
        fit = fit_rate(rec, s.energies(), s.energy_stderrs(), asymptote=10.0,
                       relaxation_time=2.0)
        assert abs(fit.rate - 0.5) <= 0.05

    def test_first_moment_rate(self):
        # E v_k decays at 2*lam + mu = 3
        p = KacParams(n_particles=10, lam=1.0, mu=1.0)
        init = partial(gaussian_init, 1.0, 1.0)
        rec = np.linspace(0.05, 1.2, 24)
        st = simulate_states(p, GAUSS, init, 1.2, rec, seed=21,
                             n_replicas=10_000)
        m = st.shape[1]
        fm = st.mean(axis=2)
        fit = fit_rate(rec, fm.mean(axis=1), fm.std(axis=1, ddof=1) / math.sqrt(m),
                       relaxation_time=1.0 / 3.0)
        assert abs(fit.rate - 3.0) <= 0.3

    def test_mixed_moment_rate(self):
        # E v_k v_l (k != l) decays at 4*lam + 2*mu - 2*lam/(N-1)
        p = KacParams(n_particles=10, lam=1.0, mu=1.0)
        expected = 4.0 + 2.0 - 2.0 / 9.0
        init = partial(gaussian_init, 1.0, 1.0)
        rec = np.linspace(0.05, 0.55, 21)
        st = simulate_states(p, GAUSS, init, 0.55, rec, seed=11,
                             n_replicas=10_000)
        m = st.shape[1]
        off = ~np.eye(10, dtype=bool)
        od = np.einsum("rmi,rmj->rmij", st, st)[:, :, off].mean(axis=2)
        fit = fit_rate(rec, od.mean(axis=1), od.std(axis=1, ddof=1) / math.sqrt(m),
                       relaxation_time=1.0 / expected)
        assert abs(fit.rate - expected) <= 0.1 * expected


class TestStationarityAndBalance:
    def test_gaussian_bath_invariant_law_is_stationary(self):
        # with a gaussian bath the product Maxwellian is the steady state;
        # every tracked moment must stay flat to Monte Carlo accuracy
        p = KacParams(n_particles=2, lam=1.0, mu=1.0)
        init = partial(gaussian_init, 0.0, 1.0)
        rec = np.linspace(0.5, 5.0, 10)
        s = simulate(p, GAUSS, init, 5.0, rec, seed=17, n_replicas=5000)
        for r in s.records:
            assert abs(r.energy - 2.0) <= 3.0 * r.energy_stderr
            assert np.all(np.abs(r.first) <= 3.0 * r.first_stderr)
            assert abs(r.mixed[0, 1]) <= 3.0 * r.mixed_stderr[0, 1]

    @pytest.mark.parametrize(
        "g",
        [
            ThermostatSpec.gaussian(1.0),
            ThermostatSpec.uniform(math.sqrt(3.0)),
            ThermostatSpec.rademacher(1.0),
            ThermostatSpec.two_point(2.0, -0.5),
        ],
        ids=["gaussian", "uniform", "rademacher", "two_point"],
    )
    def test_energy_equilibrates_to_bath_level(self, g):
        p = KacParams(n_particles=4, lam=0.5, mu=1.0)
        init = partial(gaussian_init, 0.5, 1.2)
        s = simulate(p, g, init, 16.0, np.array([16.0]), seed=13,
                     n_replicas=3000)
        r = s.records[0]
        target = p.n_particles * g.second_moment
        assert abs(r.energy - target) <= 3.0 * r.energy_stderr

    def test_degenerate_bath_drains_all_energy(self):
        # Kg=0: the mean energy and its stderr shrink together (pure
        # multiplicative decay), so a z-score test is vacuous; assert the
        # drain itself
        p = KacParams(n_particles=4, lam=0.5, mu=1.0)
        init = partial(gaussian_init, 0.5, 1.2)
        s = simulate(p, ThermostatSpec.dirac_zero(), init, 16.0,
                     np.array([8.0, 16.0]), seed=13, n_replicas=3000)
        assert s.records[1].energy < s.records[0].energy
        assert s.records[1].energy < 5e-3


class TestCoupled:
    def test_trajectory_validation(self):
        with pytest.raises(ValueError):
            CoupledTrajectory(np.array([1.0, 0.5]), np.array([1.0, 1.0]),
                              np.zeros(2), 10)
        with pytest.raises(ValueError):
            CoupledTrajectory(np.array([0.5, 1.0]), np.array([1.0, -1.0]),
                              np.zeros(2), 10)

    def test_identical_chains_never_separate(self):
        p = KacParams(n_particles=3, lam=1.0, mu=1.0)
        same = partial(gaussian_pair_init, 0.3, 0.3, 0.0)
        c = coupled_simulate(p, GAUSS, same, 1.0, np.array([0.5, 1.0]), seed=9,
                             n_replicas=100)
        assert c.delta_sq.max() == 0.0

    def test_pair_collisions_preserve_the_gap(self):
        # without a thermostat the shared rotations act identically on the
        # difference vector's length
        p = KacParams(n_particles=4, lam=3.0, mu=0.0)
        pinit = partial(gaussian_pair_init, 0.5, -0.5, 1.0)
        c = coupled_simulate(p, GAUSS, pinit, 2.0, np.array([0.01, 2.0]),
                             seed=10, n_replicas=400)
        assert abs(c.delta_sq[1] - c.delta_sq[0]) < 1e-10

    def test_worker_count_irrelevant(self):
        p = KacParams(n_particles=3, lam=1.0, mu=1.0)
        pinit = partial(gaussian_pair_init, 0.5, -0.5, 1.0)
        rec = np.array([0.5, 1.0])
        c1 = coupled_simulate(p, GAUSS, pinit, 1.0, rec, seed=5,
                              n_replicas=5000, n_workers=1)
        c2 = coupled_simulate(p, GAUSS, pinit, 1.0, rec, seed=5,
                              n_replicas=5000, n_workers=2)
        assert np.array_equal(c1.delta_sq, c2.delta_sq)

    @pytest.mark.parametrize("lam", [0.0, 5.0], ids=["lam0", "lam5"])
    def test_gap_contracts_at_mu_regardless_of_lam(self, lam):
        p = KacParams(n_particles=10, lam=lam, mu=1.0)
        pinit = partial(gaussian_pair_init, 1.0, -1.0, 1.0)
        rec = np.linspace(0.25, 6.0, 24)
        c = coupled_simulate(p, GAUSS, pinit, 6.0, rec, seed=7,
                             n_replicas=10_000)
        fit = fit_rate(c.times, c.delta_sq, c.delta_sq_stderr,
                       relaxation_time=1.0)
        assert abs(fit.rate - 1.0) <= 0.05
