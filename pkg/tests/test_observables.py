"""Reduced density matrix, derived observables, trajectory IO, Rabi fit."""

import math

import numpy as np
import pytest
from numpy.testing import assert_allclose

from qdnems.constants import HBAR_MEV_NS
from qdnems.electron import ElectronState
from qdnems.fockbasis import enumerate_basis
from qdnems.observables import (
    FitFailure,
    ObservableSet,
    TrajectoryRecord,
    fit_rabi,
    load_trajectory,
    rabi_model,
    save_trajectory,
)

from test_fockbasis import make_state, make_table

from conftest import random_state


@pytest.fixture(scope="module")
def basis():
    el = [
        make_state(0, energy=0.04),
        make_state(-1, energy=0.1),
        make_state(1, energy=0.1),
    ]
    table = make_table([0.008, 0.011])
    return enumerate_basis(el, table, size_cap=60, n_max=6)


@pytest.fixture(scope="module")
def obs(basis):
    return ObservableSet(basis)


def amp_state(basis, parts):
    """Normalized state from (kappa_idx, config, amplitude) triples."""
    psi = np.zeros(basis.dim, dtype=complex)
    for k, cfg, a in parts:
        psi[basis.index_of_config(k, cfg)] = a
    return psi / np.linalg.norm(psi)


class TestReducedMatrix:
    def test_product_state_pure(self, basis, obs):
        psi = amp_state(basis, [(2, [0, 0], 1.0)])
        rho = obs.reduce_electron(psi)
        rho.validate()
        assert_allclose(rho.purity, 1.0, atol=1e-12)
        assert_allclose(obs.angular_momentum(rho), 1.0, atol=1e-12)

    def test_two_branch_entangled(self, basis, obs):
        # equal branches on distinct bath configs: diagonal rho, purity 1/2
        psi = amp_state(basis, [(2, [0, 0], 1.0), (1, [1, 0], 1.0)])
        rho = obs.reduce_electron(psi)
        rho.validate()
        assert_allclose(rho.purity, 0.5, atol=1e-12)
        off = rho.matrix - np.diag(np.diag(rho.matrix))
        assert np.max(np.abs(off)) < 1e-14
        assert_allclose(obs.angular_momentum(rho), 0.0, atol=1e-12)

    def test_same_branch_coherent(self, basis, obs):
        psi = amp_state(basis, [(2, [0, 0], 1.0), (1, [0, 0], 1.0)])
        rho = obs.reduce_electron(psi)
        assert_allclose(rho.purity, 1.0, atol=1e-12)
        modulus, phase = obs.bloch_coherence(rho)
        assert_allclose(modulus, 0.5, atol=1e-12)
        assert_allclose(phase, 0.0, atol=1e-12)

    def test_pole_phase_undefined(self, basis, obs):
        psi = amp_state(basis, [(2, [0, 0], 1.0)])
        modulus, phase = obs.bloch_coherence(obs.reduce_electron(psi))
        assert modulus == 0.0
        assert math.isnan(phase)

    def test_random_state_valid(self, basis, obs, rng):
        rho = obs.reduce_electron(random_state(rng, basis.dim))
        rho.validate()
        assert rho.purity <= 1.0 + 1e-10
        assert rho.purity >= 1.0 / len(basis.electron_states) - 1e-10


class TestInversionAmplitude:
    def test_plus_one(self, basis, obs):
        psi = amp_state(basis, [(2, [0, 0], 1.0)])
        assert_allclose(obs.inversion_amplitude(psi), 1.0, atol=1e-14)

    def test_no_pm_weight(self, basis, obs):
        psi = amp_state(basis, [(0, [0, 0], 1.0)])
        assert obs.inversion_amplitude(psi) == 0.0

    def test_equals_l_el_on_pm_subspace(self, basis, obs, rng):
        # a state with support only on (l, nu) = (+-1, 1) has W = L_el
        parts = []
        for k in (1, 2):
            for cfg in ([0, 0], [1, 0], [0, 1]):
                parts.append((k, cfg, rng.standard_normal() + 1j * rng.standard_normal()))
        psi = amp_state(basis, parts)
        rho = obs.reduce_electron(psi)
        assert_allclose(
            obs.inversion_amplitude(psi), obs.angular_momentum(rho), atol=1e-12
        )


class TestModeOccupations:
    def test_fock_state(self, basis, obs):
        psi = amp_state(basis, [(0, [2, 1], 1.0)])
        means, variances = obs.mode_occupations(psi)
        assert_allclose(means, [2.0, 1.0], atol=1e-14)
        assert_allclose(variances, [0.0, 0.0], atol=1e-14)

    def test_superposition(self, basis, obs):
        psi = amp_state(basis, [(0, [0, 0], 1.0), (0, [2, 0], 1.0)])
        means, variances = obs.mode_occupations(psi)
        assert_allclose(means[0], 1.0, atol=1e-14)
        assert_allclose(variances[0], 1.0, atol=1e-14)


class TestEnergyAndAutocorrelation:
    def test_initial_point(self, basis, obs):
        psi = amp_state(basis, [(2, [0, 0], 1.0)])
        rho = obs.reduce_electron(psi)
        assert_allclose(obs.electron_energy(rho), 0.1, atol=1e-14)
        assert_allclose(obs.autocorrelation(psi, psi), 1.0, atol=1e-14)

    def test_cauchy_schwarz(self, basis, obs, rng):
        a = random_state(rng, basis.dim)
        b = random_state(rng, basis.dim)
        assert abs(obs.autocorrelation(a, b)) <= 1.0 + 1e-12


class TestTrajectoryIO:
    def make_record(self, n_times=11, n_modes=2):
        t = np.linspace(0.0, 10.0, n_times)
        rec = TrajectoryRecord(
            times_ns=t,
            l_el=np.cos(0.3 * t),
            purity=np.linspace(1.0, 0.6, n_times),
            e_el_mev=np.full(n_times, 0.1),
            xi_abs=np.concatenate([[1.0], np.full(n_times - 1, 0.4)]),
            w_inversion=np.cos(0.3 * t),
            rho_pm_abs=np.full(n_times, 0.2),
            rho_pm_phase_over_pi=np.zeros(n_times),
            mode_occupations=np.tile([0.1, 0.2], (n_times, 1)),
        )
        rec.validate()
        return rec

    def test_header_names(self):
        rec = self.make_record()
        assert rec.column_names() == [
            "t_ns", "L_el", "purity", "E_el_meV", "xi_abs", "W",
            "rho_pm_abs", "rho_pm_phase_over_pi", "n_1", "n_2",
        ]

    def test_roundtrip(self, tmp_path):
        rec = self.make_record()
        path = tmp_path / "traj.csv"
        save_trajectory(rec, str(path))
        back = load_trajectory(str(path))
        assert_allclose(back.l_el, rec.l_el, rtol=1e-10)
        assert_allclose(back.mode_occupations, rec.mode_occupations, rtol=1e-10)

    def test_deterministic_bytes(self, tmp_path):
        rec = self.make_record()
        p1, p2 = tmp_path / "a.csv", tmp_path / "b.csv"
        h1 = save_trajectory(rec, str(p1))
        h2 = save_trajectory(rec, str(p2))
        assert h1 == h2
        assert p1.read_bytes() == p2.read_bytes()


class TestRabiModel:
    def test_degenerate_period(self):
        g = 5e-5
        period = math.pi * HBAR_MEV_NS / g
        assert_allclose(period, 41.35, atol=0.05)
        t = np.array([0.0, period / 2.0, period])
        assert_allclose(rabi_model(t, 0.0, g), [1.0, -1.0, 1.0], atol=1e-12)

    def test_decoupled_limit(self):
        t = np.linspace(0.0, 100.0, 301)
        vals = rabi_model(t, 5.0, 1e-7)
        assert np.min(vals) > 1.0 - 1e-5

    def test_detuning_reduces_contrast(self):
        t = np.linspace(0.0, 500.0, 2001)
        full = rabi_model(t, 0.0, 5e-5)
        shallow = rabi_model(t, 1.0, 5e-5)
        assert np.min(full) < -0.99
        assert np.min(shallow) > 0.9


class TestFitRabi:
    def test_roundtrip_accuracy(self):
        g = 5e-5
        t = np.arange(0.0, 120.0, 0.25)
        trace = np.cos(2.0 * g / HBAR_MEV_NS * t)
        fit = fit_rabi(t, trace)
        assert abs(fit.coupling_mev - g) / g < 1e-3
        assert abs(fit.period_ns - math.pi * HBAR_MEV_NS / g) < 0.05

    def test_flat_trace_fails(self):
        t = np.arange(0.0, 100.0, 0.5)
        with pytest.raises(FitFailure):
            fit_rabi(t, np.ones_like(t))

    def test_too_few_periods_fails(self):
        g = 5e-5
        t = np.arange(0.0, 30.0, 0.25)  # under one period
        trace = np.cos(2.0 * g / HBAR_MEV_NS * t)
        with pytest.raises(FitFailure):
            fit_rabi(t, trace)
