"""Thermal bath realization and ensemble averaging."""

import math

import numpy as np
import pytest
from numpy.testing import assert_allclose

from qdnems.chebyshev import estimate_bounds, plan_step
from qdnems.constants import KB_MEV_PER_MK
from qdnems.fockbasis import enumerate_basis, thermal_occupation
from qdnems.thermal import (
    CoverageError,
    ThermalFieldSpec,
    build_initial_state,
    enumerate_thermal_states,
    run_ensemble,
)

from test_fockbasis import make_state, make_table, make_tensor


@pytest.fixture(scope="module")
def table8():
    # eight quanta in the range of the platform's lowest modes
    return make_table([0.0078, 0.0091, 0.0116, 0.0153, 0.0198, 0.0261, 0.0331, 0.0414])


class TestEnumeration:
    def test_weights_sum_to_coverage(self, table8):
        ens = enumerate_thermal_states(
            table8, ThermalFieldSpec(temperature_mk=100.0, p_cov=0.9)
        )
        total = sum(m.weight for m in ens.members)
        assert_allclose(total, ens.coverage, rtol=1e-12)
        assert ens.coverage >= 0.9
        assert ens.discarded_tail == pytest.approx(1.0 - total)

    def test_descending_weights(self, table8):
        ens = enumerate_thermal_states(
            table8, ThermalFieldSpec(temperature_mk=100.0, p_cov=0.8)
        )
        ws = [m.weight for m in ens.members]
        assert all(a >= b - 1e-15 for a, b in zip(ws, ws[1:]))

    def test_cold_limit_vacuum_dominates(self, table8):
        # hbar w1 / kT >= 10 pushes the vacuum weight past 0.99
        t_mk = table8.homega_mev[0] / (10.0 * KB_MEV_PER_MK)
        ens = enumerate_thermal_states(
            table8, ThermalFieldSpec(temperature_mk=t_mk, p_cov=0.99)
        )
        assert ens.members[0].config == (0,) * 8
        assert ens.members[0].weight >= 0.99

    def test_single_mode_geometric(self):
        table = make_table([0.01])
        t_mk = 120.0
        x = math.exp(-0.01 / (KB_MEV_PER_MK * t_mk))
        ens = enumerate_thermal_states(
            table, ThermalFieldSpec(temperature_mk=t_mk, p_cov=0.999, n_max=60)
        )
        for m in ens.members[:6]:
            n = m.config[0]
            assert_allclose(m.weight, (1.0 - x) * x**n, rtol=1e-12)

    def test_mean_occupations_match_bose_einstein(self, table8):
        ens = enumerate_thermal_states(
            table8, ThermalFieldSpec(temperature_mk=100.0, p_cov=0.99)
        )
        nbar = np.asarray(
            [thermal_occupation(hw, 100.0) for hw in table8.homega_mev]
        )
        means = ens.mean_occupations()
        assert np.all(np.abs(means - nbar) <= np.maximum(0.02 * nbar, 0.02))

    def test_unreachable_coverage(self, table8):
        with pytest.raises(CoverageError):
            enumerate_thermal_states(
                table8,
                ThermalFieldSpec(temperature_mk=4000.0, p_cov=0.999999, n_max=2),
            )

    def test_weighted_sampling_reproducible(self, table8):
        spec = ThermalFieldSpec(
            temperature_mk=100.0, policy="weighted-sample", sample_count=50, seed=11
        )
        a = enumerate_thermal_states(table8, spec)
        b = enumerate_thermal_states(table8, spec)
        assert [m.config for m in a.members] == [m.config for m in b.members]

    def test_weighted_sampling_statistics(self, table8):
        spec = ThermalFieldSpec(
            temperature_mk=100.0, policy="weighted-sample",
            sample_count=4000, seed=3,
        )
        ens = enumerate_thermal_states(table8, spec)
        nbar = thermal_occupation(table8.homega_mev[0], 100.0)
        assert abs(ens.mean_occupations()[0] - nbar) < 0.1


def tiny_system(homega=0.0078, g=5e-5, n_max=4):
    el = [make_state(-1, energy=0.1), make_state(1, energy=0.1)]
    table = make_table([homega])
    tensor = make_tensor(el, ["odd"], {(-1, 0, 1): 1j * g})
    basis = enumerate_basis(el, table, size_cap=2 * (n_max + 1), n_max=n_max)
    from qdnems.fockbasis import assemble_hamiltonian

    h = assemble_hamiltonian(basis, tensor)
    bounds = estimate_bounds(h)
    plan = plan_step(bounds, 0.25, 5e-5)
    return el, table, basis, h, bounds, plan


class TestInitialState:
    def test_product_state_observables(self):
        el, table, basis, h, bounds, plan = tiny_system()
        psi = build_initial_state(basis, 1, 1, (2,))
        from qdnems.observables import ObservableSet

        obs = ObservableSet(basis)
        rho = obs.reduce_electron(psi)
        assert_allclose(obs.angular_momentum(rho), 1.0, atol=1e-14)
        assert_allclose(rho.purity, 1.0, atol=1e-14)
        means, _ = obs.mode_occupations(psi)
        assert_allclose(means, [2.0], atol=1e-14)

    def test_mirrored_initial_state(self):
        el, table, basis, h, bounds, plan = tiny_system()
        psi = build_initial_state(basis, -1, 1, (0,))
        from qdnems.observables import ObservableSet

        obs = ObservableSet(basis)
        assert_allclose(
            obs.angular_momentum(obs.reduce_electron(psi)), -1.0, atol=1e-14
        )

    def test_outside_basis(self):
        el, table, basis, h, bounds, plan = tiny_system(n_max=2)
        from qdnems.fockbasis import BasisError

        with pytest.raises(BasisError):
            build_initial_state(basis, 1, 1, (7,))


class TestEnsembleAveraging:
    def run(self, ens, t_final=10.0, **kwargs):
        el, table, basis, h, bounds, plan = tiny_system()
        return run_ensemble(
            basis, h, bounds, plan, None, ens, initial_l=1, initial_nu=1,
            t_final_ns=t_final, observe_stride=4, **kwargs
        )

    def ensemble_of(self, configs, weights):
        from qdnems.thermal import EnsembleMember, ThermalEnsemble

        return ThermalEnsemble(
            members=[
                EnsembleMember(config=c, weight=w) for c, w in zip(configs, weights)
            ],
            coverage=sum(weights),
            max_coverage=1.0,
            temperature_mk=50.0,
            policy="exhaustive-top-p",
        )

    def test_single_member_identity(self):
        ens1 = self.ensemble_of([(0,)], [1.0])
        res1 = self.run(ens1, keep_members=True)
        assert_allclose(res1.record.l_el, res1.member_records[0].l_el, atol=1e-14)

    def test_weight_normalization_invariance(self):
        ens_a = self.ensemble_of([(0,), (1,)], [0.7, 0.2])
        ens_b = self.ensemble_of([(0,), (1,)], [0.35, 0.1])
        ra = self.run(ens_a)
        rb = self.run(ens_b)
        assert_allclose(ra.record.l_el, rb.record.l_el, atol=1e-13)
        assert_allclose(ra.record.purity, rb.record.purity, atol=1e-13)

    def test_averaging_is_linear_in_rho(self):
        ens = self.ensemble_of([(0,), (1,)], [0.6, 0.4])
        both = self.run(ens, keep_members=True)
        mixed_l = 0.6 * both.member_records[0].l_el + 0.4 * both.member_records[1].l_el
        assert_allclose(both.record.l_el, mixed_l, atol=1e-13)

    def test_initial_point_pure(self):
        ens = self.ensemble_of([(0,), (1,), (2,)], [0.5, 0.3, 0.2])
        res = self.run(ens)
        assert_allclose(res.record.purity[0], 1.0, atol=1e-12)
        assert_allclose(res.record.l_el[0], 1.0, atol=1e-12)
        assert_allclose(res.record.xi_abs[0], 1.0, atol=1e-12)

    def test_bit_reproducible(self):
        ens = self.ensemble_of([(0,), (1,)], [0.7, 0.3])
        a = self.run(ens)
        b = self.run(ens)
        assert np.array_equal(a.record.l_el, b.record.l_el)
        assert np.array_equal(a.record.purity, b.record.purity)
