"""Product basis enumeration and sparse Hamiltonian assembly."""

import math

import numpy as np
import pytest
from numpy.testing import assert_allclose

from qdnems.constants import HBAR_MEV_NS, KB_MEV_PER_MK
from qdnems.coupling import CouplingTensor
from qdnems.electron import DotGeometry, ElectronState, MagneticConfig, build_electron_basis
from qdnems.fockbasis import (
    BasisError,
    assemble_hamiltonian,
    enumerate_basis,
    enumerate_fock_configs,
    thermal_occupation,
)
from qdnems.plate import PlateSpec, solve_modes


def make_state(l, nu=1, energy=0.1):
    return ElectronState(l=l, nu=nu, alpha=1.0, energy_mev=energy)


def make_table(homegas_mev, q_factor=math.inf):
    """Real mode table retuned to prescribed quanta (shapes irrelevant here)."""
    t = solve_modes(
        PlateSpec(), n_x=5, n_y=12, count=len(homegas_mev),
        q_factor=q_factor, check_convergence=False,
    )
    for i, hw in enumerate(homegas_mev):
        t = t.with_mode_homega(i + 1, hw)
    return t


def make_tensor(states, parities, fill):
    """Synthetic coupling tensor g[k',a,k] from a dict {(l', a, l): value}."""
    n = len(states)
    g = np.zeros((n, len(parities), n), dtype=complex)
    for (lp, a, l), v in fill.items():
        i = next(k for k, s in enumerate(states) if s.l == lp)
        j = next(k for k, s in enumerate(states) if s.l == l)
        g[i, a, j] = v
        g[j, a, i] = np.conj(v)
    return CouplingTensor(
        g=g, electron_states=states, mode_parities=parities,
        overall_scale=1.0, max_asymmetry_mev=0.0, max_parity_violation_mev=0.0,
    )


class TestFockEnumeration:
    def test_single_mode_ladder(self):
        cfgs, e = enumerate_fock_configs(np.array([0.01]), count=4, n_max=3)
        assert cfgs.tolist() == [[0], [1], [2], [3]]
        assert_allclose(e, 0.01 * (np.arange(4) + 0.5))

    def test_ascending_energy_and_unique(self):
        hw = np.array([0.007, 0.009, 0.012])
        cfgs, e = enumerate_fock_configs(hw, count=60, n_max=10)
        assert np.all(np.diff(e) >= -1e-15)
        assert len({tuple(c) for c in cfgs}) == len(cfgs)
        assert_allclose(e, cfgs @ hw + 0.5 * hw.sum())

    def test_completeness_below_cutoff(self):
        # every configuration cheaper than the last one generated is present
        hw = np.array([0.007, 0.009])
        cfgs, e = enumerate_fock_configs(hw, count=30, n_max=20)
        have = {tuple(c) for c in cfgs}
        cutoff = e[-1]
        for n1 in range(12):
            for n2 in range(12):
                if n1 * hw[0] + n2 * hw[1] + 0.5 * hw.sum() < cutoff - 1e-12:
                    assert (n1, n2) in have

    def test_n_max_respected(self):
        cfgs, _ = enumerate_fock_configs(np.array([0.01, 0.02]), count=100, n_max=2)
        assert cfgs.max() <= 2
        assert len(cfgs) == 9  # (2+1)^2 exhausted


class TestBasisEnumeration:
    def test_single_ladder_dimension(self):
        table = make_table([0.01])
        basis = enumerate_basis([make_state(0)], table, size_cap=4, n_max=3)
        assert basis.dim == 4
        assert_allclose(
            basis.energies, 0.1 + 0.01 * (np.arange(4) + 0.5), rtol=1e-12
        )

    def test_cap_binding(self):
        geom = DotGeometry()
        el = build_electron_basis(geom, MagneticConfig(0.0), 2, 1)
        table = solve_modes(PlateSpec(), n_x=5, n_y=12, count=8,
                            check_convergence=False)
        basis = enumerate_basis(el, table, size_cap=2000)
        assert basis.dim == 2000

    def test_energy_sorted_with_deterministic_ties(self):
        el = [make_state(-1, energy=0.1), make_state(1, energy=0.1)]
        table = make_table([0.01])
        basis = enumerate_basis(el, table, size_cap=6, n_max=5)
        assert np.all(np.diff(basis.energies) >= -1e-15)
        # ties broken by l: -1 before +1 at every rung
        ls = [basis.electron_states[k].l for k in basis.kappa_index]
        assert ls == [-1, 1, -1, 1, -1, 1]

    def test_window_complete(self):
        el = [make_state(0, energy=0.04), make_state(1, energy=0.1),
              make_state(-1, energy=0.1)]
        table = make_table([0.007, 0.011])
        basis = enumerate_basis(el, table, size_cap=40, n_max=30)
        thr = basis.energy_cutoff_mev
        for k, s in enumerate(basis.electron_states):
            for f in range(len(basis.fock_energies)):
                e = s.energy_mev + basis.fock_energies[f]
                if e < thr - 1e-12:
                    assert basis.state_table[k, f] >= 0

    def test_no_dangling_raise_partners(self):
        el = [make_state(0, energy=0.04), make_state(1, energy=0.1)]
        table = make_table([0.007, 0.011])
        basis = enumerate_basis(el, table, size_cap=50, n_max=30)
        for i in range(basis.dim):
            f = basis.fock_index[i]
            for a in range(basis.n_modes):
                fp = basis.raise_map[f, a]
                if fp >= 0:
                    for kp in range(len(el)):
                        j = basis.state_table[kp, fp]
                        if j >= 0:
                            assert basis.fock_index[j] == fp

    def test_missing_state_reported(self):
        el = [
            make_state(0, energy=0.04),
            make_state(1, energy=0.05),
            make_state(-1, energy=0.05),
            make_state(5, energy=5.0),
        ]
        table = make_table([0.007])
        basis = enumerate_basis(el, table, size_cap=8, n_max=30)
        with pytest.raises(BasisError):
            basis.index_of_config(3, [0])  # the 5 meV state never makes the cut

    def test_centered_window_policy(self):
        el = [make_state(0, energy=0.1)]
        table = make_table([0.01])
        # the pool must reach the window center; oversample sets its depth
        basis = enumerate_basis(
            el, table, size_cap=5, n_max=40, oversample=12.0,
            window_center_mev=0.3,
        )
        assert basis.window_policy == "centered"
        # states cluster around the requested center (n ~ 19.5) rather than
        # the bottom of the ladder
        center_occ = basis.occupations[:, 0].astype(int)
        assert 0 not in center_occ
        assert {19, 20} <= set(center_occ)


class TestThermalOccupation:
    def test_analytic_point(self):
        t_mk = 100.0
        homega = KB_MEV_PER_MK * t_mk
        assert_allclose(thermal_occupation(homega, t_mk), 1.0 / (math.e - 1.0),
                        rtol=1e-12)

    def test_fundamental_at_50mk(self):
        from qdnems.constants import homega_mev as f_to_mev

        assert_allclose(thermal_occupation(f_to_mev(1.88), 50.0), 0.20, atol=0.01)

    def test_classical_limit_doubling(self):
        hw = 1e-4
        n1 = thermal_occupation(hw, 400.0)
        n2 = thermal_occupation(hw, 800.0)
        assert abs(n2 / n1 - 2.0) < 0.01

    def test_zero_temperature(self):
        with pytest.warns(UserWarning):
            assert thermal_occupation(0.01, 0.0) == 0.0


class TestAssembly:
    def two_level_one_mode(self, homega=0.008, g=5e-5, n_max=1, e0=0.1015):
        el = [make_state(-1, energy=e0), make_state(1, energy=e0)]
        table = make_table([homega])
        basis = enumerate_basis(el, table, size_cap=2 * (n_max + 1), n_max=n_max)
        tensor = make_tensor(el, ["odd"], {(-1, 0, 1): 1j * g})
        return basis, assemble_hamiltonian(basis, tensor), g, homega, e0

    def test_ladder_weights(self):
        basis, h, g, homega, e0 = self.two_level_one_mode(n_max=3)
        dense = h.to_dense()
        i0 = basis.index_of_config(1, [1])   # |+1, n=1>
        j0 = basis.index_of_config(0, [2])   # |-1, n=2>
        assert_allclose(abs(dense[j0, i0]), g * math.sqrt(2.0), rtol=1e-12)

    def test_hand_built_four_level_block(self):
        basis, h, g, homega, e0 = self.two_level_one_mode()
        # the +1 <-> -1 exchange acts between (-1,0)<->(+1,1) and
        # (+1,0)<->(-1,1); build the expectation explicitly
        expect = np.diag(
            [e0 + homega / 2, e0 + homega / 2, e0 + 3 * homega / 2, e0 + 3 * homega / 2]
        ).astype(complex)
        # raise element H[(k',n+1),(k,n)] = g[k',a,k] sqrt(n+1)
        i = basis.index_of_config(0, [0])  # (-1, 0)
        j = basis.index_of_config(1, [1])  # (+1, 1)
        expect[j, i] = np.conj(1j * g)  # g[+1, a, -1]
        expect[i, j] = 1j * g
        k = basis.index_of_config(1, [0])  # (+1, 0)
        m = basis.index_of_config(0, [1])  # (-1, 1)
        expect[m, k] = 1j * g  # g[-1, a, +1]
        expect[k, m] = np.conj(1j * g)
        assert_allclose(h.to_dense(), expect, atol=1e-18)

    def test_hermitian(self):
        _, h, *_ = self.two_level_one_mode(n_max=4)
        assert h.hermiticity_defect() <= 1e-12

    def test_row_degree_bound(self):
        geom = DotGeometry()
        el = build_electron_basis(geom, MagneticConfig(0.0), 1, 1)
        table = make_table([0.007, 0.009, 0.012])
        g = np.random.default_rng(1).normal(size=(3, 3, 3)) * 1e-5
        tensor = CouplingTensor(
            g=(g + g.transpose(2, 1, 0)).astype(complex),
            electron_states=el, mode_parities=["even"] * 3,
            overall_scale=1.0, max_asymmetry_mev=0.0, max_parity_violation_mev=0.0,
        )
        basis = enumerate_basis(el, table, size_cap=300, n_max=6)
        h = assemble_hamiltonian(basis, tensor)
        degree = np.diff(h.offdiag.indptr)
        assert degree.max() <= len(el) * 2 * 3

    def test_matvec_matches_dense(self):
        basis, h, *_ = self.two_level_one_mode(n_max=40)
        rng = np.random.default_rng(7)
        x = rng.normal(size=basis.dim) + 1j * rng.normal(size=basis.dim)
        dense = h.to_dense()
        assert_allclose(h.matvec(x), dense @ x, rtol=1e-12, atol=1e-15)

    def test_zero_field_diagonal_degeneracy(self):
        geom = DotGeometry()
        el = build_electron_basis(geom, MagneticConfig(0.0), 2, 1)
        table = make_table([0.007, 0.009])
        basis = enumerate_basis(el, table, size_cap=200)
        i_plus = basis.electron_index(1, 1)
        i_minus = basis.electron_index(-1, 1)
        for f in range(4):
            a = basis.state_table[i_plus, f]
            b = basis.state_table[i_minus, f]
            if a >= 0 and b >= 0:
                assert basis.energies[a] == basis.energies[b]

    def test_drop_tolerance(self):
        el = [make_state(-1), make_state(1)]
        table = make_table([0.008])
        basis = enumerate_basis(el, table, size_cap=8, n_max=3)
        tensor = make_tensor(el, ["odd"], {(-1, 0, 1): 1e-16j})
        h = assemble_hamiltonian(basis, tensor, drop_tolerance_mev=1e-14)
        assert h.nnz_offdiag == 0

    def test_mismatched_tensor_rejected(self):
        el = [make_state(-1), make_state(1)]
        table = make_table([0.008])
        basis = enumerate_basis(el, table, size_cap=8, n_max=3)
        tensor = make_tensor([make_state(0)], ["odd"], {})
        with pytest.raises(ValueError):
            assemble_hamiltonian(basis, tensor)
