"""Independent correctness oracles.

Everything here trades speed for transparency: dense eigendecomposition
propagation for small instances, the closed-form two-level/single-mode
exchange populations, and dictionary-based recomputation of every
observable without the indexed fast paths.  These are the references the
optimized machinery is held against, both in the test suite and through
the `validate` command.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import eigh

from .constants import HBAR_MEV_NS
from .fockbasis import ProductBasis, SparseHamiltonian

MAX_DENSE_DIM = 2048


class DiscrepancyReport(AssertionError):
    """An optimized observable disagreed with its brute-force recomputation."""

    def __init__(self, observable: str, fast, slow):
        self.observable = observable
        super().__init__(
            f"observable '{observable}' mismatch: fast={fast!r} brute-force={slow!r}"
        )


@dataclass
class DenseInstance:
    """Dense Hermitian copy of a small Hamiltonian with cached spectrum."""

    matrix: np.ndarray
    evals: np.ndarray
    evecs: np.ndarray

    @classmethod
    def from_hamiltonian(cls, h: SparseHamiltonian) -> "DenseInstance":
        if h.dim > MAX_DENSE_DIM:
            raise ValueError(f"dense oracle restricted to dim <= {MAX_DENSE_DIM}")
        return cls.from_matrix(h.to_dense())

    @classmethod
    def from_matrix(cls, matrix: np.ndarray) -> "DenseInstance":
        if matrix.shape[0] > MAX_DENSE_DIM:
            raise ValueError(f"dense oracle restricted to dim <= {MAX_DENSE_DIM}")
        evals, evecs = eigh(matrix)
        inst = cls(matrix=np.asarray(matrix, dtype=complex), evals=evals, evecs=evecs)
        recon = (evecs * evals) @ evecs.conj().T
        scale = max(float(np.max(np.abs(matrix))), 1e-300)
        if np.max(np.abs(recon - matrix)) > 1e-10 * scale:
            raise np.linalg.LinAlgError("eigendecomposition failed to reconstruct")
        return inst

    def propagate(self, psi0: np.ndarray, t_ns: float) -> np.ndarray:
        """psi(t) = V exp(-i Lambda t / hbar) V^dag psi0."""
        phases = np.exp(-1j * self.evals * t_ns / HBAR_MEV_NS)
        return self.evecs @ (phases * (self.evecs.conj().T @ psi0))


def jaynes_cummings_reference(
    coupling_mev: float, detuning_mev: float, n_quanta: int, t_ns: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """Resonance-doublet populations of the two-level/one-mode exchange.

    Starting from the upper level with n quanta in the mode, the upper and
    lower populations oscillate at Omega_n = sqrt(d^2 + 4 g^2 (n+1))/hbar
    with maximum transfer 4 g^2 (n+1) / (d^2 + 4 g^2 (n+1)).
    """
    t = np.asarray(t_ns, dtype=float)
    g2 = 4.0 * coupling_mev**2 * (n_quanta + 1)
    denom = detuning_mev**2 + g2
    if denom == 0.0:
        return np.ones_like(t), np.zeros_like(t)
    omega = math.sqrt(denom) / HBAR_MEV_NS
    transfer = (g2 / denom) * np.sin(0.5 * omega * t) ** 2
    return 1.0 - transfer, transfer


def brute_force_observables(psi: np.ndarray, basis: ProductBasis) -> dict:
    """Every observable by direct dictionary-based summation."""
    if basis.dim > 1e5:
        raise ValueError("brute-force oracle restricted to dim <= 1e5")
    n_el = len(basis.electron_states)
    n_modes = basis.n_modes
    rho = np.zeros((n_el, n_el), dtype=complex)
    by_config: dict[tuple, dict[int, complex]] = {}
    for i in range(basis.dim):
        cfg = tuple(int(v) for v in basis.fock_configs[basis.fock_index[i]])
        by_config.setdefault(cfg, {})[int(basis.kappa_index[i])] = psi[i]
    for amps in by_config.values():
        for kp, ap in amps.items():
            for k, a in amps.items():
                rho[kp, k] += np.conj(ap) * a

    l_el = 0.0
    e_el = 0.0
    for k, s in enumerate(basis.electron_states):
        l_el += s.l * rho[k, k].real
        e_el += s.energy_mev * rho[k, k].real
    purity = float(np.sum(np.abs(rho) ** 2))

    w_inv = 0.0
    means = np.zeros(n_modes)
    second = np.zeros(n_modes)
    for i in range(basis.dim):
        p = abs(psi[i]) ** 2
        s = basis.electron_states[basis.kappa_index[i]]
        if s.nu == 1 and s.l == 1:
            w_inv += p
        elif s.nu == 1 and s.l == -1:
            w_inv -= p
        cfg = basis.fock_configs[basis.fock_index[i]]
        means += p * cfg
        second += p * cfg.astype(float) ** 2

    return {
        "rho_el": rho,
        "l_el": float(l_el),
        "e_el_mev": float(e_el),
        "purity": purity,
        "w_inversion": float(w_inv),
        "mode_means": means,
        "mode_variances": second - means**2,
    }


def check_observables_against_brute_force(
    psi: np.ndarray, basis: ProductBasis, tol: float = 1e-12
) -> None:
    """Raise DiscrepancyReport naming the first observable that disagrees."""
    from .observables import ObservableSet

    obs = ObservableSet(basis)
    slow = brute_force_observables(psi, basis)
    rho = obs.reduce_electron(psi)
    if np.max(np.abs(rho.matrix - slow["rho_el"])) > tol:
        raise DiscrepancyReport("rho_el", rho.matrix, slow["rho_el"])
    pairs = [
        ("l_el", obs.angular_momentum(rho)),
        ("e_el_mev", obs.electron_energy(rho)),
        ("purity", rho.purity),
        ("w_inversion", obs.inversion_amplitude(psi)),
    ]
    for name, fast in pairs:
        if abs(fast - slow[name]) > tol:
            raise DiscrepancyReport(name, fast, slow[name])
    means, variances = obs.mode_occupations(psi)
    if np.max(np.abs(means - slow["mode_means"])) > tol:
        raise DiscrepancyReport("mode_means", means, slow["mode_means"])
    if np.max(np.abs(variances - slow["mode_variances"])) > 10 * tol:
        raise DiscrepancyReport("mode_variances", variances, slow["mode_variances"])
