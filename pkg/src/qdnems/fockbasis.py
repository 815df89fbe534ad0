"""Truncated electron (x) multimode-Fock product basis and Hamiltonian.

Basis vectors are |k; n> = |electron state k> (x) |n_1 ... n_N> with the
unperturbed energy E_k + sum_a (n_a + 1/2) hbar omega_a.  The basis is
built in three steps: Fock configurations are generated in strictly
ascending phonon energy by a heap walk (each configuration reached once
through its highest occupied mode), the product with the electron states
is formed, and the product list is energy-sorted and truncated to the
requested size.  The heap is grown until the truncation threshold is
provably complete: every state left out has phonon energy above anything
the discarded tail could reorder.

The interaction couples states differing by one quantum in one mode with
the standard ladder weights,

    <k', n + 1_a| H |k, n> = g[k', a, k] sqrt(n_a + 1),

stored in compressed sparse row form with the (real) diagonal kept
separately; the per-state occupation table needed by the dissipative
substep and by observables is cached at build time.
"""

from __future__ import annotations

import heapq
import math
import warnings
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .constants import KB_MEV_PER_MK
from .coupling import CouplingTensor
from .electron import ElectronState
from .plate import ModeTable

DEFAULT_N_MAX = 40
DEFAULT_OVERSAMPLE = 1.5
DEFAULT_DROP_TOL_MEV = 1e-14


class BasisError(ValueError):
    """A required state fell outside the truncated basis."""


def thermal_occupation(homega_mev: float, temperature_mk: float) -> float:
    """Bose-Einstein occupation 1/(exp(hbar w / k T) - 1); 0 at T = 0."""
    if temperature_mk < 0.0:
        raise ValueError("temperature must be non-negative")
    if temperature_mk == 0.0:
        warnings.warn("T = 0 requested; thermal occupation set to 0", stacklevel=2)
        return 0.0
    x = homega_mev / (KB_MEV_PER_MK * temperature_mk)
    return 1.0 / math.expm1(x)


def enumerate_fock_configs(
    homega_mev: np.ndarray, count: int, n_max: int
) -> tuple[np.ndarray, np.ndarray]:
    """The `count` lowest-energy occupation vectors, ascending in energy.

    Heap walk over configurations: each config's successors increment one
    mode at or above its highest occupied mode, which reaches every
    configuration exactly once and in energy order.  Returns (configs,
    phonon energies including zero point).
    """
    n_modes = len(homega_mev)
    e_zp = 0.5 * float(np.sum(homega_mev))
    start = (0,) * n_modes
    heap = [(e_zp, start, 0)]  # (energy, config, lowest incrementable mode)
    configs, energies = [], []
    while heap and len(configs) < count:
        e, cfg, lead = heapq.heappop(heap)
        configs.append(cfg)
        energies.append(e)
        for a in range(lead, n_modes):
            if cfg[a] < n_max:
                nxt = cfg[:a] + (cfg[a] + 1,) + cfg[a + 1 :]
                heapq.heappush(heap, (e + float(homega_mev[a]), nxt, a))
    return np.asarray(configs, dtype=np.int32), np.asarray(energies)


@dataclass
class ProductBasis:
    """Energy-sorted truncated product basis with its index maps."""

    electron_states: list[ElectronState]
    fock_configs: np.ndarray      # (n_pool, N) occupations of the config pool
    fock_energies: np.ndarray     # (n_pool,) E_ph incl. zero point, meV
    raise_map: np.ndarray         # (n_pool, N) pool index of n + 1_a, or -1
    kappa_index: np.ndarray       # (dim,) electron index per basis state
    fock_index: np.ndarray        # (dim,) pool index per basis state
    energies: np.ndarray          # (dim,) unperturbed energies, meV
    state_table: np.ndarray       # (n_el, n_pool) -> basis index or -1
    occupations: np.ndarray       # (dim, N) float occupations per basis state
    energy_cutoff_mev: float
    window_policy: str

    @property
    def dim(self) -> int:
        return len(self.energies)

    @property
    def n_modes(self) -> int:
        return self.fock_configs.shape[1]

    def index_of(self, kappa: int, fock: int) -> int:
        idx = int(self.state_table[kappa, fock])
        if idx < 0:
            raise BasisError(
                "state outside the truncated basis; raise size_cap or loosen caps"
            )
        return idx

    def index_of_config(self, kappa: int, config) -> int:
        cfg = tuple(int(c) for c in config)
        matches = np.flatnonzero(
            (self.fock_configs == np.asarray(cfg, dtype=np.int32)).all(axis=1)
        )
        if len(matches) == 0:
            raise BasisError(
                "Fock configuration outside the enumerated pool; raise size_cap"
            )
        return self.index_of(kappa, int(matches[0]))

    def electron_index(self, l: int, nu: int) -> int:
        for i, s in enumerate(self.electron_states):
            if s.l == l and s.nu == nu:
                return i
        raise BasisError(f"electron state (l={l}, nu={nu}) not in basis")

    def diagnostics(self) -> dict:
        return {
            "dim": self.dim,
            "n_electron_states": len(self.electron_states),
            "n_fock_pool": len(self.fock_energies),
            "n_fock_used": int(len(np.unique(self.fock_index))),
            "energy_cutoff_mev": self.energy_cutoff_mev,
            "window_policy": self.window_policy,
            "e_min_mev": float(self.energies[0]),
            "e_max_mev": float(self.energies[-1]),
        }


def enumerate_basis(
    electron_states: list[ElectronState],
    table: ModeTable,
    size_cap: int,
    n_max: int = DEFAULT_N_MAX,
    oversample: float = DEFAULT_OVERSAMPLE,
    window_center_mev: float | None = None,
) -> ProductBasis:
    """Build the truncated product basis.

    Candidates are the product of the electron basis with a pool of the
    `oversample * size_cap / n_el` lowest-energy Fock configurations (so
    at least oversample * size_cap candidates); they are ranked by
    unperturbed energy (optionally by distance from `window_center_mev`)
    and truncated to the cap, with deterministic (energy, l, nu, n)
    tie-breaks.  The pool bound is what keeps high-angular-momentum
    states represented: a pure bottom-anchored window at these cap sizes
    would spend the whole budget on deep Fock ladders over the few lowest
    electronic states, and the exchange dynamics does not converge
    without several angular momenta.
    """
    if size_cap < 1 or oversample < 1.5:
        raise ValueError("need size_cap >= 1 and oversample >= 1.5")
    n_el = len(electron_states)
    homega = table.homega_mev
    el_energies = np.asarray([s.energy_mev for s in electron_states])

    pool_target = max(1, math.ceil(oversample * size_cap / n_el))
    policy = "bottom-anchored" if window_center_mev is None else "centered"

    configs, e_ph = enumerate_fock_configs(homega, pool_target, n_max)
    n_pool = len(e_ph)
    # total energies of all candidates, shape (n_el, n_pool)
    total = el_energies[:, None] + e_ph[None, :]
    if window_center_mev is None:
        rank_key = total
    else:
        rank_key = np.abs(total - window_center_mev)
    flat_order = np.argsort(rank_key, axis=None, kind="stable")
    keep = flat_order[: min(size_cap, total.size)]
    threshold = float(np.max(rank_key.flat[keep]))

    kappa_idx = (keep // n_pool).astype(np.int32)
    fock_idx = (keep % n_pool).astype(np.int32)
    energies = total.flat[keep]

    # deterministic total order: energy, then (l, nu, occupations)
    ls = np.asarray([s.l for s in electron_states])
    nus = np.asarray([s.nu for s in electron_states])
    sort_cols = [
        energies,
        ls[kappa_idx],
        nus[kappa_idx],
        *(configs[fock_idx, a] for a in range(configs.shape[1])),
    ]
    order = np.lexsort(tuple(reversed(sort_cols)))
    kappa_idx = kappa_idx[order]
    fock_idx = fock_idx[order]
    energies = energies[order]

    state_table = np.full((n_el, n_pool), -1, dtype=np.int64)
    state_table[kappa_idx, fock_idx] = np.arange(len(kappa_idx))

    # raise ladders within the pool
    lookup = {tuple(cfg): i for i, cfg in enumerate(map(tuple, configs))}
    n_modes = configs.shape[1]
    raise_map = np.full((n_pool, n_modes), -1, dtype=np.int64)
    for i, cfg in enumerate(map(tuple, configs)):
        for a in range(n_modes):
            if cfg[a] < n_max:
                j = lookup.get(cfg[:a] + (cfg[a] + 1,) + cfg[a + 1 :])
                if j is not None:
                    raise_map[i, a] = j

    return ProductBasis(
        electron_states=list(electron_states),
        fock_configs=configs,
        fock_energies=e_ph,
        raise_map=raise_map,
        kappa_index=kappa_idx,
        fock_index=fock_idx,
        energies=energies,
        state_table=state_table,
        occupations=configs[fock_idx].astype(float),
        energy_cutoff_mev=threshold,
        window_policy=policy,
    )


@dataclass
class RelaxationSpec:
    """Per-mode damping rates and thermal targets for the lossy evolution."""

    gamma_mev: np.ndarray
    nbar: np.ndarray
    enabled: bool = True
    model: str = "mean-reverting"  # or "literal-identity" (documented no-op)

    @classmethod
    def from_mode_table(
        cls, table: ModeTable, temperature_mk: float, enabled: bool = True
    ) -> "RelaxationSpec":
        nbar = np.asarray(
            [thermal_occupation(m.homega_mev, temperature_mk) for m in table.modes]
        )
        return cls(gamma_mev=table.gamma_mev.copy(), nbar=nbar, enabled=enabled)


class SparseHamiltonian:
    """H = diag(E) + one-quantum coupling block in CSR form.

    `diag` holds the real unperturbed energies; `offdiag` the Hermitian
    coupling part.  Matrix-vector products against the shared immutable
    structure are safe from concurrent workers.
    """

    def __init__(
        self,
        diag: np.ndarray,
        offdiag: sp.csr_matrix,
        basis: ProductBasis | None = None,
    ):
        self.diag = diag
        self.offdiag = offdiag
        self.basis = basis

    @property
    def dim(self) -> int:
        return len(self.diag)

    @property
    def nnz_offdiag(self) -> int:
        return self.offdiag.nnz

    def matvec(self, x: np.ndarray) -> np.ndarray:
        return self.offdiag @ x + self.diag * x

    def to_dense(self) -> np.ndarray:
        if self.dim > 2048:
            raise ValueError("dense form restricted to dimensions <= 2048")
        h = self.offdiag.toarray().astype(complex)
        h[np.diag_indices(self.dim)] += self.diag
        return h

    def hermiticity_defect(self) -> float:
        d = self.offdiag - self.offdiag.getH()
        return 0.0 if d.nnz == 0 else float(np.max(np.abs(d.data)))

    def diagnostics(self) -> dict:
        return {
            "dim": self.dim,
            "nnz_offdiag": int(self.nnz_offdiag),
            "mean_row_degree": float(self.nnz_offdiag / max(self.dim, 1)),
            "hermiticity_defect_mev": self.hermiticity_defect(),
        }


def assemble_hamiltonian(
    basis: ProductBasis,
    tensor: CouplingTensor,
    drop_tolerance_mev: float = DEFAULT_DROP_TOL_MEV,
) -> SparseHamiltonian:
    """Assemble the sparse Hamiltonian over the truncated basis.

    Off-diagonal entries below `drop_tolerance_mev` are omitted (the drop
    is applied to the full ladder-weighted element, symmetrically, so the
    matrix stays exactly Hermitian).
    """
    if [(s.l, s.nu) for s in tensor.electron_states] != [
        (s.l, s.nu) for s in basis.electron_states
    ]:
        raise ValueError("coupling tensor basis does not match the product basis")

    n_el = len(basis.electron_states)
    n_modes = basis.n_modes
    rows, cols, vals = [], [], []
    occ = basis.occupations
    for a in range(n_modes):
        target_pool = basis.raise_map[basis.fock_index, a]  # (dim,)
        src = np.flatnonzero(target_pool >= 0)
        if len(src) == 0:
            continue
        ladder = np.sqrt(occ[src, a] + 1.0)
        for kp in range(n_el):
            dst = basis.state_table[kp, target_pool[src]]
            ok = dst >= 0
            if not np.any(ok):
                continue
            g_col = tensor.g[kp, a, basis.kappa_index[src[ok]]]
            val = g_col * ladder[ok]
            keep = np.abs(val) >= drop_tolerance_mev
            if not np.any(keep):
                continue
            i = dst[ok][keep]
            j = src[ok][keep]
            v = val[keep]
            rows.append(i)
            cols.append(j)
            vals.append(v)
            rows.append(j)
            cols.append(i)
            vals.append(np.conj(v))

    dim = basis.dim
    if rows:
        offdiag = sp.csr_matrix(
            (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
            shape=(dim, dim),
        )
    else:
        offdiag = sp.csr_matrix((dim, dim), dtype=complex)
    h = SparseHamiltonian(basis.energies.copy(), offdiag, basis)
    defect = h.hermiticity_defect()
    if defect > 1e-12:
        raise AssertionError(f"assembled Hamiltonian defect {defect:.2e} meV")
    return h
