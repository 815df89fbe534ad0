"""Observables of the coupled electron-phonon state.

All electronic quantities derive from the reduced density matrix

    rho_el[k', k] = sum_n C*_{k',n} C_{k,n},

the phonon trace of the full pure state.  The amplitude table C is
assembled per snapshot as a sparse (Fock config) x (electron state)
matrix M so that rho_el = M^dag M in one sparse product.

Angular momentum L_el = sum_k l_k rho_kk, purity as the squared Frobenius
norm of rho_el (= Tr rho^2), the +-1 inversion amplitude W as the
population difference of the (l, nu) = (+-1, 1) columns, per-mode
occupation moments from the cached occupation table, and the coherence
rho_el(+1, -1) reported as modulus and phase in (-pi, pi].

The two-level exchange model

    L(t) = [w^2 + (2 g / hbar)^2 cos(Omega t)] / [w^2 + (2 g / hbar)^2],
    Omega = sqrt(w^2 + (2 g / hbar)^2)

serves both as a forward reference curve and, through `fit_rabi`, as the
extractor of the effective coupling from a simulated L_el(t) trace (FFT
peak seeded, refined by least squares).
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.optimize import curve_fit

from .constants import HBAR_MEV_NS
from .fockbasis import ProductBasis

PHASE_UNDEFINED_BELOW = 1e-14


class FitFailure(RuntimeError):
    """No dominant oscillation found in the trace."""


@dataclass(frozen=True)
class ReducedDensityMatrix:
    """Electron density matrix over the basis's electron states."""

    matrix: np.ndarray
    electron_ls: np.ndarray
    electron_energies: np.ndarray

    @property
    def trace(self) -> float:
        return float(np.real(np.trace(self.matrix)))

    @property
    def purity(self) -> float:
        return float(np.sum(np.abs(self.matrix) ** 2))

    def validate(self, tol_herm: float = 1e-12, tol_trace: float = 1e-10) -> None:
        m = self.matrix
        if np.max(np.abs(m - m.conj().T)) > tol_herm:
            raise AssertionError("reduced density matrix is not Hermitian")
        if abs(self.trace - 1.0) > tol_trace:
            raise AssertionError("reduced density matrix trace != 1")
        evals = np.linalg.eigvalsh(m)
        if evals.min() < -1e-10:
            raise AssertionError("reduced density matrix not positive")


class ObservableSet:
    """Precomputed index machinery for fast per-snapshot evaluation."""

    def __init__(self, basis: ProductBasis):
        self.basis = basis
        n_el = len(basis.electron_states)
        self.ls = np.asarray([s.l for s in basis.electron_states])
        self.energies_el = np.asarray([s.energy_mev for s in basis.electron_states])
        # CSR pattern of the (fock config) x (electron) amplitude matrix;
        # only the data vector changes between snapshots
        order = np.lexsort((basis.kappa_index, basis.fock_index))
        self._perm = order
        rows = basis.fock_index[order]
        used, row_compact = np.unique(rows, return_inverse=True)
        self._m_shape = (len(used), n_el)
        self._m_rows = row_compact
        self._m_cols = basis.kappa_index[order]
        try:
            self._i_plus = basis.electron_index(1, 1)
            self._i_minus = basis.electron_index(-1, 1)
        except Exception:
            self._i_plus = self._i_minus = -1

    # -- core ----------------------------------------------------------------

    def reduce_electron(self, psi: np.ndarray) -> ReducedDensityMatrix:
        m = sp.csr_matrix(
            (psi[self._perm], (self._m_rows, self._m_cols)), shape=self._m_shape
        )
        rho = (m.getH() @ m).toarray()
        return ReducedDensityMatrix(
            matrix=rho, electron_ls=self.ls, electron_energies=self.energies_el
        )

    def angular_momentum(self, rho: ReducedDensityMatrix) -> float:
        return float(np.real(np.sum(self.ls * np.diag(rho.matrix).real)))

    def electron_energy(self, rho: ReducedDensityMatrix) -> float:
        return float(np.sum(self.energies_el * np.diag(rho.matrix).real))

    def inversion_amplitude(self, psi: np.ndarray) -> float:
        if self._i_plus < 0:
            return 0.0
        w = np.abs(psi) ** 2
        p_plus = float(w[self.basis.kappa_index == self._i_plus].sum())
        p_minus = float(w[self.basis.kappa_index == self._i_minus].sum())
        return p_plus - p_minus

    def bloch_coherence(self, rho: ReducedDensityMatrix) -> tuple[float, float]:
        """(modulus, phase) of rho_el(+1, -1); phase NaN when undefined."""
        if self._i_plus < 0:
            return 0.0, math.nan
        z = rho.matrix[self._i_plus, self._i_minus]
        modulus = abs(z)
        phase = math.nan if modulus < PHASE_UNDEFINED_BELOW else math.atan2(z.imag, z.real)
        return float(modulus), phase

    def mode_occupations(self, psi: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        w = np.abs(psi) ** 2
        occ = self.basis.occupations
        means = w @ occ
        variances = w @ occ**2 - means**2
        return means, np.maximum(variances, 0.0)

    @staticmethod
    def autocorrelation(psi0: np.ndarray, psi: np.ndarray) -> complex:
        return complex(np.vdot(psi0, psi))


# ---------------------------------------------------------------------------
# trajectory records


@dataclass
class TrajectoryRecord:
    """Uniform-grid time series of every reported observable."""

    times_ns: np.ndarray
    l_el: np.ndarray
    purity: np.ndarray
    e_el_mev: np.ndarray
    xi_abs: np.ndarray
    w_inversion: np.ndarray
    rho_pm_abs: np.ndarray
    rho_pm_phase_over_pi: np.ndarray
    mode_occupations: np.ndarray  # (n_times, n_modes)
    meta: dict = field(default_factory=dict)

    def validate(self) -> None:
        dt = np.diff(self.times_ns)
        if len(dt) and not np.allclose(dt, dt[0], rtol=1e-9):
            raise AssertionError("time grid is not uniform")
        for name in ("l_el", "purity", "e_el_mev", "xi_abs", "w_inversion"):
            if not np.all(np.isfinite(getattr(self, name))):
                raise AssertionError(f"non-finite values in {name}")
        if abs(self.xi_abs[0] - 1.0) > 1e-9:
            raise AssertionError("|xi(0)| != 1")

    def column_names(self) -> list[str]:
        n_modes = self.mode_occupations.shape[1]
        return [
            "t_ns",
            "L_el",
            "purity",
            "E_el_meV",
            "xi_abs",
            "W",
            "rho_pm_abs",
            "rho_pm_phase_over_pi",
            *[f"n_{a + 1}" for a in range(n_modes)],
        ]


def save_trajectory(record: TrajectoryRecord, path: str) -> str:
    """Write the CSV table; returns the sha256 of the written bytes."""
    buf = []
    buf.append(",".join(record.column_names()))
    cols = np.column_stack(
        [
            record.times_ns,
            record.l_el,
            record.purity,
            record.e_el_mev,
            record.xi_abs,
            record.w_inversion,
            record.rho_pm_abs,
            record.rho_pm_phase_over_pi,
            record.mode_occupations,
        ]
    )
    for row in cols:
        buf.append(",".join("%.12g" % v for v in row))
    data = ("\n".join(buf) + "\n").encode()
    with open(path, "wb") as fh:
        fh.write(data)
    return hashlib.sha256(data).hexdigest()


def load_trajectory(path: str) -> TrajectoryRecord:
    with open(path) as fh:
        header = fh.readline().strip().split(",")
        data = np.loadtxt(fh, delimiter=",", ndmin=2)
    col = {name: i for i, name in enumerate(header)}
    n_modes = sum(1 for name in header if name.startswith("n_"))
    first_mode = col["n_1"] if n_modes else len(header)
    return TrajectoryRecord(
        times_ns=data[:, col["t_ns"]],
        l_el=data[:, col["L_el"]],
        purity=data[:, col["purity"]],
        e_el_mev=data[:, col["E_el_meV"]],
        xi_abs=data[:, col["xi_abs"]],
        w_inversion=data[:, col["W"]],
        rho_pm_abs=data[:, col["rho_pm_abs"]],
        rho_pm_phase_over_pi=data[:, col["rho_pm_phase_over_pi"]],
        mode_occupations=data[:, first_mode : first_mode + n_modes],
    )


# ---------------------------------------------------------------------------
# two-level exchange model


def rabi_model(
    t_ns: np.ndarray, splitting_rad_per_ns: float, coupling_mev: float
) -> np.ndarray:
    """Population-difference curve of the driven two-level exchange."""
    t = np.asarray(t_ns, dtype=float)
    two_g = 2.0 * coupling_mev / HBAR_MEV_NS
    omega2 = splitting_rad_per_ns**2 + two_g**2
    if omega2 == 0.0:
        return np.ones_like(t)
    return (splitting_rad_per_ns**2 + two_g**2 * np.cos(np.sqrt(omega2) * t)) / omega2


@dataclass(frozen=True)
class RabiFit:
    coupling_mev: float
    period_ns: float
    frequency_rad_per_ns: float
    amplitude: float
    offset: float
    peak_to_median: float


def fit_rabi(times_ns: np.ndarray, l_el: np.ndarray, min_periods: float = 2.0) -> RabiFit:
    """Extract the effective exchange coupling from an L_el(t) trace.

    Locates the dominant FFT peak, refines (frequency, amplitude, offset)
    by least squares against A cos(Omega t) + B, and maps the frequency to
    a coupling through the degenerate relation L = cos(2 g t / hbar).
    Raises FitFailure when no clear spectral peak exists or fewer than
    `min_periods` oscillations fit in the trace.
    """
    t = np.asarray(times_ns, dtype=float)
    y = np.asarray(l_el, dtype=float)
    if len(t) < 8:
        raise FitFailure("trace too short to fit")
    dt = t[1] - t[0]
    spec = np.abs(np.fft.rfft(y - y.mean()))
    freqs = 2.0 * math.pi * np.fft.rfftfreq(len(y), d=dt)
    spec[0] = 0.0
    peak = int(np.argmax(spec))
    median = float(np.median(spec[1:])) if len(spec) > 2 else 0.0
    ratio = spec[peak] / median if median > 0 else math.inf
    if peak == 0 or ratio < 3.0:
        raise FitFailure(f"no dominant spectral peak (peak/median = {ratio:.2f})")
    omega0 = freqs[peak]
    if omega0 * (t[-1] - t[0]) < 2.0 * math.pi * min_periods:
        raise FitFailure("trace covers fewer oscillation periods than required")

    def model(tt, omega, amp, off):
        return amp * np.cos(omega * tt) + off

    p0 = [omega0, (y.max() - y.min()) / 2.0, y.mean()]
    popt, _ = curve_fit(model, t, y, p0=p0, maxfev=20000)
    omega, amp, off = popt
    omega = abs(float(omega))
    return RabiFit(
        coupling_mev=omega * HBAR_MEV_NS / 2.0,
        period_ns=2.0 * math.pi / omega,
        frequency_rad_per_ns=omega,
        amplitude=float(amp),
        offset=float(off),
        peak_to_median=float(ratio),
    )
