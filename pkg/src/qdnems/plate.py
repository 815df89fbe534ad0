"""Flexural eigenmodes of the clamped-free suspended plate.

Thin-plate (Kirchhoff) kinematics with a Rayleigh-Ritz basis of beam
function products

    w(x, y) = sum_i c_i X_m(x/L) Y_n(y/W)

where X_m are clamped-free (cantilever) beam functions along the short
length direction (clamped at x = 0, free at x = L) and Y_n are free-free
beam functions across the width, including the two rigid-body shapes
(constant and linear) required by the free side edges.  The strain energy
of bending,

    U = D/2 int [ w_xx^2 + w_yy^2 + 2 nu w_xx w_yy + 2(1-nu) w_xy^2 ] dA,
    D = E t^3 / 12(1 - nu^2),

and the kinetic energy T = rho t/2 int wdot^2 dA give the generalized
eigenproblem K c = omega^2 M c.

Every width function is exactly even or odd about the width midline, so
the problem splits into two independent parity blocks and each computed
mode carries an exact parity label.  Mode shapes are normalized to unit
mean square over the plate, int wbar^2 dA = A, which makes the zero-point
amplitude of mode alpha equal to sqrt(hbar / (2 M_plate omega_alpha))
with M_plate the total plate mass.

Large-argument beam functions are evaluated through decaying exponentials
only (no cosh/sinh differences), so high-order shapes stay accurate to
machine precision.
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass, replace

import numpy as np
from scipy.linalg import eigh
from scipy.optimize import brentq

from .constants import H_MEV_PER_GHZ

DEFAULT_NX = 6
DEFAULT_NY = 20
GAUSS_POINTS = 160


class RitzConvergenceError(RuntimeError):
    """Requested frequencies move by >= tolerance under basis doubling."""


@dataclass(frozen=True)
class Material:
    """Isotropic elastic constants; defaults are crystalline silicon."""

    rho_kg_m3: float = 2329.0
    youngs_modulus_gpa: float = 169.0
    poisson_ratio: float = 0.28

    def __post_init__(self):
        if not (0.0 < self.poisson_ratio < 0.5):
            raise ValueError("Poisson ratio must lie in (0, 0.5)")


@dataclass(frozen=True)
class PlateSpec:
    """Suspended platform: wide clamped edge, short free length."""

    width_nm: float = 1200.0
    length_nm: float = 200.0
    thickness_nm: float = 50.0
    material: Material = Material()
    clamped_edge: str = "width"

    def __post_init__(self):
        if min(self.width_nm, self.length_nm, self.thickness_nm) <= 0.0:
            raise ValueError("plate dimensions must be positive")
        if self.clamped_edge != "width":
            raise ValueError("only clamping along the full-width edge is supported")

    @property
    def bending_rigidity_nm(self) -> float:
        """D = E t^3 / 12(1-nu^2) in N m."""
        e_pa = self.material.youngs_modulus_gpa * 1e9
        t_m = self.thickness_nm * 1e-9
        return e_pa * t_m**3 / (12.0 * (1.0 - self.material.poisson_ratio**2))

    @property
    def areal_density(self) -> float:
        """rho t in kg/m^2."""
        return self.material.rho_kg_m3 * self.thickness_nm * 1e-9

    @property
    def mass_kg(self) -> float:
        return (
            self.material.rho_kg_m3
            * self.width_nm
            * self.length_nm
            * self.thickness_nm
            * 1e-27
        )


# ---------------------------------------------------------------------------
# beam function families


def _cantilever_roots(n: int) -> np.ndarray:
    """Roots of cosh(x) cos(x) = -1, rewritten as cos(x) + sech(x) = 0."""
    f = lambda x: math.cos(x) + 1.0 / math.cosh(x)
    roots = []
    for m in range(1, n + 1):
        center = (2 * m - 1) * math.pi / 2.0
        roots.append(brentq(f, center - 1.0, center + 1.0, xtol=1e-14))
    return np.asarray(roots)


def _freefree_even_roots(n: int) -> np.ndarray:
    """Roots of tan(u) + tanh(u) = 0 (u = beta/2 for a unit-width beam)."""
    f = lambda u: math.sin(u) + math.cos(u) * math.tanh(u)
    return np.asarray(
        [
            brentq(f, (4 * k - 1) * math.pi / 4.0 - 0.6,
                   (4 * k - 1) * math.pi / 4.0 + 0.6, xtol=1e-14)
            for k in range(1, n + 1)
        ]
    )


def _freefree_odd_roots(n: int) -> np.ndarray:
    """Nonzero roots of tan(v) - tanh(v) = 0."""
    f = lambda v: math.sin(v) - math.cos(v) * math.tanh(v)
    return np.asarray(
        [
            brentq(f, (4 * k + 1) * math.pi / 4.0 - 0.6,
                   (4 * k + 1) * math.pi / 4.0 + 0.6, xtol=1e-14)
            for k in range(1, n + 1)
        ]
    )


def _cantilever_eval(lam: float, xi: np.ndarray, deriv: int) -> np.ndarray:
    """Clamped-free beam function on [0, 1] or its first two derivatives.

    X = [(1-s) e^{lam xi} + (1+s) e^{-lam xi}]/2 - cos + s sin, with
    1 - s evaluated in cancellation-free form.
    """
    lam_xi = lam * xi
    one_minus_s = (math.exp(-lam) + math.cos(lam) + math.sin(lam)) / (
        math.cosh(lam) + math.cos(lam)
    )
    s = 1.0 - one_minus_s
    # the growing piece stays O(1): (1-s) e^{lam xi} = [(1-s) e^{lam}] e^{-lam(1-xi)}
    grow = (one_minus_s * math.exp(lam)) * np.exp(-lam * (1.0 - xi))
    decay = (1.0 + s) * np.exp(-lam_xi)
    even_part = 0.5 * (grow + decay)
    odd_part = 0.5 * (grow - decay)
    if deriv == 0:
        return even_part - np.cos(lam_xi) + s * np.sin(lam_xi)
    if deriv == 1:
        return lam * (odd_part + np.sin(lam_xi) + s * np.cos(lam_xi))
    if deriv == 2:
        return lam**2 * (even_part + np.cos(lam_xi) - s * np.sin(lam_xi))
    raise ValueError("deriv must be 0, 1 or 2")


def _freefree_even_eval(u: float, eta: np.ndarray, deriv: int) -> np.ndarray:
    """Even free-free shape cos(b eta) + cos(u) cosh(b eta)/cosh(u), b = 2u."""
    b = 2.0 * u
    up = np.exp(-b * (0.5 - eta))
    dn = np.exp(-b * (0.5 + eta))
    # cosh(b eta)/cosh(b/2) and sinh(b eta)/cosh(b/2) via pure decays
    denom = 1.0 + math.exp(-b)
    cosh_r = (up + dn) / denom
    sinh_r = (up - dn) / denom
    c = math.cos(u)
    if deriv == 0:
        return np.cos(b * eta) + c * cosh_r
    if deriv == 1:
        return b * (-np.sin(b * eta) + c * sinh_r)
    if deriv == 2:
        return b**2 * (-np.cos(b * eta) + c * cosh_r)
    raise ValueError("deriv must be 0, 1 or 2")


def _freefree_odd_eval(v: float, eta: np.ndarray, deriv: int) -> np.ndarray:
    """Odd free-free shape sin(b eta) + sin(v) sinh(b eta)/sinh(v), b = 2v."""
    b = 2.0 * v
    up = np.exp(-b * (0.5 - eta))
    dn = np.exp(-b * (0.5 + eta))
    denom = 1.0 - math.exp(-b)
    sinh_r = (up - dn) / denom
    cosh_r = (up + dn) / denom
    s = math.sin(v)
    if deriv == 0:
        return np.sin(b * eta) + s * sinh_r
    if deriv == 1:
        return b * (np.cos(b * eta) + s * cosh_r)
    if deriv == 2:
        return b**2 * (-np.sin(b * eta) + s * sinh_r)
    raise ValueError("deriv must be 0, 1 or 2")


class _WidthFamily:
    """Width-direction basis of definite parity on eta in [-1/2, 1/2]."""

    def __init__(self, parity: str, count: int):
        self.parity = parity
        self.count = count
        if parity == "even":
            self.roots = _freefree_even_roots(max(count - 1, 0))
        else:
            self.roots = _freefree_odd_roots(max(count - 1, 0))

    def eval(self, k: int, eta: np.ndarray, deriv: int) -> np.ndarray:
        eta = np.asarray(eta, dtype=float)
        if k == 0:  # rigid-body shape
            if self.parity == "even":
                out = np.ones_like(eta) if deriv == 0 else np.zeros_like(eta)
                return out
            if deriv == 0:
                return math.sqrt(12.0) * eta
            if deriv == 1:
                return math.sqrt(12.0) * np.ones_like(eta)
            return np.zeros_like(eta)
        root = self.roots[k - 1]
        if self.parity == "even":
            return _freefree_even_eval(root, eta, deriv)
        return _freefree_odd_eval(root, eta, deriv)


class RitzBasis:
    """Product basis X_m(xi) Y_k(eta) for one parity family."""

    def __init__(self, n_x: int, width_family: _WidthFamily):
        self.n_x = n_x
        self.family = width_family
        self.lams = _cantilever_roots(n_x)
        self.pairs = [(m, k) for m in range(n_x) for k in range(width_family.count)]

    def eval_x(self, m: int, xi: np.ndarray, deriv: int) -> np.ndarray:
        return _cantilever_eval(self.lams[m], np.asarray(xi, dtype=float), deriv)

    def eval_y(self, k: int, eta: np.ndarray, deriv: int) -> np.ndarray:
        return self.family.eval(k, eta, deriv)


@dataclass(frozen=True)
class PhononMode:
    """One flexural mode: frequency, exact width parity, damping, shape."""

    index: int
    f_ghz: float
    homega_mev: float
    parity: str
    gamma_mev: float
    coeffs: np.ndarray  # Ritz coefficients within the mode's parity family


class ModeTable:
    """The lowest flexural modes, sorted ascending in frequency.

    A single quality factor applies to every mode, gamma = hbar omega / Q;
    Q = inf gives lossless modes.  Shapes are dimensionless with unit mean
    square over the plate area.
    """

    def __init__(
        self,
        spec: PlateSpec,
        modes: list[PhononMode],
        bases: dict[str, RitzBasis],
        q_factor: float = math.inf,
    ):
        self.spec = spec
        self.modes = modes
        self.bases = bases
        self.q_factor = q_factor

    def __len__(self) -> int:
        return len(self.modes)

    @property
    def frequencies_ghz(self) -> np.ndarray:
        return np.asarray([m.f_ghz for m in self.modes])

    @property
    def homega_mev(self) -> np.ndarray:
        return np.asarray([m.homega_mev for m in self.modes])

    @property
    def gamma_mev(self) -> np.ndarray:
        return np.asarray([m.gamma_mev for m in self.modes])

    def with_q(self, q_factor: float) -> "ModeTable":
        modes = [
            replace(m, gamma_mev=_gamma_mev(m.homega_mev, q_factor))
            for m in self.modes
        ]
        return ModeTable(self.spec, modes, self.bases, q_factor)

    def with_mode_homega(self, index: int, homega_mev: float) -> "ModeTable":
        """Retune a single mode's frequency, keeping its shape.

        Used by detuned-resonance scenarios; the shape (and so the coupling
        overlap) is left untouched and only omega, f, and gamma change.
        """
        modes = list(self.modes)
        old = modes[index - 1]
        modes[index - 1] = replace(
            old,
            f_ghz=homega_mev / H_MEV_PER_GHZ,
            homega_mev=homega_mev,
            gamma_mev=_gamma_mev(homega_mev, self.q_factor),
        )
        modes.sort(key=lambda m: m.f_ghz)
        modes = [replace(m, index=i + 1) for i, m in enumerate(modes)]
        return ModeTable(self.spec, modes, self.bases, self.q_factor)

    # -- shape evaluation ---------------------------------------------------

    def _coords(self, x_nm, y_nm):
        xi = np.asarray(x_nm, dtype=float) / self.spec.length_nm
        eta = np.asarray(y_nm, dtype=float) / self.spec.width_nm
        return xi, eta

    def shape_value(self, mode: PhononMode, x_nm, y_nm) -> np.ndarray:
        """Dimensionless deflection at plate coordinates (x from the clamped
        edge, y from the width midline)."""
        xi, eta = self._coords(x_nm, y_nm)
        basis = self.bases[mode.parity]
        out = np.zeros(np.broadcast(xi, eta).shape)
        for c, (m, k) in zip(mode.coeffs, basis.pairs):
            out += c * basis.eval_x(m, xi, 0) * basis.eval_y(k, eta, 0)
        return out

    def shape_laplacian(self, mode: PhononMode, x_nm, y_nm) -> np.ndarray:
        """Laplacian of the dimensionless shape, in 1/nm^2."""
        xi, eta = self._coords(x_nm, y_nm)
        basis = self.bases[mode.parity]
        out = np.zeros(np.broadcast(xi, eta).shape)
        inv_l2 = 1.0 / self.spec.length_nm**2
        inv_w2 = 1.0 / self.spec.width_nm**2
        for c, (m, k) in zip(mode.coeffs, basis.pairs):
            out += c * (
                basis.eval_x(m, xi, 2) * basis.eval_y(k, eta, 0) * inv_l2
                + basis.eval_x(m, xi, 0) * basis.eval_y(k, eta, 2) * inv_w2
            )
        return out


def _gamma_mev(homega_mev: float, q_factor: float) -> float:
    if math.isinf(q_factor):
        return 0.0
    return homega_mev / q_factor


# ---------------------------------------------------------------------------
# Ritz assembly


def _family_matrices(basis: RitzBasis):
    """Nondimensional integral tables for one parity family."""
    nodes, weights = np.polynomial.legendre.leggauss(GAUSS_POINTS)
    xi = 0.5 * (nodes + 1.0)
    wx = 0.5 * weights
    eta = 0.5 * nodes
    wy = 0.5 * weights

    n_x = basis.n_x
    n_yf = basis.family.count
    X = np.array([[basis.eval_x(m, xi, d) for m in range(n_x)] for d in range(3)])
    Y = np.array([[basis.eval_y(k, eta, d) for k in range(n_yf)] for d in range(3)])

    def gram(a, b, w):
        return (a * w) @ b.T

    ix0 = gram(X[0], X[0], wx)
    ix1 = gram(X[1], X[1], wx)
    ix2 = gram(X[2], X[2], wx)
    ixm = gram(X[2], X[0], wx)  # int X_i'' X_j
    iy0 = gram(Y[0], Y[0], wy)
    iy1 = gram(Y[1], Y[1], wy)
    iy2 = gram(Y[2], Y[2], wy)
    iym = gram(Y[2], Y[0], wy)
    return ix0, ix1, ix2, ixm, iy0, iy1, iy2, iym


def _solve_family(spec: PlateSpec, basis: RitzBasis):
    """Generalized eigensolve for one parity family.

    Returns (omega^2 [1/s^2], coefficient matrix, mass matrix) where the
    coefficients are rescaled for unit-mean-square shapes.
    """
    ix0, ix1, ix2, ixm, iy0, iy1, iy2, iym = _family_matrices(basis)
    L = spec.length_nm * 1e-9
    W = spec.width_nm * 1e-9
    D = spec.bending_rigidity_nm
    nu = spec.material.poisson_ratio

    pairs = basis.pairs
    mi = np.array([p[0] for p in pairs])
    ki = np.array([p[1] for p in pairs])

    def outer(ax, ay):
        return ax[np.ix_(mi, mi)] * ay[np.ix_(ki, ki)]

    K = D * L * W * (
        outer(ix2, iy0) / L**4
        + outer(ix0, iy2) / W**4
        + (nu * (outer(ixm, iym.T) + outer(ixm.T, iym)) + 2.0 * (1.0 - nu) * outer(ix1, iy1))
        / (L**2 * W**2)
    )
    M = spec.areal_density * L * W * outer(ix0, iy0)
    K = 0.5 * (K + K.T)
    M = 0.5 * (M + M.T)
    evals, evecs = eigh(K, M)
    # unit-mean-square shape normalization: c^T Q c = 1 with
    # Q = M / (rho t L W) = M / M_plate
    evecs = evecs * math.sqrt(spec.areal_density * L * W)
    return evals, evecs, M


def solve_modes(
    spec: PlateSpec,
    n_x: int = DEFAULT_NX,
    n_y: int = DEFAULT_NY,
    count: int = 8,
    q_factor: float = math.inf,
    convergence_tol: float = 0.01,
    check_convergence: bool = True,
) -> ModeTable:
    """Lowest `count` flexural modes with exact parity labels.

    The two parity families are solved independently and merged.  When
    `check_convergence` is set, the solve is repeated at doubled basis size
    and a relative frequency shift >= `convergence_tol` on any requested
    mode raises RitzConvergenceError.
    """
    if n_x < 5 or n_y < 5:
        raise ValueError("Ritz basis needs n_x, n_y >= 5")
    if count > n_x * n_y:
        raise ValueError("more modes requested than basis functions")

    def lowest(nx, ny):
        fams = {
            "even": RitzBasis(nx, _WidthFamily("even", (ny + 1) // 2)),
            "odd": RitzBasis(nx, _WidthFamily("odd", ny // 2)),
        }
        rows = []
        for parity, basis in fams.items():
            evals, evecs, _ = _solve_family(spec, basis)
            for i in range(len(evals)):
                rows.append((evals[i], parity, evecs[:, i]))
        rows.sort(key=lambda r: r[0])
        return fams, rows[:count]

    bases, rows = lowest(n_x, n_y)
    if check_convergence:
        _, rows2 = lowest(2 * n_x, 2 * n_y)
        f1 = np.sqrt(np.maximum([r[0] for r in rows], 0.0))
        f2 = np.sqrt(np.maximum([r[0] for r in rows2], 0.0))
        shift = np.max(np.abs(f1 - f2) / f2)
        if shift >= convergence_tol:
            raise RitzConvergenceError(
                f"Ritz frequencies shift by {shift:.2%} under basis doubling"
            )

    modes = []
    for i, (lam, parity, coeffs) in enumerate(rows):
        f_ghz = math.sqrt(max(lam, 0.0)) / (2.0 * math.pi) / 1e9
        homega = H_MEV_PER_GHZ * f_ghz
        modes.append(
            PhononMode(
                index=i + 1,
                f_ghz=f_ghz,
                homega_mev=homega,
                parity=parity,
                gamma_mev=_gamma_mev(homega, q_factor),
                coeffs=np.asarray(coeffs),
            )
        )
    return ModeTable(spec, modes, bases, q_factor)


# ---------------------------------------------------------------------------
# closed-form quality-factor estimates and lifetimes


def q_estimates(spec: PlateSpec) -> dict[str, float]:
    """Clamping-loss quality factors from the two support-radiation models.

    Q_PJ = 3.2 l^5 / (w t^4) and Q_JI = 2.17 (l/t)^3 for a plate of length
    l, width w, thickness t.
    """
    l, w, t = spec.length_nm, spec.width_nm, spec.thickness_nm
    return {
        "Q_PJ": 3.2 * l**5 / (w * t**4),
        "Q_JI": 2.17 * (l / t) ** 3,
    }


def mode_lifetime_ns(f_ghz: float, q_factor: float) -> float:
    """Energy ring-down time Q / (2 pi f) in ns."""
    if q_factor <= 0.0:
        raise ValueError("Q must be positive")
    return q_factor / (2.0 * math.pi * f_ghz)


# ---------------------------------------------------------------------------
# persistence


def save_mode_table(table: ModeTable, path: str) -> None:
    """Write the mode table as structured text (one record per mode)."""
    spec = table.spec
    with open(path, "w") as fh:
        fh.write("# qdnems mode table v1\n")
        fh.write(
            f"plate width_nm={spec.width_nm!r} length_nm={spec.length_nm!r} "
            f"thickness_nm={spec.thickness_nm!r}\n"
        )
        m = spec.material
        fh.write(
            f"material rho_kg_m3={m.rho_kg_m3!r} youngs_modulus_gpa="
            f"{m.youngs_modulus_gpa!r} poisson_ratio={m.poisson_ratio!r}\n"
        )
        fh.write(f"q_factor {table.q_factor!r}\n")
        even = table.bases["even"]
        odd = table.bases["odd"]
        fh.write(
            f"basis n_x={even.n_x} n_even={even.family.count} n_odd={odd.family.count}\n"
        )
        for mode in table.modes:
            fh.write(
                f"mode {mode.index} f_ghz={float(mode.f_ghz)!r} homega_mev="
                f"{float(mode.homega_mev)!r} parity={mode.parity} "
                f"gamma_mev={float(mode.gamma_mev)!r}\n"
            )
            fh.write("coeffs " + " ".join(repr(float(c)) for c in mode.coeffs) + "\n")


def load_mode_table(path: str) -> ModeTable:
    with open(path) as fh:
        lines = fh.read().splitlines()
    if not lines or not lines[0].startswith("# qdnems mode table"):
        raise ValueError(f"{path} is not a mode table file")

    def kv(line):
        return {
            k: v
            for k, v in (
                tok.split("=", 1) for tok in line.split()[1:] if "=" in tok
            )
        }

    plate_kv = kv(lines[1])
    mat_kv = kv(lines[2])
    spec = PlateSpec(
        width_nm=float(plate_kv["width_nm"]),
        length_nm=float(plate_kv["length_nm"]),
        thickness_nm=float(plate_kv["thickness_nm"]),
        material=Material(
            rho_kg_m3=float(mat_kv["rho_kg_m3"]),
            youngs_modulus_gpa=float(mat_kv["youngs_modulus_gpa"]),
            poisson_ratio=float(mat_kv["poisson_ratio"]),
        ),
    )
    q_factor = float(lines[3].split()[1])
    basis_kv = kv(lines[4])
    bases = {
        "even": RitzBasis(int(basis_kv["n_x"]), _WidthFamily("even", int(basis_kv["n_even"]))),
        "odd": RitzBasis(int(basis_kv["n_x"]), _WidthFamily("odd", int(basis_kv["n_odd"]))),
    }
    modes = []
    i = 5
    while i < len(lines):
        head = kv(lines[i])
        index = int(lines[i].split()[1])
        coeffs = np.asarray([float(t) for t in lines[i + 1].split()[1:]])
        modes.append(
            PhononMode(
                index=index,
                f_ghz=float(head["f_ghz"]),
                homega_mev=float(head["homega_mev"]),
                parity=head["parity"],
                gamma_mev=float(head["gamma_mev"]),
                coeffs=coeffs,
            )
        )
        i += 2
    return ModeTable(spec, modes, bases, q_factor)
