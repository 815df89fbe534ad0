"""Electron eigenstates of a hard-wall circular quantum dot.

States are labelled by the orbital angular momentum l = 0, +-1, +-2, ...
and the radial quantum number nu = 1, 2, ...  The normalized eigenfunction

    phi(r, theta) = J_|l|(a_{l,nu} r / R) exp(i l theta)
                    / (sqrt(pi) R |J_{|l|+1}(a_{l,nu})|)

vanishes at the dot edge r = R, with a_{l,nu} the nu-th positive zero of
the Bessel function J_|l|.  The energy is

    E_{l,nu} = (hbar^2 / 2 m_e) a_{l,nu}^2 / R^2 + mu_B l B

where the linear-in-B Zeeman term uses the effective Bohr magneton
mu_B = e hbar / (2 m_e) built from the same effective mass m_e.  The
quadratic diamagnetic term is dropped; `validate_weak_field` quantifies
the error of doing so and flags fields where the magnetic length falls
below the dot radius.
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq
from scipy.special import jv

from .constants import (
    GAUSS_TO_TESLA,
    HBAR2_OVER_2M0_MEV_NM2,
    MU_B_MEV_PER_T,
    magnetic_length_nm,
)

MAX_ORDER = 50
MAX_INDEX = 50


class WeakFieldError(ValueError):
    """Raised when the dropped diamagnetic term is not negligible (l_B <= R)."""

    def __init__(self, ratio_lb_r: float):
        self.ratio_lb_r = ratio_lb_r
        super().__init__(
            f"weak-field condition violated: l_B/R = {ratio_lb_r:.4g} <= 1"
        )


@dataclass(frozen=True)
class DotGeometry:
    """Hard-wall dot of radius `radius_nm` centered at `offset_nm` on the plate.

    `effective_mass` is the electron effective mass in units of the free
    electron mass.  The offset is measured from the plate center, x along
    the clamped-to-free direction and y along the width.
    """

    radius_nm: float = 75.0
    effective_mass: float = 0.98
    offset_nm: tuple[float, float] = (0.0, 0.0)

    def __post_init__(self):
        if self.radius_nm <= 0.0:
            raise ValueError("dot radius must be positive")
        if self.effective_mass <= 0.0:
            raise ValueError("effective mass must be positive")


@dataclass(frozen=True)
class MagneticConfig:
    """Perpendicular magnetic field, stored in gauss."""

    b_gauss: float = 0.0

    @property
    def b_tesla(self) -> float:
        return self.b_gauss * GAUSS_TO_TESLA

    @property
    def magnetic_length_nm(self) -> float:
        return magnetic_length_nm(self.b_tesla)

    def is_weak_field(self, geometry: DotGeometry) -> bool:
        return self.magnetic_length_nm > geometry.radius_nm


@dataclass(frozen=True, order=False)
class ElectronState:
    """One dot eigenstate (l, nu) with its Bessel root and energy in meV."""

    l: int
    nu: int
    alpha: float
    energy_mev: float


@functools.lru_cache(maxsize=None)
def bessel_root(order: int, index: int) -> float:
    """The index-th positive zero of J_order, to near machine precision.

    Brackets each zero from the large-argument phase of J_order (zeros of
    J_n approach (index + n/2 - 1/4) pi from below) and refines by Brent's
    method on the scipy Bessel evaluation.
    """
    if not (0 <= order <= MAX_ORDER):
        raise ValueError(f"Bessel order {order} outside [0, {MAX_ORDER}]")
    if not (1 <= index <= MAX_INDEX):
        raise ValueError(f"zero index {index} outside [1, {MAX_INDEX}]")

    # McMahon estimate, good to a few percent even for the first zeros of
    # moderate orders; widen the bracket until a sign change is caught.
    beta = (index + 0.5 * order - 0.25) * math.pi
    mu = 4.0 * order**2
    guess = beta - (mu - 1.0) / (8.0 * beta)
    if order > 0 and index == 1:
        # first zeros of high orders sit near order + 1.86 order^(1/3)
        guess = max(guess, order + 1.8557 * order ** (1.0 / 3.0))

    prev = bessel_root(order, index - 1) if index > 1 else max(0.0, order * 0.5)
    width = 0.5
    while width < guess:
        lo = max(guess - width, prev + 1e-9)
        hi = guess + width
        if jv(order, lo) * jv(order, hi) < 0.0:
            return brentq(
                lambda x: jv(order, x),
                lo,
                hi,
                xtol=1e-14,
                rtol=4 * np.finfo(float).eps,
            )
        width *= 2.0
    raise RuntimeError(f"failed to bracket zero {index} of J_{order}")


def kinetic_energy_mev(l: int, nu: int, geometry: DotGeometry) -> float:
    alpha = bessel_root(abs(l), nu)
    scale = HBAR2_OVER_2M0_MEV_NM2 / geometry.effective_mass
    return scale * (alpha / geometry.radius_nm) ** 2


def effective_bohr_magneton_mev_per_t(geometry: DotGeometry) -> float:
    return MU_B_MEV_PER_T / geometry.effective_mass


def electron_energy(
    l: int, nu: int, geometry: DotGeometry, mag: MagneticConfig
) -> float:
    """E_{l,nu} in meV: hard-wall kinetic term plus linear Zeeman shift.

    Raises WeakFieldError if the field is strong enough (l_B <= R) that the
    dropped diamagnetic term invalidates the linear form.
    """
    if mag.b_tesla > 0.0 and not mag.is_weak_field(geometry):
        raise WeakFieldError(mag.magnetic_length_nm / geometry.radius_nm)
    zeeman = effective_bohr_magneton_mev_per_t(geometry) * l * mag.b_tesla
    return kinetic_energy_mev(l, nu, geometry) + zeeman


def build_electron_basis(
    geometry: DotGeometry,
    mag: MagneticConfig,
    l_range: int,
    nu_max: int,
) -> list[ElectronState]:
    """All states with |l| <= l_range, nu <= nu_max, sorted by energy.

    Ties (the +-l degeneracy at B = 0) are broken by (energy, l, nu) so the
    ordering is deterministic and reproducible.
    """
    states = []
    for l in range(-l_range, l_range + 1):
        for nu in range(1, nu_max + 1):
            alpha = bessel_root(abs(l), nu)
            e = electron_energy(l, nu, geometry, mag)
            states.append(ElectronState(l=l, nu=nu, alpha=alpha, energy_mev=e))
    states.sort(key=lambda s: (s.energy_mev, s.l, s.nu))
    return states


def wavefunction_value(
    state: ElectronState, geometry: DotGeometry, r_nm: float, theta: float
) -> complex:
    """Normalized eigenfunction amplitude at (r, theta); zero for r >= R."""
    if r_nm < 0.0:
        raise ValueError("radius must be non-negative")
    r_over = r_nm / geometry.radius_nm
    if r_over >= 1.0:
        return 0.0 + 0.0j
    norm = math.sqrt(math.pi) * geometry.radius_nm * abs(
        jv(abs(state.l) + 1, state.alpha)
    )
    radial = jv(abs(state.l), state.alpha * r_over) / norm
    return radial * complex(math.cos(state.l * theta), math.sin(state.l * theta))


@dataclass(frozen=True)
class WeakFieldReport:
    """Quantifies the linear-Zeeman approximation for a given field.

    The diamagnetic energy is evaluated at the dot edge r = R (its maximum
    over the dot), which is the scale that controls the worst-case energy
    error of dropping it.  `diam_to_ground` relates that energy to the
    orbital ground state and bounds the relative error of the retained
    spectrum.
    """

    b_gauss: float
    magnetic_length_nm: float
    lb_over_r: float
    e_zeeman_mev: float
    e_diam_mev: float
    diam_to_zeeman: float
    diam_to_ground: float
    passes: bool


def validate_weak_field(geometry: DotGeometry, mag: MagneticConfig) -> WeakFieldReport:
    """Weak-field report: l_B/R, Zeeman scale, diamagnetic scale and ratios."""
    b = mag.b_tesla
    lb = magnetic_length_nm(b)
    mu_eff = effective_bohr_magneton_mev_per_t(geometry)
    e_zee = mu_eff * b  # shift of |l| = 1 per unit l
    # e^2 B^2 r^2 / (8 m_e) at r = R, written via hbar^2/2m and the
    # effective magneton to stay inside the meV/nm unit system.
    e_diam = (
        (mu_eff * b * geometry.radius_nm) ** 2
        * geometry.effective_mass
        / (4.0 * HBAR2_OVER_2M0_MEV_NM2)
    )
    e_ground = kinetic_energy_mev(0, 1, geometry)
    return WeakFieldReport(
        b_gauss=mag.b_gauss,
        magnetic_length_nm=lb,
        lb_over_r=lb / geometry.radius_nm,
        e_zeeman_mev=e_zee,
        e_diam_mev=e_diam,
        diam_to_zeeman=(e_diam / e_zee) if e_zee > 0.0 else 0.0,
        diam_to_ground=e_diam / e_ground,
        passes=lb > geometry.radius_nm,
    )
