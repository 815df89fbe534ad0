"""Shared small-scale pipeline fixtures."""

import warnings

import numpy as np
import pytest

from qdnems.coupling import CouplingConfig, build_coupling_tensor, calibrate_scale
from qdnems.electron import DotGeometry, MagneticConfig, build_electron_basis
from qdnems.fockbasis import assemble_hamiltonian, enumerate_basis
from qdnems.plate import PlateSpec, solve_modes


@pytest.fixture(scope="session")
def small_instance():
    """Real-pipeline instance small enough for dense oracles (dim <= 512).

    Three electron states (l = 0, +-1), two flexural modes, calibrated
    coupling; everything downstream of the quadrature is exercised.
    """
    geom = DotGeometry()
    mag = MagneticConfig(0.0)
    el = build_electron_basis(geom, mag, l_range=1, nu_max=1)
    table = solve_modes(
        PlateSpec(), n_x=5, n_y=12, count=2, q_factor=100.0, check_convergence=False
    )
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", UserWarning)
        tensor = build_coupling_tensor(
            el, table, geom, CouplingConfig(), check_convergence=False
        )
    tensor, _ = calibrate_scale(tensor, 5e-5)
    basis = enumerate_basis(el, table, size_cap=400, n_max=15)
    h = assemble_hamiltonian(basis, tensor)
    return {
        "geometry": geom,
        "electron_states": el,
        "table": table,
        "tensor": tensor,
        "basis": basis,
        "h": h,
    }


@pytest.fixture()
def rng():
    return np.random.default_rng(20260809)


def random_state(rng, dim):
    psi = rng.standard_normal(dim) + 1j * rng.standard_normal(dim)
    return psi / np.linalg.norm(psi)
