"""End-to-end orchestration: config -> system -> trajectory + metadata."""

from __future__ import annotations

import math
import time
from dataclasses import dataclass

import numpy as np

from . import __version__, config as cfgmod
from .chebyshev import ChebyshevPlan, SpectralBounds, estimate_bounds, plan_step
from .config import ConfigError, RunConfig
from .coupling import (
    CouplingConfig,
    CouplingTensor,
    build_coupling_tensor,
    calibrate_scale,
)
from .electron import (
    DotGeometry,
    ElectronState,
    MagneticConfig,
    build_electron_basis,
    electron_energy,
    validate_weak_field,
)
from .fockbasis import (
    ProductBasis,
    RelaxationSpec,
    SparseHamiltonian,
    assemble_hamiltonian,
    enumerate_basis,
)
from .plate import Material, ModeTable, PlateSpec, solve_modes
from .thermal import (
    ThermalEnsemble,
    ThermalFieldSpec,
    enumerate_thermal_states,
    run_ensemble,
)


@dataclass
class System:
    """Everything needed to evolve: geometry through sparse Hamiltonian."""

    config: RunConfig
    geometry: DotGeometry
    magnetic: MagneticConfig
    plate: PlateSpec
    table: ModeTable
    electron_states: list[ElectronState]
    tensor: CouplingTensor
    basis: ProductBasis
    h: SparseHamiltonian
    bounds: SpectralBounds
    plan: ChebyshevPlan
    calibration_factor: float

    def diagnostics(self) -> dict:
        return {
            "basis": self.basis.diagnostics(),
            "hamiltonian": self.h.diagnostics(),
            "bounds": {
                "e_min_mev": self.bounds.e_min,
                "e_max_mev": self.bounds.e_max,
                "e_bar_mev": self.bounds.e_bar,
                "eps_spec_mev": self.bounds.eps_spec,
            },
            "plan": self.plan.diagnostics(),
            "calibration_factor": self.calibration_factor,
            "mode_homega_mev": [m.homega_mev for m in self.table.modes],
            "mode_parities": [m.parity for m in self.table.modes],
            "weak_field": vars(validate_weak_field(self.geometry, self.magnetic)),
        }


def build_geometry(config: RunConfig):
    plate = PlateSpec(
        width_nm=config.plate_width_nm,
        length_nm=config.plate_length_nm,
        thickness_nm=config.plate_thickness_nm,
        material=Material(
            rho_kg_m3=config.plate_rho_kg_m3,
            youngs_modulus_gpa=config.plate_youngs_modulus_gpa,
            poisson_ratio=config.plate_poisson_ratio,
        ),
    )
    geometry = DotGeometry(
        radius_nm=config.dot_radius_nm,
        effective_mass=config.dot_effective_mass,
        offset_nm=(config.dot_offset_x_nm, config.dot_offset_y_nm),
    )
    if (
        abs(geometry.offset_nm[0]) + geometry.radius_nm > plate.length_nm / 2.0
        or abs(geometry.offset_nm[1]) + geometry.radius_nm > plate.width_nm / 2.0
    ):
        raise ConfigError("dot footprint extends beyond the plate")
    magnetic = MagneticConfig(b_gauss=config.magnetic_b_gauss)
    return plate, geometry, magnetic


def build_mode_table(config: RunConfig, plate: PlateSpec, gap_mev: float | None) -> ModeTable:
    table = solve_modes(
        plate,
        n_x=config.modes_ritz_nx,
        n_y=config.modes_ritz_ny,
        count=config.modes_count,
        q_factor=config.modes_q_factor,
    )
    if config.modes_detuned_index is not None:
        if config.modes_detuned_delta_fraction is None:
            raise ConfigError("detuned mode requested without a delta fraction")
        if gap_mev is None:
            raise ConfigError("detuned mode needs the electronic gap")
        target = gap_mev * (1.0 + config.modes_detuned_delta_fraction)
        table = table.with_mode_homega(config.modes_detuned_index, target)
    return table


def build_system(config: RunConfig, check_memory: bool = True) -> System:
    config = cfgmod.validate(config)
    if check_memory:
        est = cfgmod.memory_estimate_bytes(config)
        budget = cfgmod.memory_budget_bytes()
        if est > budget:
            raise ConfigError(
                f"estimated working set {est / 2**30:.1f} GiB exceeds the "
                f"budget {budget / 2**30:.1f} GiB (QDNEMS_MEM_BUDGET_GB)"
            )
    plate, geometry, magnetic = build_geometry(config)
    electron_states = build_electron_basis(
        geometry, magnetic, config.basis_l_range, config.basis_nu_max
    )
    gap = electron_energy(1, 1, geometry, magnetic) - electron_energy(
        0, 1, geometry, magnetic
    )
    table = build_mode_table(config, plate, gap)
    tensor = build_coupling_tensor(
        electron_states,
        table,
        geometry,
        CouplingConfig(
            dp_constant_ev=config.coupling_dp_constant_ev,
            sheet_offset_nm=config.coupling_sheet_offset_nm,
            n_radial=config.coupling_quad_radial,
            n_angular=config.coupling_quad_angular,
        ),
    )
    factor = 1.0
    if config.coupling_calibrate_target_mev is not None:
        tensor, factor = calibrate_scale(tensor, config.coupling_calibrate_target_mev)
    basis = enumerate_basis(
        electron_states,
        table,
        size_cap=config.basis_size_cap,
        n_max=config.basis_n_max,
        oversample=config.basis_oversample,
        window_center_mev=(
            None
            if config.basis_window_policy == "bottom"
            else electron_energy(
                config.scenario_initial_l, config.scenario_initial_nu, geometry, magnetic
            )
        ),
    )
    h = assemble_hamiltonian(basis, tensor, config.basis_drop_tolerance_mev)
    bounds = estimate_bounds(h, margin=config.propagation_bounds_margin)
    plan = plan_step(bounds, config.propagation_dt_ns, config.propagation_eps_acc)
    return System(
        config=config,
        geometry=geometry,
        magnetic=magnetic,
        plate=plate,
        table=table,
        electron_states=electron_states,
        tensor=tensor,
        basis=basis,
        h=h,
        bounds=bounds,
        plan=plan,
        calibration_factor=factor,
    )


def thermal_spec(config: RunConfig) -> ThermalFieldSpec:
    return ThermalFieldSpec(
        temperature_mk=config.thermal_temperature_mk,
        policy=config.thermal_policy,
        p_cov=config.thermal_p_cov,
        sample_count=config.thermal_sample_count,
        seed=config.thermal_seed,
        n_max=config.basis_n_max,
    )


def relaxation_spec(config: RunConfig, system: System) -> RelaxationSpec | None:
    if config.scenario_relaxation == "off":
        return None
    spec = RelaxationSpec.from_mode_table(
        system.table, config.thermal_temperature_mk, enabled=True
    )
    if config.scenario_relaxation == "literal-identity":
        spec.model = "literal-identity"
    return spec


def run_scenario(config: RunConfig, system: System | None = None):
    """Build (or reuse) the system, realize the bath, evolve, average."""
    t0 = time.perf_counter()
    if system is None:
        system = build_system(config)
    ensemble = enumerate_thermal_states(system.table, thermal_spec(config))
    relax = relaxation_spec(config, system)
    stride = max(1, round(config.scenario_observe_stride_ns / config.propagation_dt_ns))
    result = run_ensemble(
        system.basis,
        system.h,
        system.bounds,
        system.plan,
        relax,
        ensemble,
        initial_l=config.scenario_initial_l,
        initial_nu=config.scenario_initial_nu,
        t_final_ns=config.scenario_t_final_ns,
        observe_stride=stride,
        keep_members=config.scenario_keep_members,
        workers=cfgmod.worker_count(),
    )
    meta = build_metadata(config, system, result, time.perf_counter() - t0)
    return system, result, meta


def build_metadata(config: RunConfig, system: System, result, wall_s: float) -> dict:
    import scipy

    return {
        "config": cfgmod.to_dict(config),
        "diagnostics": system.diagnostics(),
        "ensemble": {
            "members": len(result.ensemble.members),
            "coverage": result.ensemble.coverage,
            "discarded_tail": result.ensemble.discarded_tail,
            "max_coverage": result.ensemble.max_coverage,
            "policy": result.ensemble.policy,
        },
        "evolution": {
            "total_matvecs": int(sum(s.matvecs for s in result.stats)),
            "max_norm_drift": float(max(s.max_norm_drift for s in result.stats)),
            "steps_per_member": result.stats[0].steps if result.stats else 0,
        },
        "wall_clock_s": wall_s,
        "versions": {
            "qdnems": __version__,
            "numpy": np.__version__,
            "scipy": scipy.__version__,
        },
    }
