"""Thermal initial states and ensemble-averaged trajectories.

The phonon bath starts in the diagonal thermal mixture

    p(n) = exp(-E_ph(n)/kT) / Z,

realized as a weighted ensemble of Fock configurations: exact for every
observable of a diagonal initial bath.  Weights are normalized against
the untruncated partition function, so the reported coverage honestly
includes both the enumeration cutoff and the per-mode occupation bound.

Two realization policies: `exhaustive-top-p` walks configurations in
descending weight until the requested coverage is reached (deterministic,
the default), and `weighted-sample` draws a fixed number of independent
configurations from the per-mode truncated geometric distributions
(scalable to temperatures where the exhaustive list explodes).

Each member |k0> (x) |n> evolves as a pure state; the ensemble density
matrix is the weight average, so trajectory columns are built from the
weight-averaged reduced electron matrix (purity and coherence are
nonlinear in rho and must be computed after averaging, not before),
the averaged occupation moments, and the averaged complex
autocorrelation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .chebyshev import ChebyshevPlan, SpectralBounds, EvolveStats, evolve
from .constants import KB_MEV_PER_MK
from .fockbasis import ProductBasis, RelaxationSpec, SparseHamiltonian
from .observables import ObservableSet, ReducedDensityMatrix, TrajectoryRecord
from .plate import ModeTable


class CoverageError(RuntimeError):
    """Requested thermal coverage unreachable within the occupation bounds."""


@dataclass(frozen=True)
class ThermalFieldSpec:
    temperature_mk: float = 50.0
    policy: str = "exhaustive-top-p"  # or "weighted-sample"
    p_cov: float = 0.99
    sample_count: int = 64
    seed: int = 0
    n_max: int = 40

    def __post_init__(self):
        if self.policy not in ("exhaustive-top-p", "weighted-sample"):
            raise ValueError(f"unknown realization policy {self.policy!r}")
        if not (0.0 < self.p_cov <= 1.0):
            raise ValueError("p_cov must lie in (0, 1]")


@dataclass
class EnsembleMember:
    config: tuple[int, ...]
    weight: float


@dataclass
class ThermalEnsemble:
    members: list[EnsembleMember]
    coverage: float
    max_coverage: float
    temperature_mk: float
    policy: str

    @property
    def discarded_tail(self) -> float:
        return 1.0 - self.coverage

    def mean_occupations(self) -> np.ndarray:
        """Weight-averaged occupations over the realized members."""
        w = np.asarray([m.weight for m in self.members])
        cfgs = np.asarray([m.config for m in self.members], dtype=float)
        return (w / w.sum()) @ cfgs


def _mode_boltzmann_factors(
    table: ModeTable, temperature_mk: float
) -> np.ndarray:
    if temperature_mk <= 0.0:
        raise ValueError("temperature must be positive")
    kt = KB_MEV_PER_MK * temperature_mk
    return np.exp(-table.homega_mev / kt)


def enumerate_thermal_states(
    table: ModeTable, spec: ThermalFieldSpec
) -> ThermalEnsemble:
    """Realize the thermal bath as weighted Fock configurations.

    Exact per-configuration weights p(n) = prod_a (1-x_a) x_a^{n_a} with
    x_a = exp(-hbar w_a / kT), normalized against the untruncated
    partition function.  The achievable coverage under the n_max bound is
    prod_a (1 - x_a^{n_max+1}); asking for more raises CoverageError.
    """
    x = _mode_boltzmann_factors(table, spec.temperature_mk)
    vacuum_weight = float(np.prod(1.0 - x))
    max_coverage = float(np.prod(1.0 - x ** (spec.n_max + 1)))

    if spec.policy == "weighted-sample":
        rng = np.random.default_rng(spec.seed)
        members = []
        for _ in range(spec.sample_count):
            cfg = tuple(
                int(np.searchsorted(_truncated_geometric_cdf(xa, spec.n_max), u))
                for xa, u in zip(x, rng.random(len(x)))
            )
            members.append(EnsembleMember(config=cfg, weight=1.0 / spec.sample_count))
        return ThermalEnsemble(
            members=members,
            coverage=1.0,  # sampling reweights; coverage is statistical
            max_coverage=max_coverage,
            temperature_mk=spec.temperature_mk,
            policy=spec.policy,
        )

    if spec.p_cov > max_coverage + 1e-15:
        raise CoverageError(
            f"coverage {spec.p_cov} unreachable: occupation bound n_max="
            f"{spec.n_max} caps coverage at {max_coverage:.12f}"
        )
    # walk configurations in descending weight: identical ordering to the
    # ascending-E_ph heap walk of the basis builder
    import heapq

    n_modes = len(x)
    log_x = np.log(x)
    start = (0,) * n_modes
    heap = [(0.0, start, 0)]  # (-log relative weight, config, lead mode)
    members: list[EnsembleMember] = []
    cum = 0.0
    while heap and cum < spec.p_cov:
        neg_logw, cfg, lead = heapq.heappop(heap)
        w = vacuum_weight * math.exp(-neg_logw)
        members.append(EnsembleMember(config=cfg, weight=w))
        cum += w
        for a in range(lead, n_modes):
            if cfg[a] < spec.n_max:
                nxt = cfg[:a] + (cfg[a] + 1,) + cfg[a + 1 :]
                heapq.heappush(heap, (neg_logw - float(log_x[a]), nxt, a))
    return ThermalEnsemble(
        members=members,
        coverage=cum,
        max_coverage=max_coverage,
        temperature_mk=spec.temperature_mk,
        policy=spec.policy,
    )


def _truncated_geometric_cdf(x: float, n_max: int) -> np.ndarray:
    n = np.arange(n_max + 1)
    pmf = (1.0 - x) * x**n
    cdf = np.cumsum(pmf)
    return cdf / cdf[-1]


def build_initial_state(
    basis: ProductBasis, l: int, nu: int, config
) -> np.ndarray:
    """Unit vector on the product state |l, nu> (x) |config>."""
    kappa = basis.electron_index(l, nu)
    idx = basis.index_of_config(kappa, config)
    psi = np.zeros(basis.dim, dtype=complex)
    psi[idx] = 1.0
    return psi


@dataclass
class EnsembleResult:
    record: TrajectoryRecord
    ensemble: ThermalEnsemble
    member_records: list[TrajectoryRecord] | None
    stats: list[EvolveStats]


def run_ensemble(
    basis: ProductBasis,
    h: SparseHamiltonian,
    bounds: SpectralBounds,
    plan: ChebyshevPlan,
    relax: RelaxationSpec | None,
    ensemble: ThermalEnsemble,
    initial_l: int,
    initial_nu: int,
    t_final_ns: float,
    observe_stride: int = 1,
    keep_members: bool = False,
    workers: int = 1,
) -> EnsembleResult:
    """Evolve every bath member and average the observables.

    The averaged reduced density matrix (not per-member purity) feeds the
    nonlinear columns, matching the mixed-state definition of the
    electronic purity and coherence.  Members share the immutable
    Hamiltonian and may run on `workers` threads; the reduction is an
    ordered sum over the enumeration order, so results are bit-reproducible
    for a fixed ensemble regardless of completion order.
    """
    obs = ObservableSet(basis)
    weights = np.asarray([m.weight for m in ensemble.members])
    wnorm = weights / weights.sum()

    n_steps = round(t_final_ns / plan.dt_ns)
    snap_steps = sorted(
        set(range(0, n_steps + 1, observe_stride)) | {0, n_steps}
    )
    n_snap = len(snap_steps)
    n_el = len(basis.electron_states)
    n_modes = basis.n_modes

    times = np.asarray(snap_steps, dtype=float) * plan.dt_ns
    rho_sum = np.zeros((n_snap, n_el, n_el), dtype=complex)
    occ_sum = np.zeros((n_snap, n_modes))
    w_sum = np.zeros(n_snap)
    xi_sum = np.zeros(n_snap, dtype=complex)
    member_records = [] if keep_members else None
    stats = []
    snap_i = {s: k for k, s in enumerate(snap_steps)}

    def run_member(member: EnsembleMember):
        psi0 = build_initial_state(basis, initial_l, initial_nu, member.config)
        rows = {
            "rho": np.zeros((n_snap, n_el, n_el), dtype=complex),
            "occ": np.zeros((n_snap, n_modes)),
            "w": np.zeros(n_snap),
            "xi": np.zeros(n_snap, dtype=complex),
        }

        def observer(step, t, psi):
            k = snap_i.get(step)
            if k is None:
                return
            rho = obs.reduce_electron(psi)
            rows["rho"][k] = rho.matrix
            rows["occ"][k], _ = obs.mode_occupations(psi)
            rows["w"][k] = obs.inversion_amplitude(psi)
            rows["xi"][k] = obs.autocorrelation(psi0, psi)

        _, st = evolve(
            psi0, h, bounds, plan, relax, t_final_ns,
            observer=observer, observe_stride=observe_stride,
        )
        return rows, st

    if workers > 1 and len(ensemble.members) > 1:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(max_workers=workers) as pool:
            outputs = list(pool.map(run_member, ensemble.members))
    else:
        outputs = [run_member(m) for m in ensemble.members]

    for (member_rows, st), w in zip(outputs, wnorm):
        stats.append(st)
        rho_sum += w * member_rows["rho"]
        occ_sum += w * member_rows["occ"]
        w_sum += w * member_rows["w"]
        xi_sum += w * member_rows["xi"]
        if keep_members:
            member_records.append(
                _record_from_rows(times, member_rows, obs, n_modes)
            )

    avg_rows = {"rho": rho_sum, "occ": occ_sum, "w": w_sum, "xi": xi_sum}
    record = _record_from_rows(times, avg_rows, obs, n_modes)
    record.meta = {
        "coverage": ensemble.coverage,
        "discarded_tail": ensemble.discarded_tail,
        "policy": ensemble.policy,
        "temperature_mk": ensemble.temperature_mk,
        "members": len(ensemble.members),
    }
    record.validate()
    return EnsembleResult(
        record=record,
        ensemble=ensemble,
        member_records=member_records,
        stats=stats,
    )


def _record_from_rows(times, rows, obs: ObservableSet, n_modes: int) -> TrajectoryRecord:
    n_snap = len(times)
    l_el = np.empty(n_snap)
    purity = np.empty(n_snap)
    e_el = np.empty(n_snap)
    pm_abs = np.empty(n_snap)
    pm_phase = np.empty(n_snap)
    for k in range(n_snap):
        rho = rows["rho"][k]
        l_el[k] = float(np.real(np.sum(obs.ls * np.diag(rho).real)))
        purity[k] = float(np.sum(np.abs(rho) ** 2))
        e_el[k] = float(np.sum(obs.energies_el * np.diag(rho).real))
        rdm = ReducedDensityMatrix(
            matrix=rho, electron_ls=obs.ls, electron_energies=obs.energies_el
        )
        pm_abs[k], phase = obs.bloch_coherence(rdm)
        pm_phase[k] = phase / math.pi if not math.isnan(phase) else math.nan
    return TrajectoryRecord(
        times_ns=np.asarray(times, dtype=float),
        l_el=l_el,
        purity=purity,
        e_el_mev=e_el,
        xi_abs=np.abs(rows["xi"]),
        w_inversion=rows["w"].copy(),
        rho_pm_abs=pm_abs,
        rho_pm_phase_over_pi=pm_phase,
        mode_occupations=rows["occ"].copy(),
    )
