"""Command-line entry point.

    qdnems qfactor  [options]            closed-form Q estimates
    qdnems modes    [options]            solve and export the mode table
    qdnems basis    [options]            build the basis/Hamiltonian, report
    qdnems evolve   [options]            run a scenario end to end
    qdnems validate [options]            oracle self-checks, pass/fail table
    qdnems fit-rabi CSV                  extract the exchange coupling

Options: --config FILE, --scenario NAME, and any number of dot-path
overrides such as --thermal.temperature_mk=100.  Precedence: defaults <
config file < scenario preset < overrides.

Exit codes: 0 success, 1 configuration error, 2 numerical/convergence
error, 3 validation failure.
"""

from __future__ import annotations

import argparse
import math
import os
import sys
import time

import numpy as np

from . import config as cfgmod
from .config import ConfigError, RunConfig
from .chebyshev import SpectralBoundsError
from .coupling import QuadratureError
from .observables import FitFailure, fit_rabi, load_trajectory, save_trajectory
from .plate import (
    PlateSpec,
    Material,
    RitzConvergenceError,
    mode_lifetime_ns,
    q_estimates,
    save_mode_table,
)
from .scenarios import load_preset, preset_names

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_NUMERICAL = 2
EXIT_VALIDATION = 3


def build_config(args, overrides) -> RunConfig:
    config = RunConfig()
    if args.config:
        config = cfgmod.apply_file(config, args.config)
    if args.scenario:
        config = load_preset(args.scenario, base=config)
    for dotted, raw in overrides:
        config = cfgmod.apply_override(config, dotted, raw)
    return cfgmod.validate(config)


def split_overrides(unknown):
    overrides = []
    for token in unknown:
        if not (token.startswith("--") and "=" in token and "." in token):
            raise ConfigError(
                f"unrecognized argument {token!r}; overrides look like "
                "--section.key=value"
            )
        dotted, _, raw = token[2:].partition("=")
        overrides.append((dotted, raw))
    return overrides


def cmd_qfactor(config: RunConfig) -> int:
    spec = _plate_spec(config)
    q = q_estimates(spec)
    print(f"Q_PJ = {q['Q_PJ']:.1f}")
    print(f"Q_JI = {q['Q_JI']:.1f}")
    f1 = 1.5
    print(
        f"ring-down at f = {f1} GHz, Q = 100: "
        f"{mode_lifetime_ns(f1, 100.0):.1f} ns"
    )
    return EXIT_OK


def _plate_spec(config: RunConfig) -> PlateSpec:
    from .pipeline import build_geometry

    plate, _, _ = build_geometry(config)
    return plate


def cmd_modes(config: RunConfig, outdir: str) -> int:
    from .pipeline import build_geometry, build_mode_table
    from .electron import electron_energy

    plate, geometry, magnetic = build_geometry(config)
    gap = electron_energy(1, 1, geometry, magnetic) - electron_energy(
        0, 1, geometry, magnetic
    )
    table = build_mode_table(config, plate, gap)
    os.makedirs(outdir, exist_ok=True)
    path = os.path.join(outdir, f"{config.output_label}_modes.txt")
    save_mode_table(table, path)
    print(f"{len(table)} modes; f1 = {table.modes[0].f_ghz:.3f} GHz")
    for m in table.modes:
        print(
            f"  {m.index:3d}  {m.f_ghz:8.3f} GHz  {m.homega_mev:.5f} meV  "
            f"{m.parity:5s}  gamma = {m.gamma_mev:.3e} meV"
        )
    print(f"wrote {path}")
    return EXIT_OK


def cmd_basis(config: RunConfig, outdir: str) -> int:
    from .pipeline import build_system

    system = build_system(config)
    diag = system.diagnostics()
    os.makedirs(outdir, exist_ok=True)
    path = os.path.join(outdir, f"{config.output_label}_system.json")
    with open(path, "w") as fh:
        fh.write(cfgmod.metadata_json({"config": cfgmod.to_dict(config), **diag}))
    b = diag["basis"]
    p = diag["plan"]
    print(
        f"basis: dim {b['dim']} ({b['n_electron_states']} electron states x "
        f"{b['n_fock_used']} configurations), cutoff {b['energy_cutoff_mev']:.4f} meV"
    )
    print(
        f"hamiltonian: {diag['hamiltonian']['nnz_offdiag']} couplings, "
        f"mean degree {diag['hamiltonian']['mean_row_degree']:.1f}"
    )
    print(
        f"plan: tau = {p['tau']:.1f}, order = {p['order']}, "
        f"order/tau = {p['order_over_tau']:.3f}"
    )
    print(f"wrote {path}")
    return EXIT_OK


def cmd_evolve(config: RunConfig, outdir: str) -> int:
    import hashlib

    from .pipeline import run_scenario

    system, result, meta = run_scenario(config)
    os.makedirs(outdir, exist_ok=True)
    base = os.path.join(outdir, config.output_label)
    csv_path = f"{base}_trajectory.csv"
    digest = save_trajectory(result.record, csv_path)
    meta["outputs"] = {"trajectory_csv": csv_path, "sha256": digest}
    if result.member_records:
        for i, rec in enumerate(result.member_records):
            save_trajectory(rec, f"{base}_member{i:03d}.csv")
    meta_path = f"{base}_metadata.json"
    with open(meta_path, "w") as fh:
        fh.write(cfgmod.metadata_json(meta))
    r = result.record
    print(
        f"evolved {config.scenario_t_final_ns} ns, "
        f"{meta['ensemble']['members']} bath members "
        f"(coverage {meta['ensemble']['coverage']:.3f})"
    )
    print(
        f"final: L_el = {r.l_el[-1]:+.4f}, purity = {r.purity[-1]:.4f}, "
        f"E_el = {r.e_el_mev[-1]:.5f} meV"
    )
    print(f"wrote {csv_path}")
    print(f"wrote {meta_path}")
    return EXIT_OK


def cmd_validate(config: RunConfig) -> int:
    rows = run_validation_suite()
    width = max(len(name) for name, _ in rows)
    failures = 0
    for name, ok in rows:
        print(f"  {name:<{width}}  {'pass' if ok else 'FAIL'}")
        failures += 0 if ok else 1
    if failures:
        print(f"{failures} check(s) failed")
        return EXIT_VALIDATION
    print(f"all {len(rows)} checks passed")
    return EXIT_OK


def run_validation_suite() -> list[tuple[str, bool]]:
    """Compact oracle suite; each row is (name, passed)."""
    import scipy.sparse as sp

    from .chebyshev import estimate_bounds, evolve, plan_step
    from .constants import HBAR_MEV_NS
    from .electron import bessel_root
    from .fockbasis import SparseHamiltonian
    from .oracle import (
        DenseInstance,
        check_observables_against_brute_force,
        jaynes_cummings_reference,
    )

    rows = []

    def check(name, fn):
        try:
            rows.append((name, bool(fn())))
        except Exception:
            rows.append((name, False))

    check(
        "bessel-roots",
        lambda: abs(bessel_root(0, 1) - 2.404826) < 1e-6
        and abs(bessel_root(1, 1) - 3.831706) < 1e-6,
    )

    rng = np.random.default_rng(7)

    def dense_ham(dim, scale=0.02):
        a = rng.standard_normal((dim, dim)) + 1j * rng.standard_normal((dim, dim))
        m = scale * (a + a.conj().T) / 2.0
        diag = np.real(np.diag(m)).copy()
        off = m - np.diag(np.diag(m))
        return m, SparseHamiltonian(diag, sp.csr_matrix(off))

    def cheb_vs_exact():
        m, h = dense_ham(128)
        b = estimate_bounds(h)
        plan = plan_step(b, 0.25, 5e-5)
        psi0 = rng.standard_normal(128) + 1j * rng.standard_normal(128)
        psi0 /= np.linalg.norm(psi0)
        psi, _ = evolve(psi0, h, b, plan, None, t_final_ns=25.0)
        exact = DenseInstance.from_matrix(m).propagate(psi0, 25.0)
        return np.max(np.abs(psi - exact)) < 1e-8

    check("chebyshev-vs-dense-128", cheb_vs_exact)

    def norm_drift():
        _, h = dense_ham(96, scale=0.05)
        b = estimate_bounds(h)
        plan = plan_step(b, 0.25, 5e-5)
        psi0 = rng.standard_normal(96) + 1j * rng.standard_normal(96)
        psi0 /= np.linalg.norm(psi0)
        _, stats = evolve(psi0, h, b, plan, None, t_final_ns=50.0)
        return stats.max_norm_drift < 1e-10

    check("norm-conservation", norm_drift)

    def exchange_period():
        g = 5e-5
        t = np.linspace(0.0, 82.7, 300)
        up, dn = jaynes_cummings_reference(g, 0.0, 0, t)
        period = math.pi * HBAR_MEV_NS / g
        i_half = int(np.argmin(np.abs(t - period / 2.0)))
        return dn[i_half] > 0.999

    check("exchange-reference", exchange_period)

    def brute_force():
        from .fockbasis import enumerate_basis
        from .plate import solve_modes
        from .electron import DotGeometry, MagneticConfig, build_electron_basis

        geom = DotGeometry()
        el = build_electron_basis(geom, MagneticConfig(0.0), 1, 1)
        table = solve_modes(
            PlateSpec(), n_x=5, n_y=12, count=2, check_convergence=False
        )
        basis = enumerate_basis(el, table, size_cap=120, n_max=10)
        psi = rng.standard_normal(basis.dim) + 1j * rng.standard_normal(basis.dim)
        psi /= np.linalg.norm(psi)
        check_observables_against_brute_force(psi, basis)
        return True

    check("observables-vs-brute-force", brute_force)
    return rows


def cmd_fit_rabi(path: str) -> int:
    record = load_trajectory(path)
    fit = fit_rabi(record.times_ns, record.l_el)
    print(f"period    = {fit.period_ns:.3f} ns")
    print(f"coupling  = {fit.coupling_mev:.4e} meV")
    print(f"amplitude = {fit.amplitude:.4f}")
    print(f"peak/median spectral contrast = {fit.peak_to_median:.1f}")
    return EXIT_OK


def main(argv=None) -> int:
    import warnings

    def plain_warning(message, category, filename, lineno, file=None, line=None):
        print(f"warning: {message}", file=sys.stderr)

    warnings.showwarning = plain_warning

    parser = argparse.ArgumentParser(
        prog="qdnems",
        description=__doc__,
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    parser.add_argument("command", choices=[
        "qfactor", "modes", "basis", "evolve", "validate", "fit-rabi",
    ])
    parser.add_argument("target", nargs="?", help="trajectory CSV for fit-rabi")
    parser.add_argument("--config", help="configuration file")
    parser.add_argument(
        "--scenario", help=f"preset name; one of: {', '.join(preset_names())}"
    )
    parser.add_argument("--output", help="output directory override")
    args, unknown = parser.parse_known_args(argv)

    try:
        overrides = split_overrides(unknown)
        config = build_config(args, overrides)
        outdir = args.output or config.output_directory
        if args.command == "qfactor":
            return cmd_qfactor(config)
        if args.command == "modes":
            return cmd_modes(config, outdir)
        if args.command == "basis":
            return cmd_basis(config, outdir)
        if args.command == "evolve":
            return cmd_evolve(config, outdir)
        if args.command == "validate":
            return cmd_validate(config)
        if args.command == "fit-rabi":
            if not args.target:
                raise ConfigError("fit-rabi needs a trajectory CSV path")
            return cmd_fit_rabi(args.target)
        raise AssertionError("unreachable")
    except (ConfigError, KeyError, FileNotFoundError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (
        SpectralBoundsError,
        QuadratureError,
        RitzConvergenceError,
        FitFailure,
        np.linalg.LinAlgError,
    ) as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
