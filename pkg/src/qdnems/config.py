"""Run configuration: flat-sectioned text files with unit-suffixed keys.

Every physical key carries its unit in its name (_nm, _mk, _gauss, _ns,
_mev...) so a config file can be read without consulting the docs.
Precedence when assembling a run: built-in defaults, then the user config
file, then a named scenario preset, then command-line dot-path overrides
(--section.key=value).  Unknown sections or keys are rejected with the
list of valid ones.
"""

from __future__ import annotations

import configparser
import io
import json
import math
import os
from dataclasses import dataclass, field, fields

import numpy as np


class ConfigError(ValueError):
    pass


def _parse_bool(s: str) -> bool:
    v = s.strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"not a boolean: {s!r}")


def _parse_q(s: str) -> float:
    v = s.strip().lower()
    if v in ("inf", "infinite", "infinity"):
        return math.inf
    return float(s)


def _parse_opt_int(s: str):
    return None if s.strip().lower() in ("", "none") else int(s)


def _parse_opt_float(s: str):
    return None if s.strip().lower() in ("", "none") else float(s)


@dataclass
class RunConfig:
    # plate
    plate_width_nm: float = 1200.0
    plate_length_nm: float = 200.0
    plate_thickness_nm: float = 50.0
    plate_rho_kg_m3: float = 2329.0
    plate_youngs_modulus_gpa: float = 169.0
    plate_poisson_ratio: float = 0.28
    # dot
    dot_radius_nm: float = 75.0
    dot_effective_mass: float = 0.98
    dot_offset_x_nm: float = 0.0
    dot_offset_y_nm: float = 0.0
    # magnetic
    magnetic_b_gauss: float = 0.0
    # modes
    modes_count: int = 40
    modes_q_factor: float = 100.0
    modes_ritz_nx: int = 6
    modes_ritz_ny: int = 20
    modes_detuned_index: int | None = None
    modes_detuned_delta_fraction: float | None = None
    # coupling
    coupling_dp_constant_ev: float = 9.0
    coupling_sheet_offset_nm: float = 12.5
    coupling_calibrate_target_mev: float | None = 5e-5
    coupling_quad_radial: int = 48
    coupling_quad_angular: int = 96
    # basis
    basis_l_range: int = 10
    basis_nu_max: int = 2
    basis_n_max: int = 40
    basis_size_cap: int = 120000
    basis_oversample: float = 1.5
    basis_drop_tolerance_mev: float = 1e-14
    basis_window_policy: str = "bottom"
    # propagation
    propagation_dt_ns: float = 0.25
    propagation_eps_acc: float = 5e-5
    propagation_bounds_margin: float = 0.05
    # thermal
    thermal_temperature_mk: float = 50.0
    thermal_policy: str = "exhaustive-top-p"
    thermal_p_cov: float = 0.99
    thermal_sample_count: int = 64
    thermal_seed: int = 0
    # scenario
    scenario_initial_l: int = 1
    scenario_initial_nu: int = 1
    scenario_t_final_ns: float = 200.0
    scenario_observe_stride_ns: float = 1.0
    scenario_relaxation: str = "on"  # on | off | literal-identity
    scenario_keep_members: bool = False
    # output
    output_directory: str = "runs"
    output_label: str = "run"


# (section, key) -> (attribute, parser)
_SCHEMA: dict[tuple[str, str], tuple[str, object]] = {}


def _register_schema():
    for f in fields(RunConfig):
        section, _, key = f.name.partition("_")
        parser: object = None
        if f.name == "modes_q_factor":
            parser = _parse_q
        elif f.name in ("modes_detuned_index",):
            parser = _parse_opt_int
        elif f.name in ("modes_detuned_delta_fraction", "coupling_calibrate_target_mev"):
            parser = _parse_opt_float
        elif f.type in ("float", float):
            parser = float
        elif f.type in ("int", int):
            parser = int
        elif f.type in ("bool", bool):
            parser = _parse_bool
        else:
            parser = str
        _SCHEMA[(section, key)] = (f.name, parser)


_register_schema()


def valid_keys() -> list[str]:
    return sorted(f"{s}.{k}" for s, k in _SCHEMA)


def apply_file(config: RunConfig, path: str) -> RunConfig:
    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    with open(path) as fh:
        parser.read_file(fh)
    return _apply_parser(config, parser, origin=path)


def apply_text(config: RunConfig, text: str, origin: str = "<text>") -> RunConfig:
    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    parser.read_file(io.StringIO(text))
    return _apply_parser(config, parser, origin=origin)


def _apply_parser(config, parser, origin):
    for section in parser.sections():
        for key, raw in parser.items(section):
            config = apply_override(config, f"{section}.{key}", raw, origin=origin)
    return config


def apply_override(
    config: RunConfig, dotted_key: str, raw: str, origin: str = "<cli>"
) -> RunConfig:
    section, _, key = dotted_key.partition(".")
    entry = _SCHEMA.get((section.strip(), key.strip()))
    if entry is None:
        raise ConfigError(
            f"unknown config key {dotted_key!r} (from {origin}); valid keys:\n  "
            + "\n  ".join(valid_keys())
        )
    attr, parse = entry
    try:
        value = parse(raw)
    except ConfigError:
        raise
    except Exception as exc:
        raise ConfigError(f"bad value {raw!r} for {dotted_key} (from {origin}): {exc}")
    from dataclasses import replace

    return replace(config, **{attr: value})


def validate(config: RunConfig) -> RunConfig:
    positive = [
        "plate_width_nm", "plate_length_nm", "plate_thickness_nm",
        "plate_rho_kg_m3", "plate_youngs_modulus_gpa", "dot_radius_nm",
        "dot_effective_mass", "modes_count", "coupling_dp_constant_ev",
        "basis_l_range", "basis_nu_max", "basis_n_max", "basis_size_cap",
        "propagation_dt_ns", "thermal_temperature_mk", "scenario_t_final_ns",
    ]
    for name in positive:
        if getattr(config, name) <= 0:
            raise ConfigError(f"{name} must be positive")
    if config.magnetic_b_gauss < 0:
        raise ConfigError("magnetic_b_gauss must be non-negative")
    if config.basis_window_policy not in ("bottom", "centered"):
        raise ConfigError("basis.window_policy must be 'bottom' or 'centered'")
    if config.scenario_relaxation not in ("on", "off", "literal-identity"):
        raise ConfigError("scenario.relaxation must be on, off or literal-identity")
    if config.modes_q_factor <= 0:
        raise ConfigError("modes.q_factor must be positive (or 'infinite')")
    return config


def to_dict(config: RunConfig) -> dict:
    out = {}
    for f in fields(RunConfig):
        v = getattr(config, f.name)
        if isinstance(v, float) and math.isinf(v):
            v = "infinite"
        out[f.name] = v
    return out


def memory_estimate_bytes(config: RunConfig) -> int:
    """Coarse upper estimate of the evolve working set.

    State buffers (5 complex vectors), the occupation cache, and the
    coupling CSR assuming every one-quantum neighbor survives the drop.
    """
    dim = config.basis_size_cap
    n_el = (2 * config.basis_l_range + 1) * config.basis_nu_max
    vectors = 6 * dim * 16
    occupations = dim * config.modes_count * 8
    nnz = dim * min(n_el, 12) * 2 * config.modes_count
    csr = nnz * 20 * 2  # original + rescaled copy
    return vectors + occupations + csr


def memory_budget_bytes() -> int:
    gb = float(os.environ.get("QDNEMS_MEM_BUDGET_GB", "8"))
    return int(gb * 2**30)


def worker_count() -> int:
    return max(1, int(os.environ.get("QDNEMS_WORKERS", "1")))


def metadata_json(meta: dict) -> str:
    return json.dumps(meta, indent=2, sort_keys=True, default=_json_default)


def _json_default(v):
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, (np.floating,)):
        return float(v)
    if isinstance(v, np.ndarray):
        return v.tolist()
    if isinstance(v, float) and math.isinf(v):
        return "infinite"
    return str(v)
