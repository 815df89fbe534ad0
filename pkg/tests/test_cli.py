"""CLI surface: subcommands, exit codes, file outputs, reproducibility."""

import json
import os

import numpy as np
import pytest

from qdnems.cli import main
from qdnems.observables import load_trajectory
from qdnems.plate import load_mode_table


def run_cli(args):
    return main(args)


class TestQFactor:
    def test_defaults(self, capsys):
        assert run_cli(["qfactor"]) == 0
        out = capsys.readouterr().out
        assert "136.5" in out
        assert "138.9" in out


class TestValidate:
    def test_all_pass(self, capsys):
        assert run_cli(["validate"]) == 0
        out = capsys.readouterr().out
        assert "all" in out and "passed" in out


class TestModes:
    def test_writes_table(self, tmp_path, capsys):
        code = run_cli([
            "modes", "--scenario", "fig4_T50_desk", "--output", str(tmp_path),
        ])
        assert code == 0
        table = load_mode_table(str(tmp_path / "run_modes.txt"))
        assert len(table) == 8
        assert abs(table.modes[0].f_ghz - 1.79) < 0.05


class TestExitCodes:
    def test_unknown_key(self, capsys):
        assert run_cli(["qfactor", "--plate.widht_nm=1000"]) == 1

    def test_unknown_scenario(self, capsys):
        assert run_cli(["modes", "--scenario", "nope"]) == 1

    def test_bad_value(self, capsys):
        assert run_cli(["qfactor", "--plate.width_nm=wide"]) == 1

    def test_missing_fit_target(self, capsys):
        assert run_cli(["fit-rabi"]) == 1

    def test_memory_refusal(self, capsys, monkeypatch):
        monkeypatch.setenv("QDNEMS_MEM_BUDGET_GB", "0.001")
        code = run_cli([
            "basis", "--scenario", "fig4_T50_desk", "--output", "/tmp/nowhere",
        ])
        assert code == 1
        err = capsys.readouterr().err
        assert "budget" in err


@pytest.mark.slow
class TestEvolveEndToEnd:
    def evolve_args(self, outdir, label):
        return [
            "evolve", "--scenario", "fig4_T50_desk", "--output", str(outdir),
            "--scenario.t_final_ns=2", "--thermal.p_cov=0.5",
            "--basis.size_cap=20000", f"--output.label={label}",
        ]

    def test_outputs_and_determinism(self, tmp_path, capsys):
        assert run_cli(self.evolve_args(tmp_path, "a")) == 0
        assert run_cli(self.evolve_args(tmp_path, "b")) == 0
        csv_a = (tmp_path / "a_trajectory.csv").read_bytes()
        csv_b = (tmp_path / "b_trajectory.csv").read_bytes()
        assert csv_a == csv_b

        meta = json.loads((tmp_path / "a_metadata.json").read_text())
        assert meta["outputs"]["sha256"]
        assert meta["ensemble"]["members"] == 1
        assert meta["diagnostics"]["plan"]["order"] > 0

        rec = load_trajectory(str(tmp_path / "a_trajectory.csv"))
        assert rec.l_el[0] == pytest.approx(1.0)
        assert rec.purity[0] == pytest.approx(1.0)

    def test_fit_rabi_subcommand(self, tmp_path, capsys):
        # synthesize a clean trace through the public CSV format
        from qdnems.constants import HBAR_MEV_NS
        from qdnems.observables import TrajectoryRecord, save_trajectory

        g = 5e-5
        t = np.arange(0.0, 124.0, 0.5)
        n = len(t)
        rec = TrajectoryRecord(
            times_ns=t,
            l_el=np.cos(2 * g / HBAR_MEV_NS * t),
            purity=np.ones(n),
            e_el_mev=np.full(n, 0.1),
            xi_abs=np.ones(n),
            w_inversion=np.cos(2 * g / HBAR_MEV_NS * t),
            rho_pm_abs=np.zeros(n),
            rho_pm_phase_over_pi=np.zeros(n),
            mode_occupations=np.zeros((n, 2)),
        )
        path = tmp_path / "trace.csv"
        save_trajectory(rec, str(path))
        assert run_cli(["fit-rabi", str(path)]) == 0
        out = capsys.readouterr().out
        assert "41.3" in out
