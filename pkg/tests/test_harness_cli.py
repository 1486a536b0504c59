import json
import subprocess
import sys

import numpy as np
import pytest

from deltanls import ExperimentConfig, InvalidArgumentError, Outcome, report_constants, run, sweep
from deltanls.cli import main
from deltanls.harness import build_initial_data, constants_table

SMALL = {"grid": {"L": 20.0, "n": 1025}, "T": 0.5}


def _cfg(data, **extra):
    return {**SMALL, "initial_data": data, **extra}


def test_defaults_and_schema():
    cfg = ExperimentConfig.from_dict({"initial_data": {"kind": "ground_state"}})
    assert cfg["p"] == 5.0 and cfg["grid"]["n"] == 4097 and cfg["dt"] == 1e-3
    for bad in ({"initial_data": {"kind": "ground_state"}, "bogus": 1},
                {"initial_data": {"kind": "scaled_ground_state"}},
                {"initial_data": {"kind": "nope"}},
                {"initial_data": {"kind": "ground_state"}, "p": 3},
                {"initial_data": {"kind": "ground_state"}, "grid": {"n": 4096}}):
        with pytest.raises(InvalidArgumentError):
            ExperimentConfig.from_dict(bad)


def test_initial_data_variants(tmp_path, small_grid):
    q = build_initial_data({"kind": "ground_state"}, small_grid, 5.0)
    c = build_initial_data({"kind": "scaled_ground_state", "c": 0.5}, small_grid, 5.0)
    np.testing.assert_allclose(c.values, 0.5 * q.values)
    g = build_initial_data({"kind": "phase_general", "mu": 0.3,
                            "base": {"kind": "gaussian", "width": 2.0, "amplitude": 0.5}}, small_grid, 5.0)
    assert g.values[0] == pytest.approx(0.5 * np.exp(-100.0) * np.exp(0.3j * 400.0))
    np.save(tmp_path / "u0.npy", q.values)
    f = build_initial_data({"kind": "file", "path": "u0.npy"}, small_grid, 5.0, tmp_path)
    np.testing.assert_array_equal(f.values, q.values)
    np.savetxt(tmp_path / "u0.csv", np.c_[q.values.real, q.values.imag], delimiter=",")
    f = build_initial_data({"kind": "file", "path": str(tmp_path / "u0.csv")}, small_grid, 5.0)
    np.testing.assert_allclose(f.values, q.values, rtol=1e-15)
    np.save(tmp_path / "short.npy", q.values[:10])
    with pytest.raises(InvalidArgumentError):
        build_initial_data({"kind": "file", "path": "short.npy"}, small_grid, 5.0, tmp_path)


def test_constants():
    tab = constants_table(5.0)
    assert tab["M_Q"] == pytest.approx(np.sqrt(2)) and tab["E_Q"] == pytest.approx(np.sqrt(2) / 6)
    assert max(abs(v) for v in tab["residuals"].values()) < 1e-14
    assert constants_table(4.0)["sigma_c"] == pytest.approx(5.0)
    assert "M_Q" in report_constants(5.0)


def test_run_blowup_agrees(tmp_path):
    rep = run(_cfg({"kind": "scaled_ground_state", "c": 1.2}), tmp_path)
    assert rep.verdict.label.value == "BlowUpForward"
    assert rep.outcome is Outcome.BLOWUP_EVENT and rep.agreement is True
    report = json.loads((tmp_path / "report.json").read_text())
    assert list(report) == ["config_echo", "constants", "verdict", "outcome", "agreement",
                            "detectors", "timings"]
    assert {"blowup", "scatter", "virial_residual", "cs_slack"} <= set(report["detectors"])
    assert (tmp_path / "series.csv").read_text().startswith("t,M,E,K,N,G,V,Vp\n")


def test_run_undetermined_has_no_agreement():
    # a wide band keeps the probed verdict at the boundary
    rep = run(_cfg({"kind": "phase_ground_state", "gamma": 0.25},
                   classifier={"tol": 1e-2, "max_doublings": 0}, T=0.05))
    assert rep.verdict.label.value == "Undetermined"
    assert rep.agreement is None


def test_sweep_empty_and_bad_axis():
    assert sweep(_cfg({"kind": "phase_ground_state", "gamma": 0.1}), "initial_data.gamma", []) == []
    with pytest.raises(InvalidArgumentError):
        sweep(_cfg({"kind": "phase_ground_state", "gamma": 0.1}), "initial_data.kind", [1.0])
    with pytest.raises(InvalidArgumentError):
        sweep(_cfg({"kind": "phase_ground_state", "gamma": 0.1}), "nothing.here", [1.0])


def test_sweep_parallel_matches_serial(tmp_path):
    cfg = _cfg({"kind": "scaled_ground_state", "c": 0.5}, T=0.2)
    values = [1.3, 0.5, 0.9]
    serial = sweep(cfg, "initial_data.c", values, jobs=1, out_dir=tmp_path / "a")
    parallel = sweep(cfg, "initial_data.c", values, jobs=2, out_dir=tmp_path / "b")
    assert [r["value"] for r in serial] == [0.5, 0.9, 1.3]
    assert serial == parallel
    assert (tmp_path / "a" / "sweep.csv").read_text() == (tmp_path / "b" / "sweep.csv").read_text()


def test_sweep_records_row_failures():
    cfg = _cfg({"kind": "gaussian", "width": 1.0, "amplitude": 0.5}, T=0.05)
    rows = sweep(cfg, "initial_data.width", [-1.0, 1.0])
    assert rows[0]["error"] is not None and rows[1]["error"] is None


def test_cli_constants(capsys):
    assert main(["constants", "5"]) == 0
    assert "E_Q" in capsys.readouterr().out
    assert main(["constants", "3"]) != 0


def test_cli_config_errors(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text('{"initial_data": {"kind": "ground_state"}, "extra": 1}')
    assert main(["simulate", str(bad)]) != 0
    assert main(["simulate", str(tmp_path / "missing.json")]) != 0
    broken = tmp_path / "broken.json"
    broken.write_text("{not json")
    assert main(["classify", str(broken)]) != 0


def test_cli_classify_and_simulate(tmp_path, capsys):
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(_cfg({"kind": "scaled_ground_state", "c": 0.9}, T=0.1)))
    assert main(["classify", str(path)]) == 0
    assert json.loads(capsys.readouterr().out)["label"] == "ScatterForward"
    assert main(["simulate", str(path), "--out", str(tmp_path / "out")]) == 0
    assert (tmp_path / "out" / "series.csv").exists()


def test_cli_sweep(tmp_path, capsys):
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(_cfg({"kind": "scaled_ground_state", "c": 0.9}, T=0.05)))
    assert main(["sweep", str(path), "--axis", "initial_data.c", "--values", "0.8,1.3"]) == 0
    lines = capsys.readouterr().out.strip().splitlines()
    assert lines[0].startswith("value,predicted,observed")
    assert len(lines) == 3


def test_console_script_entry_point(tmp_path):
    out = subprocess.run([sys.executable, "-m", "deltanls.cli", "constants", "4"],
                         capture_output=True, text=True, check=True)
    assert "sigma_c" in out.stdout


@pytest.mark.slow
def test_run_modulated_ground_state_scatters():
    rep = run({"initial_data": {"kind": "phase_ground_state", "gamma": 0.25}, "T": 40.0})
    assert rep.verdict.label.value == "ScatterForward"
    assert rep.verdict.initial.label.value == "Undetermined"
    assert rep.outcome is Outcome.SCATTER_EVIDENCE and rep.agreement is True


@pytest.mark.slow
def test_run_ground_state_reports_disagreement():
    # e^{it}Q is linearly unstable; round-off and discretization seeds grow like e^{6.9 t},
    # so by T=5 the boundary value has left Q(0) and the run is Inconclusive. The
    # disagreement with the GroundStateOrbit prediction is reported, not suppressed.
    rep = run({"initial_data": {"kind": "ground_state"}, "T": 5.0})
    assert rep.verdict.label.value == "GroundStateOrbit"
    assert rep.outcome is Outcome.INCONCLUSIVE
    assert rep.agreement is False


@pytest.mark.slow
def test_gamma_sweep_dichotomy():
    cfg = {"initial_data": {"kind": "phase_ground_state", "gamma": 0.1}, "T": 40.0}
    rows = sweep(cfg, "initial_data.gamma", [-0.5, -0.25, -0.1, 0.1, 0.25, 0.5], jobs=3)
    for row in rows:
        expect = "BlowupEvent" if row["value"] < 0 else "ScatterEvidence"
        assert row["observed"] == expect and row["agreement"] is True


@pytest.mark.slow
def test_mu_sweep_subthreshold_gaussian():
    from deltanls import snapshot
    cfg = {"initial_data": {"kind": "phase_general", "mu": 0.1,
                            "base": {"kind": "gaussian", "width": 1.0, "amplitude": 0.8}}, "T": 20.0}
    mus = [0.1, 0.5, 1.0]
    rows = sweep(cfg, "initial_data.mu", mus, jobs=3)
    assert all(r["predicted"] == "ScatterForward" for r in rows)
    assert all(r["nm"] < 1 for r in rows)
    energies = [snapshot(ExperimentConfig.from_dict(cfg).with_value("initial_data.mu", m).initial_field(),
                         5.0).E for m in mus]
    assert np.all(np.diff(energies) > 0)
