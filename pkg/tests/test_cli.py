import csv
import json

import numpy as np
import pytest

from ambec.cli import Run, emit_plot_data, main, read_config, read_trajectory_csv


def run(tmp_path, *argv, name="out"):
    out = tmp_path / name
    code = main([*argv, "--output", str(out)])
    return code, out


def rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def test_verify_passes_and_writes_manifest(tmp_path):
    code, out = run(tmp_path, "verify", "--family", "V", "--preset", "y0")
    assert code == 0
    m = json.loads((out / "manifest.json").read_text())
    assert m["status"] == "pass" and m["command"] == "verify"
    assert "verify.csv" in m["artifacts"] and len(m["artifacts"]["verify.csv"]) == 64
    assert "residual_spectral" in m["tolerances"]
    kv = {r["key"]: r["value"] for r in rows(out / "verify.csv")}
    assert float(kv["y0_relations_deviation"]) < 1e-8


def test_verify_fd_family(tmp_path):
    code, out = run(tmp_path, "verify", "--family", "IV")
    assert code == 0
    kv = {r["key"]: r["value"] for r in rows(out / "verify.csv")}
    assert kv["periodic"] == "False" and int(kv["grid_n"]) == 65536


def test_failed_check_exits_1(tmp_path):
    code, out = run(tmp_path, "verify", "--family", "I", "--set", "g_a=0.5")
    assert code == 1
    fails = json.loads((out / "failures.json").read_text())["failures"]
    assert fails[0]["check"] == "residual_sup"
    assert json.loads((out / "manifest.json").read_text())["status"] == "fail"


def test_domain_violation_exits_2(tmp_path, capsys):
    code, _ = run(tmp_path, "verify", "--family", "III", "--set", "y=1", "--set", "B=1")
    assert code == 2
    assert "y ≠ B" in capsys.readouterr().err


@pytest.mark.parametrize("text", ["[grid]\nbogus = 1\n", "[nonsense]\nn = 1\n", "[grid]\nn = many\n",
                                  "[run]\ncommand = sweep\n"])
def test_bad_config_exits_2(tmp_path, text):
    cfg = tmp_path / "c.ini"
    cfg.write_text(text)
    code, _ = run(tmp_path, "verify", "--family", "I", "--config", str(cfg))
    assert code == 2


def test_bad_flag_exits_2(tmp_path):
    assert run(tmp_path, "verify", "--family", "I", "--set", "zeta=1")[0] == 2
    assert run(tmp_path, "evolve", "--family", "I", "--scheme", "euler")[0] == 2
    assert run(tmp_path, "verify", "--family", "VII")[0] == 2


def test_rerun_from_config_is_byte_identical(tmp_path):
    code, a = run(tmp_path, "evolve", "--family", "I", "--n", "256", "--dt", "0.01",
                  "--t-end", "0.2", "--noise", "1e-4", "--seed", "3", "--snapshots", "0.1", name="a")
    assert code == 0
    code, b = run(tmp_path, "evolve", "--config", str(a / "config.ini"), name="b")
    assert code == 0
    for f in ("trajectory.csv", "manifest.json", "config.ini", "snapshot_t0.10000000000000001.dat"):
        assert (a / f).read_bytes() == (b / f).read_bytes(), f


def test_evolve_check_and_diagnose(tmp_path):
    code, out = run(tmp_path, "evolve", "--family", "V", "--preset", "y0_repulsive", "--n", "512",
                    "--dt", "0.001", "--t-end", "0.5", "--check", "--snapshots", "0,0.001,0.002")
    assert code == 0
    traj = read_trajectory_csv(out / "trajectory.csv")
    assert traj.times[-1] == pytest.approx(0.5)
    snaps = sorted(out.glob("snapshot_*.dat"))
    assert len(snaps) == 3
    code, d = run(tmp_path, "diagnose", "--family", "V", "--preset", "y0_repulsive",
                  "--snapshot", ",".join(map(str, snaps)), "--trajectory", str(out / "trajectory.csv"),
                  name="d")
    assert code == 0
    rep = {(r["source"], r["key"]): r["value"] for r in rows(d / "report.csv")}
    assert float(rep[("trajectory", "mu_from_atomic_phase")]) == pytest.approx(-2.0, abs=1e-6)
    assert float(rep[("snapshots", "continuity_max")]) < 1e-6


def test_diagnose_needs_input(tmp_path):
    assert run(tmp_path, "diagnose")[0] == 2


def test_catalog_scan(tmp_path):
    code, out = run(tmp_path, "catalog", "--family", "I", "--scan", "B=0.5,5,50")
    assert code == 0
    assert len(list(out.glob("plot_profile_I_*.dat"))) == 3
    assert len(rows(out / "catalog.csv")) == 6
    assert run(tmp_path, "catalog", "--family", "I", "--scan", "mu=1,2", name="x")[0] == 2


def test_sweep_monotone_branch(tmp_path):
    code, out = run(tmp_path, "sweep", "--family", "I", "--param", "B", "--from", "0.1",
                    "--to", "10", "--steps", "21")
    assert code == 0
    r = rows(out / "branch.csv")
    assert len(r) == 21
    plot = np.loadtxt(out / "plot_branch.dat")
    assert plot.shape == (21, 2) and 0.99 < plot[-1, 1] < 1.0
    mr = np.array([float(x["mu_ratio"]) for x in r])
    ft = np.array([float(x["flat_top"]) for x in r])
    assert np.all(np.diff(mr) > 0) and np.all(np.diff(ft) < 0)
    code2, out2 = run(tmp_path, "sweep", "--family", "I", "--param", "B", "--from", "0.1",
                      "--to", "10", "--steps", "21", "--workers", "2", name="par")
    assert code2 == 0
    r2 = rows(out2 / "branch.csv")
    assert [float(x["mu_ratio"]) for x in r2] == pytest.approx(mr, rel=1e-9)


def test_sweep_across_domain_boundary_exits_1(tmp_path):
    cfg = tmp_path / "s.ini"
    cfg.write_text("[sweep]\nunknowns = A, mu, epsilon, g_a, g_m, g_am, alpha\n")
    code, out = run(tmp_path, "sweep", "--family", "III", "--set", "y=0", "--param", "y",
                    "--from", "0", "--to", "2", "--steps", "11", "--config", str(cfg))
    assert code == 1
    fails = json.loads((out / "failures.json").read_text())["failures"]
    assert "last good y=0.8" in fails[0]["value"]


def test_solve_constraints_from_config(tmp_path):
    cfg = tmp_path / "p.ini"
    cfg.write_text("[run]\ncommand = solve-constraints\n[family]\nfamily = V\n"
                   "[problem]\nknowns = beta=1, alpha=1, g_a=-1, y=0\n"
                   "unknowns = A, D, mu, epsilon, g_m, g_am\n"
                   "guess = A=2, D=-2, mu=-1.8, epsilon=-2.8, g_m=-0.9, g_am=1.1\n")
    assert read_config(cfg)["problem"]["knowns"]["g_a"] == -1
    code, out = run(tmp_path, "solve-constraints", "--config", str(cfg))
    assert code == 0
    sol = rows(out / "solution.csv")[0]
    assert float(sol["mu"]) == pytest.approx(-2.0, abs=1e-8)
    assert float(sol["epsilon"]) == pytest.approx(-3.0, abs=1e-8)


def test_empty_plot_data_is_header_only(tmp_path):
    r = Run("evolve", {}, tmp_path)
    p = emit_plot_data(r, "empty", ("t", "N"), ([], []))
    assert p.read_text() == "# t  N\n"


def test_output_root_from_environment(tmp_path, monkeypatch):
    monkeypatch.setenv("AMBEC_OUTPUT_ROOT", str(tmp_path / "root"))
    assert main(["catalog"]) == 0
    assert (tmp_path / "root" / "catalog" / "catalog.csv").exists()
