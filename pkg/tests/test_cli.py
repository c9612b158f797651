import subprocess
import sys

import pytest

from stokesdarcy import cli
from stokesdarcy.cli import PRESETS, RunConfig, main
from stokesdarcy.timestep import SteppingError


@pytest.fixture(autouse=True)
def clean_env(monkeypatch):
    monkeypatch.delenv(cli.OUTPUT_ENV, raising=False)


def test_run_writes_csv(tmp_path, capsys):
    code = main(["run", "--test", "test1", "--n", "4", "--sigma", "0.015625", "--out", str(tmp_path)])
    assert code == 0
    csv = tmp_path / "run_test1_n4_sigma0.015625_bdf2.csv"
    lines = csv.read_text().splitlines()
    assert lines[0] == "n, t, err_w_bar0, err_p_L2, div_residual" and len(lines) == 66
    out = capsys.readouterr().out
    assert "err_w=" in out and "interface defects" in out


def test_run_backward_euler(tmp_path):
    assert main(["run", "--n", "2", "--sigma", "0.25", "--scheme", "backward-euler",
                 "--out", str(tmp_path)]) == 0
    assert (tmp_path / "run_test1_n2_sigma0.25_backward-euler.csv").exists()


@pytest.mark.parametrize("argv", [
    ["run", "--sigma", "0"],
    ["run", "--sigma", "-1"],
    ["run", "--test", "test9"],
    ["run", "--n", "0"],
    ["run", "--sigma", "0.3"],
    ["run", "--scheme", "leapfrog"],
    ["run", "--nu", "abc"],
    ["run", "--bogus"],
    ["convergence", "--vary", "h", "--levels", "3"],
    ["convergence", "--vary", "h", "--levels", "3", "2"],
    ["convergence", "--vary", "time"],
])
def test_invalid_configuration_exits_1(argv, tmp_path, capsys):
    with_out = argv + ["--out", str(tmp_path)] if argv[0] != "check" else argv
    try:
        code = main(with_out)
    except SystemExit as exc:
        code = exc.code
    assert code == 1
    assert capsys.readouterr().err


def test_bad_config_file_key(tmp_path, capsys):
    cfg = tmp_path / "c.cfg"
    cfg.write_text("nu = 0.2\nviscosity = 3\n")
    assert main(["run", "--config", str(cfg), "--out", str(tmp_path)]) == 1
    assert "viscosity" in capsys.readouterr().err


def test_numerical_failure_exits_2(monkeypatch, tmp_path):
    def boom(cfg):
        raise SteppingError("solve failed", 3)

    monkeypatch.setattr(cli, "simulate", boom)
    assert main(["run", "--out", str(tmp_path)]) == 2


def test_convergence_table(tmp_path, capsys):
    code = main(["convergence", "--vary", "h", "--levels", "1", "2", "3", "--sigma", "0.125",
                 "--no-timing", "--out", str(tmp_path)])
    assert code == 0
    rows = (tmp_path / "table_test1_h.csv").read_text().splitlines()
    assert rows[0] == cli.emit_table.__globals__["TABLE_HEADER"] and len(rows) == 4
    assert rows[1].split(", ")[4] == "" and rows[2].split(", ")[4] != ""
    assert [float(r.split(", ")[0]) for r in rows[1:]] == [0.5, 0.25, 0.125]


def test_convergence_deterministic_without_timing(tmp_path):
    args = ["convergence", "--vary", "sigma", "--levels", "2", "3", "--n", "2", "--no-timing"]
    main(args + ["--out", str(tmp_path / "a")])
    main(args + ["--out", str(tmp_path / "b")])
    a = (tmp_path / "a" / "table_test1_sigma.csv").read_bytes()
    assert a == (tmp_path / "b" / "table_test1_sigma.csv").read_bytes()


def test_run_csv_byte_identical(tmp_path):
    for d in ("a", "b"):
        main(["run", "--n", "2", "--sigma", "0.125", "--out", str(tmp_path / d)])
    name = "run_test1_n2_sigma0.125_bdf2.csv"
    assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_env_var_sets_output_dir(tmp_path, monkeypatch):
    monkeypatch.setenv(cli.OUTPUT_ENV, str(tmp_path / "env"))
    assert main(["run", "--n", "2", "--sigma", "0.25"]) == 0
    assert (tmp_path / "env" / "run_test1_n2_sigma0.25_bdf2.csv").exists()
    # the flag wins over the environment
    assert main(["run", "--n", "2", "--sigma", "0.25", "--out", str(tmp_path / "flag")]) == 0
    assert (tmp_path / "flag" / "run_test1_n2_sigma0.25_bdf2.csv").exists()


@pytest.mark.parametrize("name", ["test1", "test2", "test3"])
def test_dump_config_matches_preset(name, capsys):
    assert main(["run", "--test", name, "--dump-config"]) == 0
    dumped = dict(line.split(" = ") for line in capsys.readouterr().out.splitlines())
    for key, value in PRESETS[name].items():
        assert float(dumped[key]) == value
    assert dumped["test"] == name


def test_presets_differ_as_specified():
    assert PRESETS["test2"]["S0"] == 1e-7
    assert PRESETS["test3"]["S0"] == 1e-10 and PRESETS["test3"]["eta"] == 0.1
    t1 = RunConfig.preset("test1")
    assert (t1.nu, t1.eta, t1.rho, t1.g, t1.S0, t1.k1, t1.k2) == (0.1, 1e-2, 1e3, 10.0, 1e-3, 1.0, 1e-2)


def test_dump_round_trip(tmp_path, capsys):
    main(["run", "--test", "test3", "--n", "8", "--dump-config"])
    text = capsys.readouterr().out
    path = tmp_path / "cfg"
    path.write_text(text)
    main(["run", "--test", "custom", "--config", str(path), "--dump-config"])
    assert capsys.readouterr().out == text


def test_flags_override_config_file(tmp_path, capsys):
    path = tmp_path / "cfg"
    path.write_text("n = 8  # comment\nsigma = 0.125\n")
    main(["run", "--config", str(path), "--n", "16", "--dump-config"])
    dumped = dict(line.split(" = ") for line in capsys.readouterr().out.splitlines())
    assert dumped["n"] == "16" and float(dumped["sigma"]) == 0.125


def test_check_command(capsys):
    assert main(["check"]) == 0
    lines = [line for line in capsys.readouterr().out.splitlines() if line.startswith("[")]
    assert len(lines) >= 12 and all(line.startswith("[PASS]") for line in lines)


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "stokesdarcy", "run", "--dump-config"],
                          capture_output=True, text=True, check=False)
    assert proc.returncode == 0 and "sigma = 0.015625" in proc.stdout
