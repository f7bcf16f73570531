import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from crnlab import io
from crnlab.cli import main
from crnlab.config import load_config
from crnlab.cli import dispatch

FIXTURES = Path(__file__).parent / "fixtures"
INVALID = sorted((FIXTURES / "invalid").glob("*.cfg"))


def key_values(text):
    out = {}
    for line in text.splitlines():
        for tok in line.split():
            if "=" in tok and not tok.startswith("="):
                k, v = tok.split("=", 1)
                out.setdefault(k, v)
    return out


def write_cfg(path, *lines):
    path.write_text("\n".join(lines) + "\n")
    return path


SMALL = (
    "network.text = A + 2B <-> B + C",
    "domain.cells = 16",
    "init.A = 2",
    "init.B = 1",
    "init.C = 1",
    "init.B.modes = 1:0.1",
    "time.dt = 1e-2",
    "time.t_end = 0.5",
    "time.record_every = 5",
)


def test_parse(capsys):
    assert main(["parse", "--network", "A + 2B <-> B + C"]) == 0
    out = capsys.readouterr().out
    assert out.splitlines()[0] == "A + 2B <-> B + C"
    assert "alpha=1,2,0 beta=0,1,1" in out
    assert "M1 = A + C" in out and "M2 = B + C" in out


def test_parse_from_file(tmp_path, capsys):
    f = tmp_path / "n.txt"
    f.write_text("A -> B ; kf=2\nB -> A\n")
    assert main(["parse", "--network-file", str(f)]) == 0
    assert capsys.readouterr().out.startswith("A <-> B ; kf=2.0, kr=1.0")


def test_parse_syntax_error(capsys):
    assert main(["parse", "--network", "A + <-> B"]) == 1
    assert "line 1" in capsys.readouterr().err


def test_analyze_class_3_2(capsys):
    assert main(["analyze", "--network", "A + 2B <-> B + C", "--init", "2,1,1"]) == 0
    out = capsys.readouterr().out
    assert "totals: M1=3 M2=2" in out
    eq_lines = [ln for ln in out.splitlines() if ln.startswith("equilibrium ")]
    assert len(eq_lines) == 2
    parsed = {}
    for ln in eq_lines:
        kv = dict(tok.split("=", 1) for tok in ln.split()[1:])
        parsed[kv["kind"]] = (np.array([float(x) for x in kv["value"].split(",")]), float(kv["growth"]))
    s3 = np.sqrt(3.0)
    assert np.allclose(parsed["positive"][0], [s3, s3 - 1, 3 - s3], atol=1e-10)
    assert np.allclose(parsed["boundary"][0], [1.0, 0.0, 2.0], atol=1e-12)
    assert parsed["boundary"][1] == pytest.approx(2.0, abs=1e-12)


def test_analyze_needs_class(capsys):
    assert main(["analyze", "--network", "A <-> B"]) == 1
    assert main(["analyze", "--network", "A <-> B", "--init", "1,2,3"]) == 1


def test_analyze_from_config(tmp_path, capsys):
    cfg = write_cfg(tmp_path / "a.cfg", *SMALL)
    assert main(["analyze", "--config", str(cfg)]) == 0
    assert "equilibrium kind=boundary value=1,0,2 growth=2" in capsys.readouterr().out


def test_simulate_outputs_and_determinism(tmp_path, capsys):
    cfg = write_cfg(tmp_path / "s.cfg", *SMALL, "output.snapshot_every = 25")
    assert main(["simulate", "--config", str(cfg), "--out", str(tmp_path / "r1")]) == 0
    assert main(["simulate", "--config", str(cfg), "--out", str(tmp_path / "r2")]) == 0
    a = (tmp_path / "r1" / "diagnostics.csv").read_bytes()
    assert a == (tmp_path / "r2" / "diagnostics.csv").read_bytes()
    t, _ = io.series_column(tmp_path / "r1" / "diagnostics.csv", "energy")
    assert t[0] == 0.0 and np.all(np.diff(t) > 0) and t[-1] == pytest.approx(0.5)
    names = sorted(p.name for p in (tmp_path / "r1").iterdir())
    assert names == ["diagnostics.csv", "final.csv", "snapshot_000000.csv", "snapshot_000025.csv",
                     "snapshot_000050.csv", "summary.txt"]
    state, species = io.read_snapshot(tmp_path / "r1" / "final.csv")
    assert species == ["A", "B", "C"]
    kv = key_values(capsys.readouterr().out)
    assert float(kv["drift_M1"]) <= 1e-13


def test_output_dir_precedence(tmp_path, monkeypatch, capsys):
    cfg = write_cfg(tmp_path / "s.cfg", *SMALL, "output.dir = from_cfg")
    assert main(["simulate", "--config", str(cfg)]) == 0
    assert (tmp_path / "from_cfg" / "diagnostics.csv").exists()
    monkeypatch.setenv("CRNLAB_OUT", str(tmp_path / "from_env"))
    assert main(["simulate", "--config", str(cfg)]) == 0
    assert (tmp_path / "from_env" / "diagnostics.csv").exists()
    assert main(["simulate", "--config", str(cfg), "--out", str(tmp_path / "from_flag")]) == 0
    assert (tmp_path / "from_flag" / "diagnostics.csv").exists()


def test_simulate_with_reference_records_energy(tmp_path, capsys):
    cfg = write_cfg(tmp_path / "s.cfg", *SMALL, "reference.kind = positive")
    assert main(["simulate", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 0
    _, e = io.series_column(tmp_path / "o" / "diagnostics.csv", "energy")
    assert np.all(np.isfinite(e)) and np.all(np.diff(e) <= 1e-10 * e[:-1])


def test_figures(tmp_path, capsys):
    cfg = write_cfg(tmp_path / "s.cfg", *SMALL)
    assert main(["simulate", "--config", str(cfg), "--out", str(tmp_path / "o"), "--figures"]) == 0
    png = tmp_path / "o" / "diagnostics.png"
    assert png.read_bytes()[:8] == b"\x89PNG\r\n\x1a\n"


@pytest.mark.parametrize("path", INVALID, ids=[p.stem for p in INVALID])
def test_invalid_config_exits_1(path, capsys):
    field = path.read_text().splitlines()[0].removeprefix("# expect: ").strip()
    assert main(["simulate", "--config", str(path)]) == 1
    assert field in capsys.readouterr().err


def test_runtime_failure_exits_2(tmp_path, capsys):
    cfg = write_cfg(
        tmp_path / "n.cfg",
        "network.text = A <-> B ; kf=100",
        "domain.cells = 4",
        "init.B = 0",
        "time.dt = 0.05",
    )
    assert main(["simulate", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 2
    assert "NegativityBreach" in capsys.readouterr().err


def test_experiment_instability(tmp_path, capsys):
    cfg = write_cfg(tmp_path / "i.cfg", *SMALL[:-3], "time.dt = 2e-3", "time.t_end = 4", "time.record_every = 5")
    assert main(["experiment", "instability", "--config", str(cfg), "--delta", "1e-4", "--theta0", "0.05",
                 "--out", str(tmp_path / "o"), "--figures"]) == 0
    kv = key_values(capsys.readouterr().out)
    assert float(kv["growth_rate"]) == pytest.approx(2.0)
    assert float(kv["fitted_rate"]) == pytest.approx(2.0, rel=0.05)
    assert (tmp_path / "o" / "diagnostics.csv").exists()
    assert (tmp_path / "o" / "instability.png").exists()
    assert key_values((tmp_path / "o" / "report.txt").read_text()) == {k: kv[k] for k in key_values((tmp_path / "o" / "report.txt").read_text())}


def test_experiment_instability_sweep(tmp_path, capsys):
    cfg = write_cfg(tmp_path / "i.cfg", *SMALL[:-3], "time.dt = 4e-3", "time.t_end = 5", "time.record_every = 5")
    assert main(["experiment", "instability", "--config", str(cfg), "--delta", "1e-3,1e-4",
                 "--workers", "2", "--out", str(tmp_path / "o")]) == 0
    out = capsys.readouterr().out
    assert float(key_values(out)["tau0_spread"]) <= 0.2
    assert sorted(p.name for p in (tmp_path / "o").iterdir()) == ["delta_1.000e-03", "delta_1.000e-04", "sweep.txt"]


def test_experiment_stability(tmp_path, capsys):
    cfg = write_cfg(tmp_path / "s.cfg", *SMALL[:-3], "time.dt = 1e-2", "time.t_end = 5", "time.record_every = 5")
    assert main(["experiment", "stability", "--config", str(cfg), "--amplitude", "1e-2",
                 "--out", str(tmp_path / "o"), "--figures"]) == 0
    kv = key_values(capsys.readouterr().out)
    assert kv["energy_monotone"] == "1" and kv["degenerate"] == "0"
    assert float(kv["fitted_decay"]) > 0
    assert (tmp_path / "o" / "stability.png").exists()


def test_experiment_stability_theta_violation(tmp_path, capsys):
    cfg = write_cfg(tmp_path / "s.cfg", *SMALL)
    assert main(["experiment", "stability", "--config", str(cfg), "--amplitude", "0.5", "--theta", "0.01",
                 "--out", str(tmp_path / "o")]) == 1
    assert "theta" in capsys.readouterr().err


def test_fit_rate(tmp_path, capsys):
    t = np.linspace(0, 1, 11)
    lines = ["t,species,l2_dev"] + [f"{float(ti)!r},{s},{float(np.exp(3 * ti) * (1 if s == 'A' else 2))!r}" for ti in t for s in "AB"]
    (tmp_path / "d.csv").write_text("\n".join(lines) + "\n")
    assert main(["fit-rate", str(tmp_path / "d.csv"), "l2_dev", "0", "1", "--species", "B"]) == 0
    kv = key_values(capsys.readouterr().out)
    assert float(kv["rate"]) == pytest.approx(3.0, rel=1e-12)
    assert float(kv["intercept"]) == pytest.approx(np.log(2.0), rel=1e-12)
    assert main(["fit-rate", str(tmp_path / "d.csv"), "missing", "0", "1"]) == 1


def test_dispatch_uses_configured_experiment(tmp_path):
    cfg = write_cfg(tmp_path / "d.cfg", *SMALL, "experiment.kind = stability", f"output.dir = {tmp_path / 'o'}")
    assert dispatch(load_config(cfg)) == 0
    assert "fitted_decay" in (tmp_path / "o" / "report.txt").read_text()


def test_console_script_entry(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "crnlab.cli", "parse", "--network", "A <-> B"],
                          capture_output=True, text=True, check=False)
    assert proc.returncode == 0
    assert proc.stdout.startswith("A <-> B")
