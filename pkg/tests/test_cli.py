import json
from pathlib import Path

import numpy as np
import pytest

from ionspin import cli, io
from ionspin.scans import SCAN_NAMES
from ionspin.tomography import DeconvolutionError

CONFIGS = Path(__file__).resolve().parents[1] / "configs"
THERMAL = str(CONFIGS / "heating_thermal.ini")


@pytest.fixture(scope="module")
def simulated(tmp_path_factory):
    out = tmp_path_factory.mktemp("sim")
    assert cli.main(["simulate", THERMAL, "--out", str(out)]) == 0
    return out


def _traces(folder):
    return sorted(Path(folder).glob("trace_*.csv"))


def test_simulate_writes_traces_and_manifest(simulated):
    names = [p.name for p in _traces(simulated)]
    assert names == ["trace_00_delay_0ms.csv", "trace_01_delay_1.5ms.csv",
                     "trace_02_delay_3ms.csv", "trace_03_delay_6ms.csv"]
    man = json.loads((simulated / "manifest.json").read_text())
    assert man["seed"] == 20240501
    assert len(man["config_digest"]) == 64
    assert set(man["versions"]) >= {"artifact", "numpy", "scipy", "python"}
    assert [t["delay_ms"] for t in man["traces"]] == [0, 1.5, 3, 6]
    tf = io.read_trace(_traces(simulated)[0])
    assert tf.times.size == 1281 and np.all(tf.shots == 100)


def test_simulate_is_byte_identical_and_seeded(simulated, tmp_path):
    assert cli.main(["simulate", THERMAL, "--out", str(tmp_path / "a"), "--workers", "2"]) == 0
    for p in list(_traces(simulated)) + [simulated / "manifest.json"]:
        assert (tmp_path / "a" / p.name).read_bytes() == p.read_bytes()
    assert cli.main(["simulate", THERMAL, "--out", str(tmp_path / "b"), "--seed", "7"]) == 0
    first = _traces(tmp_path / "b")[0]
    assert first.read_bytes() != _traces(simulated)[0].read_bytes()


def test_reconstruct_and_fit_heating_pipeline(simulated, tmp_path, capsys):
    reps = tmp_path / "rep"
    for p in _traces(simulated):
        code = cli.main(["reconstruct", str(p), "--omega0", "250 kHz", "--eta", "0.21", "--nmax", "10",
                         "--out", str(reps / p.stem)])
        assert code == 0
    report = io.read_report(reps / "trace_00_delay_0ms.report.txt")
    assert float(report["mean_phonon"]) == pytest.approx(0.24, abs=0.2)
    assert report["model_mismatch"] == "no"
    assert float(io.read_report(reps / "trace_03_delay_6ms.report.txt")["delay_ms"]) == 6
    header, spec = io.read_csv_table(reps / "trace_00_delay_0ms.spectrum.csv")
    assert spec.shape[1] == len(header) and spec.shape[0] > 10

    capsys.readouterr()
    assert cli.main(["fit-heating", str(reps), "--out", str(tmp_path / "fit.txt")]) == 0
    assert capsys.readouterr().out == (tmp_path / "fit.txt").read_text()
    fit = io.read_report(tmp_path / "fit.txt")
    assert float(fit["slope_per_ms"]) == pytest.approx(0.3, abs=0.1)
    assert int(fit["points"]) == 4


def test_reconstruct_with_one_line_flags_mismatch(simulated, tmp_path):
    trace = _traces(simulated)[3]
    assert cli.main(["reconstruct", str(trace), "--omega0", "250", "--eta", "0.21", "--nmax", "0",
                     "--out", str(tmp_path / "r")]) == 0
    assert io.read_report(tmp_path / "r.report.txt")["model_mismatch"] == "yes"


def test_reconstruct_failure_writes_residuals(simulated, tmp_path, monkeypatch, capsys):
    def failing(*args, **kwargs):
        raise DeconvolutionError("did not converge", None, [1.0, 0.5, 0.4])

    monkeypatch.setattr(cli, "deconvolve", failing)
    code = cli.main(["reconstruct", str(_traces(simulated)[0]), "--omega0", "250", "--eta", "0.21",
                     "--out", str(tmp_path / "r")])
    assert code == 3
    err = capsys.readouterr().err
    assert err.startswith("error:") and "r.residuals.csv" in err
    _, data = io.read_csv_table(tmp_path / "r.residuals.csv")
    assert data[:, 1].tolist() == [1.0, 0.5, 0.4]


def test_malformed_trace_row_is_reported(tmp_path, capsys):
    bad = tmp_path / "bad.csv"
    bad.write_text("time_us,p_down,shots,successes\n0,0.5,100,50\n0.5,0.5,100,x\n")
    assert cli.main(["reconstruct", str(bad), "--omega0", "250", "--eta", "0.21"]) == 2
    assert "row 3" in capsys.readouterr().err


def test_empty_scan_range_exits_2(tmp_path, capsys):
    text = Path(THERMAL).read_text().replace("stop = 640 us", "stop = 0 us")
    assert "stop = 0 us" in text
    cfg = tmp_path / "empty.ini"
    cfg.write_text(text)
    assert cli.main(["simulate", str(cfg), "--out", str(tmp_path / "o")]) == 2
    assert "[scan]" in capsys.readouterr().err
    assert not (tmp_path / "o").exists()


def test_missing_config_and_negative_nmax(tmp_path, capsys):
    assert cli.main(["simulate", str(tmp_path / "none.ini"), "--out", str(tmp_path)]) == 2
    trace = io.TraceFile(np.arange(200) * 0.5e-6, np.full(200, 10), np.full(200, 5)).write(tmp_path / "t.csv")
    assert cli.main(["reconstruct", str(trace), "--omega0", "250", "--eta", "0.21", "--nmax", "-1"]) == 2


def test_fit_heating_inputs(tmp_path, capsys):
    pts = io.write_csv(tmp_path / "p.csv", ("delay_ms", "mean_phonon"), [(0, 0.24), (2, 0.84)])
    assert cli.main(["fit-heating", str(pts)]) == 0
    assert "slope_per_ms: 0.300000" in capsys.readouterr().out

    one = io.write_csv(tmp_path / "one.csv", ("delay_ms", "mean_phonon"), [(0, 0.24)])
    assert cli.main(["fit-heating", str(one)]) == 2
    (tmp_path / "d").mkdir()
    (tmp_path / "d" / "x.report.txt").write_text("delay_ms: 0\nmean_phonon: 0.2\n\nn,P_n\n0,1\n")
    assert cli.main(["fit-heating", str(tmp_path / "d")]) == 2
    assert "at least two" in capsys.readouterr().err


def test_unknown_scan_kind_lists_choices(tmp_path, capsys):
    assert cli.main(["scan", "rainbow", THERMAL, "--out", str(tmp_path)]) == 2
    err = capsys.readouterr().err
    assert all(name in err for name in SCAN_NAMES)


@pytest.mark.parametrize("kind", SCAN_NAMES)
def test_scan_outputs_reparse(kind, tmp_path, capsys):
    assert cli.main(["scan", kind, str(CONFIGS / "bsb_scan.ini"), "--out", str(tmp_path)]) == 0
    files = [Path(line.split(" ", 1)[1]) for line in capsys.readouterr().out.splitlines()
             if line.startswith("wrote ")]
    assert files
    for f in files:
        header, data = io.read_csv_table(f)
        assert data.shape[1] == len(header) and np.all(np.isfinite(data))
