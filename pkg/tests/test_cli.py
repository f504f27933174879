import csv
import json
import subprocess
import sys

import numpy as np
import pytest

from vcmass.cli import EXIT_NUMERICAL, EXIT_OK, EXIT_USAGE, main
from vcmass.meshkit import ElementKind, dump_mesh, generate_grid_mesh


def _read(path):
    lines = path.read_text().splitlines()
    meta = [l for l in lines if l.startswith("#")]
    body = [l for l in lines if not l.startswith("#")]
    rows = list(csv.DictReader(body))
    return meta, rows


def test_spectrum_curves_and_metadata(tmp_path):
    assert main(["spectrum", "string1d", "--p", "2", "--c", "0,1,5", "--out", str(tmp_path)]) == EXIT_OK
    meta, rows = _read(tmp_path / "spectrum.csv")
    assert meta[0].startswith("# figure:")
    config = json.loads(meta[1].split(":", 1)[1])
    assert config["c"] == [0.0, 1.0, 5.0] and config["p"] == [2]
    curves = {r["c"] for r in rows}
    assert len(curves) == 3
    per_curve = len(rows) // 3
    assert 95 <= per_curve <= 105
    base = [float(r["ratio"]) for r in rows if float(r["c"]) == 0.0]
    assert max(base) > 1.1
    sidecar = json.loads((tmp_path / "run.json").read_text())
    assert sidecar["command"] == "spectrum" and "timestamp" in sidecar


def test_p1_string_ratio(tmp_path):
    main(["spectrum", "string1d", "--p", "1", "--c", "0", "--out", str(tmp_path)])
    _, rows = _read(tmp_path / "spectrum.csv")
    assert float(rows[-1]["ratio"]) == pytest.approx(2 * np.sqrt(3) / np.pi, rel=0.01)


def test_neumann_drum_drops_null_mode(tmp_path):
    assert main(["spectrum", "drum2d-quad", "--bc", "neumann", "--out", str(tmp_path)]) == EXIT_OK
    _, rows = _read(tmp_path / "spectrum_abs.csv")
    omegas = np.array([float(r["omega"]) for r in rows])
    assert omegas.min() > 1.0
    _, ratio_rows = _read(tmp_path / "spectrum.csv")
    assert len(ratio_rows) == len(rows)


def test_outputs_are_deterministic(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    for out in (a, b):
        assert main(["tcrit", "--p", "1,2", "--c", "1", "--refine", "4,8", "--out", str(out)]) == EXIT_OK
    assert (a / "tcrit.csv").read_bytes() == (b / "tcrit.csv").read_bytes()


def test_tcrit_table_columns(tmp_path):
    main(["tcrit", "--p", "1", "--c", "1", "--refine", "8", "--out", str(tmp_path)])
    _, rows = _read(tmp_path / "tcrit.csv")
    assert [r["c"] for r in rows] == ["0.0", "1.0"]
    assert float(rows[0]["ratio"]) == 1.0
    assert 1.3 <= float(rows[1]["ratio"]) <= 1.7


def test_tcrit_from_mesh_file(tmp_path):
    path = tmp_path / "sq.mesh"
    path.write_text(dump_mesh(generate_grid_mesh((1, 1), (4, 4), ElementKind.TRIANGLE)))
    assert main(["tcrit", "--mesh", str(path), "--p", "1", "--c", "1", "--out", str(tmp_path)]) == EXIT_OK


def test_usage_errors(tmp_path, capsys):
    assert main(["spectrum", "membrane", "--out", str(tmp_path)]) == EXIT_USAGE
    assert "valid" in capsys.readouterr().err
    assert main(["spectrum", "string1d", "--bc", "neumann", "--out", str(tmp_path)]) == EXIT_USAGE
    assert main(["tcrit", "--mesh", str(tmp_path / "missing.mesh"), "--out", str(tmp_path)]) == EXIT_USAGE
    bad = tmp_path / "bad.mesh"
    bad.write_text("#nodes\n0\n1\n#elements\ninterval 0 7\n")
    assert main(["tcrit", "--mesh", str(bad), "--out", str(tmp_path)]) == EXIT_USAGE
    assert "bad.mesh" in capsys.readouterr().err
    with pytest.raises(SystemExit) as info:
        main(["converge", "--p", "one"])
    assert info.value.code == EXIT_USAGE


def test_converge_writes_rates(tmp_path):
    args = ["converge", "--benchmark", "single-mode", "--benchmark-mesh", "square", "--p", "1", "--c", "0",
            "--refine", "8,16", "--out", str(tmp_path)]
    assert main(args) == EXIT_OK
    _, rows = _read(tmp_path / "convergence.csv")
    assert rows[0]["rate"] == "nan"
    assert float(rows[1]["rate"]) == pytest.approx(2.0, abs=0.3)


def test_converge_flags_instability(tmp_path, monkeypatch):
    from vcmass.dynamics.scaling import ScaledOperators

    original = ScaledOperators.tcrit
    monkeypatch.setattr(ScaledOperators, "tcrit", lambda self, c=0.0: 10 * original(self, c))
    args = ["converge", "--benchmark", "single-mode", "--p", "1", "--c", "0", "--refine", "4,8",
            "--t-end", "5", "--out", str(tmp_path)]
    assert main(args) == EXIT_NUMERICAL
    _, rows = _read(tmp_path / "convergence.csv")
    assert len(rows) == 2 and all(r["unstable_step"] for r in rows)


def test_beam_zero_bend_is_flat(tmp_path):
    args = ["beam", "--counts", "6,4,1", "--amplitude", "0", "--t-end", "4e-6", "--fft-window", "4e-6",
            "--out", str(tmp_path)]
    assert main(args) == EXIT_OK
    _, rows = _read(tmp_path / "beam_tip.csv")
    assert rows and all(float(r[k]) == 0.0 for r in rows for k in ("ux", "uy", "uz"))
    _, fft = _read(tmp_path / "beam_twist_fft.csv")
    assert all(float(r["magnitude"]) == 0.0 for r in fft)


def test_beam_sweep(tmp_path):
    assert main(["beam", "--counts", "6,4,1", "--sweep-c", "--out", str(tmp_path)]) == EXIT_OK
    _, rows = _read(tmp_path / "beam_tcrit.csv")
    ratios = [float(r["ratio"]) for r in rows]
    assert len(ratios) == 9 and ratios[0] == 1.0
    assert all(b >= a - 1e-9 for a, b in zip(ratios, ratios[1:]))


def test_mesh_info(capsys):
    assert main(["mesh-info", "--refine", "8"]) == EXIT_OK
    info = json.loads(capsys.readouterr().out)
    assert info["elements"] == 48 and info["boundary_facets"]["neumann"] == 16


def test_console_entry_point():
    out = subprocess.run([sys.executable, "-m", "vcmass.cli", "--version"], capture_output=True, text=True)
    assert out.returncode == 0 and "vcmass" in out.stdout
