import csv
import io
import json

import numpy as np
import pytest

from nefem import __version__
from nefem.cli import main
from nefem.geometry import flat_cube
from nefem.geomfile import dump_geometry


def _run(tmp_path, *args, name="out.txt"):
    out = tmp_path / name
    code = main(list(args) + ["--out", str(out)])
    return code, out.read_text() if out.exists() else ""


def _table(text):
    body = "\n".join(line for line in text.splitlines() if not line.startswith("#"))
    return list(csv.DictReader(io.StringIO(body)))


class TestCheck:
    def test_flat_cube_passes(self, tmp_path):
        code, text = _run(tmp_path, "check", "--geometry", "flat_cube", "--levels", "2")
        assert code == 0
        assert "[FAIL]" not in text and "0 failed" in text
        assert text.startswith(f"# nefem {__version__}")

    def test_bump_lists_constants(self, tmp_path):
        code, text = _run(tmp_path, "check", "--geometry", "bump_cube")
        assert code == 0
        assert "[INFO] level 0 hybrid_relative_residual_max" in text
        assert "[INFO] level 0 transform_condition" in text

    def test_negative_weight_file(self, tmp_path, capsys):
        d = dump_geometry(flat_cube(degree=2))
        d["weights"][1][1] = -0.5
        p = tmp_path / "bad.json"
        p.write_text(json.dumps(d))
        assert main(["check", "--geometry", str(p)]) == 2
        assert "weights[1][1]" in capsys.readouterr().err

    def test_missing_file(self, tmp_path, capsys):
        assert main(["check", "--geometry", str(tmp_path / "nope.json")]) == 2
        assert "neither a preset" in capsys.readouterr().err

    def test_levels_limit(self, capsys):
        assert main(["check", "--levels", "5"]) == 2

    def test_bad_zeta_tilde(self):
        with pytest.raises(SystemExit) as info:
            main(["interpolate", "--zeta-tilde", "0.5,1.2"])
        assert info.value.code == 2


class TestQuadrature:
    def test_sections(self, tmp_path):
        code, text = _run(tmp_path, "quadrature", "--geometry", "bump_cube", "--resolution", "1,1,2")
        assert code == 0
        rows = _table(text)
        g1 = [float(r["weight"]) for r in rows if r["section"] == "greville_1d"]
        np.testing.assert_allclose(g1, [1 / 3, 4 / 3, 1 / 3], atol=1e-13)
        hyb = [r for r in rows if r["section"] == "hybrid"]
        assert len(hyb) == 9
        q = np.array([[float(r[c]) for c in "xyz"] for r in hyb])
        np.testing.assert_allclose(np.linalg.norm(q, axis=1), 1.0, atol=1e-14)
        assert all(r["lsq_residual"] for r in hyb)

    def test_two_point_mode_doubles_rows(self, tmp_path):
        _, text = _run(tmp_path, "quadrature", "--geometry", "bump_cube", "--resolution", "1,1,2",
                       "--quad-mode", "hybrid2")
        assert sum(r["section"] == "hybrid" for r in _table(text)) == 18


class TestStudies:
    def test_converge_flat(self, tmp_path):
        code, text = _run(tmp_path, "converge", "--geometry", "flat_cube", "--levels", "3")
        assert code == 0
        fit = [r for r in _table(text) if r["level"] == "fit"][0]
        assert 1.8 <= float(fit["rate_l2"]) <= 2.2
        assert 0.85 <= float(fit["rate_h1"]) <= 1.15

    def test_header_echoes_config(self, tmp_path):
        _, text = _run(tmp_path, "converge", "--geometry", "flat_cube", "--levels", "1",
                       "--tol", "1e-9", "--quad-mode", "hybrid2")
        header = [line for line in text.splitlines() if line.startswith("#")]
        for item in ("# command: converge", "# geometry: flat_cube", "# levels: 1", "# tol: 1e-09",
                     "# quad_mode: hybrid2", "# zeta_tilde: 0.5", "# workers: 1"):
            assert item in header

    def test_reproducible_bytes(self, tmp_path):
        args = ("interpolate", "--geometry", "bump_cube", "--levels", "2", "--resolution", "2,2,2")
        _, a = _run(tmp_path, *args, name="a.csv")
        _, b = _run(tmp_path, *args, name="b.csv")
        assert a == b

    def test_interpolate_sweep(self, tmp_path):
        code, text = _run(tmp_path, "interpolate", "--geometry", "bump_cube", "--levels", "3",
                          "--zeta-tilde", "0.1,0.3,0.5,0.7,0.9")
        assert code == 0
        fits = [r for r in _table(text) if r["level"] == "fit"]
        assert len(fits) == 5
        for r in fits:
            assert float(r["rate_l2"]) >= 1.8 and float(r["rate_h1"]) >= 0.9

    def test_solve_exports_dofs(self, tmp_path):
        code, text = _run(tmp_path, "solve", "--geometry", "flat_cube", "--resolution", "2,2,2",
                          "--solution", "quadratic")
        assert code == 0
        rows = _table(text)
        assert len(rows) == 9 + 18
        assert "# cg_iterations:" in text

    def test_timings_flag(self, tmp_path):
        _, text = _run(tmp_path, "converge", "--geometry", "flat_cube", "--resolution", "2,2,2",
                       "--timings")
        assert _table(text)[0]["assemble_s"] != ""
