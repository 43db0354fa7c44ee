import shutil
from pathlib import Path

import pytest

from porosplit.cli import main
from porosplit.io import read_csv, read_vtk_sections

CONFIGS = Path(__file__).parents[1] / "configs"


@pytest.fixture
def small_config(tmp_path):
    text = (CONFIGS / "decoupled.ini").read_text().replace("nx = 4", "nx = 2") \
        .replace("ny = 4", "ny = 2").replace("nz = 4", "nz = 2")
    path = tmp_path / "dec.ini"
    path.write_text(text)
    return path


class TestRun:
    def test_decoupled_run(self, small_config, tmp_path, capsys):
        out = tmp_path / "out"
        assert main(["run", str(small_config), "--out", str(out)]) == 0
        _, header, steps = read_csv(out / "steps.csv")
        assert [int(s["iterations"]) for s in steps] == [2, 2, 2]
        comments, _, iters = read_csv(out / "iterations.csv")
        assert "material.biot = 0.0" in comments
        assert len(iters) == 3
        assert sorted(p.name for p in out.glob("*.vtk")) == [f"state_{i:04d}.vtk"
                                                            for i in (1, 2, 3)]
        info, _ = read_vtk_sections(out / "state_0003.vtk")
        assert info["CELLS"] == [8, 72]
        assert "step 3" in capsys.readouterr().out

    def test_run_is_deterministic(self, small_config, tmp_path):
        for d in ("a", "b"):
            assert main(["run", str(small_config), "--out", str(tmp_path / d)]) == 0
        for name in ("iterations.csv", "steps.csv", "state_0002.vtk"):
            assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()

    def test_failure_writes_partial_output(self, small_config, tmp_path):
        text = small_config.read_text().replace("biot = 0.0", "biot = 0.8")
        text += "\n[coupling]\ntol = 1e-15\nmax_coupling_iters = 3\n"
        small_config.write_text(text)
        out = tmp_path / "out"
        assert main(["run", str(small_config), "--out", str(out)]) == 1
        _, _, iters = read_csv(out / "iterations.csv")
        assert len(iters) == 2

    def test_missing_config(self, tmp_path, capsys):
        assert main(["run", str(tmp_path / "nope.ini")]) == 2
        assert "not found" in capsys.readouterr().err

    def test_invalid_config(self, tmp_path, capsys):
        bad = tmp_path / "bad.ini"
        bad.write_text("[material]\nbiot_modulus = -1\n")
        assert main(["run", str(bad)]) == 1
        assert "biot_modulus" in capsys.readouterr().err


class TestOtherCommands:
    def test_verify_passes(self, capsys):
        assert main(["verify"]) == 0
        out = capsys.readouterr().out
        assert "FAIL" not in out

    def test_verify_filter(self, capsys):
        assert main(["verify", "--filter", "skempton"]) == 0
        assert main(["verify", "--filter", "nothing-like-this"]) == 2

    def test_report(self, small_config, tmp_path, capsys):
        out = tmp_path / "out"
        main(["run", str(small_config), "--out", str(out)])
        capsys.readouterr()
        assert main(["report", str(out / "iterations.csv")]) == 0
        assert "mean ratio" in capsys.readouterr().out
        assert main(["report", str(out / "steps.csv")]) == 1
        assert main(["report", str(tmp_path / "none.csv")]) == 2

    def test_usage_errors(self, monkeypatch):
        assert main([]) == 2
        assert main(["frobnicate"]) == 2
        monkeypatch.setenv("PORO_THREADS", "zero")
        assert main(["verify", "--filter", "tensor"]) == 2

    def test_module_entry_point(self):
        assert shutil.which("porosplit") is not None
