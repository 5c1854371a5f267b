import numpy as np
import pytest

from mmgtop.bench import BenchRow, binomial_smooth, format_table, frozen_design, lcg_uniform
from mmgtop.cli import EXIT_CONFIG, EXIT_OK, EXIT_SOLVER, load_config, main
from mmgtop.errors import ConfigurationError
from mmgtop.grid import GridSpec
from mmgtop.io import read_vtk, write_csv, write_vtk

SMALL = ["--nx", "8", "--ny", "8", "--nz", "8", "--ncc", "1", "--sd", "2", "--lc", "2", "--lcc", "6",
         "--vstar", "0.2", "--patch-size", "0.5", "--cr", "3"]


def test_vtk_roundtrip(tmp_path):
    spec = GridSpec(2, 3, 4, 1.0, 1.5, 2.0)
    f = np.linspace(0, 1, spec.size) ** 3
    write_vtk(f, spec, tmp_path / "a.vtk", "design")
    back = read_vtk(tmp_path / "a.vtk")
    assert back["dimensions"] == (3, 4, 5)
    assert np.allclose(back["spacing"], spec.h)
    assert back["name"] == "design" and back["n"] == 24
    assert np.allclose(back["values"], f, rtol=1e-8)


def test_vtk_zeros_2cube(tmp_path):
    spec = GridSpec.cube(2)
    write_vtk(np.zeros(8), spec, tmp_path / "z.vtk")
    assert np.array_equal(read_vtk(tmp_path / "z.vtk")["values"], np.zeros(8))
    with pytest.raises(ValueError):
        write_vtk(np.zeros(7), spec, tmp_path / "bad.vtk")


def test_csv_is_lf(tmp_path):
    write_csv(tmp_path / "t.csv", ["a", "b"], [[1, 2], [3, 4]])
    assert (tmp_path / "t.csv").read_bytes() == b"a,b\n1,2\n3,4\n"


def test_config_file_and_overrides(tmp_path):
    cfgfile = tmp_path / "run.cfg"
    cfgfile.write_text("# demo\nnx = 16\ncr = 5   # contrast\nprecond = jacobi\ndump_spectra = yes\n")
    cfg = load_config(cfgfile, {"cr": "2", "nx": None})
    assert cfg.nx == 16 and cfg.cr == 2 and cfg.precond == "jacobi" and cfg.dump_spectra
    assert cfg.material().kappa_hi == pytest.approx(cfg.kappa_lo * 100)


def test_unknown_key_rejected(tmp_path):
    cfgfile = tmp_path / "bad.cfg"
    cfgfile.write_text("nx = 8\ncolour = red\n")
    with pytest.raises(ConfigurationError, match="colour"):
        load_config(cfgfile)
    assert main(["--config", str(cfgfile), "--dry-run"]) == EXIT_CONFIG


def test_dry_run_writes_nothing(tmp_path, capsys):
    out = tmp_path / "o"
    assert main(["--dry-run", "--out-dir", str(out)]) == EXIT_OK
    assert not out.exists()
    text = capsys.readouterr().out
    assert "lcc = 17" in text and "nx = 32" in text


@pytest.mark.parametrize("flags,needle", [
    (["--sd", "3"], "not divisible"),
    (["--lcc", "500"], "lcc"),
    (["--precond", "ilu"], "precond"),
    (["--cr", "-1"], ""),
    (["--nx", "abc"], "nx"),
])
def test_config_errors_exit_2(flags, needle, capsys):
    assert main(["--dry-run", *flags]) == EXIT_CONFIG
    assert needle in capsys.readouterr().err


def test_optimize_artifacts_and_reproducibility(tmp_path):
    runs = []
    for k in range(2):
        out = tmp_path / f"run{k}"
        assert main([*SMALL, "--iters", "2,2", "--out-dir", str(out)]) == EXIT_OK
        runs.append(out)
    for name in ("design.vtk", "temperature.vtk", "trajectory.csv", "timings.csv", "summary.txt"):
        assert (runs[0] / name).is_file()
    for name in ("design.vtk", "temperature.vtk", "trajectory.csv"):
        assert (runs[0] / name).read_bytes() == (runs[1] / name).read_bytes()
    lines = (runs[0] / "trajectory.csv").read_text().splitlines()
    assert lines[0] == "level,iter,cost,volume,ls1_iters,ls2_iters"
    assert [l.split(",")[0] for l in lines[1:]] == ["0"] * 3 + ["1"] * 3
    d = read_vtk(runs[0] / "design.vtk")
    assert d["dimensions"] == (9, 9, 9) and d["values"].mean() <= 0.2 + 1e-9


def test_solver_failure_exit_3(tmp_path, capsys):
    code = main([*SMALL, "--iters", "1", "--precond", "none", "--maxit", "2", "--cr", "6", "--out-dir", str(tmp_path)])
    assert code == EXIT_SOLVER
    assert "did not converge" in capsys.readouterr().err


def test_bench_records_dnf(tmp_path):
    out = tmp_path / "b"
    code = main([*SMALL, "--bench", "--bench-cr", "1,6", "--bench-precond", "mmg,none", "--maxit", "20",
                 "--out-dir", str(out)])
    assert code == EXIT_OK
    rows = [l.split(",") for l in (out / "bench.csv").read_text().splitlines()[1:]]
    none6 = [r for r in rows if r[1] == "none" and r[2] == "6" and r[0] != "setup"]
    assert {r[5] for r in none6} == {"DNF"}
    mmg = [r for r in rows if r[1] == "mmg"]
    assert {r[5] for r in mmg} == {"ok"}
    table = (out / "bench_table.txt").read_text()
    assert "cr = 6" in table and "DNF" in table and "Relative time in total" in table
    assert (out / "bench_timings.csv").is_file()


def test_format_table_cells():
    rows = [BenchRow(4, "mmg", 10, 1.04, 7, 0.25, 9, 0.3, "ok"),
            BenchRow(4, "jacobi", 10, 0.0, 3000, 3.2, 5000, 6.0, "DNF")]
    t = format_table(rows)
    assert "0.2(7)" in t or "0.3(7)" in t
    assert "DNF(3000)" in t and "100.0%" in t


def test_lcg_reference_values():
    u = lcg_uniform(1, 3)
    s, ref = 1, []
    for _ in range(3):
        s = (1664525 * s + 1013904223) % 2**32
        ref.append(s / 2**32)
    assert np.array_equal(u, ref)
    assert np.array_equal(lcg_uniform(7, 50), lcg_uniform(7, 50))


def test_binomial_smooth_preserves_mean():
    f = np.random.default_rng(0).uniform(size=(4, 5, 6))
    g = binomial_smooth(f, 3)
    assert g.mean() == pytest.approx(f.mean())
    assert g.std() < f.std()


def test_frozen_design_volume():
    spec = GridSpec.cube(8)
    x = frozen_design(spec, 0.05)
    assert set(np.unique(x)) <= {0.0, 1.0}
    assert x.sum() == round(0.05 * 512)
    assert np.array_equal(x, frozen_design(spec, 0.05))
