import math
import re

import pytest

from hodgedirac import __version__
from hodgedirac.cli.main import EXIT_CONFIG, EXIT_IO, EXIT_MESH, EXIT_PARSE, join_expression_values, main
from hodgedirac.services.mesh import read_mesh


def _vtk_sections(path):
    """Minimal legacy-VTK reader: checks the counts it declares against its records."""
    lines = path.read_text().splitlines()
    assert lines[0] == "# vtk DataFile Version 2.0"
    assert lines[2] == "ASCII" and lines[3] == "DATASET UNSTRUCTURED_GRID"
    n_points = int(lines[4].split()[1])
    points = lines[5 : 5 + n_points]
    assert all(len(line.split()) == 3 for line in points)
    i = 5 + n_points
    _, n_cells, size = lines[i].split()
    cells = lines[i + 1 : i + 1 + int(n_cells)]
    assert all(line.split()[0] == "3" for line in cells) and int(size) == 4 * int(n_cells)
    i += 1 + int(n_cells)
    assert lines[i] == f"CELL_TYPES {n_cells}"
    fields = [line.split()[1] for line in lines if line.startswith(("SCALARS", "VECTORS"))]
    assert all(math.isfinite(float(tok)) for line in points for tok in line.split())
    return n_points, int(n_cells), fields


def test_version(capsys):
    with pytest.raises(SystemExit) as info:
        main(["--version"])
    assert info.value.code == 0
    assert __version__ in capsys.readouterr().out


def test_mesh_command(tmp_path, capsys):
    out = tmp_path / "square.mesh"
    assert main(["mesh", "--domain", "square", "--resolution", "2", "--out", str(out)]) == 0
    assert "V=9 E=16 F=8 chi=1" in capsys.readouterr().out
    assert read_mesh(out).counts == (9, 16, 8)


def test_constants_command(capsys):
    assert main(["constants", "--domain", "square", "--resolution", "2"]) == 0
    out = capsys.readouterr().out
    c_p = float(re.search(r"c_P = (\S+)", out).group(1))
    gamma = float(re.search(r"gamma_h = (\S+)", out).group(1))
    assert c_p >= 1 and gamma > 0
    amp = float(re.search(r"amplification = (\S+)", out).group(1))
    assert 0 < amp <= 1.01 / gamma
    total = float(re.search(r"amplification sum = (\S+)", out).group(1))
    assert amp <= total <= 1.01 * math.sqrt(2) / gamma


@pytest.mark.parametrize("bc", ["natural", "essential"])
def test_constants_command_reports_residual_at_requested_tolerance(bc, capsys):
    assert main(["constants", "--domain", "disk", "--resolution", "2", "--bc", bc, "--tol", "1e-12"]) == 0
    residual = float(re.search(r"residual: (\S+)", capsys.readouterr().out).group(1))
    assert residual <= 1e-9


def test_solve_dirac_command(tmp_path, capsys):
    out = tmp_path / "dirac.vtk"
    code = main(["solve-dirac", "--domain", "disk", "--resolution", "3", "--f0", "x", "--f2", "x*y", "--out", str(out)])
    assert code == 0
    residual = float(re.search(r"residual: (\S+)", capsys.readouterr().out).group(1))
    assert residual <= 1e-9
    n_points, n_cells, fields = _vtk_sections(out)
    assert n_cells == 6 * 9
    assert {"u0", "u1", "u2", "p0", "p1", "p2"} <= set(fields)


def test_solve_laplace_command_both_methods(tmp_path, capsys):
    args = ["solve-laplace", "--domain", "square", "--resolution", "3", "--f1x", "sin(pi*y)", "--f1y", "x^2", "--bc", "essential"]
    assert main(args + ["--out", str(tmp_path / "mixed.vtk")]) == 0
    assert main(args + ["--via-dirac", "--out", str(tmp_path / "via.vtk")]) == 0
    out = capsys.readouterr().out
    assert "(mixed)" in out and "(via Dirac)" in out
    norms = re.findall(r"u_h: \|\.\|_W = (\S+),", out)
    assert float(norms[0]) == pytest.approx(float(norms[1]), rel=1e-7)
    assert "sigma1" in _vtk_sections(tmp_path / "via.vtk")[2]


def test_decompose_command(tmp_path, capsys):
    out = tmp_path / "parts.vtk"
    code = main(["decompose", "--domain", "annulus", "--resolution", "2", "--f1x", "-y", "--f1y", "x", "--out", str(out)])
    assert code == 0
    residual = float(re.search(r"residual: (\S+)", capsys.readouterr().out).group(1))
    assert residual <= 1e-12
    assert {"exact1", "harmonic1", "coexact1"} <= set(_vtk_sections(out)[2])


def test_decompose_command_accepts_tolerance(tmp_path, capsys):
    args = ["decompose", "--domain", "square", "--resolution", "3", "--f1x", "y^2", "--f1y", "-x", "--bc", "essential"]
    assert main(args + ["--tol", "1e-13", "--out", str(tmp_path / "parts.vtk")]) == 0
    assert float(re.search(r"residual: (\S+)", capsys.readouterr().out).group(1)) <= 1e-12


@pytest.mark.parametrize(
    "argv, expected",
    [
        (["solve-dirac", "--f0", "-x^2"], ["solve-dirac", "--f0=-x^2"]),
        (["decompose", "--f1x", "-y", "--f1y", "x"], ["decompose", "--f1x=-y", "--f1y=x"]),
        (["solve-dirac", "--f2=-1", "--out", "u.vtk"], ["solve-dirac", "--f2=-1", "--out", "u.vtk"]),
        (["solve-dirac", "--f2"], ["solve-dirac", "--f2"]),
    ],
)
def test_expression_values_are_joined(argv, expected):
    assert join_expression_values(argv) == expected


def test_negative_leading_expressions(tmp_path, capsys):
    code = main(["solve-dirac", "--domain", "square", "--resolution", "2", "--f0", "-x^2", "--f2", "-1", "--out", str(tmp_path / "u.vtk")])
    assert code == 0
    assert float(re.search(r"residual: (\S+)", capsys.readouterr().out).group(1)) <= 1e-9


def test_solve_on_mesh_file(tmp_path, capsys):
    mesh = tmp_path / "disk.mesh"
    assert main(["mesh", "--domain", "disk", "--resolution", "2", "--out", str(mesh)]) == 0
    assert main(["solve-dirac", "--mesh", str(mesh), "--f2", "1", "--out", str(tmp_path / "u.vtk")]) == 0


def test_convergence_command(tmp_path):
    out = tmp_path / "rates.csv"
    code = main(
        ["convergence", "--domain", "square", "--resolution", "2", "--levels", "2", "--problem", "smooth1", "--out", str(out)]
    )
    assert code == 0
    lines = out.read_text().splitlines()
    assert lines[0] == "h,errW_u,errV_u,err_du,err_p,err_Bpart,err_Bstarpart"
    assert len(lines) == 4 and lines[-1].startswith("rates,")
    h = [float(line.split(",")[0]) for line in lines[1:3]]
    assert h[0] == pytest.approx(2 * h[1])


def test_convergence_to_stdout(capsys):
    assert main(["convergence", "--domain", "square", "--resolution", "1", "--levels", "2", "--problem", "harmonic"]) == 0
    assert capsys.readouterr().out.startswith("h,errW_u,")


def _demo_values(out, bc, name):
    return float(re.search(rf"\[{bc}\].*{re.escape(name)} = (\S+?),?(?:\s|$)", out).group(1))


def test_demo_disk(tmp_path, capsys):
    assert main(["demo-disk", "--resolution", "4", "--out", str(tmp_path)]) == 0
    out = capsys.readouterr().out
    for bc in ("natural", "essential"):
        assert _demo_values(out, bc, "|u_0|/|u|") <= 1e-10
        assert _demo_values(out, bc, "|u_2|/|u|") <= 1e-10
        assert _demo_values(out, bc, "harmonic constraint") <= 1e-10
        assert _demo_values(out, bc, "weak divergence residual") <= 1e-9
        n_points, n_cells, fields = _vtk_sections(tmp_path / f"demo-disk-{bc}.vtk")
        assert (n_points, n_cells) == (1 + 3 * 4 * 5, 6 * 16)
        assert "u1" in fields


def test_demo_disk_title_names_the_codifferential(tmp_path):
    assert main(["demo-disk", "--resolution", "2", "--f0", "x", "--out", str(tmp_path)]) == 0
    title = (tmp_path / "demo-disk-natural.vtk").read_text().splitlines()[1]
    assert title.startswith("u with d*u = -div u = x, curl u = x*y")


def test_demo_disk_output_is_deterministic(tmp_path):
    first, second = tmp_path / "a", tmp_path / "b"
    assert main(["demo-disk", "--resolution", "3", "--out", str(first)]) == 0
    assert main(["demo-disk", "--resolution", "3", "--out", str(second)]) == 0
    for bc in ("natural", "essential"):
        name = f"demo-disk-{bc}.vtk"
        assert (first / name).read_bytes() == (second / name).read_bytes()


@pytest.mark.parametrize(
    "args, code, label",
    [
        (["solve-dirac", "--domain", "square", "--resolution", "2", "--f0", "sin(x"], EXIT_PARSE, "parse"),
        (["solve-dirac", "--domain", "square", "--resolution", "2", "--f2", "sqrt(x - 2)"], EXIT_PARSE, "parse"),
        (["convergence", "--domain", "square", "--levels", "1"], EXIT_CONFIG, "config"),
        (["solve-dirac", "--domain", "square", "--f1x", "x"], EXIT_CONFIG, "config"),
        (["solve-dirac", "--domain", "square", "--resolution", "0"], EXIT_CONFIG, "config"),
        (["convergence", "--domain", "disk", "--levels", "2", "--problem", "smooth1"], EXIT_CONFIG, "config"),
    ],
)
def test_failures_map_to_exit_codes(args, code, label, capsys):
    assert main(args) == code
    errors = [line for line in capsys.readouterr().err.splitlines() if line.startswith("error: ")]
    assert len(errors) == 1 and errors[0].startswith(f"error: {label}: ")


def test_missing_mesh_file(tmp_path, capsys):
    assert main(["solve-dirac", "--mesh", str(tmp_path / "nope.mesh"), "--f2", "1"]) == EXIT_IO
    assert capsys.readouterr().err.startswith("error: io: ")


def test_malformed_mesh_file(tmp_path, capsys):
    path = tmp_path / "bad.mesh"
    path.write_text("mesh2d 3 3 1\n0 0\n1 0\n")
    assert main(["solve-dirac", "--mesh", str(path), "--f2", "1"]) == EXIT_MESH
    assert capsys.readouterr().err.startswith("error: mesh: ")


def test_history_records_runs(tmp_path, capsys):
    db = f"sqlite:///{tmp_path / 'runs.sqlite'}"
    assert main(["history", "--db", db]) == 0
    assert "no recorded runs" in capsys.readouterr().out
    assert main(["constants", "--domain", "square", "--resolution", "2", "--db", db]) == 0
    assert "recorded run 1" in capsys.readouterr().out
    assert main(["history", "--db", db]) == 0
    out = capsys.readouterr().out
    assert "constants square natural c_P=" in out
