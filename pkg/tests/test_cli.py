"""Command-line driver: config handling, studies, exports, exit codes."""

from __future__ import annotations

import argparse

import numpy as np
import pytest

from conftest import solve_case
from msmfe.analysis import ConvergenceTable, compute_errors, compute_rates
from msmfe.cli import (
    RunConfig,
    _build_config,
    _parse_levels,
    cmd_converge,
    cmd_mesh_report,
    cmd_run,
    main,
    write_vtk,
)
from msmfe.manufactured import get_case
from msmfe.mesh import generate_uniform, load_h2par_seed, write_mesh


def _namespace(**overrides):
    fields = dict(
        config=None,
        method=None,
        family=None,
        levels=None,
        case=None,
        solver=None,
        tol=None,
        out_csv=None,
        out_vtk=None,
        mesh_file=None,
    )
    fields.update(overrides)
    return argparse.Namespace(**fields)


# -- option parsing ------------------------------------------------------------


def test_parse_levels_forms():
    assert _parse_levels("2..4") == (2, 3, 4)
    assert _parse_levels("1,3,5") == (1, 3, 5)
    assert _parse_levels("4") == (4,)


def test_config_validation():
    with pytest.raises(ValueError, match="family"):
        RunConfig(family="hex").validate()
    with pytest.raises(ValueError, match="method"):
        RunConfig(method="p2").validate()
    with pytest.raises(ValueError, match="non-empty"):
        RunConfig(levels=()).validate()
    with pytest.raises(ValueError, match="strictly increasing"):
        RunConfig(levels=(2, 2)).validate()
    with pytest.raises(ValueError, match=">= 1"):
        RunConfig(levels=(0, 1)).validate()
    with pytest.raises(ValueError, match="case"):
        RunConfig(case="plate").validate()
    with pytest.raises(ValueError, match="tol"):
        RunConfig(tol=0.0).validate()
    with pytest.raises(ValueError, match="mesh-file"):
        RunConfig(family="file").validate()


def test_file_family_shorthand(tmp_path):
    path = tmp_path / "seed.txt"
    write_mesh(load_h2par_seed(), path)
    config = RunConfig(family=f"file:{path}", levels=(1,))
    assert config.family == "file"
    assert config.mesh_file == str(path)
    config.validate()


def test_config_file_merges_with_flags(tmp_path):
    cfg = tmp_path / "study.cfg"
    cfg.write_text(
        "method = msmfe0\n"
        "levels = 1..2  # two coarse levels\n"
        "\n"
        "solver = cholesky\n"
    )
    config = _build_config(_namespace(config=str(cfg), method="msmfe1"))
    assert config.method == "msmfe1"  # explicit flag wins
    assert config.levels == (1, 2)  # file value survives
    assert config.solver == "cholesky"


def test_config_file_rejects_unknown_keys(tmp_path):
    cfg = tmp_path / "study.cfg"
    cfg.write_text("refinements = 3\n")
    with pytest.raises(ValueError, match="unknown config keys"):
        _build_config(_namespace(config=str(cfg)))


def test_config_file_requires_assignments(tmp_path):
    cfg = tmp_path / "study.cfg"
    cfg.write_text("just a line\n")
    with pytest.raises(ValueError, match="key = value"):
        _build_config(_namespace(config=str(cfg)))


# -- converge ------------------------------------------------------------------


def test_converge_single_level(capsys):
    table = cmd_converge(RunConfig(levels=(1,)))
    assert len(table.rows) == 1
    assert table.rows[0].rates == (None,) * 5
    assert "e_sigma" in capsys.readouterr().out


def test_converge_matches_direct_pipeline(capsys):
    table = cmd_converge(RunConfig(levels=(1, 2, 3)))
    capsys.readouterr()
    case = get_case("trig")
    reports = []
    for level in (1, 2, 3):
        mesh = generate_uniform(2**level)
        dofmap, _, fields = solve_case(mesh, "msmfe1")
        reports.append(compute_errors(mesh, fields, case, dofmap))
    direct = compute_rates(reports, labels=[0.5, 0.25, 0.125])
    for row, want in zip(table.rows, direct.rows):
        assert row.h == want.h
        assert row.errors == want.errors
        assert row.rates == want.rates


def test_converge_h2par_labels(capsys):
    table = cmd_converge(RunConfig(family="h2par", levels=(1, 2, 3)))
    capsys.readouterr()
    assert table.column("h") == [1 / 3, 1 / 6, 1 / 12]


def test_converge_writes_csv(tmp_path, capsys):
    path = tmp_path / "table.csv"
    table = cmd_converge(RunConfig(levels=(1, 2), out_csv=str(path)))
    capsys.readouterr()
    back = ConvergenceTable.read_csv(path)
    for row, want in zip(back.rows, table.rows):
        assert row.h == want.h
        assert row.errors == want.errors
        assert row.rates == want.rates


def test_converge_deterministic(tmp_path, capsys):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    cmd_converge(RunConfig(family="smooth", levels=(1, 2), out_csv=str(a)))
    cmd_converge(RunConfig(family="smooth", levels=(1, 2), out_csv=str(b)))
    capsys.readouterr()
    assert a.read_bytes() == b.read_bytes()


def test_method_gap_shrinks_under_refinement():
    # Both variants approximate the same displacement, so their gap must
    # vanish under refinement even though the rotation spaces differ.
    gaps = []
    for n in (2, 4, 8):
        mesh = generate_uniform(n)
        _, _, f0 = solve_case(mesh, "msmfe0")
        _, _, f1 = solve_case(mesh, "msmfe1")
        gaps.append(np.abs(f0.displacement - f1.displacement).max())
    assert gaps[1] < gaps[0]
    assert gaps[2] < gaps[1]


# -- run and VTK export -----------------------------------------------------------


def test_run_exports_vtk(tmp_path):
    path = tmp_path / "fields.vtk"
    fields = cmd_run(RunConfig(levels=(1,), out_vtk=str(path)))
    assert fields.displacement.shape == (4, 2)
    text = path.read_text()
    assert "POINTS 9 double" in text
    assert "CELLS 4 20" in text
    assert text.count("\n9") >= 4  # four quad cell-type tags
    assert "VECTORS displacement double" in text
    assert "POINT_DATA 9" in text  # msmfe1 rotation lives on vertices
    assert "SCALARS rotation double 1" in text
    assert "stress_row_1" in text and "stress_row_2" in text


def test_vtk_rotation_placement(tmp_path):
    mesh = generate_uniform(2)
    dofmap, _, fields = solve_case(mesh, "msmfe0")
    path = tmp_path / "cellrot.vtk"
    write_vtk(path, mesh, fields, dofmap)
    text = path.read_text()
    cell_block = text[text.index("CELL_DATA") : text.index("POINT_DATA")]
    assert "SCALARS rotation" in cell_block
    assert "SCALARS rotation" not in text[text.index("POINT_DATA") :]


# -- mesh-report ---------------------------------------------------------------------


def test_mesh_report_square(capsys):
    cmd_mesh_report(RunConfig(levels=(1, 2)))
    out = capsys.readouterr().out
    assert "max_defect=0.0000e+00" in out
    assert out.count("level") == 2


def test_mesh_report_smooth_ratio_stable(capsys, caplog):
    # The smooth map has bounded second derivatives, so the neighbor-pair
    # ratio stays bounded and no warning fires.
    with caplog.at_level("WARNING", logger="msmfe"):
        cmd_mesh_report(RunConfig(family="smooth", levels=(2, 3, 4)))
    capsys.readouterr()
    assert not caplog.records


def test_mesh_report_h2par_flags_growing_ratio(capsys, caplog):
    # Midpoint refinement quarters each cell's parallelogram defect (the
    # per-cell quadratic-closeness condition holds) but only halves the
    # second difference of edge vectors through coarse vertices, so the
    # neighbor-pair ratio doubles per level and the warning must fire.
    with caplog.at_level("WARNING", logger="msmfe"):
        cmd_mesh_report(RunConfig(family="h2par", levels=(1, 2, 3)))
    out = capsys.readouterr().out
    assert len(caplog.records) == 2
    defects = [
        float(part.split("=")[1])
        for line in out.splitlines()
        for part in line.split()
        if part.startswith("max_defect=")
    ]
    assert len(defects) == 3
    # The printed values carry four significant digits.
    assert defects[1] == pytest.approx(defects[0] / 4, rel=1e-3)
    assert defects[2] == pytest.approx(defects[1] / 4, rel=1e-3)


# -- entry point ---------------------------------------------------------------------


def test_main_success(tmp_path, capsys):
    path = tmp_path / "out.csv"
    code = main(["converge", "--levels", "1", "--out-csv", str(path)])
    capsys.readouterr()
    assert code == 0
    assert path.exists()


def test_main_reports_errors(capsys, tmp_path):
    assert main(["converge", "--family", "hex", "--levels", "1"]) == 1
    cfg = tmp_path / "bad.cfg"
    cfg.write_text("refinements = 3\n")
    assert main(["converge", "--config", str(cfg)]) == 1
    capsys.readouterr()


def test_main_run_subcommand(tmp_path, capsys):
    code = main(["run", "--levels", "1", "--method", "msmfe0"])
    capsys.readouterr()
    assert code == 0
