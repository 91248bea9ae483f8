import json
import math

import numpy as np
import pandas as pd
import pytest

from carnot_gmt.cli import EXIT_AUDIT, EXIT_OK, EXIT_USAGE, build_parser, config_from_args, main
from carnot_gmt.io import write_points


def run_json(capsys, argv):
    code = main(argv)
    captured = capsys.readouterr()
    return code, json.loads(captured.out) if code == EXIT_OK else None, captured


def test_group_report(capsys):
    code, report, captured = run_json(capsys, ["group", "--group", "heisenberg:1"])
    assert code == EXIT_OK
    assert report["Q"] == 4
    assert report["D"] == [2, 3, 4]
    assert report["validation"]["valid"]
    assert report["provenance"]["config"]["command"] == "group"
    assert "GROUP" in captured.err


def test_group_report_for_engel(capsys, tmp_path):
    assert main(["group", "--builtin", "engel", "--out", str(tmp_path)]) == EXIT_OK
    report = json.loads((tmp_path / "group.json").read_text())
    assert report["D"] == [3, 5, 6, 7]
    table = pd.read_csv(tmp_path / "group.csv")
    assert table["D"].tolist() == table["D_bruteforce"].tolist()
    assert "saved" in capsys.readouterr().out


def test_invalid_group_file(capsys, tmp_path):
    path = tmp_path / "broken.json"
    path.write_text(json.dumps({"name": "broken", "layers": [2, 1], "brackets": []}))
    assert main(["group", "--group", str(path)]) == EXIT_USAGE
    assert "[generation]" in capsys.readouterr().err


def test_degree_scan(tmp_path):
    argv = ["degree", "--chart", "graph-surface", "--grid", "5", "--out", str(tmp_path)]
    assert main(argv) == EXIT_OK
    table = pd.read_csv(tmp_path / "degree.csv")
    assert len(table) == 25
    assert table["class"].tolist().count("A") == 1
    assert set(table["degree"]) == {2, 3}


def test_blowup_of_the_vertical_axis(capsys, tmp_path):
    argv = [
        "blowup", "--chart", "vertical-axis", "--t0", "0.5",
        "--radii", "0.1:0.01", "--radii-count", "3", "--samples", "50000",
    ]
    code, report, _ = run_json(capsys, argv)
    assert code == EXIT_OK
    assert report["audit"] == []
    np.testing.assert_allclose(report["trace"]["densities"], 2.0, rtol=1e-3)

    assert main(argv + ["--out", str(tmp_path)]) == EXIT_OK
    assert pd.read_csv(tmp_path / "blowup.csv")["scale"].tolist() == pytest.approx([0.1, 10 ** -1.5, 0.01])
    assert (tmp_path / "blowup_distance.csv").exists()


def test_blowup_audit_failure_exits_three(capsys):
    argv = [
        "blowup", "--chart", "vertical-axis", "--t0", "0.5", "--radii", "0.1:0.01",
        "--radii-count", "3", "--samples", "50000", "--audit-tol", "1e-9",
    ]
    assert main(argv) == EXIT_AUDIT
    assert "Audit failed" in capsys.readouterr().err


def test_blowup_at_a_non_transversal_point(capsys):
    assert main(["blowup", "--chart", "line", "--radii", "0.1:0.01", "--radii-count", "2"]) == EXIT_USAGE
    assert "Error" in capsys.readouterr().err


def test_measure_of_the_unit_disk(capsys):
    code, report, _ = run_json(capsys, ["measure", "--group", "abelian:2", "--chart", "disk", "--grid", "400"])
    assert code == EXIT_OK
    assert report["intrinsic"]["value"] == pytest.approx(math.pi, rel=1e-6)
    assert report["riemannian"]["value"] == pytest.approx(math.pi, rel=1e-6)


def test_monte_carlo_measure_is_reproducible(capsys):
    argv = [
        "measure", "--group", "abelian:2", "--chart", "plane", "--mask", "unit-disk",
        "--estimator", "monte-carlo", "--samples", "20000", "--seed", "3",
    ]
    _, first, _ = run_json(capsys, argv)
    _, second, _ = run_json(capsys, argv)
    assert first["intrinsic"]["value"] == second["intrinsic"]["value"]
    assert first["intrinsic"]["standard_error"] > 0


@pytest.mark.parametrize(
    "argv",
    [
        ["measure", "--group", "abelian:2", "--chart", "plane", "--mask", "unit-disk",
         "--estimator", "monte-carlo", "--samples", "20000", "--seed", "5"],
        ["degree", "--chart", "graph-surface", "--grid", "7"],
        ["blowup", "--chart", "vertical-axis", "--t0", "0.5", "--radii", "0.1:0.01",
         "--radii-count", "3", "--samples", "20000"],
    ],
)
def test_rerun_into_the_same_directory_is_byte_identical(argv, tmp_path):
    out = ["--out", str(tmp_path / "run")]
    assert main(argv + out) == EXIT_OK
    first = {p.name: p.read_bytes() for p in sorted((tmp_path / "run").iterdir())}
    assert main(argv + out) == EXIT_OK
    second = {p.name: p.read_bytes() for p in sorted((tmp_path / "run").iterdir())}
    assert first == second
    assert any(name.endswith(".json") for name in first)


def test_dimension_from_a_point_file(capsys, tmp_path):
    t = np.linspace(0.0, 1.0, 20001)
    path = write_points(tmp_path / "segment.csv", np.column_stack([t, np.zeros_like(t)]))
    code, report, _ = run_json(capsys, ["dimension", "--group", "abelian:2", "--points", str(path)])
    assert code == EXIT_OK
    assert report["dimension"]["slope"] == pytest.approx(1.0, abs=0.1)
    assert len(report["dimension"]["counts"]) == 8


def test_charset_bound_only(capsys):
    code, report, _ = run_json(capsys, ["charset", "--bound", "--p", "1", "--lambda", "1/2"])
    assert code == EXIT_OK
    assert report["bound"]["bound"] == "4/3"


def test_charset_experiment_writes_tables(tmp_path):
    argv = [
        "charset", "--chart", "graph-surface", "--grid", "21",
        "--radii-count", "2", "--out", str(tmp_path),
    ]
    assert main(argv) == EXIT_OK
    report = json.loads((tmp_path / "charset.json").read_text())
    assert not report["empty"]
    assert report["bound"]["D"] == 3
    assert (tmp_path / "charset_exponent.csv").exists()
    table = pd.read_csv(tmp_path / "charset.csv")
    assert table["class"].tolist().count("A") == 1
    classes = {e["class"] for e in report["experiments"]}
    assert "A" in classes


def test_rerun_from_a_report(tmp_path):
    assert main(["charset", "--bound", "--p", "2", "--out", str(tmp_path)]) == EXIT_OK
    assert main(["--config", str(tmp_path / "charset.json")]) == EXIT_OK


def test_rerun_from_a_config_echo(capsys, tmp_path):
    path = tmp_path / "echo.json"
    path.write_text(json.dumps({"command": "group", "group": "engel"}))
    code, report, _ = run_json(capsys, ["--config", str(path)])
    assert code == EXIT_OK
    assert report["Q"] == 7


@pytest.mark.parametrize(
    "argv",
    [
        [],
        ["group", "--log-level", "LOUD"],
        ["degree"],
        ["plot"],
        ["group", "--group", "heisenberg:x"],
        ["charset", "--bound", "--p", "1", "--lambda", "3/2"],
    ],
)
def test_usage_errors(argv, capsys):
    assert main(argv) == EXIT_USAGE


def test_version(capsys):
    assert main(["--version"]) == EXIT_OK
    assert "carnot-gmt" in capsys.readouterr().out


def test_flags_override_settings():
    args = build_parser().parse_args(["blowup", "--chart", "line", "--seed", "9", "--weights", "1,2"])
    config = config_from_args(args)
    assert config.seed == 9
    assert config.weights == [1.0, 2.0]
    assert config.threads >= 1


def test_radii_help_names_the_shared_scale_range():
    parser = build_parser()
    args = parser.parse_args(["dimension", "--chart", "vertical-axis", "--radii", "0.2:0.02", "--scales", "4"])
    config = config_from_args(args)
    assert config.scale_list((1.0, 0.1)) == pytest.approx(np.logspace(np.log10(0.2), np.log10(0.02), 4).tolist())
    subparsers = next(a for a in parser._actions if a.choices and "dimension" in a.choices)
    radii = next(a for a in subparsers.choices["dimension"]._actions if "--radii" in a.option_strings)
    assert "covering scales" in radii.help
