"""Tests for the plotting package, including the plot-fidelity acceptance.

The fixtures synthesize input files in the documented formats rather
than importing the evaluation package: the plot layer's only contract
is with the files.
"""

import json

import numpy as np
import pytest

from epee_plots.cli import main
from epee_plots.parsing import SchemaError, parse_curve, parse_frontier, parse_grid
from epee_plots.render import PlotJob, run_job

TAUS = [round(0.1 * i, 1) for i in range(6)]
PATIENCES = [1, 2, 3, 4]


def synth_grid_text(seed=0):
    rng = np.random.default_rng(seed)
    lines = ["tau,patience,accuracy,macro_f1,speedup,n_samples"]
    for tau in TAUS:
        for p in PATIENCES:
            acc = rng.uniform(0.5, 1.0)
            f1 = acc - rng.uniform(0.0, 0.1)
            speed = rng.uniform(0.0, 0.8)
            lines.append(f"{tau:.6f},{p},{acc:.6f},{f1:.6f},{speed:.6f},120")
    return "\n".join(lines) + "\n"


@pytest.fixture()
def grid_csv(tmp_path):
    path = tmp_path / "grid.csv"
    path.write_text(synth_grid_text(), encoding="utf-8")
    return path


@pytest.fixture()
def curve_csv(tmp_path):
    lines = ["layer,accuracy,mean_entropy"]
    accs = [0.62, 0.81, 0.9, 0.93, 0.94, 0.95]
    ents = [0.71, 0.46, 0.3, 0.21, 0.17, 0.15]
    for layer, (a, e) in enumerate(zip(accs, ents), start=1):
        lines.append(f"{layer},{a:.6f},{e:.6f}")
    path = tmp_path / "curve.csv"
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


@pytest.fixture()
def frontier_json(tmp_path):
    cells = [{"tau": 0.1, "patience": 2, "speedup": 0.2, "accuracy": 0.97},
             {"tau": 0.3, "patience": 2, "speedup": 0.5, "accuracy": 0.94},
             {"tau": 0.5, "patience": 1, "speedup": 0.75, "accuracy": 0.9}]
    path = tmp_path / "frontier.json"
    path.write_text(json.dumps(cells), encoding="utf-8")
    return path


class TestGridParsing:
    def test_round_trip_shapes(self, grid_csv):
        grid = parse_grid(grid_csv)
        assert grid.tau_values == tuple(TAUS)
        assert grid.patience_values == tuple(PATIENCES)
        assert grid.accuracy.shape == (6, 4)

    def test_heatmap_cells_match_csv_rows_exactly(self, grid_csv):
        """Acceptance: sampled heatmap cells equal the CSV rows verbatim."""
        grid = parse_grid(grid_csv)
        rows = grid_csv.read_text().splitlines()[1:]
        rng = np.random.default_rng(7)
        for line in rng.choice(rows, size=5, replace=False):
            tau_s, p_s, acc_s, f1_s, speed_s, _n = line.split(",")
            cell = grid.cell(float(tau_s), int(p_s))
            assert cell["accuracy"] == float(acc_s)
            assert cell["macro_f1"] == float(f1_s)
            assert cell["speedup"] == float(speed_s)
        print("ACCEPTANCE PASS: plot fidelity (5 sampled cells match the CSV)")

    def test_corrupted_header_rejected(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("tau,patience,accuracy,f1,speedup,n_samples\n",
                        encoding="utf-8")
        with pytest.raises(SchemaError, match="macro_f1"):
            parse_grid(path)

    def test_unknown_column_rejected(self, tmp_path):
        path = tmp_path / "extra.csv"
        path.write_text(
            "tau,patience,accuracy,macro_f1,speedup,n_samples,bonus\n",
            encoding="utf-8")
        with pytest.raises(SchemaError, match="bonus"):
            parse_grid(path)

    def test_incomplete_grid_rejected(self, grid_csv):
        lines = grid_csv.read_text().splitlines()
        grid_csv.write_text("\n".join(lines[:-1]) + "\n", encoding="utf-8")
        with pytest.raises(SchemaError, match="incomplete"):
            parse_grid(grid_csv)

    def test_duplicate_cell_rejected(self, grid_csv):
        lines = grid_csv.read_text().splitlines()
        grid_csv.write_text("\n".join(lines + [lines[1]]) + "\n", encoding="utf-8")
        with pytest.raises(SchemaError, match="duplicate"):
            parse_grid(grid_csv)


class TestCurveParsing:
    def test_round_trip(self, curve_csv):
        rows = parse_curve(curve_csv)
        assert [r["layer"] for r in rows] == [1, 2, 3, 4, 5, 6]
        assert rows[0]["accuracy"] == 0.62

    def test_out_of_order_layers_rejected(self, tmp_path):
        path = tmp_path / "c.csv"
        path.write_text("layer,accuracy,mean_entropy\n2,0.5,0.5\n1,0.4,0.6\n",
                        encoding="utf-8")
        with pytest.raises(SchemaError, match="1..M"):
            parse_curve(path)


class TestFrontierParsing:
    def test_round_trip(self, frontier_json):
        cells = parse_frontier(frontier_json)
        assert len(cells) == 3
        assert cells[0]["patience"] == 2

    def test_extra_key_rejected(self, tmp_path):
        path = tmp_path / "f.json"
        path.write_text('[{"tau": 0.1, "patience": 1, "speedup": 0.5, '
                        '"accuracy": 0.9, "note": "hi"}]', encoding="utf-8")
        with pytest.raises(SchemaError, match="exactly keys"):
            parse_frontier(path)


class TestRendering:
    def test_full_job_produces_all_figures(self, grid_csv, curve_csv,
                                           frontier_json, tmp_path):
        out = tmp_path / "figs"
        job = PlotJob(grid_path=grid_csv, curve_path=curve_csv,
                      frontier_path=frontier_json, out_dir=out)
        outputs = run_job(job)
        names = sorted(p.name for p in outputs)
        assert names == ["budgeted_curve.png", "frontier.png",
                         "grid_accuracy.png", "grid_speedup.png"]
        assert all(p.stat().st_size > 1000 for p in outputs)

    def test_rendering_is_read_only_and_repeatable(self, grid_csv, tmp_path):
        before = grid_csv.read_bytes()
        job_a = PlotJob(grid_path=grid_csv, out_dir=tmp_path / "a")
        job_b = PlotJob(grid_path=grid_csv, out_dir=tmp_path / "b")
        outs_a = run_job(job_a)
        outs_b = run_job(job_b)
        assert grid_csv.read_bytes() == before
        for pa, pb in zip(outs_a, outs_b):
            assert pa.read_bytes() == pb.read_bytes()

    def test_svg_format(self, curve_csv, tmp_path):
        job = PlotJob(curve_path=curve_csv, out_dir=tmp_path,
                      image_format="svg")
        (out,) = run_job(job)
        assert out.suffix == ".svg"
        assert b"<svg" in out.read_bytes()[:500]

    def test_frontier_requires_grid(self, frontier_json, tmp_path):
        job = PlotJob(frontier_path=frontier_json, out_dir=tmp_path)
        with pytest.raises(ValueError, match="--grid"):
            run_job(job)


class TestScriptExitCodes:
    def test_valid_grid_exits_zero(self, grid_csv, tmp_path, capsys):
        """Acceptance: plotting a valid grid CSV exits 0."""
        code = main(["--grid", str(grid_csv), "--out", str(tmp_path)])
        assert code == 0
        assert "grid_accuracy.png" in capsys.readouterr().out
        print("ACCEPTANCE PASS: valid grid CSV renders with exit code 0")

    def test_corrupted_header_exits_nonzero(self, tmp_path, capsys):
        """Acceptance: a corrupted header exits nonzero, naming the column."""
        bad = tmp_path / "grid.csv"
        bad.write_text("tau,patience,accuracy,makro_f1,speedup,n_samples\n"
                       "0.0,1,0.9,0.9,0.1,10\n", encoding="utf-8")
        code = main(["--grid", str(bad), "--out", str(tmp_path)])
        assert code != 0
        err = capsys.readouterr().err
        assert "makro_f1" in err or "macro_f1" in err
        print("ACCEPTANCE PASS: corrupted grid header exits nonzero")

    def test_nothing_to_plot_is_usage_error(self, tmp_path, capsys):
        code = main(["--out", str(tmp_path)])
        assert code == 1

    def test_missing_file_is_data_error(self, tmp_path):
        code = main(["--grid", str(tmp_path / "absent.csv"),
                     "--out", str(tmp_path)])
        assert code == 2
