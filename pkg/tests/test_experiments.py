import math
import re
from dataclasses import replace

import numpy as np
import pytest

from fylab import netmodel
from fylab.cli import int_list, main
from fylab.data import gaussian_clusters, write_idx
from fylab.experiments import (ExperimentSpec, depth_init_row, exp_convergence, exp_depth_init, exp_depth_train,
                               onset_step)
from fylab.plotting import PlotError, plot_svg
from fylab.trainer import TrainConfig, read_csv


@pytest.fixture(scope="module")
def small():
    return gaussian_clusters(256, 6, 3, seed=0, separation=4.0)


def test_spec_validation(tmp_path):
    with pytest.raises(ValueError):
        ExperimentSpec("sweep")
    with pytest.raises(ValueError):
        ExperimentSpec("convergence", arch_labels=())
    with pytest.raises(ValueError):
        ExperimentSpec("convergence", arch_labels=("a", "z"))
    spec = ExperimentSpec("depth-init", n_inputs=8, output_dir=tmp_path)
    with pytest.raises(ValueError):
        exp_depth_init(spec, gaussian_clusters(64, 4, 3))


def test_convergence_two_seeds(tmp_path, small):
    spec = ExperimentSpec("convergence", ("a",), (1,), (0, 1), tmp_path, subset_size=0, width=8)
    paths = exp_convergence(spec, small)
    names = sorted(p.name for p in paths)
    assert names == ["convergence_a_k1_seed0.csv", "convergence_a_k1_seed0_pearson.csv",
                     "convergence_a_k1_seed1.csv", "convergence_a_k1_seed1_pearson.csv"]
    assert paths[0].read_bytes() != paths[2].read_bytes()
    again = exp_convergence(replace(spec, output_dir=tmp_path / "again"), small)
    assert [p.read_bytes() for p in paths] == [p.read_bytes() for p in again]
    assert all(r.sandwich_ok for r in read_csv(paths[0]).records)


def test_convergence_constant_run_gives_missing_correlation(tmp_path):
    ds = gaussian_clusters(64, 4, 2, seed=0)
    tcfg = TrainConfig(lr=0.0, epochs=60, shuffle=False)
    spec = ExperimentSpec("convergence", ("a",), (1,), (0,), tmp_path, subset_size=0, width=4, train=tcfg)
    paths = exp_convergence(spec, ds)
    rows = paths[1].read_text().splitlines()
    assert rows[0] == "step,pearson_upper,pearson_lower"
    assert len(rows) == 1 + 60 - 50 + 1
    assert all(r.split(",")[1:] == ["nan", "nan"] for r in rows[1:])


def test_short_run_has_empty_correlation(tmp_path, small):
    spec = ExperimentSpec("convergence", ("b",), (2,), (0,), tmp_path, subset_size=0, width=6)
    paths = exp_convergence(spec, small)
    assert paths[1].read_text() == "step,pearson_upper,pearson_lower\n"


def test_depth_init_table(tmp_path):
    ds = gaussian_clusters(40, 12, 3, seed=1)
    spec = ExperimentSpec("depth-init", ("a", "b"), (1, 2, 3, 4), (0, 1), tmp_path, width=6)
    paths = exp_depth_init(spec, ds)
    assert [p.name for p in paths] == ["depth_init_seed0.csv", "depth_init_seed1.csv"]
    lines = paths[0].read_text().splitlines()
    assert lines[0].startswith("arch,k,seed,params,U,L,G,S,mean_abs_jacobian")
    assert [ln.split(",")[:2] for ln in lines[1:]] == [[a, str(k)] for a in "ab" for k in (1, 2, 3, 4)]


def test_depth_one_with_zero_blocks_is_skip_independent(rng):
    X = rng.random((32, 784))
    rows = []
    for label in "ab":
        cfg = netmodel.architecture(label, 1, activation="identity")
        theta = netmodel.init_params(cfg, "he", 0)
        W, b = netmodel.unpack(cfg, theta)[0]
        W[...] = 0.0
        rows.append(depth_init_row(cfg, theta, X))
    for c in ("U", "L", "G"):
        assert rows[0][c] == rows[1][c]


def test_depth_train_without_blocks_ignores_skip(tmp_path, small):
    spec = ExperimentSpec("depth-train", ("a", "b"), (0, 1), (0,), tmp_path, subset_size=0, width=6)
    paths = {p.name: p for p in exp_depth_train(spec, small)}
    assert paths["depth_train_a_k0_seed0.csv"].read_bytes() == paths["depth_train_b_k0_seed0.csv"].read_bytes()
    summary = paths["depth_train_summary_seed0.csv"].read_text().splitlines()
    assert len(summary) == 5 and summary[0].startswith("arch,k,seed,params,onset_step")


def test_onset_step():
    assert onset_step([-1.0, -1.05, -1.1, -1.2]) == 2
    assert onset_step([2.0, 1.9, 1.8]) == 2
    assert onset_step([math.nan, -1.0, -1.2]) == 2
    assert onset_step([-1.0, -1.0]) is None
    assert onset_step([math.nan]) is None


# plotting

def _write(path, text):
    path.write_text(text)
    return path


def _polylines(svg):
    return re.findall(r'<polyline data-column="([^"]+)"[^>]* points="([^"]*)"', svg)


def test_plot_two_columns_monotone(tmp_path):
    csv = _write(tmp_path / "m.csv", "step,up,down\n" + "".join(f"{i},{i * i},{-i}\n" for i in range(20)))
    out = plot_svg(csv, ["up", "down"], tmp_path / "m.svg")
    svg = out.read_text()
    lines = _polylines(svg)
    assert [c for c, _ in lines] == ["up", "down"] and svg.count("<polyline") == 2
    ys_up = [float(p.split(",")[1]) for p in lines[0][1].split()]
    ys_down = [float(p.split(",")[1]) for p in lines[1][1].split()]
    # SVG y grows downwards
    assert all(b < a for a, b in zip(ys_up, ys_up[1:]))
    assert all(b > a for a, b in zip(ys_down, ys_down[1:]))
    assert svg.count("<text") >= 10
    plot_svg(csv, ["up", "down"], tmp_path / "m2.svg")
    assert (tmp_path / "m2.svg").read_bytes() == out.read_bytes()


def test_plot_errors(tmp_path):
    csv = _write(tmp_path / "h.csv", "step,a\n")
    with pytest.raises(PlotError):
        plot_svg(csv, ["a"], tmp_path / "h.svg")
    assert not (tmp_path / "h.svg").exists()
    csv = _write(tmp_path / "x.csv", "step,a\n0,1\n")
    with pytest.raises(PlotError, match="'b'"):
        plot_svg(csv, ["a", "b"], tmp_path / "x.svg")


def test_plot_skips_missing_values(tmp_path):
    csv = _write(tmp_path / "n.csv", "step,a\n0,1\n1,nan\n2,3\n")
    (_, pts), = _polylines(plot_svg(csv, ["a"], tmp_path / "n.svg").read_text())
    assert len(pts.split()) == 2


# command line

def test_int_list():
    assert int_list("0-3") == (0, 1, 2, 3)
    assert int_list("1,4,2-3") == (1, 4, 2, 3)


@pytest.fixture
def tiny_idx(tmp_path):
    rng = np.random.default_rng(0)
    images = rng.integers(0, 256, size=(128, 3, 3), dtype=np.uint8)
    labels = rng.integers(0, 10, size=128, dtype=np.uint8)
    paths = tmp_path / "i.gz", tmp_path / "l.gz"
    write_idx(images, labels, *paths)
    return paths


def test_cli_runs_and_plots(tmp_path, tiny_idx, capsys):
    img, lab = tiny_idx
    out = tmp_path / "run"
    rc = main(["convergence", "--arch", "a,b", "--k", "1", "--seed", "0", "--subset", "0", "--width", "4",
               "--out", str(out), "--mnist-images", str(img), "--mnist-labels", str(lab), "--generator", "squared"])
    assert rc == 0
    printed = capsys.readouterr().out.split()
    assert len(printed) == 4 and all((out / p.split("/")[-1]).exists() for p in printed)
    rc = main(["plot", str(out / "convergence_a_k1_seed0.csv"), "--columns", "upper_bound,lower_bound",
               "--out", str(tmp_path / "p.svg")])
    assert rc == 0 and (tmp_path / "p.svg").read_text().count("<polyline") == 2
    rc = main(["depth-init", "--k", "1-2", "--n-inputs", "32", "--out", str(out), "--width", "4",
               "--mnist-images", str(img), "--mnist-labels", str(lab)])
    assert rc == 0 and (out / "depth_init_seed0.csv").exists()


@pytest.mark.parametrize("argv, code", [
    (["convergence", "--arch", "x"], 2),
    (["depth-train", "--k", "5-1"], 2),
    (["nonsense"], 2),
    (["plot", "missing.csv", "--columns", "a", "--out", "o.svg"], 1),
    (["convergence", "--mnist-images", "/no/such/file"], 2),
    (["convergence", "--mnist-images", "/no/such/file", "--mnist-labels", "/no/such/file"], 1),
])
def test_cli_errors_are_one_line(argv, code, capsys):
    assert main(argv) == code
    err = capsys.readouterr().err
    assert err.count("\n") == 1 and err.startswith("fylab: error: ")


def test_cli_column_error_names_column(tmp_path, capsys):
    csv = _write(tmp_path / "c.csv", "step,a\n0,1\n")
    assert main(["plot", str(csv), "--columns", "a,zeta", "--out", str(tmp_path / "c.svg")]) == 1
    assert "zeta" in capsys.readouterr().err


@pytest.mark.mnist
@pytest.mark.slow
@pytest.mark.xfail(strict=True, reason="terminal U, L and G move away from 0 as depth grows in this architecture; "
                                       "see README, known deviations")
def test_deeper_models_end_closer_to_zero(tmp_path, mnist):
    spec = ExperimentSpec("depth-train", ("a",), (1, 5), (0,), tmp_path, subset_size=10000)
    summary = exp_depth_train(spec, mnist)[-1].read_text().splitlines()[1:]
    shallow, deep = ([float(v) for v in row.split(",")[5:8]] for row in summary)
    assert all(abs(d) < abs(s) for s, d in zip(shallow, deep))
