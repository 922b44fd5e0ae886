"""Experiment drivers: convergence, depth sweep at init, depth sweep in training.

Every driver writes CSV files into ``spec.output_dir`` and returns their paths.
Output depends only on the spec, the dataset and the seeds.
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import netmodel
from .convex import Generator, entropy, squared
from .data import Dataset
from .diagnostics import independence_check, ulg
from .smallmat import gram, sliding_pearson
from .trainer import MetricLog, TrainConfig, train, write_csv

log = logging.getLogger(__name__)

NAMES = ("convergence", "depth-init", "depth-train")
WINDOW = 50


@dataclass(frozen=True)
class ExperimentSpec:
    name: str
    arch_labels: tuple[str, ...] = ("a",)
    k_values: tuple[int, ...] = (1,)
    seeds: tuple[int, ...] = (0,)
    output_dir: Path = Path("runs")
    subset_size: int = 10000
    generator: str = "entropy"
    width: int = netmodel.DEFAULT_WIDTH
    activation: str = "relu"
    init: str = "he"
    n_inputs: int = 32
    train: TrainConfig = field(default_factory=TrainConfig)

    def __post_init__(self):
        if self.name not in NAMES:
            raise ValueError(f"unknown experiment {self.name!r}")
        if not self.arch_labels or not self.k_values or not self.seeds:
            raise ValueError("arch_labels, k_values and seeds must be non-empty")
        bad = set(self.arch_labels) - set("abcd")
        if bad:
            raise ValueError(f"unknown architecture labels {sorted(bad)}")
        object.__setattr__(self, "output_dir", Path(self.output_dir))

    def make_generator(self, K: int) -> Generator:
        return entropy(K) if self.generator == "entropy" else squared(K)

    def model(self, label: str, k: int, dataset: Dataset) -> netmodel.ModelConfig:
        return netmodel.architecture(label, k, input_dim=dataset.input_dim, output_dim=dataset.K,
                                     width=self.width, activation=self.activation)


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, str):
        return v
    return format(float(v), ".17g")


def _write_rows(path: Path, header, rows) -> Path:
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])
    return path


def bound_correlations(metrics: MetricLog, window: int = WINDOW) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Sliding Pearson of fit_err_log against the upper and lower bound.

    Returns (end_steps, r_upper, r_lower); empty when the run is shorter than
    the window.
    """
    fe = metrics.column("fit_err_log")
    if fe.size < window:
        empty = np.array([])
        return empty, empty, empty
    steps = metrics.column("step")[window - 1:]
    return (steps, sliding_pearson(fe, metrics.column("upper_bound"), window),
            sliding_pearson(fe, metrics.column("lower_bound"), window))


def write_correlations(metrics: MetricLog, path: Path, window: int = WINDOW) -> Path:
    steps, up, lo = bound_correlations(metrics, window)
    return _write_rows(path, ("step", "pearson_upper", "pearson_lower"),
                       ((int(s), u, l) for s, u, l in zip(steps, up, lo)))


def onset_step(fit_err_log, drop: float = 0.1) -> int | None:
    """First step whose value sits ``drop`` (relative) below the initial one.

    "Below" is measured against the magnitude of the first value, so for the
    usual negative log errors the threshold is ``v0 - drop * |v0|``.  NaN
    entries are skipped; None when the threshold is never reached.
    """
    fe = np.asarray(fit_err_log, dtype=np.float64)
    finite = np.flatnonzero(np.isfinite(fe))
    if finite.size == 0:
        return None
    v0 = fe[finite[0]]
    hit = np.flatnonzero(np.isfinite(fe) & (fe <= v0 - drop * abs(v0)))
    return int(hit[0]) if hit.size else None


def _run_name(prefix: str, label: str, k: int, seed: int) -> str:
    return f"{prefix}_{label}_k{k}_seed{seed}"


def _train_one(spec: ExperimentSpec, dataset: Dataset, label: str, k: int, seed: int) -> MetricLog:
    config = spec.model(label, k, dataset)
    tcfg = replace(spec.train, seed=seed, init=spec.init)
    log.info("training %s k=%d seed=%d (%d params)", label, k, seed, config.param_count)
    return train(config, spec.make_generator(dataset.K), dataset, tcfg)


def exp_convergence(spec: ExperimentSpec, dataset: Dataset) -> list[Path]:
    """Train every (arch, k, seed); write metrics and window-50 bound correlations."""
    out = spec.output_dir
    out.mkdir(parents=True, exist_ok=True)
    dataset = dataset.head(spec.subset_size)
    paths = []
    for label in spec.arch_labels:
        for k in spec.k_values:
            for seed in spec.seeds:
                metrics = _train_one(spec, dataset, label, k, seed)
                stem = _run_name("convergence", label, k, seed)
                write_csv(metrics, out / f"{stem}.csv")
                write_correlations(metrics, out / f"{stem}_pearson.csv")
                paths += [out / f"{stem}.csv", out / f"{stem}_pearson.csv"]
    return paths


DEPTH_INIT_COLUMNS = ("arch", "k", "seed", "params", "U", "L", "G", "S", "mean_abs_jacobian",
                      "eps_hat", "diag_ok_fraction", "offdiag_ok_fraction", "independence_rate")


def depth_init_row(config: netmodel.ModelConfig, theta, inputs) -> dict:
    """Structural quantities at fixed parameters, averaged over ``inputs``."""
    Js = netmodel.jacobians(config, theta, inputs)
    ulgs = np.array([ulg(gram(J)) for J in Js])
    reports = [independence_check(J) for J in Js]
    U, L, G = ulgs.mean(axis=0)
    return {
        "params": config.param_count,
        "U": U,
        "L": L,
        "G": G,
        "S": float(np.mean(ulgs.sum(axis=1))),
        "mean_abs_jacobian": float(np.mean(np.abs(Js))),
        "eps_hat": float(np.mean([r.epsilon_hat for r in reports])),
        "diag_ok_fraction": float(np.mean([r.diag_ok_fraction for r in reports])),
        "offdiag_ok_fraction": float(np.mean([r.offdiag_ok_fraction for r in reports])),
        "independence_rate": float(np.mean([r.holds for r in reports])),
    }


def exp_depth_init(spec: ExperimentSpec, dataset: Dataset) -> list[Path]:
    """U, L, G, |J| and the independence test at initialisation for every (arch, k)."""
    if spec.n_inputs < 32:
        raise ValueError("depth-init averages over at least 32 inputs")
    out = spec.output_dir
    out.mkdir(parents=True, exist_ok=True)
    inputs = dataset.inputs[:spec.n_inputs]
    paths = []
    for seed in spec.seeds:
        rows = []
        for label in spec.arch_labels:
            for k in spec.k_values:
                config = spec.model(label, k, dataset)
                theta = netmodel.init_params(config, spec.init, seed)
                row = depth_init_row(config, theta, inputs)
                rows.append([label, k, seed] + [row[c] for c in DEPTH_INIT_COLUMNS[3:]])
        paths.append(_write_rows(out / f"depth_init_seed{seed}.csv", DEPTH_INIT_COLUMNS, rows))
    return paths


DEPTH_TRAIN_COLUMNS = ("arch", "k", "seed", "params", "onset_step", "final_U", "final_L", "final_G",
                       "final_fit_err_log", "final_pearson_upper", "final_pearson_lower")


def exp_depth_train(spec: ExperimentSpec, dataset: Dataset) -> list[Path]:
    """Full training per (arch, k); bound trajectories, correlations and a summary."""
    out = spec.output_dir
    out.mkdir(parents=True, exist_ok=True)
    dataset = dataset.head(spec.subset_size)
    paths = []
    for seed in spec.seeds:
        summary = []
        for label in spec.arch_labels:
            for k in spec.k_values:
                metrics = _train_one(spec, dataset, label, k, seed)
                stem = _run_name("depth_train", label, k, seed)
                paths.append(out / f"{stem}.csv")
                write_csv(metrics, paths[-1])
                paths.append(write_correlations(metrics, out / f"{stem}_pearson.csv"))
                _, up, lo = bound_correlations(metrics)
                last = metrics.records[-1]
                onset = onset_step(metrics.column("fit_err_log"))
                summary.append([label, k, seed, spec.model(label, k, dataset).param_count,
                                -1 if onset is None else onset, last.U, last.L, last.G, last.fit_err_log,
                                up[-1] if up.size else math.nan, lo[-1] if lo.size else math.nan])
        paths.append(_write_rows(out / f"depth_train_summary_seed{seed}.csv", DEPTH_TRAIN_COLUMNS, summary))
    return paths


DRIVERS = {
    "convergence": exp_convergence,
    "depth-init": exp_depth_init,
    "depth-train": exp_depth_train,
}


def run(spec: ExperimentSpec, dataset: Dataset) -> list[Path]:
    return DRIVERS[spec.name](spec, dataset)
