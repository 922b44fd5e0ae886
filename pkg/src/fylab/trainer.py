"""Mini-batch SGD with heavy-ball momentum and per-step diagnostics."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np

from . import netmodel
from .convex import Generator, link, one_hot
from .data import Dataset
from .diagnostics import DiagnosticsRecord, average_records, sandwich_record

CSV_COLUMNS = ("step", "loss", "fit_err_log", "grad_norm_log", "U", "L", "G", "S",
               "upper_bound", "lower_bound", "sandwich_ok", "samples_used")


class TrainingDiverged(RuntimeError):
    def __init__(self, step: int, loss: float):
        super().__init__(f"non-finite loss {loss} at step {step}")
        self.step = step


@dataclass(frozen=True)
class TrainConfig:
    seed: int = 0
    lr: float = 0.01
    momentum: float = 0.9
    batch_size: int = 64
    epochs: int = 1
    diag_samples: int = 8
    diag_every: int = 1
    shuffle: bool = True
    label_smoothing: float = 0.0
    init: str = "he"

    def __post_init__(self):
        if not self.lr >= 0:
            raise ValueError("lr must be non-negative")
        if not 0.0 <= self.momentum < 1.0:
            raise ValueError("momentum must lie in [0, 1)")
        if self.batch_size < 1 or self.epochs < 0:
            raise ValueError("batch_size must be >= 1 and epochs >= 0")
        if self.diag_every < 1 or self.diag_samples < 0:
            raise ValueError("diag_every must be >= 1 and diag_samples >= 0")
        if not 0.0 <= self.label_smoothing < 1.0:
            raise ValueError("label_smoothing must lie in [0, 1)")


@dataclass
class MetricLog:
    """Diagnostics records with the batch loss of the step they were taken at."""

    records: list[DiagnosticsRecord] = field(default_factory=list)
    losses: list[float] = field(default_factory=list)
    step_losses: list[float] = field(default_factory=list)
    theta: np.ndarray | None = None

    def append(self, loss: float, record: DiagnosticsRecord) -> None:
        if self.records and record.step <= self.records[-1].step:
            raise ValueError("records must have strictly increasing steps")
        self.records.append(record)
        self.losses.append(loss)

    def column(self, name: str) -> np.ndarray:
        if name == "loss":
            return np.asarray(self.losses, dtype=np.float64)
        return np.array([getattr(r, name) for r in self.records], dtype=np.float64)

    def __len__(self) -> int:
        return len(self.records)


def sgd_momentum_step(theta, grad, velocity, lr: float, momentum: float):
    """v' = momentum * v + grad; theta' = theta - lr * v'."""
    theta = np.asarray(theta, dtype=np.float64)
    grad = np.asarray(grad, dtype=np.float64)
    velocity = np.asarray(velocity, dtype=np.float64)
    if not theta.shape == grad.shape == velocity.shape:
        raise ValueError("theta, grad and velocity must have equal shapes")
    v = momentum * velocity + grad
    return theta - lr * v, v


def targets_for(labels, K: int, smoothing: float = 0.0) -> np.ndarray:
    q = one_hot(labels, K)
    if smoothing:
        q = (1.0 - smoothing) * q + smoothing / K
    return q


def steps_per_epoch(n: int, batch_size: int) -> int:
    return n // batch_size


def batch_diagnostics(config: netmodel.ModelConfig, gen: Generator, theta, X, Q, step: int) -> DiagnosticsRecord:
    """Per-sample sandwich records over the rows of X, averaged into one."""
    Js = netmodel.jacobians(config, theta, X)
    P = link(gen, netmodel.forward(config, theta, X))
    per = [sandwich_record(Q[i], P[i], Js[i], step=step) for i in range(X.shape[0])]
    return average_records(per, step)


def train(config: netmodel.ModelConfig, gen: Generator, dataset: Dataset, tcfg: TrainConfig,
          theta0=None) -> MetricLog:
    """Train from ``theta0`` (or a fresh init seeded by ``tcfg.seed``)."""
    if dataset.K != config.output_dim or gen.K != config.output_dim:
        raise ValueError(f"dataset K={dataset.K}, generator K={gen.K}, model K={config.output_dim}")
    if dataset.input_dim != config.input_dim:
        raise ValueError(f"dataset inputs have dimension {dataset.input_dim}, model expects {config.input_dim}")
    if theta0 is None:
        theta = netmodel.init_params(config, tcfg.init, tcfg.seed)
    else:
        theta = np.array(theta0, dtype=np.float64)
    velocity = np.zeros_like(theta)
    rng = np.random.default_rng([tcfg.seed, 1])
    n = len(dataset)
    per_epoch = steps_per_epoch(n, tcfg.batch_size)
    Q_all = targets_for(dataset.labels, dataset.K, tcfg.label_smoothing)
    log = MetricLog()
    step = 0
    for _ in range(tcfg.epochs):
        order = rng.permutation(n) if tcfg.shuffle else np.arange(n)
        for b in range(per_epoch):
            idx = order[b * tcfg.batch_size:(b + 1) * tcfg.batch_size]
            X, Q = dataset.inputs[idx], Q_all[idx]
            loss, grad = netmodel.batch_loss_grad(config, gen, theta, X, Q)
            if not math.isfinite(loss):
                raise TrainingDiverged(step, loss)
            log.step_losses.append(loss)
            if tcfg.diag_samples and step % tcfg.diag_every == 0:
                d = min(tcfg.diag_samples, len(idx))
                log.append(loss, batch_diagnostics(config, gen, theta, X[:d], Q[:d], step))
            theta, velocity = sgd_momentum_step(theta, grad, velocity, tcfg.lr, tcfg.momentum)
            step += 1
    log.theta = theta
    return log


def _fmt(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, int):
        return str(value)
    return format(float(value), ".17g")


def write_csv(log: MetricLog, path) -> None:
    """One row per record; floats with 17 significant digits."""
    path = Path(path)
    try:
        with path.open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(CSV_COLUMNS)
            for loss, r in zip(log.losses, log.records):
                w.writerow([_fmt(r.step), _fmt(loss)] + [_fmt(getattr(r, c)) for c in CSV_COLUMNS[2:]])
    except OSError as exc:
        raise OSError(f"cannot write metrics CSV {path}: {exc.strerror or exc}") from exc


def read_csv(path) -> MetricLog:
    """Parse a file written by ``write_csv`` back into a MetricLog."""
    log = MetricLog()
    names = {f.name for f in fields(DiagnosticsRecord)}
    with Path(path).open(newline="") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != CSV_COLUMNS:
            raise ValueError(f"{path}: unexpected header {reader.fieldnames}")
        for row in reader:
            kw = {}
            for c in CSV_COLUMNS:
                if c == "loss" or c not in names:
                    continue
                v = row[c]
                if c in ("step", "samples_used"):
                    kw[c] = int(v)
                elif c == "sandwich_ok":
                    kw[c] = v == "true"
                else:
                    kw[c] = float(v)
            kw["status"] = "ok" if kw["samples_used"] else "at-optimum"
            log.append(float(row["loss"]), DiagnosticsRecord(**kw))
    return log
