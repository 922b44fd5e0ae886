"""Dense linear algebra for the small (K x K) structural matrices."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

MAX_DIM = 256
MAX_SWEEPS = 100


class NotSymmetricError(ValueError):
    pass


class ConvergenceError(RuntimeError):
    def __init__(self, message: str, residual: float):
        super().__init__(f"{message} (off-diagonal residual {residual:.3e})")
        self.residual = residual


class UndefinedCorrelation(ValueError):
    """Pearson correlation of a constant series."""


@dataclass(frozen=True)
class EigenResult:
    eigenvalues: np.ndarray
    offdiag_residual: float
    sweeps: int

    @property
    def min(self) -> float:
        return float(self.eigenvalues[0])

    @property
    def max(self) -> float:
        return float(self.eigenvalues[-1])


def check_symmetric(A) -> np.ndarray:
    A = np.asarray(A, dtype=np.float64)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise NotSymmetricError(f"expected a square matrix, got shape {A.shape}")
    if not np.all(np.isfinite(A)):
        raise NotSymmetricError("matrix has non-finite entries")
    slack = 1e-12 * np.maximum(1.0, np.abs(A))
    if np.any(np.abs(A - A.T) > slack):
        raise NotSymmetricError("matrix is not symmetric")
    return A


def gram(J) -> np.ndarray:
    """J^T J for a (|theta|, K) Jacobian; exactly symmetric."""
    J = np.asarray(J, dtype=np.float64)
    if J.ndim != 2:
        raise ValueError(f"expected a 2-D Jacobian, got shape {J.shape}")
    if not np.all(np.isfinite(J)):
        raise ValueError("Jacobian has non-finite entries")
    A = J.T @ J
    return 0.5 * (A + A.T)


def _offdiag_norm(a: np.ndarray) -> float:
    off = a - np.diag(np.diag(a))
    return float(np.sqrt(np.sum(off * off)))


def sym_eig(A, tol: float = 1e-12) -> EigenResult:
    """Eigenvalues of a symmetric matrix by cyclic Jacobi rotations.

    Sweeps run over all (p, q) pairs in row order until the off-diagonal
    Frobenius norm is at most ``tol * ||A||_F``.
    """
    a = check_symmetric(A).copy()
    n = a.shape[0]
    if n > MAX_DIM:
        raise ValueError(f"sym_eig handles K <= {MAX_DIM}, got {n}")
    target = tol * float(np.linalg.norm(a))
    off = _offdiag_norm(a)
    sweeps = 0
    while off > target:
        if sweeps == MAX_SWEEPS:
            raise ConvergenceError(f"Jacobi did not converge in {MAX_SWEEPS} sweeps", off)
        sweeps += 1
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                if apq == 0.0:
                    continue
                h = a[q, q] - a[p, p]
                if abs(apq) < 1e-150 * abs(h):
                    # tiny angle: t = 1 / (2 theta) without forming theta
                    t = apq / h
                else:
                    theta = h / (2.0 * apq)
                    t = math.copysign(1.0, theta) / (abs(theta) + math.sqrt(theta * theta + 1.0))
                c = 1.0 / math.sqrt(t * t + 1.0)
                s = t * c
                rp = a[p, :].copy()
                rq = a[q, :].copy()
                a[p, :] = c * rp - s * rq
                a[q, :] = s * rp + c * rq
                cp = a[:, p].copy()
                cq = a[:, q].copy()
                a[:, p] = c * cp - s * cq
                a[:, q] = s * cp + c * cq
                a[p, q] = a[q, p] = 0.0
        off = _offdiag_norm(a)
    return EigenResult(np.sort(np.diag(a).copy()), off, sweeps)


def gershgorin(A) -> list[tuple[float, float]]:
    """(a_ii, sum_{j != i} |a_ij|) for every row."""
    a = check_symmetric(A)
    absa = np.abs(a)
    radii = absa.sum(axis=1) - np.diag(absa)
    return [(float(c), float(r)) for c, r in zip(np.diag(a), radii)]


def pearson(xs, ys) -> float:
    x = np.asarray(xs, dtype=np.float64)
    y = np.asarray(ys, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1:
        raise ValueError("pearson needs two 1-D series of equal length")
    if x.size < 2:
        raise ValueError("pearson needs at least two points")
    dx = x - x.mean()
    dy = y - y.mean()
    sxx = float(dx @ dx)
    syy = float(dy @ dy)
    if sxx == 0.0 or syy == 0.0:
        raise UndefinedCorrelation("constant series")
    r = float(dx @ dy) / math.sqrt(sxx * syy)
    return min(1.0, max(-1.0, r))


def sliding_pearson(xs, ys, window: int = 50) -> np.ndarray:
    """Pearson correlation over every window [t, t + window).

    Windows where either series is constant (or contains NaN) give NaN.
    """
    x = np.asarray(xs, dtype=np.float64)
    y = np.asarray(ys, dtype=np.float64)
    if window < 2:
        raise ValueError("window must be >= 2")
    if x.shape != y.shape or x.ndim != 1:
        raise ValueError("series must be 1-D and of equal length")
    if x.size < window:
        raise ValueError(f"series of length {x.size} is shorter than window {window}")
    out = np.empty(x.size - window + 1)
    for t in range(out.size):
        wx, wy = x[t:t + window], y[t:t + window]
        if not (np.all(np.isfinite(wx)) and np.all(np.isfinite(wy))):
            out[t] = np.nan
            continue
        try:
            out[t] = pearson(wx, wy)
        except UndefinedCorrelation:
            out[t] = np.nan
    return out
