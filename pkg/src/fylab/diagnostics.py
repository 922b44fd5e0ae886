"""Fitting error, structural error and the bounds that tie them together.

For a single input the key quantities are

* ``E_f = ||q - p||^2`` with ``p = link(f(x))``,
* ``||grad_theta d||^2 = e^T A e`` with ``e = q - p`` and ``A = J^T J``,
* ``U = -log lambda_min(A)``, ``L = -log lambda_max(A)``, ``G = U - L``.

Because ``lambda_min ||e||^2 <= e^T A e <= lambda_max ||e||^2`` the log ratio
``log E_f - log ||grad||^2`` always lies in ``[L, U]``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from . import netmodel
from .convex import Generator, check_simplex, link
from .smallmat import gram, sym_eig

EIG_FLOOR = 1e-18
DEGENERATE_E = 1e-15

OK = "ok"
AT_OPTIMUM = "at-optimum"
SINGULAR = "singular"


@dataclass(frozen=True)
class DiagnosticsRecord:
    step: int
    fit_err_log: float
    grad_norm_log: float
    U: float
    L: float
    G: float
    S: float
    upper_bound: float
    lower_bound: float
    sandwich_ok: bool
    samples_used: int
    status: str = OK

    @property
    def log_ratio(self) -> float:
        return self.fit_err_log - self.grad_norm_log


@dataclass(frozen=True)
class IndependenceReport:
    epsilon_hat: float
    diag_ok_fraction: float
    offdiag_ok_fraction: float
    holds: bool


@dataclass(frozen=True)
class ParameterCountBounds:
    u_bound: float
    g_bound: float
    Z: float


def fitting_error(q, p) -> float:
    q = check_simplex(q)
    p = check_simplex(p)
    if q.shape != p.shape:
        raise ValueError(f"dimension mismatch: {q.shape} vs {p.shape}")
    d = p - q
    return float(d @ d)


def ulg(A, floor: float = EIG_FLOOR) -> tuple[float, float, float]:
    """(U, L, G) from the extreme eigenvalues of A, floored before the log."""
    ev = sym_eig(A).eigenvalues
    lo = max(float(ev[0]), floor)
    hi = max(float(ev[-1]), floor)
    U = -math.log(lo)
    L = -math.log(hi)
    return U, L, U - L


def structural_error(alpha: float, beta: float, gamma: float, A) -> float:
    if min(alpha, beta, gamma) <= 0:
        raise ValueError("structural error weights must be positive")
    U, L, G = ulg(A)
    return alpha * G + beta * U + gamma * L


def sandwich_record(q, p, J, tol: float = 1e-6, floor: float = EIG_FLOOR,
                    weights=(1.0, 1.0, 1.0), step: int = 0) -> DiagnosticsRecord:
    """Check L <= log E_f - log(e^T A e) <= U for target q, prediction p, Jacobian J."""
    q = np.asarray(q, dtype=np.float64)
    p = np.asarray(p, dtype=np.float64)
    A = gram(J)
    ev = sym_eig(A).eigenvalues
    lam_min, lam_max = float(ev[0]), float(ev[-1])
    U = -math.log(max(lam_min, floor))
    L = -math.log(max(lam_max, floor))
    G = U - L
    alpha, beta, gamma = weights
    S = alpha * G + beta * U + gamma * L
    e = q - p
    fit = float(e @ e)
    nan = float("nan")
    if math.sqrt(fit) < DEGENERATE_E:
        return DiagnosticsRecord(step, nan, nan, U, L, G, S, nan, nan, True, 0, AT_OPTIMUM)
    gn = float(e @ A @ e)
    fit_log = math.log(fit)
    gn_log = math.log(gn) if gn > 0 else -math.inf
    status = OK if lam_min > floor else SINGULAR
    ratio = fit_log - gn_log
    ok = (L - tol <= ratio <= U + tol) if status == OK else True
    return DiagnosticsRecord(step, fit_log, gn_log, U, L, G, S, gn_log + U, gn_log + L, ok,
                             1 if status == OK else 0, status)


def sandwich_check(q, config: netmodel.ModelConfig, gen: Generator, theta, x, tol: float = 1e-6,
                   step: int = 0) -> DiagnosticsRecord:
    f = netmodel.forward(config, theta, x)
    p = link(gen, f)
    J = netmodel.jacobian(config, theta, x)
    return sandwich_record(check_simplex(q), p, J, tol=tol, step=step)


def average_records(records, step: int) -> DiagnosticsRecord:
    """Arithmetic mean of the log-space fields over the usable records.

    Degenerate or singular records are left out; ``sandwich_ok`` is the
    conjunction over those kept.  With nothing usable the fields are NaN.
    """
    used = [r for r in records if r.status == OK]
    nan = float("nan")
    if not used:
        return DiagnosticsRecord(step, nan, nan, nan, nan, nan, nan, nan, nan, True, 0, AT_OPTIMUM)
    mean = lambda name: float(np.mean([getattr(r, name) for r in used]))
    U, L = mean("U"), mean("L")
    gn = mean("grad_norm_log")
    return DiagnosticsRecord(
        step=step,
        fit_err_log=mean("fit_err_log"),
        grad_norm_log=gn,
        U=U,
        L=L,
        G=U - L,
        S=mean("S"),
        upper_bound=gn + U,
        lower_bound=gn + L,
        sandwich_ok=all(r.sandwich_ok for r in used),
        samples_used=len(used),
    )


def independence_check(J, min_fraction: float = 0.9) -> IndependenceReport:
    """Test the Jacobian columns against the unit-ball concentration inequalities.

    With m = |theta| rows and n = K columns, and eps_hat the largest column
    norm, a column passes if ||J_i||^2 >= (1 - 2 log n / m)^2 eps_hat^2 and a
    pair passes if |<J_i, J_j>| <= sqrt(6 log n) / sqrt(m - 1) * eps_hat^2.
    """
    J = np.asarray(J, dtype=np.float64)
    m, n = J.shape
    if m < 2 or n < 2:
        raise ValueError(f"need at least 2 rows and 2 columns, got {J.shape}")
    A = gram(J)
    sq = np.diag(A)
    eps2 = float(sq.max())
    if eps2 == 0.0:
        return IndependenceReport(0.0, 0.0, 0.0, False)
    shrink = (1.0 - 2.0 * math.log(n) / m) ** 2
    diag_ok = float(np.mean(sq >= shrink * eps2))
    limit = math.sqrt(6.0 * math.log(n)) / math.sqrt(m - 1) * eps2
    iu = np.triu_indices(n, 1)
    offdiag_ok = float(np.mean(np.abs(A[iu]) <= limit))
    holds = diag_ok >= min_fraction and offdiag_ok >= min_fraction
    return IndependenceReport(math.sqrt(eps2), diag_ok, offdiag_ok, holds)


def parameter_count_bounds(m: int, n: int, epsilon: float = 1.0, printed: bool = False) -> ParameterCountBounds:
    """Bounds on U and G for n Jacobian columns drawn from an eps-ball in R^m.

    ``u_bound = -log (1 - 2 log n / m)^2 - log eps^2`` and
    ``g_bound = log(Z + 1)`` with
    ``Z = 2 n sqrt(6 log n) / sqrt(m - 1) / (1 - 2 log n / m)^2``.

    The ratio lambda_max / lambda_min is bounded by dividing the eigenvalue
    gap bound by the lambda_min lower bound, hence the division.  ``printed``
    multiplies by the shrink factor instead, for comparison.
    """
    if m < 2 or n < 2:
        raise ValueError("need m >= 2 and n >= 2")
    if n > m - 1:
        raise ValueError(f"premise n <= m - 1 violated (n={n}, m={m})")
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    c = 1.0 - 2.0 * math.log(n) / m
    if c <= 0:
        raise ValueError(f"1 - 2 log n / m = {c:.3g} is not positive")
    u_bound = -math.log(c * c) - math.log(epsilon * epsilon)
    spread = 2.0 * n * math.sqrt(6.0 * math.log(n)) / math.sqrt(m - 1)
    Z = spread * c * c if printed else spread / (c * c)
    return ParameterCountBounds(u_bound, math.log(Z + 1.0), Z)


def sample_ball(m: int, n: int, rng: np.random.Generator, radius: float = 1.0) -> np.ndarray:
    """n points uniform in the radius-ball of R^m, returned as columns of an (m, n) array."""
    g = rng.standard_normal((m, n))
    g /= np.linalg.norm(g, axis=0)
    return g * (radius * rng.random(n) ** (1.0 / m))


def implicit_reg_probe(config: netmodel.ModelConfig | None, gen: Generator, x, radius: float,
                       samples: int, seed: int = 0) -> tuple[float, int]:
    """Largest (||p||^2 - 1/K) / ||theta||^2 over theta sampled in a ball.

    ``config=None`` probes the direct parametrisation f = theta in R^K (``x``
    is ignored).  Returns ``(k_hat, violations)`` where violations counts
    samples with ||p||^2 below 1/K; there should be none.
    """
    K = gen.K
    if config is None:
        dim = K
        scores = lambda th: th
    else:
        if config.output_dim != K:
            raise ValueError("generator and model disagree on K")
        dim = config.param_count
        scores = lambda th: netmodel.forward(config, th, x)
    p0 = link(gen, scores(np.zeros(dim)))
    if not np.allclose(p0, 1.0 / K, atol=1e-12):
        raise ValueError("model does not predict the uniform distribution at theta = 0")
    rng = np.random.default_rng(seed)
    k_hat = -math.inf
    violations = 0
    for _ in range(samples):
        th = sample_ball(dim, 1, rng, radius)[:, 0]
        n2 = float(th @ th)
        if math.sqrt(n2) < 1e-12:
            continue
        p = link(gen, scores(th))
        pp = float(p @ p)
        if pp < 1.0 / K - 1e-9:
            violations += 1
        k_hat = max(k_hat, (pp - 1.0 / K) / n2)
    return k_hat, violations


def with_step(record: DiagnosticsRecord, step: int) -> DiagnosticsRecord:
    return replace(record, step=step)
