"""Fenchel-Young loss generators.

Two generators are provided, both with the probability simplex as the domain
of the regulariser:

``NEG_ENTROPY``
    Omega(mu) = sum mu_i log mu_i.  The conjugate is logsumexp and the link is
    softmax, so the induced loss on one-hot targets is softmax cross-entropy.

``SQUARED_L2``
    Omega(mu) = 0.5 ||mu||^2.  Restricted to the simplex the conjugate is
    <p, nu> - 0.5 ||p||^2 with p the Euclidean projection of nu onto the
    simplex, and the link is that projection.  ``Generator(..., simplex=False)``
    gives the unrestricted variant (conjugate 0.5 ||nu||^2, identity link).

All functions act on the last axis, so a 2-D array is treated as a batch of
row vectors.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

NEG_ENTROPY = "entropy"
SQUARED_L2 = "squared"
KINDS = (NEG_ENTROPY, SQUARED_L2)

SIMPLEX_ATOL = 1e-9


class DomainError(ValueError):
    """Input lies outside dom(Omega)."""


@dataclass(frozen=True)
class Generator:
    kind: str
    K: int
    simplex: bool = True

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown generator kind {self.kind!r}; expected one of {KINDS}")
        if self.K < 2:
            raise ValueError(f"K must be >= 2, got {self.K}")
        if self.kind == NEG_ENTROPY and not self.simplex:
            raise ValueError("negative entropy is only defined here on the simplex")


def entropy(K: int) -> Generator:
    return Generator(NEG_ENTROPY, K)


def squared(K: int, simplex: bool = True) -> Generator:
    return Generator(SQUARED_L2, K, simplex)


def _as_vec(a, K: int, name: str) -> np.ndarray:
    a = np.asarray(a, dtype=np.float64)
    if a.shape[-1] != K:
        raise ValueError(f"{name} has dimension {a.shape[-1]}, generator expects {K}")
    if not np.all(np.isfinite(a)):
        raise ValueError(f"{name} has non-finite entries")
    return a


def check_simplex(mu, atol: float = SIMPLEX_ATOL) -> np.ndarray:
    """Return ``mu`` as an array, raising DomainError if any row is off the simplex."""
    mu = np.asarray(mu, dtype=np.float64)
    if mu.shape[-1] < 2:
        raise DomainError("probability vectors need at least two entries")
    if not np.all(np.isfinite(mu)):
        raise DomainError("probability vector has non-finite entries")
    if np.any(mu < -atol):
        raise DomainError(f"negative probability {mu.min():.3g}")
    s = mu.sum(axis=-1)
    if np.any(np.abs(s - 1.0) > atol):
        raise DomainError(f"probabilities sum to {np.ravel(s)[np.argmax(np.abs(np.ravel(s) - 1))]!r}, not 1")
    return mu


def logsumexp(nu) -> np.ndarray:
    nu = np.asarray(nu, dtype=np.float64)
    m = nu.max(axis=-1, keepdims=True)
    out = m + np.log(np.exp(nu - m).sum(axis=-1, keepdims=True))
    return out[..., 0]


def softmax(nu) -> np.ndarray:
    nu = np.asarray(nu, dtype=np.float64)
    z = np.exp(nu - nu.max(axis=-1, keepdims=True))
    return z / z.sum(axis=-1, keepdims=True)


def project_simplex(v) -> np.ndarray:
    """Euclidean projection onto the probability simplex (sort and threshold)."""
    v = np.asarray(v, dtype=np.float64)
    K = v.shape[-1]
    u = -np.sort(-v, axis=-1)
    css = np.cumsum(u, axis=-1) - 1.0
    ind = np.arange(1, K + 1)
    cond = u - css / ind > 0
    # cond is true on a prefix; rho is its last index
    rho = K - 1 - np.argmax(cond[..., ::-1], axis=-1)
    tau = np.take_along_axis(css, rho[..., None], axis=-1) / (rho[..., None] + 1)
    return np.maximum(v - tau, 0.0)


def _xlogx(p: np.ndarray) -> np.ndarray:
    out = np.zeros_like(p)
    pos = p > 0
    out[pos] = p[pos] * np.log(p[pos])
    return out


def omega_value(gen: Generator, mu) -> np.ndarray | float:
    """Omega(mu); 0 log 0 is taken as 0."""
    if gen.simplex:
        mu = check_simplex(_as_vec(mu, gen.K, "mu"))
        mu = np.clip(mu, 0.0, None)
    else:
        mu = _as_vec(mu, gen.K, "mu")
    if gen.kind == NEG_ENTROPY:
        out = _xlogx(mu).sum(axis=-1)
    else:
        out = 0.5 * np.sum(mu * mu, axis=-1)
    return out if out.ndim else float(out)


def omega_conjugate(gen: Generator, nu) -> np.ndarray | float:
    nu = _as_vec(nu, gen.K, "nu")
    if gen.kind == NEG_ENTROPY:
        out = logsumexp(nu)
    elif gen.simplex:
        p = project_simplex(nu)
        out = np.sum(p * nu, axis=-1) - 0.5 * np.sum(p * p, axis=-1)
    else:
        out = 0.5 * np.sum(nu * nu, axis=-1)
    return out if np.ndim(out) else float(out)


def link(gen: Generator, nu) -> np.ndarray:
    """Gradient of the conjugate: maps scores to a prediction."""
    nu = _as_vec(nu, gen.K, "nu")
    if gen.kind == NEG_ENTROPY:
        return softmax(nu)
    if gen.simplex:
        return project_simplex(nu)
    return nu.copy()


def fy_loss(gen: Generator, mu, nu) -> np.ndarray | float:
    """d(mu, nu) = Omega(mu) + Omega*(nu) - <mu, nu>, clipped at zero."""
    om = omega_value(gen, mu)
    mu = np.asarray(mu, dtype=np.float64)
    nu = _as_vec(nu, gen.K, "nu")
    out = om + omega_conjugate(gen, nu) - np.sum(mu * nu, axis=-1)
    out = np.maximum(out, 0.0)
    return out if np.ndim(out) else float(out)


def fy_loss_grad(gen: Generator, mu, nu) -> np.ndarray:
    """Gradient of ``fy_loss`` in the scores: link(nu) - mu."""
    if gen.simplex:
        mu = check_simplex(_as_vec(mu, gen.K, "mu"))
    else:
        mu = _as_vec(mu, gen.K, "mu")
    return link(gen, nu) - mu


def one_hot(labels, K: int) -> np.ndarray:
    labels = np.asarray(labels)
    out = np.zeros(labels.shape + (K,))
    np.put_along_axis(out, labels[..., None].astype(np.intp), 1.0, axis=-1)
    return out


def b_omega(gen: Generator, joint) -> float:
    """Model-independent offset in the risk decomposition.

    ``joint`` is an (n_x, K) array of joint probabilities q(x, y) over a
    finite set of inputs.  Rows with zero marginal mass are ignored.

    Returns E_Y[Omega(1_y)] - E_X[Omega(q(.|x))].
    """
    joint = np.asarray(joint, dtype=np.float64)
    if joint.ndim != 2 or joint.shape[1] != gen.K:
        raise ValueError(f"joint must have shape (n_x, {gen.K}), got {joint.shape}")
    if np.any(joint < 0) or abs(joint.sum() - 1.0) > SIMPLEX_ATOL:
        raise DomainError("joint is not a probability table")
    q_x = joint.sum(axis=1)
    keep = q_x > 0
    q_y = joint.sum(axis=0)
    vertices = omega_value(gen, np.eye(gen.K))
    first = float(np.dot(q_y, vertices))
    cond = joint[keep] / q_x[keep, None]
    # renormalise to absorb round-off in the division
    cond = cond / cond.sum(axis=1, keepdims=True)
    second = float(np.dot(q_x[keep], np.atleast_1d(omega_value(gen, cond))))
    return first - second
