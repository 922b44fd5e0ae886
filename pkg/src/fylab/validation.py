"""Property suite: every library invariant checked against an independent oracle.

Each check returns a :class:`Check` with the measured quantities in ``detail``.
Runtime budgets are part of the pass condition.
"""

from __future__ import annotations

import math
import tempfile
import time
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from . import netmodel
from .convex import b_omega, entropy, fy_loss, fy_loss_grad, link, omega_conjugate, omega_value, one_hot, squared
from .data import Dataset, discrete_exact, empirical_joint, gaussian_clusters
from .diagnostics import (OK, implicit_reg_probe, independence_check, parameter_count_bounds, sample_ball,
                          sandwich_record, ulg)
from .experiments import ExperimentSpec, exp_convergence, exp_depth_init, exp_depth_train
from .smallmat import gershgorin, gram, sym_eig
from .trainer import TrainConfig


@dataclass(frozen=True)
class Check:
    criterion: int
    name: str
    passed: bool
    detail: str
    seconds: float

    def line(self) -> str:
        verdict = "PASS" if self.passed else "FAIL"
        return f"[{verdict}] {self.criterion:2d} {self.name}: {self.detail} ({self.seconds:.1f}s)"


class _Timer:
    def __enter__(self):
        self.t0 = time.perf_counter()
        return self

    def __exit__(self, *exc):
        self.seconds = time.perf_counter() - self.t0


def _generators(K: int):
    return (entropy(K), squared(K))


# 1. Fenchel-Young loss properties

def _random_simplex(rng, K: int) -> np.ndarray:
    kind = rng.integers(3)
    if kind == 0:
        return one_hot(rng.integers(K), K)
    mu = rng.dirichlet(np.full(K, 10.0 ** rng.uniform(-1, 1)))
    if kind == 2:
        mu[rng.random(K) < 0.3] = 0.0
        if mu.sum() == 0:
            mu[0] = 1.0
        mu /= mu.sum()
    return mu


def _naive_softmax(nu: np.ndarray) -> np.ndarray:
    z = [math.exp(v - max(nu)) for v in nu]
    s = math.fsum(z)
    return np.array([v / s for v in z])


def check_fy_properties(n_pairs: int = 1000, seed: int = 0, budget: float = 10.0) -> Check:
    worst = {"min_raw": math.inf, "zero": 0.0, "grad": 0.0, "softmax": 0.0}
    h = 1e-6
    with _Timer() as t:
        rng = np.random.default_rng(seed)
        for kind in ("entropy", "squared"):
            for _ in range(n_pairs):
                K = int(rng.integers(2, 11))
                gen = entropy(K) if kind == "entropy" else squared(K)
                mu = _random_simplex(rng, K)
                nu = rng.normal(0.0, 10.0 ** rng.uniform(-1, 1), K)
                raw = omega_value(gen, mu) + omega_conjugate(gen, nu) - float(mu @ nu)
                worst["min_raw"] = min(worst["min_raw"], raw)
                worst["zero"] = max(worst["zero"], fy_loss(gen, link(gen, nu), nu))
                g = fy_loss_grad(gen, mu, nu)
                fd = np.empty(K)
                for i in range(K):
                    e = np.zeros(K)
                    e[i] = h
                    fd[i] = (fy_loss(gen, mu, nu + e) - fy_loss(gen, mu, nu - e)) / (2 * h)
                worst["grad"] = max(worst["grad"], np.linalg.norm(fd - g) / max(np.linalg.norm(g), 1e-2))
                if kind == "entropy":
                    diff = np.max(np.abs(link(gen, nu) - _naive_softmax(nu)))
                    worst["softmax"] = max(worst["softmax"], diff)
    passed = (worst["min_raw"] >= -1e-12 and worst["zero"] <= 1e-8 and worst["grad"] <= 1e-5
              and worst["softmax"] <= 4 * np.finfo(float).eps and t.seconds < budget)
    detail = (f"{n_pairs} pairs per generator; min raw loss {worst['min_raw']:.2e}, max loss at link "
              f"{worst['zero']:.2e}, max grad rel err {worst['grad']:.2e}, max |link - softmax| {worst['softmax']:.1e}")
    return Check(1, "loss properties", passed, detail, t.seconds)


# 2. risk decomposition on a discrete dataset

def _random_small_model(rng, input_dim: int, K: int, k_max: int = 3) -> tuple[netmodel.ModelConfig, np.ndarray]:
    label = "ab"[rng.integers(2)]
    config = netmodel.architecture(label, int(rng.integers(0, k_max + 1)), input_dim=input_dim, output_dim=K,
                                   width=int(rng.integers(3, 9)), activation=("relu", "tanh")[rng.integers(2)])
    theta = netmodel.init_params(config, "he", int(rng.integers(2**31))) * rng.uniform(0.5, 2.0)
    theta[config.param_count - K:] = rng.normal(0.0, 0.5, K)  # non-zero head bias
    return config, theta


def check_risk_decomposition(n_models: int = 100, seed: int = 0, budget: float = 10.0) -> Check:
    worst = 0.0
    with _Timer() as t:
        rng = np.random.default_rng(seed)
        K, input_dim = 3, 4
        data, counts = discrete_exact(5, input_dim, K, seed=seed)
        points, joint = empirical_joint(data)
        for _ in range(n_models):
            config, theta = _random_small_model(rng, input_dim, K)
            for gen in _generators(K):
                per_sample = [fy_loss(gen, one_hot(y, K), netmodel.forward(config, theta, x))
                              for x, y in zip(data.inputs, data.labels)]
                lhs = math.fsum(per_sample) / len(per_sample)
                q_x = joint.sum(axis=1)
                rhs = b_omega(gen, joint) + sum(
                    q_x[i] * fy_loss(gen, joint[i] / q_x[i], netmodel.forward(config, theta, points[i]))
                    for i in range(points.shape[0]))
                worst = max(worst, abs(lhs - rhs))
    passed = worst <= 1e-10 and t.seconds < budget
    return Check(2, "risk decomposition", passed,
                 f"{n_models} models x 2 generators; max |mean loss - (B + E d)| = {worst:.2e}", t.seconds)


# 3. sandwich bound and chain rule

def check_sandwich(n_pairs: int = 10000, seed: int = 0, budget: float = 120.0) -> Check:
    violations = degenerate = 0
    worst_chain = worst_lo = worst_hi = 0.0
    with _Timer() as t:
        rng = np.random.default_rng(seed)
        for i in range(n_pairs):
            K = int(rng.integers(2, 11))
            input_dim = int(rng.integers(2, 13))
            label = "ab"[i % 2]
            k = (0, 1, 3)[(i // 2) % 3]
            width = input_dim if rng.random() < 0.3 else int(rng.integers(3, 17))
            config = netmodel.architecture(label, k, input_dim=input_dim, output_dim=K, width=width,
                                           activation=("relu", "tanh")[rng.integers(2)])
            theta = netmodel.init_params(config, "he", int(rng.integers(2**31))) * rng.uniform(0.5, 2.0)
            gen = entropy(K) if (i // 6) % 2 == 0 else squared(K)
            x = rng.normal(0.0, 1.0, input_dim)
            q = one_hot(rng.integers(K), K) if rng.random() < 0.5 else rng.dirichlet(np.ones(K))
            J = netmodel.jacobian(config, theta, x)
            p = link(gen, netmodel.forward(config, theta, x))
            rec = sandwich_record(q, p, J)
            if rec.status != OK:
                degenerate += 1
                continue
            ratio = rec.log_ratio
            worst_lo = max(worst_lo, rec.L - ratio)
            worst_hi = max(worst_hi, ratio - rec.U)
            violations += not rec.sandwich_ok
            gnorm = float(np.sum(netmodel.loss_grad(config, gen, theta, x, q) ** 2))
            e = q - p
            eae = float(e @ gram(J) @ e)
            worst_chain = max(worst_chain, abs(gnorm - eae) / eae)
    passed = violations == 0 and worst_chain <= 1e-9 and t.seconds < budget
    detail = (f"{n_pairs} pairs, {degenerate} degenerate; {violations} violations, max L - ratio {worst_lo:.2e}, "
              f"max ratio - U {worst_hi:.2e}, max chain-rule rel err {worst_chain:.2e}")
    return Check(3, "sandwich bound", passed, detail, t.seconds)


# 4. eigen-solver against closed-form characteristic roots

def _char_poly(A: np.ndarray, lam: float) -> float:
    if A.shape[0] == 2:
        return (A[0, 0] - lam) * (A[1, 1] - lam) - A[0, 1] * A[1, 0]
    M = A - lam * np.eye(3)
    return (M[0, 0] * (M[1, 1] * M[2, 2] - M[1, 2] * M[2, 1])
            - M[0, 1] * (M[1, 0] * M[2, 2] - M[1, 2] * M[2, 0])
            + M[0, 2] * (M[1, 0] * M[2, 1] - M[1, 1] * M[2, 0]))


def char_roots(A) -> np.ndarray:
    """Roots of det(A - lam I) for symmetric 2x2 / 3x3 A, closed form plus Newton polish."""
    A = np.asarray(A, dtype=np.float64)
    if A.shape == (2, 2):
        mean = 0.5 * (A[0, 0] + A[1, 1])
        r = math.hypot(0.5 * (A[0, 0] - A[1, 1]), A[0, 1])
        roots = [mean - r, mean + r]
    else:
        p1 = A[0, 1] ** 2 + A[0, 2] ** 2 + A[1, 2] ** 2
        if p1 == 0.0:
            return np.sort(np.diag(A))
        q = np.trace(A) / 3.0
        p = math.sqrt((np.sum((np.diag(A) - q) ** 2) + 2.0 * p1) / 6.0)
        B = (A - q * np.eye(3)) / p
        r = min(1.0, max(-1.0, _char_poly(B, 0.0) / 2.0))
        phi = math.acos(r) / 3.0
        l1 = q + 2 * p * math.cos(phi)
        l3 = q + 2 * p * math.cos(phi + 2 * math.pi / 3)
        roots = [l3, 3 * q - l1 - l3, l1]
    polished = []
    for lam in roots:
        for _ in range(3):
            h = 1e-7 * max(1.0, abs(lam))
            d = (_char_poly(A, lam + h) - _char_poly(A, lam - h)) / (2 * h)
            if d == 0.0:
                break
            step = _char_poly(A, lam) / d
            # Newton only helps at simple roots; keep the closed form otherwise
            if abs(step) > 1e-6 * max(1.0, abs(lam)):
                break
            lam -= step
        polished.append(lam)
    return np.sort(polished)


def small_test_matrices(rng, n_random: int = 200) -> list[np.ndarray]:
    fixed = [
        np.eye(2), np.zeros((2, 2)), np.array([[2.0, 1.0], [1.0, 2.0]]), np.array([[0.0, 1.0], [1.0, 0.0]]),
        np.array([[1.0, 1e-9], [1e-9, 1.0]]), np.array([[1e6, 1.0], [1.0, -1e-6]]),
        np.eye(3), np.diag([3.0, -1.0, 2.0]), np.ones((3, 3)),
        np.array([[4.0, 1.0, 0.0], [1.0, 4.0, 1.0], [0.0, 1.0, 4.0]]),
        np.array([[2.0, -1.0, 0.0], [-1.0, 2.0, -1.0], [0.0, -1.0, 2.0]]),
        np.array([[1.0, 2.0, 3.0], [2.0, 4.0, 6.0], [3.0, 6.0, 9.0]]),
    ]
    out = list(fixed)
    for n in (2, 3):
        for _ in range(n_random):
            M = rng.normal(size=(n, n)) * 10.0 ** rng.uniform(-3, 3)
            out.append(0.5 * (M + M.T))
    return out


def check_linear_algebra(n_random: int = 1000, seed: int = 0) -> Check:
    with _Timer() as t:
        rng = np.random.default_rng(seed)
        worst_root = 0.0
        small = small_test_matrices(rng)
        for A in small:
            ev = sym_eig(A).eigenvalues
            scale = max(1.0, float(np.max(np.abs(A))))
            worst_root = max(worst_root, float(np.max(np.abs(ev - char_roots(A)))) / scale)
        worst_tr = worst_fro = 0.0
        outside = 0
        for i in range(n_random):
            n = int(rng.integers(2, 13))
            if i % 3 == 0:
                J = rng.normal(size=(int(rng.integers(1, 30)), n))
                A = gram(J)
            else:
                M = rng.normal(size=(n, n)) * 10.0 ** rng.uniform(-2, 2)
                A = 0.5 * (M + M.T)
            ev = sym_eig(A).eigenvalues
            fro = float(np.linalg.norm(A))
            worst_tr = max(worst_tr, abs(math.fsum(ev) - np.trace(A)) / fro)
            worst_fro = max(worst_fro, abs(math.sqrt(math.fsum(ev * ev)) - fro) / fro)
            discs = gershgorin(A)
            slack = 1e-12 * fro
            for lam in ev:
                if not any(c - r - slack <= lam <= c + r + slack for c, r in discs):
                    outside += 1
    passed = worst_root <= 1e-10 and worst_tr <= 1e-9 and worst_fro <= 1e-9 and outside == 0
    detail = (f"{len(small)} small matrices max root err {worst_root:.1e}; {n_random} random: trace rel err "
              f"{worst_tr:.1e}, Frobenius rel err {worst_fro:.1e}, {outside} eigenvalues outside discs")
    return Check(4, "eigen-solver oracles", passed, detail, t.seconds)


# 5. high-dimensional bounds by Monte-Carlo

def check_bound_montecarlo(trials: int = 100, n: int = 10, ms=(1000, 10000), budget: float = 60.0) -> Check:
    counts = {}
    with _Timer() as t:
        for m in ms:
            bounds = parameter_count_bounds(m, n)
            indep = u_ok = g_ok = 0
            for s in range(trials):
                J = sample_ball(m, n, np.random.default_rng([m, s]))
                indep += independence_check(J).holds
                U, _, G = ulg(gram(J))
                u_ok += U <= bounds.u_bound
                g_ok += G <= bounds.g_bound
            counts[m] = (indep, u_ok, g_ok)
    need = math.ceil(0.9 * trials)
    passed = all(min(c) >= need for c in counts.values()) and t.seconds < budget
    detail = "; ".join(f"m={m}: independence {c[0]}/{trials}, U-bound {c[1]}/{trials}, G-bound {c[2]}/{trials}"
                       for m, c in counts.items())
    return Check(5, "column-independence bounds", passed, detail, t.seconds)


# 6. implicit regularisation probe

def check_implicit_reg(samples: int = 10000, seed: int = 0) -> Check:
    with _Timer() as t:
        total = 0
        probes = 0
        for K in (2, 10):
            for gen in _generators(K):
                for radius in (1e-2, 1e-1):
                    _, v = implicit_reg_probe(None, gen, None, radius, samples, seed)
                    total += v
                    probes += 1
        rng = np.random.default_rng(seed)
        x = rng.normal(size=5)
        for label in "ab":
            for k in (0, 1):
                config = netmodel.architecture(label, k, input_dim=5, output_dim=4, width=6)
                for gen in _generators(4):
                    _, v = implicit_reg_probe(config, gen, x, 1e-1, samples, seed)
                    total += v
                    probes += 1
        toy = entropy(2)
        k_small, _ = implicit_reg_probe(None, toy, None, 1e-2, samples, seed)
        k_large, _ = implicit_reg_probe(None, toy, None, 1e-1, samples, seed)
    ratio = max(k_small, k_large) / min(k_small, k_large)
    passed = total == 0 and math.isfinite(k_small) and math.isfinite(k_large) and k_small > 0 and ratio < 2.0
    detail = (f"{probes} probes x {samples} samples, {total} violations; toy k_hat {k_small:.4f} (r=1e-2), "
              f"{k_large:.4f} (r=1e-1), ratio {ratio:.3f}")
    return Check(6, "implicit regularisation", passed, detail, t.seconds)


# 7-10. training experiments on MNIST

def _last_pearson(path: Path) -> tuple[float, float]:
    rows = path.read_text().strip().splitlines()
    if len(rows) < 2:
        return math.nan, math.nan
    _, up, lo = rows[-1].split(",")
    return float(up), float(lo)


def _read_table(path: Path) -> list[dict]:
    lines = path.read_text().strip().splitlines()
    head = lines[0].split(",")
    return [dict(zip(head, ln.split(","))) for ln in lines[1:]]


def check_convergence(dataset: Dataset, out_dir, budget: float = 180.0) -> Check:
    with _Timer() as t:
        spec = ExperimentSpec("convergence", ("a",), (1,), (0,), Path(out_dir), subset_size=10000)
        exp_convergence(spec, dataset)
        up, lo = _last_pearson(Path(out_dir) / "convergence_a_k1_seed0_pearson.csv")
        rows = _read_table(Path(out_dir) / "convergence_a_k1_seed0.csv")
        sandwich = all(r["sandwich_ok"] == "true" for r in rows)
    passed = up > 0.9 and lo > 0.9 and sandwich and t.seconds < budget
    detail = (f"{len(rows)} steps; final-window Pearson vs upper {up:.4f}, vs lower {lo:.4f}; "
              f"sandwich held on every step: {sandwich}")
    return Check(7, "bounds track fitting error", passed, detail, t.seconds)


def count_rises(values) -> int:
    """Adjacent steps where a sequence that should decrease goes up."""
    v = np.asarray(values, dtype=np.float64)
    return int(np.sum(np.diff(v) > 0))


def check_depth_init(dataset: Dataset, out_dir) -> Check:
    with _Timer() as t:
        ks = tuple(range(1, 11))
        spec = ExperimentSpec("depth-init", ("a", "b"), ks, (0,), Path(out_dir))
        (path,) = exp_depth_init(spec, dataset)
        rows = _read_table(path)
        col = lambda arch, name: np.array([float(r[name]) for r in rows if r["arch"] == arch])
        rises = {c: count_rises(col("a", c)) for c in ("U", "L", "G")}
        jac_a, jac_b = col("a", "mean_abs_jacobian"), col("b", "mean_abs_jacobian")
        deep = np.array(ks) >= 4
        skip_wins = bool(np.all(jac_b[deep] > jac_a[deep]))
    passed = all(r <= 1 for r in rises.values()) and skip_wins
    fmt = lambda v: "[" + " ".join(f"{x:.2f}" for x in v) + "]"
    detail = (f"model a rises in k: U {rises['U']}, L {rises['L']}, G {rises['G']} (allowed 1); "
              f"U {fmt(col('a', 'U'))}, L {fmt(col('a', 'L'))}, G {fmt(col('a', 'G'))}; "
              f"skip |J| above plain for all k>=4: {skip_wins}")
    return Check(8, "depth at initialisation", passed, detail, t.seconds)


def check_depth_train(dataset: Dataset, out_dir) -> Check:
    with _Timer() as t:
        spec = ExperimentSpec("depth-train", ("a",), tuple(range(6)), (0,), Path(out_dir), subset_size=10000)
        paths = exp_depth_train(spec, dataset)
        rows = _read_table(paths[-1])
        onsets = [int(r["onset_step"]) for r in rows]
    steps = [math.inf if s < 0 else s for s in onsets]
    passed = all(b >= a for a, b in zip(steps, steps[1:]))
    return Check(9, "depth delays fitting", passed,
                 f"onset step for k=0..5: {onsets} (must be non-decreasing)", t.seconds)


def check_determinism(dataset: Dataset, out_dir) -> Check:
    small = TrainConfig(epochs=1)
    specs = [
        ExperimentSpec("convergence", ("a", "b"), (1,), (0, 1), subset_size=640, train=small),
        ExperimentSpec("depth-init", ("a", "b"), (1, 2, 3, 4), (0,)),
        ExperimentSpec("depth-train", ("a", "b"), (0, 1, 2), (3,), subset_size=640, train=small),
    ]
    drivers = {"convergence": exp_convergence, "depth-init": exp_depth_init, "depth-train": exp_depth_train}
    differ = []
    n_files = 0
    with _Timer() as t:
        for spec in specs:
            runs = []
            for rep in (0, 1):
                d = Path(out_dir) / f"{spec.name}_{rep}"
                runs.append(drivers[spec.name](replace(spec, output_dir=d), dataset))
            for p0, p1 in zip(*runs):
                n_files += 1
                if p0.name != p1.name or p0.read_bytes() != p1.read_bytes():
                    differ.append(p0.name)
    passed = not differ and n_files > 0
    return Check(10, "byte-identical re-runs", passed,
                 f"{n_files} CSV pairs compared, {len(differ)} differ {differ[:3]}", t.seconds)


PROPERTY_CHECKS = (check_fy_properties, check_risk_decomposition, check_sandwich, check_linear_algebra,
                   check_bound_montecarlo, check_implicit_reg)
EXPERIMENT_CHECKS = (check_convergence, check_depth_init, check_depth_train, check_determinism)


def run_suite(dataset: Dataset | None = None, out_dir=None, report=print) -> list[Check]:
    """Run the property checks, plus the training checks when a dataset is given."""
    results = []
    for fn in PROPERTY_CHECKS:
        results.append(fn())
        report(results[-1].line())
    if dataset is not None:
        with tempfile.TemporaryDirectory() as tmp:
            base = Path(out_dir) if out_dir else Path(tmp)
            for fn in EXPERIMENT_CHECKS:
                results.append(fn(dataset, base / fn.__name__))
                report(results[-1].line())
    return results


def synthetic_stand_in(n: int = 1000, seed: int = 0) -> Dataset:
    """Clustered data in MNIST shape, for exercising drivers without the real files."""
    return gaussian_clusters(n, netmodel.MNIST_INPUT_DIM, 10, seed=seed, separation=3.0)
