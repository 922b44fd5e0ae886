import math

import numpy as np
import pytest

from fylab import netmodel
from fylab.convex import entropy, link, squared
from fylab.diagnostics import (AT_OPTIMUM, EIG_FLOOR, OK, average_records, fitting_error, implicit_reg_probe,
                               independence_check, parameter_count_bounds, sample_ball, sandwich_check,
                               sandwich_record, structural_error, ulg)

E1_E3 = np.diag([math.exp(-1), math.exp(-3)])


def test_fitting_error_examples():
    q = np.array([0.2, 0.3, 0.5])
    assert fitting_error(q, q) == 0.0
    assert fitting_error([1, 0], [0, 1]) == 2.0
    assert fitting_error(np.eye(10)[0], np.full(10, 0.1)) == pytest.approx(0.9, abs=1e-15)
    with pytest.raises(ValueError):
        fitting_error([1, 0], [0.5, 0.25, 0.25])


def test_ulg_examples():
    assert ulg(np.eye(3)) == (0.0, 0.0, 0.0)
    U, L, G = ulg(E1_E3)
    assert (U, L, G) == pytest.approx((3.0, 1.0, 2.0), abs=1e-14)
    U, L, G = ulg(np.zeros((2, 2)))
    assert U == L == pytest.approx(-math.log(EIG_FLOOR)) and G == 0.0


def test_structural_error_examples():
    assert structural_error(1, 1, 1, np.eye(2)) == 0.0
    assert structural_error(1, 1, 1, E1_E3) == pytest.approx(6.0, abs=1e-13)
    assert structural_error(2, 1, 1, E1_E3) == pytest.approx(8.0, abs=1e-13)
    with pytest.raises(ValueError):
        structural_error(0, 1, 1, np.eye(2))


def test_sandwich_identity_jacobian():
    q = np.array([1.0, 0.0, 0.0])
    p = np.array([0.2, 0.5, 0.3])
    rec = sandwich_record(q, p, np.eye(3))
    assert rec.status == OK and rec.sandwich_ok
    assert rec.log_ratio == pytest.approx(0.0, abs=1e-15)
    assert rec.U == rec.L == 0.0


def test_sandwich_diagonal_jacobian_by_hand():
    J = np.diag([2.0, 1.0])
    q = np.array([1.0, 0.0])
    for p0 in (0.1, 0.5, 0.9):
        p = np.array([p0, 1 - p0])
        e = q - p
        eae = 4 * e[0] ** 2 + e[1] ** 2
        rec = sandwich_record(q, p, J)
        assert math.exp(rec.log_ratio) == pytest.approx((e @ e) / eae, rel=1e-14)
        assert 0.25 - 1e-15 <= math.exp(rec.log_ratio) <= 1.0 + 1e-15
        assert rec.sandwich_ok


def test_sandwich_at_optimum():
    p = np.array([0.3, 0.7])
    rec = sandwich_record(p, p, np.eye(2))
    assert rec.status == AT_OPTIMUM and rec.samples_used == 0 and math.isnan(rec.fit_err_log)


@pytest.mark.parametrize("label", ["a", "b"])
@pytest.mark.parametrize("gen", [entropy(4), squared(4)])
def test_sandwich_on_random_mlps(rng, label, gen):
    for k in (0, 1, 3):
        cfg = netmodel.architecture(label, k, input_dim=4, output_dim=4, width=4)
        for s in range(30):
            theta = netmodel.init_params(cfg, "he", s)
            q = rng.dirichlet(np.ones(4))
            rec = sandwich_check(q, cfg, gen, theta, rng.normal(size=4))
            assert rec.sandwich_ok
            if rec.status == OK:
                assert rec.L - 1e-6 <= rec.log_ratio <= rec.U + 1e-6
                assert rec.upper_bound == pytest.approx(rec.grad_norm_log + rec.U)


def test_average_records_skips_degenerate():
    q, p = np.array([1.0, 0.0]), np.array([0.6, 0.4])
    good = [sandwich_record(q, p, np.diag([2.0, 1.0])), sandwich_record(q, p, np.eye(2))]
    bad = sandwich_record(p, p, np.eye(2))
    avg = average_records(good + [bad], step=5)
    assert avg.step == 5 and avg.samples_used == 2
    assert avg.U == pytest.approx(np.mean([r.U for r in good]))
    assert avg.G == pytest.approx(avg.U - avg.L)
    empty = average_records([bad], step=1)
    assert empty.samples_used == 0 and math.isnan(empty.U)


def test_independence_examples():
    Q, _ = np.linalg.qr(np.random.default_rng(0).normal(size=(50, 5)))
    r = independence_check(Q)
    assert r.diag_ok_fraction == 1.0 and r.offdiag_ok_fraction == 1.0 and r.holds
    same = np.tile(np.ones((200, 1)), (1, 4))
    assert independence_check(same).offdiag_ok_fraction == 0.0
    zero = independence_check(np.zeros((10, 3)))
    assert zero.epsilon_hat == 0.0 and not zero.holds


def test_independence_on_ball_samples():
    holds = sum(independence_check(sample_ball(10**4, 10, np.random.default_rng(s))).holds for s in range(100))
    assert holds >= 90


def test_sample_ball_radius_distribution():
    X = sample_ball(3, 20000, np.random.default_rng(1), radius=2.0)
    r = np.linalg.norm(X, axis=0)
    assert r.max() <= 2.0
    # P(|x| <= r) = (r / R)^m in the m-ball
    assert np.mean(r <= 1.0) == pytest.approx(1 / 8, abs=0.01)


def test_parameter_count_bounds_closed_form():
    b = parameter_count_bounds(10001, 10)
    # c = 1 - 2 ln 10 / 10001; u = -2 ln c; Z = 20 sqrt(6 ln 10) / 100 / c^2; g = ln(1 + Z)
    assert b.u_bound == pytest.approx(0.00092115404163, rel=1e-10)
    assert b.Z == pytest.approx(0.74406952483622, rel=1e-10)
    assert b.g_bound == pytest.approx(0.55622118985058, rel=1e-10)
    printed = parameter_count_bounds(10001, 10, printed=True)
    assert printed.Z < b.Z and printed.u_bound == b.u_bound


def test_parameter_count_bounds_limits():
    ms = [10**3, 10**4, 10**5, 10**6, 10**8]
    bounds = [parameter_count_bounds(m, 10) for m in ms]
    assert all(a.u_bound > b.u_bound and a.g_bound > b.g_bound for a, b in zip(bounds, bounds[1:]))
    assert bounds[-1].u_bound < 1e-6 and bounds[-1].g_bound < 1e-2
    half = parameter_count_bounds(10**4, 10, epsilon=0.5)
    assert half.u_bound == pytest.approx(parameter_count_bounds(10**4, 10).u_bound + 2 * math.log(2))
    for bad in ((10, 10), (1, 5), (100, 1)):
        with pytest.raises(ValueError):
            parameter_count_bounds(*bad)
    with pytest.raises(ValueError):
        parameter_count_bounds(100, 10, epsilon=0.0)


def test_probe_uniform_at_zero():
    for gen in (entropy(5), squared(5)):
        p = link(gen, np.zeros(5))
        assert p @ p == pytest.approx(1 / 5, abs=1e-16)


def grid_sup(radius, n=801):
    # dense polar grid over the 2-disc for the K=2 softmax toy
    best = -math.inf
    for r in np.linspace(radius / n, radius, n // 4):
        t = np.linspace(0, 2 * math.pi, n, endpoint=False)
        th = r * np.stack([np.cos(t), np.sin(t)], axis=1)
        p = link(entropy(2), th)
        best = max(best, float(np.max(((p * p).sum(axis=1) - 0.5) / r**2)))
    return best


@pytest.mark.parametrize("radius", [1e-2, 1e-1])
def test_probe_toy_against_grid(radius):
    k_hat, violations = implicit_reg_probe(None, entropy(2), None, radius, 20000, seed=0)
    oracle = grid_sup(radius)
    assert violations == 0
    assert 0 < k_hat <= oracle + 1e-9
    assert k_hat == pytest.approx(oracle, rel=1e-3)
    assert oracle == pytest.approx(0.25, rel=1e-2)


def test_probe_on_mlp_and_bad_premise(rng):
    cfg = netmodel.architecture("b", 1, input_dim=3, output_dim=3, width=3)
    k_hat, v = implicit_reg_probe(cfg, entropy(3), rng.normal(size=3), 0.1, 2000, seed=1)
    assert v == 0 and math.isfinite(k_hat)
    with pytest.raises(ValueError):
        implicit_reg_probe(cfg, entropy(4), rng.normal(size=3), 0.1, 10)
