"""Checker and certificate tests.  The lemma checkers are exercised both on
honest inputs (they must pass) and under a deliberately broken bound (they
must fail), so the checkers themselves are load-bearing."""

import numpy as np
import pytest

import rankmin.diagnostics as diagnostics
from rankmin.diagnostics import (
    BudgetExceededError,
    certify_second_order,
    check_derivative_bound_lemma,
    check_descent_lemma,
    check_projection_lemma,
    classify_certificate,
    estimate_linear_rate,
    landscape_probe,
    relative_error,
    swapped_direction_saddle,
)
from rankmin.geometry import FactoredMatrix, project_rank_r, project_tangent
from rankmin.objectives import haar_frame, make_rng, quadratic_objective, random_ground_truth
from rankmin.solvers import SolverConfig, SolverTrace, TraceRecord, projgd_step, run_solver


def trace_from_gaps(gaps):
    recs = [TraceRecord(i, float(g), float(g), float(g), 0.0, 1.0, "gradient")
            for i, g in enumerate(gaps)]
    return SolverTrace(algorithm="synthetic", records=recs)


def identity_frame_target(n, sigmas):
    eye = np.eye(n)
    k = len(sigmas)
    return FactoredMatrix(eye[:, :k], np.asarray(sigmas, dtype=float), eye[:, :k],
                          validate=False)


# -------------------------------------------------- relative_error


def test_relative_error_zero_at_truth():
    x = random_ground_truth(6, 2, 2.0, make_rng(0))
    assert relative_error(x, x) == 0.0


def test_relative_error_doubling():
    x = random_ground_truth(6, 2, 2.0, make_rng(1))
    assert relative_error(2.0 * x.dense(), x) == pytest.approx(1.0, abs=1e-14)


def test_relative_error_dense_and_factored_agree():
    x = random_ground_truth(6, 2, 2.0, make_rng(2))
    y = random_ground_truth(6, 2, 3.0, make_rng(3))
    assert relative_error(y, x) == pytest.approx(relative_error(y.dense(), x.dense()), abs=1e-15)


def test_relative_error_rejects_zero_truth():
    with pytest.raises(ValueError):
        relative_error(np.eye(3), np.zeros((3, 3)))


# -------------------------------------------------- certificates


def test_certificate_minimizer_at_optimum():
    x_star = random_ground_truth(8, 3, 2.0, make_rng(4))
    f = quadratic_objective(x_star)
    cert = certify_second_order(x_star, f, eps=1e-6, gamma=0.0)
    assert cert.classification == "second-order-minimizer"
    assert cert.grad_norm <= 1e-10
    assert cert.min_eig >= -cert.eig_tol
    assert cert.sigma_r == pytest.approx(0.5, abs=1e-12)


def test_certificate_flags_swap_saddle():
    target = identity_frame_target(8, [1.0, 0.9, 0.6, 0.3])
    f = quadratic_objective(target)
    saddle = swapped_direction_saddle(target, 3)
    cert = certify_second_order(saddle, f, eps=1e-6, gamma=0.0)
    assert cert.classification == "saddle"
    # dropped-mode curvature: 1 - sigma_drop / sigma_r = 1 - 0.6/0.3
    assert cert.min_eig == pytest.approx(-1.0, abs=1e-4)
    assert cert.grad_norm <= 1e-10


def test_swap_saddle_is_projgd_fixed_point():
    target = identity_frame_target(8, [1.0, 0.9, 0.6, 0.3])
    f = quadratic_objective(target)
    saddle = swapped_direction_saddle(target, 3)
    y = projgd_step(saddle, f, 1.0 / 3.0, rank=3)
    assert np.linalg.norm(y.dense() - saddle.dense()) < 1e-12


def test_swap_saddle_needs_extra_mode():
    target = random_ground_truth(6, 2, 2.0, make_rng(5))
    with pytest.raises(ValueError):
        swapped_direction_saddle(target, 2)


def test_certificate_rank_deficient_falls_back_to_ambient():
    x = random_ground_truth(6, 1, 1.0, make_rng(6))
    f = quadratic_objective(x)
    cert = certify_second_order(x, f, eps=1e-6, gamma=0.0, rank=2,
                                epsilon_t=0.01, eta=0.4)
    assert np.isnan(cert.grad_norm) and np.isnan(cert.min_eig)
    assert cert.classification == "ambient-stationary"
    cert2 = certify_second_order(x, f, eps=1e-6, gamma=0.0, rank=2)
    assert cert2.classification == "indeterminate"


def test_classify_certificate_rule_table():
    kw = dict(eps=1e-4, gamma=0.0, ambient_threshold=0.5, eig_tol=1e-7)
    assert classify_certificate(1e-5, 0.3, 9.0, **kw) == "second-order-minimizer"
    assert classify_certificate(1e-5, -0.3, 9.0, **kw) == "saddle"
    assert classify_certificate(float("nan"), float("nan"), 0.1, **kw) == "ambient-stationary"
    assert classify_certificate(float("nan"), float("nan"), 9.0, **kw) == "indeterminate"
    # large gradient but clean curvature: nothing to certify
    assert classify_certificate(1.0, 0.3, 9.0, **kw) == "indeterminate"


def test_near_optimal_certificates_imply_distance_bound():
    # (eps, 1/2)-second-order points of the unit quadratic sit within 2 eps
    # of the rank-r optimum
    rng = make_rng(7)
    target = random_ground_truth(8, 3, 2.0, rng)
    f = quadratic_objective(target)
    eps = 1e-3
    held = 0
    for k in range(100):
        delta = (2e-5, 5e-5, 1e-4, 2e-4)[k % 4]
        x = project_rank_r(target.dense() + delta * rng.standard_normal((8, 8)), 3)
        cert = certify_second_order(x, f, eps=eps, gamma=0.5)
        if cert.grad_norm <= eps and cert.min_eig >= -0.5:
            held += 1
            assert np.linalg.norm(x.dense() - target.dense()) <= 2.0 * eps + 1e-8
    assert held >= 50


# -------------------------------------------------- descent lemma


def quadratic_run(eta, max_iters=300):
    rng = make_rng(8)
    x_star = random_ground_truth(8, 3, 2.0, rng)
    f = quadratic_objective(x_star)
    x0 = random_ground_truth(8, 3, 4.0, rng)
    cfg = SolverConfig(eta=eta, max_iters=max_iters, tol_rel_err=None,
                       checkpoint_stride=1)
    return f, run_solver("projgd", f, x0, cfg, x_star=x_star)


def test_descent_lemma_holds_for_small_steps():
    f, tr = quadratic_run(0.3)
    rep = check_descent_lemma(tr, f, 1.0, 0.3)
    assert rep.applicable and rep.passed
    assert rep.steps_checked >= 100
    assert rep.violations == 0


def test_descent_lemma_large_step_not_applicable():
    f, tr = quadratic_run(0.3)
    rep = check_descent_lemma(tr, f, 1.0, 1.5)
    assert not rep.applicable
    assert "1/L" in rep.reason


def test_descent_lemma_requires_stride_one():
    rng = make_rng(9)
    x_star = random_ground_truth(25, 3, 2.0, rng)
    f = quadratic_objective(x_star)
    x0 = random_ground_truth(25, 3, 4.0, rng)
    cfg = SolverConfig(eta=0.3, max_iters=60, tol_rel_err=None, checkpoint_stride=25)
    tr = run_solver("projgd", f, x0, cfg, x_star=x_star)
    rep = check_descent_lemma(tr, f, 1.0, 0.3)
    assert not rep.applicable
    assert "stride" in rep.reason


# -------------------------------------------------- projection lemma


def test_projection_lemma_sampler_passes():
    rep = check_projection_lemma(samples=1500, seed=0)
    assert rep.passed
    assert rep.samples == 1500
    assert rep.min_contraction_ratio >= rep.bound - 1e-9
    assert rep.min_spectral_margin >= -1e-9


def test_projection_of_small_tangent_moves_nearly_fully():
    rng = make_rng(10)
    for _ in range(20):
        x = random_ground_truth(8, 3, 3.0, rng)
        z = project_tangent(rng.standard_normal((8, 8)), x).dense()
        z *= 1e-3 * x.sigma_min() / np.linalg.norm(z)
        moved = project_rank_r(x.dense() + z, 3).dense() - x.dense()
        ratio = np.linalg.norm(moved) / np.linalg.norm(z)
        assert ratio >= 0.99


def test_projection_spectral_lower_bound_direct():
    rng = make_rng(11)
    for _ in range(20):
        x = random_ground_truth(8, 3, 3.0, rng)
        z = x.u_perp @ rng.standard_normal((5, 5)) @ x.v_perp.T
        z *= 5.0 / np.linalg.norm(z, 2)
        moved = project_rank_r(x.dense() + z, 3).dense() - x.dense()
        assert np.linalg.norm(moved) >= 0.5 * (np.linalg.norm(z, 2) - x.sigma_min()) - 1e-9


def test_projection_lemma_mutation_is_caught(monkeypatch):
    # the checker reads the bound at call time: a corrupted constant must
    # fail both the direct check and the verification criterion built on it
    monkeypatch.setattr(diagnostics, "PROJECTION_RATIO_BOUND", 0.9)
    rep = check_projection_lemma(samples=800, seed=0)
    assert not rep.passed
    from rankmin.verify import criterion_lemma_suites
    assert not criterion_lemma_suites("quick").passed


# -------------------------------------------------- derivative bound lemma


def test_derivative_bound_exact_at_zero_mismatch():
    assert check_derivative_bound_lemma(kappa0=0.0, samples=200) == 0.0


def test_derivative_bound_holds_and_is_tight():
    worst = check_derivative_bound_lemma(kappa0=0.3, samples=2000)
    assert abs(worst) <= 1e-10


def test_derivative_bound_rejects_bad_kappa0():
    with pytest.raises(ValueError):
        check_derivative_bound_lemma(kappa0=1.0)
    with pytest.raises(ValueError):
        check_derivative_bound_lemma(kappa0=-0.1)


# -------------------------------------------------- rate estimation


def test_rate_exact_geometric_sequence():
    tr = trace_from_gaps(0.9 ** np.arange(301))
    assert estimate_linear_rate(tr, window=50) == pytest.approx(0.9, abs=1e-12)


def test_rate_stagnant_is_one():
    tr = trace_from_gaps(np.full(200, 0.5))
    assert estimate_linear_rate(tr, window=50) == 1.0


def test_rate_scale_invariant():
    gaps = 0.83 ** np.arange(150)
    a = estimate_linear_rate(trace_from_gaps(gaps), window=40)
    b = estimate_linear_rate(trace_from_gaps(1e6 * gaps), window=40)
    assert a == pytest.approx(b, abs=1e-12)


def test_rate_ignores_dead_prefix():
    gaps = np.concatenate([np.zeros(10), 0.9 ** np.arange(100)])
    assert estimate_linear_rate(trace_from_gaps(gaps), window=30) == pytest.approx(0.9, abs=1e-12)


def test_rate_needs_positive_tail():
    with pytest.raises(ValueError):
        estimate_linear_rate(trace_from_gaps(np.zeros(50)))
    with pytest.raises(ValueError):
        estimate_linear_rate(trace_from_gaps(np.array([1.0])))


# -------------------------------------------------- landscape probe


def test_probe_finds_truncated_target():
    rng = make_rng(12)
    target = random_ground_truth(3, 3, 3.0, rng)
    f = quadratic_objective(target)
    points = landscape_probe(f, 3, 1, seed=0, starts=30, iters=2000)
    s = np.linalg.svd(target.dense(), compute_uv=False)
    best = points[0]
    assert best.f_value == pytest.approx(0.5 * float(np.sum(s[1:] ** 2)), abs=1e-8)
    assert best.certificate.classification == "second-order-minimizer"
    assert sum(p.cluster_size for p in points) == 30
    assert all(a.f_value <= b.f_value for a, b in zip(points, points[1:]))


def test_probe_exact_rank_reaches_zero_loss():
    target = random_ground_truth(3, 1, 1.0, make_rng(13))
    f = quadratic_objective(target)
    points = landscape_probe(f, 3, 1, seed=1, starts=12, iters=2000)
    assert points[0].f_value <= 1e-12
    assert relative_error(points[0].x, target) <= 1e-5


def test_probe_size_limits():
    f = quadratic_objective(random_ground_truth(5, 2, 1.0, make_rng(14)))
    with pytest.raises(ValueError):
        landscape_probe(f, 5, 2)
    with pytest.raises(ValueError):
        landscape_probe(f, 4, 3)


def test_probe_budget_guard():
    f = quadratic_objective(random_ground_truth(3, 1, 1.0, make_rng(15)))
    with pytest.raises(BudgetExceededError):
        landscape_probe(f, 3, 1, starts=64, iters=3000, budget=1000)
