"""Solver unit and behavior tests: step-level fixed points, factored
baselines, the perturbed solver's branch logic, and the tangent-descent
boundary mechanics."""

import math

import numpy as np
import pytest

from rankmin.geometry import FactoredMatrix, TangentVector, project_rank_r, project_tangent, tangent_dim
from rankmin.objectives import (
    generate_sensing,
    haar_frame,
    make_rng,
    quadratic_objective,
    random_ground_truth,
    sensing_objective,
    spectral_init,
)
from rankmin.solvers import (
    PprojgdParams,
    SolverConfig,
    _boundary_step_length,
    fgd_step,
    pprojgd,
    projgd_step,
    run_solver,
    scaledgd_step,
    tangent_space_steps,
)


def sensing_setup(r_star, kappa, seed, m_factor=3, psd=False, n=10, r=4):
    p = generate_sensing(n=n, r=r, r_star=r_star, kappa=kappa, m=m_factor * n * r,
                         seed=seed, symmetric_psd=psd)
    return p, sensing_objective(p), spectral_init(p)


class ZeroGradient:
    """f constant: gradient identically zero."""

    def value(self, x):
        return 1.0

    def gradient(self, x):
        return np.zeros_like(x)


class LinearPull:
    """f(X) = -c <D, X>: constant gradient -c D."""

    def __init__(self, d, c):
        self.d = d
        self.c = c

    def value(self, x):
        return -self.c * float(np.sum(self.d * x))

    def gradient(self, x):
        return -self.c * self.d


# -------------------------------------------------- projgd


def test_projgd_full_step_lands_on_projected_target():
    rng = make_rng(200)
    target = random_ground_truth(8, 5, 3.0, rng)
    f = quadratic_objective(target)
    x = random_ground_truth(8, 3, 2.0, rng)
    y = projgd_step(x, f, 1.0, rank=3)
    ref = project_rank_r(target.dense(), 3)
    assert np.linalg.norm(y.dense() - ref.dense()) < 1e-12


def test_projgd_zero_gradient_is_identity():
    rng = make_rng(201)
    x = random_ground_truth(7, 3, 2.0, rng)
    y = projgd_step(x, ZeroGradient(), 0.5, rank=3)
    assert np.linalg.norm(y.dense() - x.dense()) < 1e-13


def test_projgd_psd_variant_keeps_symmetry():
    p, f, x0 = sensing_setup(2, 2.0, 5, psd=True)
    y = projgd_step(x0, f, 0.4, rank=4, psd=True)
    d = y.dense()
    assert np.linalg.norm(d - d.T) < 1e-12
    assert np.array_equal(y.u, y.v)


# -------------------------------------------------- fgd


def test_fgd_stationary_at_optimum():
    rng = make_rng(202)
    x_star = random_ground_truth(8, 3, 2.0, rng)
    f = quadratic_objective(x_star)
    y = fgd_step(x_star, f, 0.4)
    assert f.value(y.dense()) <= f.value(x_star.dense()) + 1e-24
    assert np.linalg.norm(y.dense() - x_star.dense()) < 1e-12


def test_fgd_well_conditioned_sensing_fast():
    # kappa = 1, r = r_star: factored descent converges quickly
    counts = []
    for seed in range(5):
        p, f, x0 = sensing_setup(4, 1.0, seed, m_factor=10)
        cfg = SolverConfig(eta=0.4, max_iters=500, tol_rel_err=1e-14,
                           checkpoint_stride=500)
        tr = run_solver("fgd", f, x0, cfg, x_star=p.ground_truth)
        it = tr.iterations_to(1e-10)
        assert it is not None
        counts.append(it)
    assert np.median(counts) < 500


def test_fgd_rank_deficient_stalls_sublinearly():
    from rankmin.diagnostics import estimate_linear_rate
    rates = []
    for seed in range(5):
        p, f, x0 = sensing_setup(2, 20.0, seed)
        cfg = SolverConfig(eta=0.4, max_iters=400, tol_rel_err=1e-15,
                           checkpoint_stride=400)
        tr = run_solver("fgd", f, x0, cfg, x_star=p.ground_truth)
        # per-iteration relative-error ratio over iterations 200..400
        rates.append(estimate_linear_rate(tr, window=200, column="rel_err"))
    assert min(rates) > 0.99


# -------------------------------------------------- scaledgd / precgd


def test_scaledgd_zero_gradient_freezes_factors():
    rng = make_rng(203)
    x = random_ground_truth(6, 2, 3.0, rng)
    lf, rf = x.balanced_factors()
    lf2, rf2 = scaledgd_step(lf, rf, ZeroGradient(), 0.5)
    assert np.array_equal(lf, lf2) and np.array_equal(rf, rf2)


def test_scaledgd_iterations_insensitive_to_kappa():
    med = {}
    for kappa in (1.0, 20.0):
        counts = []
        for seed in range(5):
            p, f, x0 = sensing_setup(4, kappa, seed)
            cfg = SolverConfig(eta=0.4, max_iters=1000, tol_rel_err=1e-14,
                               checkpoint_stride=1000)
            tr = run_solver("scaledgd", f, x0, cfg, x_star=p.ground_truth)
            it = tr.iterations_to(1e-10)
            assert it is not None
            counts.append(it)
        med[kappa] = float(np.median(counts))
    ratio = max(med.values()) / min(med.values())
    assert ratio < 2.0


def test_scaledgd_gram_breakdown_flag_on_rank_deficient():
    flagged = 0
    for seed in range(20):
        p, f, x0 = sensing_setup(2, 20.0, seed)
        cfg = SolverConfig(eta=0.4, max_iters=1000, tol_rel_err=1e-14,
                           checkpoint_stride=1000)
        tr = run_solver("scaledgd", f, x0, cfg, x_star=p.ground_truth)
        if tr.gram_cond_max > 1e8:
            assert tr.gram_breakdown
            flagged += 1
    assert flagged >= 16


def test_precgd_huge_reg_freezes_iterate():
    p, f, x0 = sensing_setup(4, 2.0, 7)
    cfg = SolverConfig(eta=0.4, max_iters=1, tol_rel_err=None,
                       checkpoint_stride=1, precgd_reg=1e12)
    tr = run_solver("precgd", f, x0, cfg, x_star=p.ground_truth)
    assert tr.records[1].step_norm < 1e-8


def test_precgd_reg_zero_reduces_to_scaledgd():
    from rankmin.solvers import precgd_step
    rng = make_rng(204)
    p, f, x0 = sensing_setup(4, 3.0, 8)
    lf, rf = x0.balanced_factors()
    for _ in range(3):
        a1, b1 = precgd_step(lf, rf, f, 0.4, 0.0)
        a2, b2 = scaledgd_step(lf, rf, f, 0.4)
        assert np.allclose(a1, a2, atol=1e-13)
        assert np.allclose(b1, b2, atol=1e-13)
        lf, rf = a1, b1


def test_precgd_converges_on_flagged_psd_rank_deficient():
    # the raw Gram goes numerically singular on these runs; the sqrt(f)
    # regularization keeps the preconditioner bounded and the run converges
    for seed in range(3):
        p, f, x0 = sensing_setup(2, 20.0, seed, psd=True)
        cfg = SolverConfig(eta=0.4, max_iters=1000, tol_rel_err=1e-14,
                           checkpoint_stride=1000)
        trp = run_solver("precgd", f, x0, cfg, x_star=p.ground_truth)
        trs = run_solver("scaledgd", f, x0, cfg, x_star=p.ground_truth)
        assert trs.gram_breakdown
        assert trp.iterations_to(1e-10) is not None


# -------------------------------------------------- run_solver plumbing


def test_run_solver_zero_iterations():
    p, f, x0 = sensing_setup(4, 1.0, 9)
    cfg = SolverConfig(eta=0.4, max_iters=0, tol_rel_err=None, checkpoint_stride=1)
    tr = run_solver("projgd", f, x0, cfg, x_star=p.ground_truth)
    assert len(tr.records) == 1
    assert tr.records[0].iteration == 0
    assert tr.records[0].branch == "init"


def test_run_solver_monotone_quadratic_descent():
    rng = make_rng(205)
    x_star = random_ground_truth(8, 3, 2.0, rng)
    f = quadratic_objective(x_star)
    x0 = random_ground_truth(8, 3, 5.0, rng)
    cfg = SolverConfig(eta=0.4, max_iters=500, tol_rel_err=1e-12, checkpoint_stride=500)
    tr = run_solver("projgd", f, x0, cfg, x_star=x_star)
    assert tr.status == "converged"
    fv = tr.column("f_value")
    assert np.all(np.diff(fv) <= 1e-15)


def test_run_solver_trace_invariants():
    p, f, x0 = sensing_setup(4, 1.0, 10)
    cfg = SolverConfig(eta=0.4, max_iters=50, tol_rel_err=None, checkpoint_stride=10)
    tr = run_solver("projgd", f, x0, cfg, x_star=p.ground_truth)
    its = tr.column("iter")
    assert len(tr.records) <= 51
    assert np.all(np.diff(its) > 0)
    assert tr.records[0].branch == "init"
    assert math.isnan(tr.records[0].step_norm)


def test_run_solver_rejects_unknown_algorithm():
    p, f, x0 = sensing_setup(4, 1.0, 11)
    cfg = SolverConfig(eta=0.4, max_iters=5)
    with pytest.raises(ValueError):
        run_solver("sgd", f, x0, cfg)


def test_run_solver_divergence_abort():
    rng = make_rng(206)
    x_star = random_ground_truth(6, 2, 1.0, rng)
    f = quadratic_objective(x_star)
    x0 = random_ground_truth(6, 2, 1.0, rng)
    cfg = SolverConfig(eta=2.5, max_iters=2000, tol_rel_err=None,
                       diverge_threshold=1e2, checkpoint_stride=2000)
    tr = run_solver("projgd", f, x0, cfg, x_star=x_star)
    assert tr.status == "diverged"
    assert len(tr.records) < 2001


# -------------------------------------------------- pprojgd branches


def test_pprojgd_tangent_branch_at_optimum_keeps_value():
    rng = make_rng(207)
    x_star = random_ground_truth(8, 3, 2.0, rng)   # sigma_r = 0.5 > 2 eps_t
    f = quadratic_objective(x_star)
    cfg = SolverConfig(eta=0.4, max_iters=1, tol_rel_err=None, checkpoint_stride=1)
    x_end, tr = pprojgd(f, x_star, cfg, rng=make_rng(1, stream=5), x_star=x_star)
    assert tr.records[1].branch == "tangent-escape"
    eps = cfg.pprojgd.resolve(cfg.eta).epsilon
    assert f.value(x_end.dense()) - f.value(x_star.dense()) <= eps


def test_pprojgd_immediate_second_order_stop():
    rng = make_rng(208)
    params = PprojgdParams()
    # sigma_r below the 2*eps_t = 0.02 threshold and a tiny gradient
    xs = FactoredMatrix(haar_frame(rng, 8, 3), np.array([1.0, 0.5, 0.005]),
                        haar_frame(rng, 8, 3), validate=False)
    f = quadratic_objective(xs)
    cfg = SolverConfig(eta=1.0 / 3.0, max_iters=50, tol_rel_err=None,
                       checkpoint_stride=50, pprojgd=params)
    x_end, tr = pprojgd(f, xs, cfg, rng=make_rng(2, stream=5), x_star=xs)
    assert tr.status == "second-order-stop"
    assert tr.records[-1].branch == "terminate"
    r = params.resolve(cfg.eta)
    bound = (8.0 / 3.0) * (r.epsilon + r.epsilon_t / cfg.eta) + 1e-8
    assert np.linalg.norm(f.gradient(x_end.dense()), 2) <= bound


def test_pprojgd_escapes_swap_saddle():
    from rankmin.diagnostics import swapped_direction_saddle
    eye = np.eye(8)
    target = FactoredMatrix(eye[:, :4], np.array([1.0, 0.9, 0.6, 0.3]),
                            eye[:, :4], validate=False)
    f = quadratic_objective(target)
    saddle = swapped_direction_saddle(target, 3)
    f_saddle = f.value(saddle.dense())
    cfg = SolverConfig(eta=1.0 / 3.0, max_iters=6, tol_rel_err=None, checkpoint_stride=6)
    for seed in (0, 1):
        x_end, tr = pprojgd(f, saddle, cfg, rng=make_rng(300 + seed, stream=2))
        assert float(np.min(tr.column("f_value"))) < f_saddle - 1e-6


def test_pprojgd_gradient_branch_on_plain_descent():
    rng = make_rng(209)
    x_star = random_ground_truth(8, 3, 2.0, rng)
    f = quadratic_objective(x_star)
    x0 = random_ground_truth(8, 3, 1.5, rng)
    cfg = SolverConfig(eta=0.4, max_iters=30, tol_rel_err=None, checkpoint_stride=30)
    _, tr = pprojgd(f, x0, cfg, rng=make_rng(3, stream=5), x_star=x_star)
    assert tr.records[1].branch == "gradient"


# -------------------------------------------------- tangent_space_steps


def test_tangent_steps_pure_perturbation_when_flat():
    rng = make_rng(210)
    x = random_ground_truth(7, 3, 2.0, rng)
    radius, eta_t, eps_t = 1e-4, 0.01, 0.01
    y = tangent_space_steps(x, ZeroGradient(), radius, eta_t, eps_t, 5, make_rng(4, stream=6))
    moved = project_tangent(y.dense() - x.dense(), x)
    assert abs(moved.norm() - eta_t * radius) < 1e-9


def test_tangent_steps_boundary_exit_is_exact():
    rng = make_rng(211)
    x = random_ground_truth(7, 3, 2.0, rng)
    d = rng.standard_normal((7, 7))
    f = LinearPull(d, 50.0)
    eps_t = 0.01
    y = tangent_space_steps(x, f, 1e-4, 0.01, eps_t, 100, make_rng(5, stream=6))
    moved = project_tangent(y.dense() - x.dense(), x)
    assert abs(moved.norm() - eps_t) < 1e-10


def test_boundary_root_find_matches_bisection():
    rng = make_rng(212)
    x = random_ground_truth(6, 2, 2.0, rng)
    eps_t = 0.3
    for _ in range(20):
        s = TangentVector.from_coords(rng.standard_normal(tangent_dim(x)), x)
        s = (0.8 * eps_t / s.norm()) * s
        g = TangentVector.from_coords(rng.standard_normal(tangent_dim(x)), x)
        g = (-4.0 * eps_t / g.norm()) * g      # strong outward pull
        eta_exact = _boundary_step_length(s, g, eps_t)
        phi = lambda t: (s + (-t) * g).norm() - eps_t
        assert phi(0.0) < 0
        lo, hi = 0.0, 1.0
        while phi(hi) < 0:
            hi *= 2
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            if phi(mid) < 0:
                lo = mid
            else:
                hi = mid
        assert abs(eta_exact - 0.5 * (lo + hi)) < 1e-12
        assert abs((s + (-eta_exact) * g).norm() - eps_t) < 1e-12
