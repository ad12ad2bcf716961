"""End-to-end acceptance checks.

Each criterion function runs a self-contained experiment and returns a
CriterionResult; verify_suite runs them all, prints one PASS/FAIL line per
criterion, and can dump the verdict as JSON.  level="full" uses the stated
seed/sample counts; level="quick" shrinks counts only, never tolerances or
thresholds, so a quick pass is a weaker but honest version of the same
assertion.
"""

from __future__ import annotations

import hashlib
import json
import math
import os
import sys
import tempfile
import time
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from . import harness
from .diagnostics import (
    check_derivative_bound_lemma,
    check_descent_lemma,
    check_projection_lemma,
    estimate_linear_rate,
    swapped_direction_saddle,
)
from .geometry import (
    FactoredMatrix,
    project_rank_r,
    pullback_hessian,
    pullback_value_grad,
    retract,
    TangentVector,
    tangent_dim,
)
from .objectives import (
    generate_sensing,
    haar_frame,
    make_rng,
    quadratic_objective,
    random_ground_truth,
    sensing_objective,
    spectral_init,
)
from .solvers import PprojgdParams, SolverConfig, pprojgd, run_solver

SUCCESS_REL = 1e-14     # sweep classification: run converged
ABORT_REL = 1e2         # sweep classification: run aborted
STALL_REL = 1e-1        # no-recovery level (spectral init starts near 3e-1)
WITNESS_WINDOW = (0.55, 0.9)


@dataclass
class CriterionResult:
    cid: str
    passed: bool
    summary: str
    details: dict = field(default_factory=dict)
    seconds: float = 0.0


def _sensing_trace(algo, *, r_star, kappa, eta, seed, m_factor, max_iters,
                   n=10, r=4, tol=1e-14, psd=False, stride=None):
    problem = generate_sensing(n=n, r=r, r_star=r_star, kappa=kappa,
                               m=m_factor * n * r, seed=seed, symmetric_psd=psd)
    f = sensing_objective(problem)
    x0 = spectral_init(problem)
    cfg = SolverConfig(eta=eta, max_iters=max_iters, tol_rel_err=tol,
                       diverge_threshold=ABORT_REL,
                       checkpoint_stride=stride if stride is not None else max_iters)
    return run_solver(algo, f, x0, cfg, x_star=problem.ground_truth)


def _iters_to(trace, tol):
    it = trace.iterations_to(tol)
    return math.inf if it is None else it


# ---------------------------------------------------------------------------
# 1. trace-panel replication: m = 3nr, eta = 0.4


def criterion_trace_panels(level: str = "full") -> CriterionResult:
    t0 = time.perf_counter()
    seeds = range(10) if level == "full" else range(3)
    eta, tol = 0.4, 1e-10
    panels = [(k, rs) for k in (1.0, 20.0) for rs in (4, 2)]

    proj_med = {}
    for kappa, r_star in panels:
        its = [_iters_to(_sensing_trace("projgd", r_star=r_star, kappa=kappa,
                                        eta=eta, seed=s, m_factor=3,
                                        max_iters=1000), tol)
               for s in seeds]
        proj_med[(kappa, r_star)] = float(np.median(its))
    pass_a = all(math.isfinite(v) for v in proj_med.values())

    ratios = {}
    for r_star in (4, 2):
        a, b = proj_med[(1.0, r_star)], proj_med[(20.0, r_star)]
        ratios[r_star] = (max(a, b) / min(a, b)) if (math.isfinite(a) and math.isfinite(b)) else math.inf
    pass_b = all(v < 2.0 for v in ratios.values())

    fgd_hard = [_iters_to(_sensing_trace("fgd", r_star=4, kappa=20.0, eta=eta,
                                         seed=s, m_factor=3, max_iters=1000), tol)
                for s in seeds]
    fgd_hard_med = float(np.median(fgd_hard))
    pass_c = (not math.isfinite(fgd_hard_med)) or fgd_hard_med > 3.0 * proj_med[(20.0, 4)]

    stall_rates = {}
    for kappa in (1.0, 20.0):
        rates = []
        for s in seeds:
            tr = _sensing_trace("fgd", r_star=2, kappa=kappa, eta=eta, seed=s,
                                m_factor=3, max_iters=1000, tol=1e-16)
            rates.append(estimate_linear_rate(tr, window=50))
        stall_rates[kappa] = float(np.median(rates))
    pass_d = all(v > 0.99 for v in stall_rates.values())

    passed = pass_a and pass_b and pass_c and pass_d
    details = {
        "projgd_median_iters": {f"k{int(k)}_rs{rs}": v for (k, rs), v in proj_med.items()},
        "kappa_ratio": {f"rs{rs}": v for rs, v in ratios.items()},
        "fgd_hard_median_iters": fgd_hard_med,
        "fgd_stall_rate": {f"k{int(k)}": v for k, v in stall_rates.items()},
        "subchecks": {"a": pass_a, "b": pass_b, "c": pass_c, "d": pass_d},
    }
    summary = (f"panels {'all converge' if pass_a else 'incomplete'}; "
               f"kappa ratios {ratios[4]:.2f}/{ratios[2]:.2f}; "
               f"fgd hard median {fgd_hard_med}; "
               f"fgd stall rates {stall_rates[1.0]:.5f}/{stall_rates[20.0]:.5f}")
    return CriterionResult("trace_panels", passed, summary, _jsonable(details),
                           time.perf_counter() - t0)


# ---------------------------------------------------------------------------
# 2. step-size sweep: m = 10nr, 80 iterations


def criterion_step_size_sweep(level: str = "full") -> CriterionResult:
    t0 = time.perf_counter()
    seeds = list(range(10)) if level == "full" else list(range(3))
    etas = harness.preset_fig3().etas
    algos = ("projgd", "fgd", "scaledgd")

    finals = {}
    for algo in algos:
        for s in seeds:
            for eta in etas:
                tr = _sensing_trace(algo, r_star=4, kappa=1.0, eta=eta, seed=s,
                                    m_factor=10, max_iters=80)
                rel = tr.final_record.rel_err
                finals[(algo, s, eta)] = ABORT_REL * 10 if not np.isfinite(rel) else rel

    def success_set(algo, s):
        return {eta for eta in etas if finals[(algo, s, eta)] < SUCCESS_REL}

    contained = 0
    for s in seeds:
        p, f, g = success_set("projgd", s), success_set("fgd", s), success_set("scaledgd", s)
        if f <= p and g <= p and p != f and p != g:
            contained += 1
    need = math.ceil(0.7 * len(seeds))
    pass_containment = contained >= need

    witness_eta = None
    witness_medians = None
    for eta in etas:
        if not WITNESS_WINDOW[0] < eta < WITNESS_WINDOW[1]:
            continue
        med = {a: float(np.median([finals[(a, s, eta)] for s in seeds])) for a in algos}
        # baselines count as failed when they never recover (final error at or
        # above the init level); the abort threshold is reported for context
        if med["projgd"] < SUCCESS_REL and med["fgd"] > STALL_REL and med["scaledgd"] > STALL_REL:
            witness_eta = eta
            witness_medians = med
            break
    passed = pass_containment and witness_eta is not None
    details = {
        "containment_seeds": contained, "containment_needed": need,
        "witness_eta": witness_eta, "witness_medians": witness_medians,
        "success_grid": {a: sorted(set.union(*(success_set(a, s) for s in seeds)))
                         for a in algos},
    }
    summary = (f"containment {contained}/{len(seeds)} (need {need}); "
               + (f"witness eta={witness_eta} medians "
                  f"p={witness_medians['projgd']:.1e} f={witness_medians['fgd']:.1e} "
                  f"s={witness_medians['scaledgd']:.1e}" if witness_eta else "no witness eta"))
    return CriterionResult("step_size_sweep", passed, summary, _jsonable(details),
                           time.perf_counter() - t0)


# ---------------------------------------------------------------------------
# 3. local rate bound on the quadratic (kappa_f = 1)


def criterion_local_rate(level: str = "full") -> CriterionResult:
    t0 = time.perf_counter()
    seeds = range(50) if level == "full" else range(10)
    etas = (0.1, 0.2, 0.3, 0.45)
    n, r = 12, 3
    gap_floor = 1e-24      # below this the ratio is dominated by roundoff
    worst = -math.inf
    violations = 0
    entered = 0
    for s in seeds:
        x_star = random_ground_truth(n, r, 2.0, s)
        f = quadratic_objective(x_star)
        enter_at = 0.01 * x_star.sigma_r(r) ** 2
        x0 = random_ground_truth(n, r, 4.0, 10_000 + s)
        for eta in etas:
            bound = 1.0 - (4.0 / 27.0) * (eta - eta * eta) + 1e-10
            cfg = SolverConfig(eta=eta, max_iters=3000, tol_rel_err=1e-13,
                               checkpoint_stride=3000)
            tr = run_solver("projgd", f, x0, cfg, x_star=x_star)
            gaps = tr.column("f_gap")
            inside = False
            for t in range(len(gaps) - 1):
                if not inside and gaps[t] <= enter_at:
                    inside = True
                    entered += 1
                if inside and gaps[t] > gap_floor and gaps[t + 1] > 0:
                    ratio = gaps[t + 1] / gaps[t]
                    worst = max(worst, ratio - bound)
                    if ratio > bound:
                        violations += 1
    passed = violations == 0 and entered == len(list(seeds)) * len(etas)
    details = {"violations": violations, "entered_runs": entered,
               "worst_slack": worst}
    summary = f"{violations} ratio violations, {entered} runs entered the local region, worst slack {worst:.2e}"
    return CriterionResult("local_rate", passed, summary, _jsonable(details),
                           time.perf_counter() - t0)


# ---------------------------------------------------------------------------
# 4. global step-size window on the quadratic


def criterion_global_window(level: str = "full") -> CriterionResult:
    t0 = time.perf_counter()
    count = 100 if level == "full" else 20
    etas = (0.1, 0.5, 0.9)
    n, r = 8, 2
    x_star = random_ground_truth(n, r, 2.0, 123)
    f = quadratic_objective(x_star)
    scales = (0.1, 1.0, 10.0)
    failures = []
    descent_violations = 0
    for i in range(count):
        rng = make_rng(500 + i)
        a = rng.standard_normal((n, r))
        b = rng.standard_normal((n, r))
        x0 = project_rank_r(scales[i % 3] * a @ b.T, r)
        for eta in etas:
            stride = 1 if eta < 0.5 else 2000
            # scale-10 starts sit ~100x from the target, over the default
            # abort level; raise it so the run is judged on convergence only
            cfg = SolverConfig(eta=eta, max_iters=2000, tol_rel_err=1e-11,
                               diverge_threshold=1e9, checkpoint_stride=stride)
            tr = run_solver("projgd", f, x0, cfg, x_star=x_star)
            if _iters_to(tr, 1e-10) > 2000:
                failures.append({"init": i, "eta": eta,
                                 "final": tr.final_record.rel_err})
            if eta < 0.5:
                rep = check_descent_lemma(tr, f, 1.0, eta)
                if rep.applicable:
                    descent_violations += rep.violations
    passed = not failures and descent_violations == 0
    details = {"initializations": count, "failures": failures,
               "descent_violations": descent_violations}
    summary = (f"{count} inits x {len(etas)} etas: {len(failures)} non-converged, "
               f"{descent_violations} descent violations")
    return CriterionResult("global_window", passed, summary, _jsonable(details),
                           time.perf_counter() - t0)


# ---------------------------------------------------------------------------
# 5. lemma property suites


def criterion_lemma_suites(level: str = "full") -> CriterionResult:
    t0 = time.perf_counter()
    full = level == "full"

    # per-step descent with known L, at two step sizes
    descent_ok = True
    descent_worst = math.inf
    x_star = random_ground_truth(10, 3, 3.0, 7)
    f = quadratic_objective(x_star)
    for eta in (0.3, 0.45):
        x0 = random_ground_truth(10, 3, 2.0, 77)
        cfg = SolverConfig(eta=eta, max_iters=1000 if full else 300,
                           tol_rel_err=1e-15, checkpoint_stride=1)
        tr = run_solver("projgd", f, x0, cfg, x_star=x_star)
        rep = check_descent_lemma(tr, f, 1.0, eta)
        descent_ok = descent_ok and rep.applicable and rep.violations == 0
        descent_worst = min(descent_worst, rep.worst_margin)

    proj = check_projection_lemma(samples=10_000 if full else 1500, seed=0)

    deriv_worst = check_derivative_bound_lemma(kappa0=0.3,
                                               samples=5000 if full else 800, seed=0)
    deriv_ok = deriv_worst <= 1e-10

    # termination bound: engineered stops with sigma_r(X*) below 2 eps_t
    stop_ok = True
    stop_worst = -math.inf
    stops = 20 if full else 5
    eta = 1.0 / 3.0
    params = PprojgdParams()
    resolved = params.resolve(eta)
    stop_bound = (8.0 / 3.0) * (resolved.epsilon + resolved.epsilon_t / eta) + 1e-8
    for s in range(stops):
        rng = make_rng(900 + s)
        xs = FactoredMatrix(haar_frame(rng, 8, 3),
                            np.array([1.0, 0.55, 0.008]), haar_frame(rng, 8, 3),
                            validate=False)
        fq = quadratic_objective(xs)
        x0 = project_rank_r(xs.dense() + 5e-3 * rng.standard_normal((8, 8)), 3)
        cfg = SolverConfig(eta=eta, max_iters=400, tol_rel_err=None,
                           checkpoint_stride=400, pprojgd=params)
        x_end, tr = pprojgd(fq, x0, cfg, rng=make_rng(901, stream=s), x_star=xs)
        gnorm = float(np.linalg.norm(fq.gradient(x_end.dense()), 2))
        stop_worst = max(stop_worst, gnorm)
        if tr.status != "second-order-stop" or gnorm > stop_bound:
            stop_ok = False

    elapsed = time.perf_counter() - t0
    passed = descent_ok and proj.passed and deriv_ok and stop_ok and elapsed < 60.0
    details = {
        "descent_ok": descent_ok, "descent_worst_slack": descent_worst,
        "projection_min_ratio": proj.min_contraction_ratio,
        "projection_min_margin": proj.min_spectral_margin,
        "projection_samples": proj.samples,
        "derivative_bound_worst": deriv_worst,
        "stop_bound": stop_bound, "stop_worst_grad": stop_worst,
        "elapsed": elapsed,
    }
    summary = (f"descent ok={descent_ok}; projection ratio {proj.min_contraction_ratio:.4f} "
               f"margin {proj.min_spectral_margin:.2e}; derivative slack {deriv_worst:.1e}; "
               f"stop grad {stop_worst:.2e} <= {stop_bound:.2e}; {elapsed:.1f}s")
    return CriterionResult("lemma_suites", passed, summary, _jsonable(details), elapsed)


# ---------------------------------------------------------------------------
# 6. geometry oracle suite


def criterion_geometry_oracles(level: str = "full") -> CriterionResult:
    t0 = time.perf_counter()
    full = level == "full"
    rng = make_rng(42, stream=3)
    n, r = 9, 3

    # truncation dominates every random rank-r candidate
    ey_ok = True
    for _ in range(40 if full else 10):
        z = rng.standard_normal((n, n))
        best = float(np.linalg.norm(z - project_rank_r(z, r).dense()))
        for _ in range(200 if full else 60):
            c = rng.standard_normal((n, r)) @ rng.standard_normal((r, n))
            c *= np.linalg.norm(z) / max(np.linalg.norm(c), 1e-12)
            ey_ok = ey_ok and best <= float(np.linalg.norm(z - c)) + 1e-12

    def rand_base():
        kappa = 10.0 ** rng.uniform(0, 1.5)
        sig = np.linspace(1.0, 1.0 / kappa, r)
        return FactoredMatrix(haar_frame(rng, n, r), sig, haar_frame(rng, n, r),
                              validate=False)

    # retraction against its dense closed form
    retr_worst = 0.0
    for _ in range(50 if full else 12):
        base = rand_base()
        s = TangentVector.from_coords(
            0.3 * rng.standard_normal(tangent_dim(base)), base)
        y = retract(base, s).dense()
        w = np.diag(base.sigma) + s.core
        winv = np.linalg.inv(w)
        a = base.u + base.u_perp @ s.left @ winv
        b = base.v.T + winv @ s.right @ base.v_perp.T
        retr_worst = max(retr_worst, float(np.linalg.norm(y - a @ w @ b)))
    retr_ok = retr_worst < 1e-8

    # pullback gradient vs central differences of the pullback value
    fd_worst = 0.0
    for _ in range(8 if full else 3):
        base = rand_base()
        f = quadratic_objective(random_ground_truth(n, r, 2.0, rng))
        s = TangentVector.from_coords(
            0.1 * rng.standard_normal(tangent_dim(base)), base)
        _, grad = pullback_value_grad(f, base, s)
        for _ in range(20 if full else 6):
            d = rng.standard_normal(tangent_dim(base))
            d /= np.linalg.norm(d)
            dv = TangentVector.from_coords(d, base)
            h = 1e-5
            num = (pullback_value_grad(f, base, s + h * dv)[0]
                   - pullback_value_grad(f, base, s - h * dv)[0]) / (2 * h)
            ana = grad.inner(dv)
            fd_worst = max(fd_worst, abs(num - ana) / max(abs(num), 1e-12))
    fd_ok = fd_worst < 1e-5

    # finite-difference Hessian is symmetric to tolerance
    sym_worst = 0.0
    for _ in range(6 if full else 2):
        base = rand_base()
        f = quadratic_objective(random_ground_truth(n, r, 2.0, rng))
        h = pullback_hessian(f, base)
        sym_worst = max(sym_worst, float(np.linalg.norm(h - h.T) / max(np.linalg.norm(h), 1e-12)))
    sym_ok = sym_worst < 1e-4

    elapsed = time.perf_counter() - t0
    passed = ey_ok and retr_ok and fd_ok and sym_ok and elapsed < 60.0
    details = {"eckart_young_ok": ey_ok, "retraction_worst": retr_worst,
               "fd_gradient_worst_rel": fd_worst, "hessian_asymmetry_worst": sym_worst,
               "elapsed": elapsed}
    summary = (f"candidate dominance={ey_ok}; retraction {retr_worst:.1e}; "
               f"fd gradient {fd_worst:.1e}; hessian asymmetry {sym_worst:.1e}; {elapsed:.1f}s")
    return CriterionResult("geometry_oracles", passed, summary, _jsonable(details), elapsed)


# ---------------------------------------------------------------------------
# 7. saddle escape


def _escape_instance():
    # identity frames keep every projected-descent iterate exactly diagonal,
    # so the saddle is a bit-exact fixed point: roundoff never seeds the
    # unstable mode and the unperturbed solver genuinely cannot leave
    n, r = 8, 3
    eye = np.eye(n)
    target = FactoredMatrix(eye[:, :4], np.array([1.0, 0.9, 0.6, 0.3]),
                            eye[:, :4], validate=False)
    saddle = swapped_direction_saddle(target, r)
    x_star = project_rank_r(target.dense(), r)
    return target, saddle, x_star


def escape_margin(f_saddle: float, epsilon: float, epsilon_t: float) -> float:
    """Progress quantum sqrt(eps^3 / rho_T) / 50 with rho_T = 2 M / eps_t^2
    and M = sqrt(2 f(saddle)) (a valid gradient bound on the sublevel set of
    a quadratic)."""
    m_bound = math.sqrt(2.0 * f_saddle)
    rho_t = 2.0 * m_bound / (epsilon_t ** 2)
    return math.sqrt(epsilon ** 3 / rho_t) / 50.0


def criterion_saddle_escape(level: str = "full") -> CriterionResult:
    t0 = time.perf_counter()
    seeds = range(50) if level == "full" else range(10)
    target, saddle, x_star = _escape_instance()
    f = quadratic_objective(target)
    eta = 1.0 / 3.0
    params = PprojgdParams().resolve(eta)
    f_saddle = f.value(saddle.dense())
    margin = escape_margin(f_saddle, params.epsilon, params.epsilon_t)

    # plain projected descent is pinned: the saddle is an exact fixed point
    cfg_stay = SolverConfig(eta=eta, max_iters=1000, tol_rel_err=None,
                            checkpoint_stride=1000)
    tr = run_solver("projgd", f, saddle, cfg_stay, x_star=saddle)
    stay_worst = float(np.max(tr.column("rel_err")[1:]))
    stays = stay_worst <= 1e-12

    escapes = 0
    for s in seeds:
        cfg = SolverConfig(eta=eta, max_iters=8, tol_rel_err=None,
                           checkpoint_stride=8)
        _, tre = pprojgd(f, saddle, cfg, rng=make_rng(4000 + s, stream=2),
                         x_star=x_star)
        if float(np.min(tre.column("f_value"))) < f_saddle - margin / 2.0:
            escapes += 1
    need = math.ceil(0.9 * len(list(seeds)))
    pass_escape = escapes >= need

    # terminal points of stopping runs sit within 4 eps / (3 mu - L) of X*
    cor_ok = True
    cor_worst = 0.0
    for s in range(12 if level == "full" else 4):
        rng = make_rng(700 + s)
        xs = FactoredMatrix(haar_frame(rng, 8, 3),
                            np.array([1.0, 0.55, 0.008]), haar_frame(rng, 8, 3),
                            validate=False)
        fq = quadratic_objective(xs)
        x0 = project_rank_r(xs.dense() + 5e-3 * rng.standard_normal((8, 8)), 3)
        cfg = SolverConfig(eta=eta, max_iters=400, tol_rel_err=None,
                           checkpoint_stride=400)
        x_end, trq = pprojgd(fq, x0, cfg, rng=make_rng(701, stream=s), x_star=xs)
        dist = float(np.linalg.norm(x_end.dense() - xs.dense()))
        cor_worst = max(cor_worst, dist)
        if trq.status != "second-order-stop" or dist > 2.0 * params.epsilon + 1e-8:
            cor_ok = False

    passed = stays and pass_escape and cor_ok
    details = {"escapes": escapes, "needed": need, "margin": margin,
               "f_saddle": f_saddle, "projgd_stay_worst": stay_worst,
               "terminal_worst_dist": cor_worst,
               "terminal_bound": 2.0 * params.epsilon}
    summary = (f"escapes {escapes}/{len(list(seeds))} (need {need}); projgd stays "
               f"within {stay_worst:.1e}; terminal dist {cor_worst:.2e} <= {2.0 * params.epsilon:.1e}")
    return CriterionResult("saddle_escape", passed, summary, _jsonable(details),
                           time.perf_counter() - t0)


# ---------------------------------------------------------------------------
# 8. determinism


def criterion_determinism(level: str = "full") -> CriterionResult:
    t0 = time.perf_counter()
    spec = harness.preset_fig1()
    if level != "full":
        spec = replace(spec, seed_count=3, etas=(0.4,))
    digests = []
    for _ in range(2):
        with tempfile.TemporaryDirectory() as d:
            res = harness.run_experiment(spec, out_dir=d)
            digest = {}
            for name in res.files:
                with open(os.path.join(d, name), "rb") as fh:
                    digest[name] = hashlib.sha256(fh.read()).hexdigest()
            digests.append(digest)
    same_names = sorted(digests[0]) == sorted(digests[1])
    mismatched = [k for k in digests[0] if digests[0][k] != digests[1].get(k)]
    passed = same_names and not mismatched
    details = {"files": len(digests[0]), "mismatched": mismatched}
    summary = f"{len(digests[0])} files, {len(mismatched)} byte mismatches"
    return CriterionResult("determinism", passed, summary, _jsonable(details),
                           time.perf_counter() - t0)


# ---------------------------------------------------------------------------

CRITERIA = {
    "trace_panels": criterion_trace_panels,
    "step_size_sweep": criterion_step_size_sweep,
    "local_rate": criterion_local_rate,
    "global_window": criterion_global_window,
    "lemma_suites": criterion_lemma_suites,
    "geometry_oracles": criterion_geometry_oracles,
    "saddle_escape": criterion_saddle_escape,
    "determinism": criterion_determinism,
}


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple, set)):
        return [_jsonable(v) for v in sorted(obj)] if isinstance(obj, set) else [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else repr(v)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    return obj


def verify_suite(level: str = "quick", out=None, only=None, stream=None) -> dict:
    """Run all (or `only`) criteria; print one PASS/FAIL line each; return
    and optionally write the JSON verdict."""
    if level not in ("quick", "full"):
        raise ValueError("level must be 'quick' or 'full'")
    stream = stream if stream is not None else sys.stdout
    results = []
    for cid, fn in CRITERIA.items():
        if only and cid not in only:
            continue
        res = fn(level)
        results.append(res)
        print(f"{'PASS' if res.passed else 'FAIL'} {cid}: {res.summary} "
              f"[{res.seconds:.1f}s]", file=stream)
    verdict = {
        "level": level,
        "all_passed": all(r.passed for r in results),
        "criteria": [asdict(r) for r in results],
    }
    if out:
        with open(out, "w", encoding="utf-8") as fh:
            json.dump(verdict, fh, indent=1, sort_keys=True)
            fh.write("\n")
    return verdict
