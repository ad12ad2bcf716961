"""Certificates and checkers: second-order optimality at a rank-r point,
per-step descent and projection inequalities, convergence-rate estimation,
and a brute-force landscape probe for desk-size instances.

The numeric bounds checked here (the 2/3 projection constant, the descent
slack, the stationarity threshold) are module-level names on purpose: the
verification suite reads them at call time, so a deliberately broken bound
is caught by the mutation smoke test.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .geometry import (
    SINGULAR_VALUE_DROP,
    FactoredMatrix,
    project_psd_rank_r,
    project_rank_r,
    project_tangent,
    pullback_hessian_min_eig,
)
from .objectives import haar_frame, make_rng
from .solvers import SolverTrace, projgd_step

# rank-r projection loses at most 1/3 of the tangent displacement
PROJECTION_RATIO_BOUND = 2.0 / 3.0
PROJECTION_RATIO_SLACK = 1e-9
# eigenvalues within this fraction of max(1, L) of zero count as zero
EIG_ZERO_TOL_SCALE = 1e-7
# terminal points closer than CLUSTER_RADIUS_SCALE * sqrt(tol) are one cluster
CLUSTER_RADIUS_SCALE = 10.0
# ambient stationarity margin at a second-order stop: (8/3)(eps + eps_t/eta)
AMBIENT_STATIONARITY_FACTOR = 8.0 / 3.0

CLASS_MINIMIZER = "second-order-minimizer"
CLASS_SADDLE = "saddle"
CLASS_AMBIENT = "ambient-stationary"
CLASS_INDETERMINATE = "indeterminate"


class BudgetExceededError(RuntimeError):
    """Landscape probe would exceed its objective-evaluation budget."""


def _dense(x) -> np.ndarray:
    return x.dense() if isinstance(x, FactoredMatrix) else np.asarray(x, dtype=float)


def relative_error(x, x_star) -> float:
    """||X - X*||_F / ||X*||_F.  The ground truth must be nonzero."""
    xd = _dense(x)
    xs = _dense(x_star)
    denom = float(np.linalg.norm(xs))
    if denom == 0.0:
        raise ValueError("relative error undefined for zero ground truth")
    return float(np.linalg.norm(xd - xs)) / denom


@dataclass(frozen=True)
class SecondOrderCertificate:
    grad_norm: float            # ||P_T grad f(X)||_F, nan when rank-deficient
    min_eig: float              # smallest pullback Hessian eigenvalue, nan when rank-deficient
    sigma_r: float
    ambient_grad_norm: float    # spectral norm of grad f(X)
    ambient_grad_fro: float
    classification: str
    eps: float
    gamma: float
    ambient_threshold: float
    eig_tol: float


def classify_certificate(grad_norm: float, min_eig: float, ambient_grad_norm: float,
                         eps: float, gamma: float, ambient_threshold: float,
                         eig_tol: float) -> str:
    """Pure classification rule; a certificate's label is a function of its
    own numbers and thresholds, nothing else."""
    if np.isfinite(grad_norm) and np.isfinite(min_eig):
        if grad_norm <= eps and min_eig >= -(gamma + eig_tol):
            return CLASS_MINIMIZER
        if min_eig < -(gamma + eig_tol):
            return CLASS_SADDLE
    if np.isfinite(ambient_threshold) and ambient_grad_norm < ambient_threshold:
        return CLASS_AMBIENT
    return CLASS_INDETERMINATE


def certify_second_order(x: FactoredMatrix, f, eps: float, gamma: float,
                         rank: Optional[int] = None, epsilon_t: Optional[float] = None,
                         eta: Optional[float] = None,
                         lipschitz: Optional[float] = None) -> SecondOrderCertificate:
    """Measure first- and second-order stationarity of f at a rank-r point.

    Full-rank points get the tangent gradient norm and the smallest pullback
    Hessian eigenvalue; rank-deficient points only get ambient quantities
    and can classify as ambient-stationary when (epsilon_t, eta) from the
    producing run are supplied."""
    rank = x.rank if rank is None else int(rank)
    g = np.asarray(f.gradient(x.dense()), dtype=float)
    ambient_fro = float(np.linalg.norm(g))
    ambient_spec = float(np.linalg.norm(g, 2))
    if x.rank >= rank:
        grad_norm = project_tangent(g, x, rank=rank).norm()
        min_eig, _ = pullback_hessian_min_eig(f, x, rank=rank)
    else:
        grad_norm = float("nan")
        min_eig = float("nan")
    if lipschitz is None:
        consts = f.smoothness_constants() if hasattr(f, "smoothness_constants") else None
        lipschitz = consts[0] if consts else 1.0
    eig_tol = EIG_ZERO_TOL_SCALE * max(1.0, float(lipschitz))
    if epsilon_t is not None and eta is not None:
        ambient_threshold = AMBIENT_STATIONARITY_FACTOR * (eps + epsilon_t / eta)
    else:
        ambient_threshold = float("nan")
    label = classify_certificate(grad_norm, min_eig, ambient_spec, eps, gamma,
                                 ambient_threshold, eig_tol)
    return SecondOrderCertificate(
        grad_norm=grad_norm, min_eig=min_eig, sigma_r=x.sigma_r(rank),
        ambient_grad_norm=ambient_spec, ambient_grad_fro=ambient_fro,
        classification=label, eps=eps, gamma=gamma,
        ambient_threshold=ambient_threshold, eig_tol=eig_tol,
    )


@dataclass(frozen=True)
class DescentReport:
    applicable: bool
    reason: str
    steps_checked: int
    violations: int
    worst_margin: float     # min over steps of lhs - rhs; negative means violated

    @property
    def passed(self) -> bool:
        return self.applicable and self.violations == 0


def check_descent_lemma(trace: SolverTrace, f, l_const: float, eta: float,
                        tol: float = 1e-10) -> DescentReport:
    """Check f(X_t) - f(X_{t+1}) >= 0.5 (1/eta - L) ||X_t - X_{t+1}||_F^2 on
    every consecutive checkpoint pair.  Needs checkpoint stride 1; the bound
    is only claimed for eta < 1/L, larger steps report not applicable."""
    if eta >= 1.0 / l_const:
        return DescentReport(False, f"eta={eta:g} >= 1/L={1.0 / l_const:g}", 0, 0, float("nan"))
    pairs = [
        (a, b) for a, b in zip(trace.checkpoints, trace.checkpoints[1:])
        if b[0] == a[0] + 1
    ]
    if not pairs:
        return DescentReport(False, "no consecutive checkpoints (need stride 1)", 0, 0, float("nan"))
    coeff = 0.5 * (1.0 / eta - l_const)
    worst = math.inf
    violations = 0
    for (_, xa), (_, xb) in pairs:
        lhs = float(f.value(xa)) - float(f.value(xb))
        rhs = coeff * float(np.sum((xa - xb) ** 2))
        margin = lhs - rhs
        worst = min(worst, margin)
        if margin < -tol * max(1.0, abs(float(f.value(xa)))):
            violations += 1
    return DescentReport(True, "", len(pairs), violations, worst)


@dataclass(frozen=True)
class ProjectionReport:
    samples: int
    min_contraction_ratio: float   # min ||P_r(Y)-X|| / ||P_T(Y)-X||
    min_spectral_margin: float     # min of ||P_r(X+Z)-X|| - 0.5(||Z||_2 - sigma_r)
    bound: float
    passed: bool


def check_projection_lemma(n: int = 8, r: int = 3, samples: int = 10000,
                           seed: int = 0) -> ProjectionReport:
    """Sample (X, Y) pairs across scales and conditioning and take the worst
    observed ratio ||P_r(Y) - X|| / ||P_T(X)(Y) - X||, which the projection
    inequality lower-bounds by 2/3; also track the spectral-norm lower bound
    ||P_r(X+Z) - X|| >= (||Z||_2 - sigma_r(X)) / 2."""
    rng = make_rng(seed, stream=11)
    bound = PROJECTION_RATIO_BOUND
    min_ratio = math.inf
    min_margin = math.inf
    kept = 0
    while kept < samples:
        kappa = 10.0 ** rng.uniform(0.0, 2.0)
        sig = np.linspace(1.0, 1.0 / kappa, r)
        x = FactoredMatrix(haar_frame(rng, n, r), sig, haar_frame(rng, n, r), validate=False)
        xd = x.dense()
        mode = kept % 3
        z = rng.standard_normal((n, n))
        if mode == 1:
            z = project_tangent(z, x).dense()            # tangent-heavy
        elif mode == 2:
            z = x.u_perp @ (x.u_perp.T @ z @ x.v_perp) @ x.v_perp.T   # corner-heavy
        zn = float(np.linalg.norm(z))
        if zn < 1e-14:
            continue
        t = 10.0 ** rng.uniform(math.log10(1e-3 * x.sigma_min()), math.log10(10.0))
        z = z * (t / zn)
        y = xd + z
        py = project_rank_r(y, r).dense()
        num = float(np.linalg.norm(py - xd))
        den = project_tangent(z, x).norm()
        if den > 1e-13 * t:
            min_ratio = min(min_ratio, num / den)
        spec_rhs = 0.5 * (float(np.linalg.norm(z, 2)) - x.sigma_r(r))
        min_margin = min(min_margin, num - spec_rhs)
        kept += 1
    passed = (min_ratio >= bound - PROJECTION_RATIO_SLACK) and (min_margin >= -PROJECTION_RATIO_SLACK)
    return ProjectionReport(samples=kept, min_contraction_ratio=float(min_ratio),
                            min_spectral_margin=float(min_margin), bound=bound, passed=passed)


def check_derivative_bound_lemma(kappa0: float = 0.3, n: int = 8, samples: int = 5000,
                                 seed: int = 0) -> float:
    """Worst slack of ||grad f(X) - (X - X*)|| <= kappa0 ||X - X*|| over random
    quadratics f(X) = 0.5 <X - X*, D o (X - X*)> whose entrywise curvatures D
    lie in [1 - kappa0, 1 + kappa0] (so (L + mu)/2 = 1 and kappa0 = L - 1).
    Includes the extremal all-ones-times-(1 +- kappa0) instances where the
    bound is tight.  Negative return value means no violation."""
    if not 0.0 <= kappa0 < 1.0:
        raise ValueError("kappa0 must be in [0, 1)")
    rng = make_rng(seed, stream=13)
    worst = -math.inf
    for k in range(samples):
        if k == 0:
            d = np.full((n, n), 1.0 + kappa0)
        elif k == 1:
            d = np.full((n, n), 1.0 - kappa0)
        else:
            d = 1.0 + kappa0 * rng.uniform(-1.0, 1.0, size=(n, n))
        delta = rng.standard_normal((n, n))
        grad = d * delta
        lhs = float(np.linalg.norm(grad - delta))
        rhs = kappa0 * float(np.linalg.norm(delta))
        worst = max(worst, lhs - rhs)
    return float(worst)


def estimate_linear_rate(trace: SolverTrace, window: int = 50, column: str = "f_gap") -> float:
    """Geometric-mean per-iteration ratio of the chosen gap column over the
    trailing window: (g_end / g_start)^(1/window) over the last `window`
    steps with positive finite values.  A stalled trace returns ~1."""
    vals = trace.column(column)
    good = np.isfinite(vals) & (vals > 0.0)
    # longest positive suffix
    idx = len(vals)
    while idx > 0 and good[idx - 1]:
        idx -= 1
    tail = vals[idx:]
    if tail.size < 2:
        raise ValueError("not enough positive trailing values to estimate a rate")
    w = min(window, tail.size - 1)
    return float((tail[-1] / tail[-1 - w]) ** (1.0 / w))


def swapped_direction_saddle(target, r: int) -> FactoredMatrix:
    """Spurious projected-gradient fixed point for f = 0.5||X - target||^2:
    the top r-1 singular triples of the target plus the (r+1)-th in place of
    the r-th.  It is exactly invariant under projected gradient steps with
    eta * sigma_r(target) < sigma_{r+1}(target), and it is a strict saddle of
    the rank-r problem."""
    td = _dense(target)
    u, s, vt = np.linalg.svd(td, full_matrices=False)
    # same relative cutoff as project_rank_r, so a numerically rank-r target
    # cannot smuggle roundoff modes in as real ones
    if s.size == 0 or np.sum(s > SINGULAR_VALUE_DROP * s[0]) < r + 1:
        raise ValueError("target needs at least r+1 positive singular values")
    idx = list(range(r - 1)) + [r]
    return FactoredMatrix(u[:, idx], s[idx], vt[idx].T, validate=False)


@dataclass(frozen=True)
class StationaryPoint:
    x: FactoredMatrix
    f_value: float
    certificate: SecondOrderCertificate
    cluster_size: int


def landscape_probe(f, n: int, r: int, seed: int = 0, starts: int = 64,
                    eta: Optional[float] = None, iters: int = 3000,
                    tol: float = 1e-12, budget: int = 10_000_000,
                    eps: float = 1e-6, gamma: float = 0.0):
    """Brute-force stationary-point census for tiny instances (n <= 4, r <= 2).

    Multi-start projected gradient with a small step runs each start to a
    step-norm fixed point, terminal points are clustered, and each cluster
    representative is refined and certified.  Returns StationaryPoint
    records sorted by objective value."""
    if n > 4 or r > 2:
        raise ValueError("landscape probe is for n <= 4, r <= 2 only")
    consts = f.smoothness_constants() if hasattr(f, "smoothness_constants") else None
    l_const = consts[0] if consts else 1.0
    if eta is None:
        eta = 0.25 / max(l_const, 1e-12)
    hessian_evals = 2 * r * (2 * n - r) + 4
    planned = starts * (iters + 500 + hessian_evals)
    if planned > budget:
        raise BudgetExceededError(
            f"planned {planned} objective evaluations exceed budget {budget}")
    rng = make_rng(seed, stream=13)
    psd = bool(getattr(f, "symmetric_psd", False))
    scales = (0.1, 1.0, 10.0)
    terminals = []
    for i in range(starts):
        scale = scales[i % len(scales)]
        raw = rng.standard_normal((n, n)) * scale
        if psd:
            x = project_psd_rank_r(raw @ raw.T / n, r)
        else:
            x = project_rank_r(raw, r)
        if x.rank == 0:
            continue
        for _ in range(iters):
            x_new = projgd_step(x, f, eta, rank=r, psd=psd)
            step = float(np.linalg.norm(x_new.dense() - x.dense()))
            x = x_new
            if step <= tol * max(1.0, x.frobenius_norm()):
                break
        terminals.append(x)
    radius = CLUSTER_RADIUS_SCALE * math.sqrt(tol)
    clusters = []  # (representative FactoredMatrix, f value, count)
    for x in terminals:
        fx = float(f.value(x.dense()))
        placed = False
        for idx, (rep, frep, count) in enumerate(clusters):
            if np.linalg.norm(rep.dense() - x.dense()) <= radius * max(1.0, rep.frobenius_norm()):
                if fx < frep:
                    clusters[idx] = (x, fx, count + 1)
                else:
                    clusters[idx] = (rep, frep, count + 1)
                placed = True
                break
        if not placed:
            clusters.append((x, fx, 1))
    points = []
    for rep, frep, count in clusters:
        # refinement pass with a smaller step before certifying
        x = rep
        for _ in range(500):
            x_new = projgd_step(x, f, eta / 4.0, rank=r, psd=psd)
            step = float(np.linalg.norm(x_new.dense() - x.dense()))
            x = x_new
            if step <= 0.1 * tol * max(1.0, x.frobenius_norm()):
                break
        cert = certify_second_order(x, f, eps=eps, gamma=gamma, rank=r, lipschitz=l_const)
        points.append(StationaryPoint(x=x, f_value=float(f.value(x.dense())),
                                      certificate=cert, cluster_size=count))
    points.sort(key=lambda p: p.f_value)
    return points


# re-exported so callers can pin the constant the checkers read
__all__ = [
    "PROJECTION_RATIO_BOUND",
    "BudgetExceededError",
    "SecondOrderCertificate",
    "DescentReport",
    "ProjectionReport",
    "StationaryPoint",
    "relative_error",
    "classify_certificate",
    "certify_second_order",
    "check_descent_lemma",
    "check_projection_lemma",
    "estimate_linear_rate",
    "swapped_direction_saddle",
    "landscape_probe",
]
