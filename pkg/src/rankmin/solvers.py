"""Iterative solvers for min f(X) subject to rank(X) = r.

Four single-step kernels (projected gradient, factored gradient, two
preconditioned factored variants) share one driver, run_solver, which
records a uniform per-iteration trace.  pprojgd is the two-branch variant
that escapes strict saddles through randomized tangent-space descent and
certifiable termination.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from .geometry import (
    FactoredMatrix,
    TangentVector,
    project_psd_rank_r,
    project_rank_r,
    pullback_value_grad,
    retract,
    tangent_dim,
)
from .objectives import make_rng

STATUS_CONVERGED = "converged"
STATUS_DIVERGED = "diverged"
STATUS_MAX_ITERS = "max-iters"
STATUS_SECOND_ORDER = "second-order-stop"

BRANCH_INIT = "init"
BRANCH_GRADIENT = "gradient"
BRANCH_TANGENT = "tangent-escape"
BRANCH_TERMINATE = "terminate"

ALGORITHMS = ("projgd", "fgd", "scaledgd", "precgd", "pprojgd")

# Gram matrices with sigma_min at or below this fraction of sigma_max are
# treated as numerically singular: pseudo-inverse, and the run is flagged.
GRAM_BREAKDOWN_RATIO = 1e-12

CSV_COLUMNS = ("iter", "f_value", "f_gap", "rel_err", "step_norm", "sigma_r", "branch")


@dataclass(frozen=True)
class PprojgdParams:
    """Knobs of the perturbed solver.  None fields resolve to the defaults
    epsilon_t = sqrt(epsilon), eta_t = min(epsilon_t, eta),
    perturb_radius = epsilon, max_tangent_iters = ceil(1/(eta_t*sqrt(epsilon)))."""

    epsilon: float = 1e-4
    epsilon_t: Optional[float] = None
    eta_t: Optional[float] = None
    perturb_radius: Optional[float] = None
    max_tangent_iters: Optional[int] = None

    def resolve(self, eta: float) -> "PprojgdParams":
        eps = float(self.epsilon)
        if eps <= 0:
            raise ValueError("epsilon must be positive")
        eps_t = math.sqrt(eps) if self.epsilon_t is None else float(self.epsilon_t)
        eta_t = min(eps_t, eta) if self.eta_t is None else float(self.eta_t)
        radius = eps if self.perturb_radius is None else float(self.perturb_radius)
        j_max = (
            int(math.ceil(1.0 / (eta_t * math.sqrt(eps))))
            if self.max_tangent_iters is None
            else int(self.max_tangent_iters)
        )
        if eps_t <= 0 or eta_t <= 0 or radius <= 0 or j_max < 1:
            raise ValueError("resolved pprojgd parameters must be positive")
        return PprojgdParams(eps, eps_t, eta_t, radius, j_max)


@dataclass(frozen=True)
class SolverConfig:
    eta: float
    max_iters: int = 1000
    tol_rel_err: Optional[float] = 1e-14
    diverge_threshold: float = 1e2
    checkpoint_stride: Optional[int] = None   # None: 1 for n <= 20, else 10
    pprojgd: PprojgdParams = field(default_factory=PprojgdParams)
    precgd_reg: Optional[float] = None        # None: sqrt(f - f_floor) schedule
    precgd_f_floor: float = 0.0

    def __post_init__(self):
        if self.eta <= 0:
            raise ValueError("eta must be positive")
        if self.max_iters < 0:
            raise ValueError("max_iters must be >= 0")
        if self.diverge_threshold <= 0:
            raise ValueError("diverge_threshold must be positive")

    def with_eta(self, eta: float) -> "SolverConfig":
        return replace(self, eta=float(eta))


@dataclass(frozen=True)
class TraceRecord:
    iteration: int
    f_value: float
    f_gap: float
    rel_err: float
    step_norm: float
    sigma_r: float
    branch: str


def _csv_num(x) -> str:
    return repr(float(x))


@dataclass
class SolverTrace:
    algorithm: str
    records: list
    status: str = STATUS_MAX_ITERS
    wall_time: float = 0.0
    checkpoints: list = field(default_factory=list)   # (iteration, dense X)
    final_x: Optional[np.ndarray] = None
    gram_breakdown: bool = False
    gram_cond_max: float = float("nan")

    @property
    def final_record(self) -> TraceRecord:
        return self.records[-1]

    def column(self, name: str) -> np.ndarray:
        if name == "branch":
            raise ValueError("branch is not numeric")
        return np.array([getattr(rec, "iteration" if name == "iter" else name)
                         for rec in self.records], dtype=float)

    def iterations_to(self, rel_err: float) -> Optional[int]:
        """First iteration index at which rel_err drops below the threshold."""
        for rec in self.records:
            if np.isfinite(rec.rel_err) and rec.rel_err < rel_err:
                return rec.iteration
        return None

    def csv_text(self) -> str:
        lines = [",".join(CSV_COLUMNS)]
        for rec in self.records:
            lines.append(",".join((
                str(rec.iteration),
                _csv_num(rec.f_value),
                _csv_num(rec.f_gap),
                _csv_num(rec.rel_err),
                _csv_num(rec.step_norm),
                _csv_num(rec.sigma_r),
                rec.branch,
            )))
        return "\n".join(lines) + "\n"

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            fh.write(self.csv_text())


def projgd_step(x: FactoredMatrix, f, eta: float, rank: Optional[int] = None,
                psd: Optional[bool] = None) -> FactoredMatrix:
    """One projected gradient step: rank-r (or PSD rank-r) truncation of
    X - eta * grad f(X)."""
    rank = x.rank if rank is None else int(rank)
    psd = bool(getattr(f, "symmetric_psd", False)) if psd is None else psd
    xd = x.dense()
    z = xd - eta * np.asarray(f.gradient(xd), dtype=float)
    return project_psd_rank_r(z, rank) if psd else project_rank_r(z, rank)


def fgd_step(x: FactoredMatrix, f, eta: float) -> FactoredMatrix:
    """One factored gradient step on balanced factors L = U sqrt(S),
    R = V sqrt(S): L+ = L - eta grad f(X) R, R+ = R - eta grad f(X)^T L,
    then refactor L+ R+^T by SVD for storage.  Stationary points of f are
    exact fixed points."""
    if x.rank == 0:
        return x
    lf, rf = x.balanced_factors()
    g = np.asarray(f.gradient(x.dense()), dtype=float)
    lf2 = lf - eta * (g @ rf)
    rf2 = rf - eta * (g.T @ lf)
    return project_rank_r(lf2 @ rf2.T, x.rank)


def _gram_apply_inverse(rhs: np.ndarray, gram: np.ndarray, reg: float):
    """rhs @ (gram + reg I)^{-1} with a pseudo-inverse fallback on numerically
    singular Gram matrices.  Returns (result, breakdown_flag)."""
    k = gram.shape[0]
    if k == 0:
        return rhs, False
    mat = gram + reg * np.eye(k) if reg != 0.0 else gram
    sv = np.linalg.svd(mat, compute_uv=False)
    if sv[0] <= 0.0 or sv[-1] <= GRAM_BREAKDOWN_RATIO * sv[0]:
        return rhs @ np.linalg.pinv(mat), True
    return np.linalg.solve(mat.T, rhs.T).T, False


def precgd_step(lf: np.ndarray, rf: np.ndarray, f, eta: float, reg: float):
    """One preconditioned factored step with ridge term reg:

        L+ = L - eta grad f(L R^T) R (R^T R + reg I)^{-1}
        R+ = R - eta grad f(L R^T)^T L (L^T L + reg I)^{-1}

    Both Gram matrices come from the pre-update factors.  reg = 0 is exactly
    the scaled gradient step."""
    g = np.asarray(f.gradient(lf @ rf.T), dtype=float)
    gl, _ = _gram_apply_inverse(g @ rf, rf.T @ rf, reg)
    gr, _ = _gram_apply_inverse(g.T @ lf, lf.T @ lf, reg)
    lf2 = lf - eta * gl
    rf2 = rf - eta * gr
    return lf2, rf2


def scaledgd_step(lf: np.ndarray, rf: np.ndarray, f, eta: float):
    """One scaled gradient step: the reg = 0 preconditioned step.  A singular
    Gram matrix falls back to the pseudo-inverse (the driver records the
    breakdown)."""
    return precgd_step(lf, rf, f, eta, 0.0)


def gram_condition(lf: np.ndarray, rf: np.ndarray) -> float:
    """max over both factors of cond(F^T F); inf when a Gram matrix is singular."""
    worst = 1.0
    for fac in (lf, rf):
        if fac.shape[1] == 0:
            continue
        sv = np.linalg.svd(fac.T @ fac, compute_uv=False)
        worst = max(worst, float("inf") if sv[-1] <= 0 else float(sv[0] / sv[-1]))
    return worst


def _boundary_step_length(s: TangentVector, g: TangentVector, eps_t: float) -> float:
    """Smallest positive t with ||s - t g||_F = eps_t (quadratic in t).
    Assumes ||s|| <= eps_t; returns 0 in the degenerate no-crossing case."""
    a = g.inner(g)
    if a == 0.0:
        return 0.0
    b = -2.0 * s.inner(g)
    c = s.inner(s) - eps_t * eps_t
    disc = max(b * b - 4.0 * a * c, 0.0)
    sq = math.sqrt(disc)
    q = -0.5 * (b + sq) if b >= 0 else -0.5 * (b - sq)
    roots = [q / a]
    if q != 0.0:
        roots.append(c / q)
    pos = [t for t in roots if t > 0.0]
    return min(pos) if pos else 0.0


def tangent_space_steps(x: FactoredMatrix, f, perturb_radius: float, eta_t: float,
                        epsilon_t: float, max_iters: int,
                        rng: Optional[np.random.Generator] = None) -> FactoredMatrix:
    """Randomized descent on the pullback f(Retr_x(S)) inside the eps_t ball.

    Start from a uniform tangent perturbation of norm perturb_radius scaled
    by eta_t; take gradient steps; the first step that would leave the ball
    is shrunk to land exactly on the boundary and the retraction is returned
    immediately.  If no step escapes within max_iters, the final in-ball
    point is retracted."""
    rng = make_rng(0, stream=7) if rng is None else rng
    d = tangent_dim(x)
    raw = rng.standard_normal(d)
    nrm = float(np.linalg.norm(raw))
    if nrm == 0.0:
        raw = np.ones(d)
        nrm = float(np.linalg.norm(raw))
    s = TangentVector.from_coords(raw * (eta_t * perturb_radius / nrm), x)
    for _ in range(max_iters):
        _, grad = pullback_value_grad(f, x, s)
        s_plus = s - eta_t * grad
        if s_plus.norm() <= epsilon_t:
            s = s_plus
        else:
            t = _boundary_step_length(s, grad, epsilon_t)
            return retract(x, s - t * grad)
    return retract(x, s)


def _rel_metrics(f, xd, f_star, xs_dense, xs_norm):
    fv = float(f.value(xd))
    if xs_dense is None:
        return fv, float("nan"), float("nan")
    gap = fv - f_star
    rel = float(np.linalg.norm(xd - xs_dense) / xs_norm)
    return fv, gap, rel


class _TraceBuilder:
    """Shared bookkeeping for the drivers: records, checkpoints, stopping."""

    def __init__(self, algorithm, f, cfg, x_star, shape):
        self.f = f
        self.cfg = cfg
        self.xs_dense = x_star.dense() if isinstance(x_star, FactoredMatrix) else x_star
        if self.xs_dense is not None:
            self.xs_norm = float(np.linalg.norm(self.xs_dense))
            self.f_star = float(f.value(self.xs_dense))
        else:
            self.xs_norm = float("nan")
            self.f_star = float("nan")
        stride = cfg.checkpoint_stride
        self.stride = (1 if max(shape) <= 20 else 10) if stride is None else max(1, int(stride))
        self.trace = SolverTrace(algorithm=algorithm, records=[])
        self.start = time.perf_counter()

    def record(self, iteration, xd, sigma_r, step_norm, branch):
        fv, gap, rel = _rel_metrics(self.f, xd, self.f_star, self.xs_dense, self.xs_norm)
        self.trace.records.append(TraceRecord(
            iteration=iteration, f_value=fv, f_gap=gap, rel_err=rel,
            step_norm=step_norm, sigma_r=sigma_r, branch=branch,
        ))
        if iteration % self.stride == 0:
            self.trace.checkpoints.append((iteration, np.array(xd, copy=True)))
        if not np.isfinite(fv) or not np.isfinite(np.linalg.norm(xd)):
            return STATUS_DIVERGED
        if np.isfinite(rel):
            if rel > self.cfg.diverge_threshold:
                return STATUS_DIVERGED
            if self.cfg.tol_rel_err is not None and rel < self.cfg.tol_rel_err:
                return STATUS_CONVERGED
        return None

    def finish(self, status, xd):
        self.trace.status = status
        self.trace.wall_time = time.perf_counter() - self.start
        self.trace.final_x = np.array(xd, copy=True)
        if self.trace.checkpoints and self.trace.checkpoints[-1][0] != self.trace.records[-1].iteration:
            self.trace.checkpoints.append((self.trace.records[-1].iteration, np.array(xd, copy=True)))
        return self.trace


def _sigma_r_dense(xd: np.ndarray, rank: int) -> float:
    sv = np.linalg.svd(xd, compute_uv=False)
    return float(sv[rank - 1]) if sv.size >= rank else 0.0


def run_solver(algo: str, f, x0: FactoredMatrix, cfg: SolverConfig,
               x_star=None, rank: Optional[int] = None,
               rng: Optional[np.random.Generator] = None) -> SolverTrace:
    """Run one solver to termination and return its trace.

    rank is the search rank; it defaults to rank(x0).  x_star (optional)
    enables the f_gap / rel_err columns and the convergence/divergence
    stopping rules.  rng is only consumed by pprojgd's perturbations.
    """
    algo = algo.lower()
    if algo not in ALGORITHMS:
        raise ValueError(f"unknown algorithm {algo!r}; expected one of {ALGORITHMS}")
    if algo == "pprojgd":
        _, trace = pprojgd(f, x0, cfg, rng=rng, x_star=x_star, rank=rank)
        return trace
    rank = x0.rank if rank is None else int(rank)
    psd = bool(getattr(f, "symmetric_psd", False))

    builder = _TraceBuilder(algo, f, cfg, x_star, x0.shape)
    factored = algo in ("scaledgd", "precgd")
    if factored:
        lf, rf = x0.balanced_factors()
        xd = lf @ rf.T
        conds = []
    else:
        x = x0
        xd = x.dense()
    status = builder.record(0, xd, _sigma_r_dense(xd, rank) if factored else x0.sigma_r(rank),
                            float("nan"), BRANCH_INIT)
    final_status = STATUS_MAX_ITERS
    if status is not None:
        final_status = status
    else:
        for it in range(1, cfg.max_iters + 1):
            if factored:
                cond = gram_condition(lf, rf)
                conds.append(cond)
                if not np.isfinite(cond) or cond > 1.0 / GRAM_BREAKDOWN_RATIO:
                    builder.trace.gram_breakdown = True
                if algo == "precgd":
                    reg = cfg.precgd_reg
                    if reg is None:
                        reg = math.sqrt(max(float(f.value(xd)) - cfg.precgd_f_floor, 0.0))
                    lf, rf = precgd_step(lf, rf, f, cfg.eta, reg)
                else:
                    lf, rf = scaledgd_step(lf, rf, f, cfg.eta)
                new_xd = lf @ rf.T
                sigma_r = _sigma_r_dense(new_xd, rank) if np.all(np.isfinite(new_xd)) else float("nan")
            else:
                if algo == "projgd":
                    x = projgd_step(x, f, cfg.eta, rank=rank, psd=psd)
                else:
                    x = fgd_step(x, f, cfg.eta)
                new_xd = x.dense()
                sigma_r = x.sigma_r(rank)
            step_norm = float(np.linalg.norm(new_xd - xd))
            xd = new_xd
            status = builder.record(it, xd, sigma_r, step_norm, BRANCH_GRADIENT)
            if status is not None:
                final_status = status
                break
    trace = builder.finish(final_status, xd)
    if factored and conds:
        finite = [c for c in conds if np.isfinite(c)]
        trace.gram_cond_max = float("inf") if len(finite) < len(conds) else max(finite)
    return trace


def pprojgd(f, x0: FactoredMatrix, cfg: SolverConfig,
            rng: Optional[np.random.Generator] = None, x_star=None,
            rank: Optional[int] = None):
    """Perturbed projected gradient descent (two-branch variant).

    Each iteration computes the projected step X+.  A large step
    (||X+ - X|| >= 2 eta eps / 3) is taken as-is; a small step at a point
    with sigma_r(X) > 2 eps_t triggers randomized tangent-space descent to
    escape a potential strict saddle; otherwise the point is returned with
    status second-order-stop.  Returns (final point, trace)."""
    rank = x0.rank if rank is None else int(rank)
    params = cfg.pprojgd.resolve(cfg.eta)
    rng = make_rng(0, stream=7) if rng is None else rng
    psd = bool(getattr(f, "symmetric_psd", False))

    builder = _TraceBuilder("pprojgd", f, cfg, x_star, x0.shape)
    x = x0
    xd = x.dense()
    status = builder.record(0, xd, x.sigma_r(rank), float("nan"), BRANCH_INIT)
    final_status = STATUS_MAX_ITERS
    if status is not None:
        final_status = status
    else:
        grad_floor = 2.0 * cfg.eta * params.epsilon / 3.0
        for it in range(1, cfg.max_iters + 1):
            g = np.asarray(f.gradient(xd), dtype=float)
            z = xd - cfg.eta * g
            x_plus = project_psd_rank_r(z, rank) if psd else project_rank_r(z, rank)
            delta = float(np.linalg.norm(x_plus.dense() - xd))
            if delta >= grad_floor:
                x = x_plus
                branch = BRANCH_GRADIENT
                step_norm = delta
            elif x.sigma_r(rank) > 2.0 * params.epsilon_t:
                x = tangent_space_steps(
                    x, f, params.perturb_radius, params.eta_t,
                    params.epsilon_t, params.max_tangent_iters, rng,
                )
                branch = BRANCH_TANGENT
                step_norm = float(np.linalg.norm(x.dense() - xd))
            else:
                builder.record(it, xd, x.sigma_r(rank), delta, BRANCH_TERMINATE)
                final_status = STATUS_SECOND_ORDER
                break
            xd = x.dense()
            status = builder.record(it, xd, x.sigma_r(rank), step_norm, branch)
            if status is not None:
                final_status = status
                break
    trace = builder.finish(final_status, xd)
    return x, trace
