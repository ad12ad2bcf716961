"""Dense kernels for the fixed-rank variety: truncated SVD projections, the
tangent space at a rank-r point, a second-order retraction, and pullbacks.

A rank-k matrix is stored as an SVD triple (u, sigma, v) with orthonormal
frames.  Tangent vectors are kept in frame coordinates: a core r x r block,
a left (n1-r) x r block and a right r x (n2-r) block, so that

    Z = U core V^T + U_perp left V^T + U right V_perp^T.

All kernels are written for desk-scale dense matrices (n up to a few
hundred); nothing here is sparse or randomized.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

# frame orthonormality acceptance, relative reconstruction acceptance
ORTHONORMALITY_TOL = 1e-10
# singular values below this fraction of sigma_1 are dropped at projection time
SINGULAR_VALUE_DROP = 1e-13
# relative floor for inverting the retraction core
RETRACTION_CORE_FLOOR = 1e-14
# finite-difference scale for the pullback Hessian
HESSIAN_FD_STEP = 1e-4


class RankProjectionError(RuntimeError):
    """SVD/eig failed to converge on the projection input."""


class TangentSpaceUndefinedError(ValueError):
    """Tangent-space operation requested at a point of rank below the search rank."""


class RetractionUndefinedError(ValueError):
    """Retraction core Sigma + S_core is singular; the retracted point would drop rank."""


def _readonly(a, dtype=float):
    out = np.array(a, dtype=dtype, copy=True, order="C")
    out.flags.writeable = False
    return out


def _orthonormal_completion(q: np.ndarray) -> np.ndarray:
    """Orthonormal basis of the complement of span(q); q must have orthonormal columns."""
    n, k = q.shape
    if k == 0:
        full = np.eye(n)
        return full
    if k >= n:
        return np.zeros((n, 0))
    full, _ = np.linalg.qr(q, mode="complete")
    comp = full[:, k:]
    # complete-QR columns are orthogonal to span(q) by construction
    return comp


class FactoredMatrix:
    """Rank-k matrix u @ diag(sigma) @ v.T with orthonormal u, v.

    sigma is nonincreasing and strictly positive; k may be smaller than the
    search rank used to produce the point (rank-deficient projections are
    legal values, not errors).  Instances are immutable; the orthonormal
    complements of the frames are computed on first use and cached.
    """

    __slots__ = ("u", "sigma", "v", "_u_perp", "_v_perp")

    def __init__(self, u, sigma, v, validate: bool = True):
        u = _readonly(u)
        sigma = _readonly(sigma)
        v = _readonly(v)
        if u.ndim != 2 or v.ndim != 2 or sigma.ndim != 1:
            raise ValueError("u, v must be 2-d and sigma 1-d")
        k = sigma.shape[0]
        if u.shape[1] != k or v.shape[1] != k:
            raise ValueError("frame widths must match len(sigma)")
        if validate:
            if not (np.all(np.isfinite(u)) and np.all(np.isfinite(v)) and np.all(np.isfinite(sigma))):
                raise ValueError("non-finite entries in factors")
            if k and (np.any(sigma <= 0) or np.any(np.diff(sigma) > 0)):
                raise ValueError("sigma must be positive and nonincreasing")
            for name, frame in (("u", u), ("v", v)):
                gram = frame.T @ frame
                if np.max(np.abs(gram - np.eye(k))) > ORTHONORMALITY_TOL:
                    raise ValueError(f"{name} is not orthonormal within {ORTHONORMALITY_TOL:g}")
        self.u = u
        self.sigma = sigma
        self.v = v
        self._u_perp = None
        self._v_perp = None

    @property
    def shape(self):
        return (self.u.shape[0], self.v.shape[0])

    @property
    def rank(self) -> int:
        return int(self.sigma.shape[0])

    @property
    def u_perp(self) -> np.ndarray:
        if self._u_perp is None:
            self._u_perp = _readonly(_orthonormal_completion(self.u))
        return self._u_perp

    @property
    def v_perp(self) -> np.ndarray:
        if self._v_perp is None:
            self._v_perp = _readonly(_orthonormal_completion(self.v))
        return self._v_perp

    def dense(self) -> np.ndarray:
        return (self.u * self.sigma) @ self.v.T

    def frobenius_norm(self) -> float:
        return float(np.linalg.norm(self.sigma))

    def spectral_norm(self) -> float:
        return float(self.sigma[0]) if self.rank else 0.0

    def sigma_min(self) -> float:
        return float(self.sigma[-1]) if self.rank else 0.0

    def sigma_r(self, r: int) -> float:
        """r-th singular value under search rank r; zero when the point is rank deficient."""
        return float(self.sigma[r - 1]) if self.rank >= r else 0.0

    def balanced_factors(self):
        """(left, right) with left @ right.T == dense(): u*sqrt(sigma), v*sqrt(sigma)."""
        root = np.sqrt(self.sigma)
        return self.u * root, self.v * root

    @classmethod
    def zero(cls, n1: int, n2: int) -> "FactoredMatrix":
        return cls(np.zeros((n1, 0)), np.zeros(0), np.zeros((n2, 0)), validate=False)

    def __repr__(self):
        return f"FactoredMatrix(shape={self.shape}, rank={self.rank})"


def _check_projection_input(z, r) -> np.ndarray:
    z = np.asarray(z, dtype=float)
    if z.ndim != 2:
        raise ValueError("projection input must be a matrix")
    if not np.all(np.isfinite(z)):
        raise ValueError("projection input has non-finite entries")
    if not 1 <= r <= min(z.shape):
        raise ValueError(f"rank r={r} outside [1, min(shape)={min(z.shape)}]")
    return z


def project_rank_r(z, r: int) -> FactoredMatrix:
    """Best rank-r approximation of z in Frobenius norm (truncated SVD).

    Singular values below SINGULAR_VALUE_DROP * sigma_1 are dropped, so the
    result can have rank k < r.  The zero matrix projects to the empty
    (k = 0) factorization.
    """
    z = _check_projection_input(z, r)
    try:
        u, s, vt = np.linalg.svd(z, full_matrices=False)
    except np.linalg.LinAlgError as exc:
        scale = float(np.max(np.abs(z)))
        raise RankProjectionError(
            f"SVD did not converge (input max magnitude {scale:.3e})"
        ) from exc
    if s[0] <= 0.0:
        return FactoredMatrix.zero(*z.shape)
    keep = min(r, int(np.sum(s > SINGULAR_VALUE_DROP * s[0])))
    return FactoredMatrix(u[:, :keep], s[:keep], vt[:keep].T, validate=False)


def project_psd_rank_r(z, r: int) -> FactoredMatrix:
    """Closest PSD matrix of rank <= r: keep the r algebraically largest
    eigenvalues, clip them at zero.  Returns a factorization with u = v.
    """
    z = _check_projection_input(z, r)
    if z.shape[0] != z.shape[1]:
        raise ValueError("PSD projection needs a square matrix")
    asym = np.linalg.norm(z - z.T)
    if asym > ORTHONORMALITY_TOL * max(1.0, float(np.linalg.norm(z))):
        raise ValueError(f"input is not symmetric (||z - z.T||_F = {asym:.3e})")
    sym = 0.5 * (z + z.T)
    try:
        w, q = np.linalg.eigh(sym)
    except np.linalg.LinAlgError as exc:
        raise RankProjectionError("eigendecomposition did not converge") from exc
    w = w[::-1]
    q = q[:, ::-1]
    lam = np.clip(w[:r], 0.0, None)
    if lam.size == 0 or lam[0] <= 0.0:
        return FactoredMatrix.zero(*z.shape)
    keep = int(np.sum(lam > SINGULAR_VALUE_DROP * lam[0]))
    qk = q[:, :keep]
    return FactoredMatrix(qk, lam[:keep], qk, validate=False)


@dataclass(frozen=True)
class CornerDecomposition:
    """Frame-coordinate blocks of an ambient matrix z at a base point:

        core  = U^T z V          left  = U_perp^T z V
        right = U^T z V_perp     outer = U_perp^T z V_perp

    The four densified blocks sum back to z and are mutually orthogonal.
    """

    core: np.ndarray
    left: np.ndarray
    right: np.ndarray
    outer: np.ndarray
    base: FactoredMatrix

    def reconstruct(self) -> np.ndarray:
        b = self.base
        return (
            b.u @ self.core @ b.v.T
            + b.u_perp @ self.left @ b.v.T
            + b.u @ self.right @ b.v_perp.T
            + b.u_perp @ self.outer @ b.v_perp.T
        )

    def block_norms(self):
        return tuple(float(np.linalg.norm(m)) for m in (self.core, self.left, self.right, self.outer))


def corner_decompose(z, base: FactoredMatrix) -> CornerDecomposition:
    z = np.asarray(z, dtype=float)
    if z.shape != base.shape:
        raise ValueError(f"shape mismatch: z {z.shape} vs base {base.shape}")
    u, v = base.u, base.v
    up, vp = base.u_perp, base.v_perp
    zu = u.T @ z
    zup = up.T @ z
    return CornerDecomposition(
        core=zu @ v,
        left=zup @ v,
        right=zu @ vp,
        outer=zup @ vp,
        base=base,
    )


class TangentVector:
    """Element of the tangent space at a rank-r base point, in frame coordinates.

    Supports the small amount of vector arithmetic the tangent-descent loop
    needs; operands must share the same base object.
    """

    __slots__ = ("core", "left", "right", "base")

    def __init__(self, core, left, right, base: FactoredMatrix):
        k = base.rank
        n1, n2 = base.shape
        core = np.asarray(core, dtype=float)
        left = np.asarray(left, dtype=float)
        right = np.asarray(right, dtype=float)
        if core.shape != (k, k) or left.shape != (n1 - k, k) or right.shape != (k, n2 - k):
            raise ValueError("tangent block shapes do not match the base point")
        self.core = core
        self.left = left
        self.right = right
        self.base = base

    def norm(self) -> float:
        return float(np.sqrt(
            np.sum(self.core ** 2) + np.sum(self.left ** 2) + np.sum(self.right ** 2)
        ))

    def dense(self) -> np.ndarray:
        b = self.base
        return (
            b.u @ self.core @ b.v.T
            + b.u_perp @ self.left @ b.v.T
            + b.u @ self.right @ b.v_perp.T
        )

    def coords(self) -> np.ndarray:
        return np.concatenate([self.core.ravel(), self.left.ravel(), self.right.ravel()])

    @classmethod
    def from_coords(cls, x, base: FactoredMatrix) -> "TangentVector":
        k = base.rank
        n1, n2 = base.shape
        x = np.asarray(x, dtype=float)
        if x.shape != (tangent_dim(base),):
            raise ValueError("coordinate vector has wrong length")
        a = k * k
        b = a + (n1 - k) * k
        return cls(
            x[:a].reshape(k, k),
            x[a:b].reshape(n1 - k, k),
            x[b:].reshape(k, n2 - k),
            base,
        )

    @classmethod
    def zero(cls, base: FactoredMatrix) -> "TangentVector":
        k = base.rank
        n1, n2 = base.shape
        return cls(np.zeros((k, k)), np.zeros((n1 - k, k)), np.zeros((k, n2 - k)), base)

    def _match(self, other):
        if self.base is not other.base:
            raise ValueError("tangent vectors live at different base points")

    def __add__(self, other):
        self._match(other)
        return TangentVector(self.core + other.core, self.left + other.left,
                             self.right + other.right, self.base)

    def __sub__(self, other):
        self._match(other)
        return TangentVector(self.core - other.core, self.left - other.left,
                             self.right - other.right, self.base)

    def __mul__(self, a):
        a = float(a)
        return TangentVector(a * self.core, a * self.left, a * self.right, self.base)

    __rmul__ = __mul__

    def inner(self, other) -> float:
        self._match(other)
        return float(
            np.sum(self.core * other.core)
            + np.sum(self.left * other.left)
            + np.sum(self.right * other.right)
        )


def tangent_dim(base: FactoredMatrix) -> int:
    k = base.rank
    n1, n2 = base.shape
    return k * (n1 + n2 - k)


def _require_full_rank(base: FactoredMatrix, rank):
    if rank is None:
        return
    if base.rank < rank:
        raise TangentSpaceUndefinedError(
            f"tangent space undefined: point has rank {base.rank} < search rank {rank}"
        )


def project_tangent(z, base: FactoredMatrix, rank: int | None = None) -> TangentVector:
    """Orthogonal projection of an ambient matrix onto the tangent space at base:
    drop the (U_perp, V_perp) outer block, keep the other three.

    rank, when given, is the search rank; a base with k < rank has no
    tangent space and the call raises TangentSpaceUndefinedError.
    """
    _require_full_rank(base, rank)
    d = corner_decompose(z, base)
    return TangentVector(d.core, d.left, d.right, base)


def retract(base: FactoredMatrix, s: TangentVector, rank: int | None = None) -> FactoredMatrix:
    """Second-order retraction of tangent vector s at base.

    With W = diag(sigma) + s.core, the retracted point is the rank-k matrix

        (U W + U_perp s.left) W^{-1} (W V^T + s.right V_perp^T),

    whose tangent projection of the displacement is exactly s; the
    correction lives entirely in the (U_perp, V_perp) corner.  Requires W
    nonsingular, otherwise the point would leave the rank-k stratum.
    """
    _require_full_rank(base, rank)
    if s.base is not base:
        raise ValueError("tangent vector does not live at this base point")
    k = base.rank
    w = np.diag(base.sigma) + s.core
    sv = np.linalg.svd(w, compute_uv=False)
    if sv.size == 0 or sv[-1] <= RETRACTION_CORE_FLOOR * max(1.0, float(sv[0])):
        raise RetractionUndefinedError(
            f"retraction undefined: core Sigma + S_core is singular "
            f"(sigma_min = {0.0 if sv.size == 0 else float(sv[-1]):.3e})"
        )
    winv = np.linalg.inv(w)
    a = base.u + base.u_perp @ (s.left @ winv)       # n1 x k
    b = base.v + base.v_perp @ (winv @ s.right).T    # n2 x k
    qa, ra = np.linalg.qr(a)
    qb, rb = np.linalg.qr(b)
    core = ra @ w @ rb.T
    uc, sc, vct = np.linalg.svd(core)
    keep = int(np.sum(sc > SINGULAR_VALUE_DROP * sc[0])) if sc[0] > 0 else 0
    return FactoredMatrix(qa @ uc[:, :keep], sc[:keep], qb @ vct[:keep].T, validate=False)


def pullback_value_grad(f, base: FactoredMatrix, s: TangentVector, rank: int | None = None):
    """Value and gradient of the pulled-back objective f(Retr_base(s)).

    The gradient is returned in tangent coordinates at base.  With
    G = grad f at the retracted point, split into frame blocks
    (Gc, Gl, Gr, Go) and W = diag(sigma) + s.core:

        d core  = Gc - W^{-T} s.left^T Go s.right^T W^{-T}
        d left  = Gl + Go s.right^T W^{-T}
        d right = Gr + W^{-T} s.left^T Go

    At s = 0 this reduces to the tangent projection of grad f(base).
    """
    _require_full_rank(base, rank)
    y = retract(base, s)
    yd = y.dense()
    val = float(f.value(yd))
    g = np.asarray(f.gradient(yd), dtype=float)
    d = corner_decompose(g, base)
    w = np.diag(base.sigma) + s.core
    winv_t = np.linalg.inv(w).T
    lw = winv_t @ s.left.T          # k x (n1-k)
    rw = s.right.T @ winv_t         # (n2-k) x k
    grad = TangentVector(
        d.core - lw @ d.outer @ rw,
        d.left + d.outer @ rw,
        d.right + lw @ d.outer,
        base,
    )
    return val, grad


def pullback_hessian(f, base: FactoredMatrix, step: float | None = None,
                     rank: int | None = None) -> np.ndarray:
    """Finite-difference Hessian of the pullback at s = 0 over the orthonormal
    coordinate basis of the tangent space (dimension k(n1+n2-k)).

    Column j is the central difference of the pullback gradient along basis
    direction j; the matrix is returned unsymmetrized so callers can measure
    the self-consistency gap ||H - H^T||/||H||.
    """
    _require_full_rank(base, rank)
    d = tangent_dim(base)
    h = HESSIAN_FD_STEP * max(1.0, base.spectral_norm()) if step is None else float(step)
    hess = np.empty((d, d))
    e = np.zeros(d)
    for j in range(d):
        e[j] = h
        _, gp = pullback_value_grad(f, base, TangentVector.from_coords(e, base))
        e[j] = -h
        _, gm = pullback_value_grad(f, base, TangentVector.from_coords(e, base))
        e[j] = 0.0
        hess[:, j] = (gp.coords() - gm.coords()) / (2.0 * h)
    return hess


def pullback_hessian_min_eig(f, base: FactoredMatrix, step: float | None = None,
                             rank: int | None = None):
    """Smallest eigenvalue of the (symmetrized) pullback Hessian at s = 0 and
    the corresponding tangent direction."""
    hess = pullback_hessian(f, base, step=step, rank=rank)
    sym = 0.5 * (hess + hess.T)
    w, q = np.linalg.eigh(sym)
    return float(w[0]), TangentVector.from_coords(q[:, 0], base)
