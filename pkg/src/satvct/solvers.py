"""Baseline reconstructions: FBP, Landweber, Kaczmarz, CGLS and scalar L2-TV."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numba
import numpy as np
import scipy.sparse as sp

from .core import ParallelGeometry, as_array
from .projector import Projector, get_projector, operator_norm_sq
from .satv import div, grad, total_variation

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class IterativeConfig:
    """Shared settings for the iterative baselines.

    ``step`` is the Landweber step (``None`` means ``1 / ||A||^2``) or the
    Kaczmarz relaxation (``None`` means 1.0).
    """

    max_iters: int = 500
    tol: float = 1e-4
    step: float | None = None
    nonneg: bool = True
    randomized: bool = False
    seed: int = 0

    def __post_init__(self):
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")
        if not self.tol > 0:
            raise ValueError("tol must be positive")
        if self.step is not None and not self.step > 0:
            raise ValueError("step must be positive")


@dataclass
class SolveInfo:
    iterations: int
    converged: bool
    residuals: list


def _proj(geom) -> Projector:
    return geom if isinstance(geom, Projector) else get_projector(geom)


def _rel_change(new, old) -> float:
    den = np.linalg.norm(old)
    num = np.linalg.norm(new - old)
    if den == 0:
        return 0.0 if num == 0 else math.inf
    return num / den


def _ramp_filter(n_bins: int, spacing: float, window: str = "ram-lak") -> tuple[np.ndarray, int]:
    size = 1 << max(1, math.ceil(math.log2(2 * n_bins)))
    k = np.fft.fftfreq(size, d=1.0 / size).astype(int)
    kernel = np.zeros(size)
    kernel[0] = 1.0 / (4.0 * spacing ** 2)
    odd = k % 2 == 1
    kernel[odd] = -1.0 / (math.pi * k[odd] * spacing) ** 2
    H = np.real(np.fft.fft(kernel)) * spacing
    if window == "hann":
        freq = np.fft.fftfreq(size)
        H = H * 0.5 * (1.0 + np.cos(2.0 * math.pi * freq))
    elif window != "ram-lak":
        raise ValueError(f"unknown filter window {window!r}")
    return H, size


def fbp(f, geom: ParallelGeometry, window: str = "ram-lak", nonneg: bool = True) -> np.ndarray:
    """Filtered back-projection for parallel-beam data.

    The ramp filter is the band-limited spatial kernel transformed on a
    zero-padded grid of the next power of two ``>= 2 n_bins``.  Back-projection
    uses ``A^T`` rescaled by ``bin_width / pixel_area`` so that it samples the
    filtered projections per pixel, weighted by ``pi / n_angles``.
    """
    if not isinstance(geom, ParallelGeometry):
        raise TypeError("fbp requires a ParallelGeometry")
    f = as_array(f)
    if f.shape != geom.shape:
        raise ValueError(f"sinogram shape {f.shape} does not match geometry {geom.shape}")
    ds = geom.bin_width
    H, size = _ramp_filter(geom.n_bins, ds, window)
    padded = np.zeros((geom.n_angles, size))
    padded[:, :geom.n_bins] = f
    q = np.real(np.fft.ifft(np.fft.fft(padded, axis=1) * H[None, :], axis=1))[:, :geom.n_bins]
    h = geom.grid.pixel_size
    u = get_projector(geom).adjoint(q) * (ds / h ** 2) * (math.pi / geom.n_angles)
    return np.maximum(u, 0.0) if nonneg else u


def landweber(f, geom, cfg: IterativeConfig | None = None, u0=None,
              full_output: bool = False):
    """Projected Landweber iteration ``u <- P(u - tau A^T (A u - f))``."""
    cfg = cfg or IterativeConfig()
    P = _proj(geom)
    f = as_array(f)
    L = operator_norm_sq(P, iterations=50)
    tau = cfg.step if cfg.step is not None else 1.0 / L
    if tau >= 2.0 / L:
        raise ValueError(f"step {tau:g} violates tau < 2/||A||^2 = {2.0 / L:g}")
    u = np.zeros(P.grid.shape) if u0 is None else np.array(as_array(u0), dtype=float)
    residuals = []
    converged = False
    k = 0
    for k in range(1, cfg.max_iters + 1):
        r = P.forward(u) - f
        residuals.append(float(np.vdot(r, r)))
        u_new = u - tau * P.adjoint(r)
        if cfg.nonneg:
            np.maximum(u_new, 0.0, out=u_new)
        change = _rel_change(u_new, u)
        u = u_new
        if change <= cfg.tol:
            converged = True
            break
    if full_output:
        return u, SolveInfo(k, converged, residuals)
    return u


@numba.njit(cache=True)
def _kaczmarz_sweep(indptr, indices, data, row_norms, f, x, order, relax, nonneg):
    for r in order:
        nrm = row_norms[r]
        if nrm == 0.0:
            continue
        s, e = indptr[r], indptr[r + 1]
        dot = 0.0
        for k in range(s, e):
            dot += data[k] * x[indices[k]]
        c = relax * (f[r] - dot) / nrm
        for k in range(s, e):
            j = indices[k]
            x[j] += c * data[k]
            if nonneg and x[j] < 0.0:
                x[j] = 0.0


def kaczmarz_matrix(A, f, cfg: IterativeConfig | None = None, x0=None,
                    full_output: bool = False):
    """Kaczmarz sweeps for an explicit sparse (CSR-convertible) matrix ``A``.

    Works on flat vectors; rows with zero norm are skipped.
    """
    cfg = cfg or IterativeConfig()
    relax = 1.0 if cfg.step is None else cfg.step
    if not 0 < relax < 2:
        raise ValueError(f"relaxation must lie in (0, 2), got {relax}")
    A = sp.csr_matrix(A, dtype=float)
    fv = np.ascontiguousarray(f, dtype=float).ravel()
    if fv.size != A.shape[0]:
        raise ValueError(f"data length {fv.size} does not match {A.shape[0]} rows")
    row_norms = np.asarray(A.multiply(A).sum(axis=1)).ravel()
    x = np.zeros(A.shape[1]) if x0 is None else np.array(x0, dtype=float).ravel()
    rng = np.random.default_rng(cfg.seed)
    natural = np.arange(A.shape[0])
    indices = A.indices.astype(np.int64)
    residuals = []
    converged = False
    k = 0
    for k in range(1, cfg.max_iters + 1):
        order = rng.permutation(A.shape[0]) if cfg.randomized else natural
        old = x.copy()
        _kaczmarz_sweep(A.indptr, indices, A.data, row_norms, fv, x, order, relax, cfg.nonneg)
        r = A @ x - fv
        residuals.append(float(np.vdot(r, r)))
        if _rel_change(x, old) <= cfg.tol:
            converged = True
            break
    if full_output:
        return x, SolveInfo(k, converged, residuals)
    return x


def kaczmarz(f, geom, cfg: IterativeConfig | None = None, u0=None,
             full_output: bool = False):
    """Cyclic (or randomised-order) Kaczmarz sweeps with relaxation in (0, 2).

    With ``nonneg`` each updated entry is clipped to zero, i.e. the sweep
    alternates row projections with projections onto the orthant.
    """
    P = _proj(geom)
    f = as_array(f)
    if f.shape != P.geom.shape:
        raise ValueError(f"sinogram shape {f.shape} does not match geometry {P.geom.shape}")
    x0 = None if u0 is None else as_array(u0)
    x, info = kaczmarz_matrix(P.matrix, f, cfg, x0, full_output=True)
    u = x.reshape(P.grid.shape)
    if full_output:
        return u, info
    return u


@dataclass(frozen=True)
class CGLSConfig:
    """CGLS stopping: ``||normal-equation residual|| <= tol * initial``."""

    max_iters: int = 200
    tol: float = 1e-6
    nonneg: bool = True

    def __post_init__(self):
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")
        if not self.tol > 0:
            raise ValueError("tol must be positive")


def cgls(f, geom, cfg: CGLSConfig | None = None, lam_term=None, alpha: float = 1.0,
         x0=None, residual_target: float | None = None, full_output: bool = False):
    """Conjugate gradients on the least-squares normal equations.

    Without ``lam_term`` this minimises ``||A w - f||^2``.  With
    ``lam_term = (lam, u_ref)`` it minimises
    ``alpha/2 ||A w - f||^2 + 1/2 sum lam (w - u_ref)^2``, i.e. solves
    ``(alpha A^T A + diag(lam)) w = alpha A^T f + lam u_ref``.

    ``residual_target`` stops as soon as ``||A w - f||^2`` drops below it
    (discrepancy-style early stopping).  The nonnegativity projection is
    applied once to the final iterate.
    """
    cfg = cfg or CGLSConfig()
    P = _proj(geom)
    f = np.asarray(as_array(f), dtype=float)
    if not np.all(np.isfinite(f)):
        raise ValueError("non-finite data passed to cgls")
    shape = P.grid.shape
    if lam_term is not None:
        lam, u_ref = lam_term
        lam = np.broadcast_to(np.asarray(as_array(lam), dtype=float), shape)
        u_ref = np.asarray(as_array(u_ref), dtype=float)
        if not (np.all(np.isfinite(lam)) and np.all(np.isfinite(u_ref))):
            raise ValueError("non-finite lambda term passed to cgls")
        sa = math.sqrt(alpha)
        sl = np.sqrt(lam)
    x = np.zeros(shape) if x0 is None else np.array(as_array(x0), dtype=float)

    # stacked operator [sqrt(alpha) A; sqrt(lam) I], right-hand side [sqrt(alpha) f; sqrt(lam) u_ref]
    if lam_term is None:
        r1 = f - P.forward(x)
        s = P.adjoint(r1)
    else:
        r1 = sa * (f - P.forward(x))
        r2 = sl * (u_ref - x)
        s = sa * P.adjoint(r1) + sl * r2
    p = s.copy()
    gamma = float(np.vdot(s, s))
    gamma0 = gamma
    residuals = []
    converged = gamma0 == 0.0
    k = 0
    data_res = lambda: float(np.vdot(r1, r1)) / (1.0 if lam_term is None else alpha)
    if residual_target is not None and data_res() <= residual_target:
        converged = True
    while not converged and k < cfg.max_iters:
        k += 1
        if lam_term is None:
            q1 = P.forward(p)
            qq = float(np.vdot(q1, q1))
        else:
            q1 = sa * P.forward(p)
            q2 = sl * p
            qq = float(np.vdot(q1, q1) + np.vdot(q2, q2))
        if qq == 0.0:
            break
        a = gamma / qq
        x += a * p
        r1 -= a * q1
        if lam_term is None:
            s = P.adjoint(r1)
        else:
            r2 -= a * q2
            s = sa * P.adjoint(r1) + sl * r2
        gamma_new = float(np.vdot(s, s))
        residuals.append(data_res())
        if math.sqrt(gamma_new) <= cfg.tol * math.sqrt(gamma0):
            converged = True
        if residual_target is not None and residuals[-1] <= residual_target:
            converged = True
        p = s + (gamma_new / gamma) * p
        gamma = gamma_new
    if cfg.nonneg:
        x = np.maximum(x, 0.0)
    if full_output:
        return x, SolveInfo(k, converged, residuals)
    return x


@dataclass(frozen=True)
class PDHGConfig:
    max_iters: int = 3000
    tol: float = 1e-5
    isotropic: bool = True

    def __post_init__(self):
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")
        if not self.tol > 0:
            raise ValueError("tol must be positive")


def l2tv_scalar(f, geom, alpha: float, cfg: PDHGConfig | None = None, u0=None,
                full_output: bool = False):
    """Minimise ``alpha/2 ||A u - f||^2 + TV(u)`` over ``u >= 0``.

    Diagonally preconditioned primal-dual hybrid gradient on
    ``K = [A; grad]``: dual steps are inverse row sums of ``|K|``, primal
    steps inverse column sums.  Stops on relative change of ``u`` below
    ``cfg.tol`` (checked every 10 iterations).
    """
    if not alpha > 0:
        raise ValueError(f"alpha must be positive, got {alpha}")
    cfg = cfg or PDHGConfig()
    P = _proj(geom)
    f = np.asarray(as_array(f), dtype=float)
    A = P.matrix
    row = np.asarray(A.sum(axis=1)).ravel().reshape(f.shape)
    col = np.asarray(A.sum(axis=0)).ravel().reshape(P.grid.shape)
    sig_a = np.where(row > 0, 1.0 / np.where(row > 0, row, 1.0), 0.0)
    sig_g = 0.5
    # column sums of |grad|: 2 per direction except at the far border
    cg = 4.0 * np.ones(P.grid.shape)
    tau = 1.0 / (col + cg)

    u = np.zeros(P.grid.shape) if u0 is None else np.array(as_array(u0), dtype=float)
    ubar = u.copy()
    y = np.zeros_like(f)
    p = np.zeros((2,) + P.grid.shape)
    converged = False
    k = 0
    for k in range(1, cfg.max_iters + 1):
        y = (y + sig_a * (P.forward(ubar) - f)) / (1.0 + sig_a / alpha)
        p = p + sig_g * grad(ubar)
        if cfg.isotropic:
            p /= np.maximum(1.0, np.sqrt(p[0] ** 2 + p[1] ** 2))
        else:
            np.clip(p, -1.0, 1.0, out=p)
        u_new = np.maximum(u - tau * (P.adjoint(y) - div(p)), 0.0)
        ubar = 2.0 * u_new - u
        if k % 10 == 0 and _rel_change(u_new, u) <= cfg.tol:
            u = u_new
            converged = True
            break
        u = u_new
    if full_output:
        return u, SolveInfo(k, converged, [])
    return u


def l2tv_objective(u, f, geom, alpha: float) -> float:
    r = _proj(geom).forward(u) - as_array(f)
    return 0.5 * alpha * float(np.vdot(r, r)) + total_variation(u)
