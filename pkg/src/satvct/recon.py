"""Spatially adaptive TV reconstruction by alternating minimisation.

The model couples a data-consistent image ``w`` and a TV-regularised image
``u`` through a per-pixel weight ``lam``::

    J(u, w) = alpha/2 ||A w - f||^2 + 1/2 sum lam (w - u)^2 + TV(u)

``u`` is updated by weighted TV denoising of ``w``; ``w`` by a CGLS solve of
the quadratic data/coupling problem followed by a nonnegativity projection.
``lam`` adapts to the local residual ``w - u`` during the first ``k0`` outer
iterations and is frozen afterwards.
"""
from __future__ import annotations

import hashlib
import logging
import math
import time
from dataclasses import dataclass, field, replace

import numpy as np

from .core import LambdaMap, as_array
from .metrics import relative_error
from .phantoms import estimate_sigma_background
from .projector import Projector, get_projector
from .satv import (DenoiseConfig, denoise_objective, local_residual_stats, total_variation,
                   update_lambda, weighted_tv_denoise, window_mean)
from .solvers import CGLSConfig, cgls

log = logging.getLogger(__name__)


class ReconstructionError(RuntimeError):
    """A subproblem failed or the objective became non-finite."""


class AlphaSelectionError(ReconstructionError):
    pass


@dataclass(frozen=True)
class SatvCtConfig:
    """Settings for :func:`reconstruct`.

    ``alpha="auto"`` selects the data weight by the discrepancy principle
    using ``sigma2`` (per-measurement noise variance).  ``sigma_image2`` is
    the residual variance the local constraint compares against; ``None``
    estimates it from the dark background of the initial image.
    """

    alpha: float | str = "auto"
    sigma2: float | None = None
    sigma_image2: float | None = None
    k0: int = 5
    tol: float = 1e-4
    max_iters: int = 100
    window: int = 11
    eps: float = 1e-3
    lam_max: float = 1e4
    lam_init: float | None = None
    smooth_lambda: bool = True
    denoise: DenoiseConfig = field(default_factory=DenoiseConfig)
    cgls: CGLSConfig = field(default_factory=lambda: CGLSConfig(max_iters=100, tol=1e-6))
    init_cgls_iters: int = 50
    background_level: float = 0.1

    def __post_init__(self):
        if self.k0 < 0:
            raise ValueError("k0 must be >= 0")
        if not self.tol > 0:
            raise ValueError("tol must be positive")
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")
        if isinstance(self.alpha, str):
            if self.alpha != "auto":
                raise ValueError(f"alpha must be positive or 'auto', got {self.alpha!r}")
        elif not self.alpha > 0:
            raise ValueError(f"alpha must be positive, got {self.alpha}")
        if self.window < 3 or self.window % 2 == 0:
            raise ValueError("window must be odd and >= 3")


@dataclass
class IterationRecord:
    iteration: int
    objective: float
    data_residual: float
    rel_change: float
    lam_min: float
    lam_mean: float
    lam_max: float
    lam_updated: bool
    lam_hash: str


@dataclass
class ReconReport:
    u: np.ndarray
    w: np.ndarray
    lam: LambdaMap
    alpha: float
    sigma2: float | None
    sigma_image2: float
    history: list[IterationRecord]
    converged: bool
    wall_time: float
    initial_objective: float
    relative_error: float | None = None

    @property
    def objectives(self) -> np.ndarray:
        return np.array([r.objective for r in self.history])


def _proj(geom) -> Projector:
    return geom if isinstance(geom, Projector) else get_projector(geom)


def _lam_hash(lam: np.ndarray) -> str:
    return hashlib.sha1(np.ascontiguousarray(lam).tobytes()).hexdigest()[:16]


def objective(u, w, f, lam, alpha: float, geom, isotropic: bool = True) -> float:
    """``alpha/2 ||A w - f||^2 + 1/2 sum lam (w - u)^2 + TV(u)``."""
    u, w, f = as_array(u), as_array(w), as_array(f)
    lam = np.broadcast_to(as_array(lam), u.shape)
    if w.shape != u.shape:
        raise ValueError("u and w shapes differ")
    r = _proj(geom).forward(w) - f
    return (0.5 * alpha * float(np.vdot(r, r))
            + 0.5 * float(np.sum(lam * (w - u) ** 2))
            + total_variation(u, isotropic))


def _surrogate_residual(P: Projector, f: np.ndarray, alpha: float, x0, cfg: CGLSConfig):
    w = cgls(f, P, replace(cfg, nonneg=False), lam_term=(1.0, np.zeros(P.grid.shape)),
             alpha=alpha, x0=x0)
    r = P.forward(w) - f
    return float(np.vdot(r, r)), w


def select_alpha(f, geom, sigma2: float, lo: float = 1e-3, hi: float = 1e3,
                 band: tuple[float, float] = (0.9, 1.1), max_evals: int = 60,
                 alpha_min: float = 1e-8, alpha_max: float = 1e12,
                 cgls_cfg: CGLSConfig | None = None) -> float:
    """Discrepancy principle on ``min alpha/2 ||A w - f||^2 + 1/2 ||w||^2``.

    The initial bracket ``[lo, hi]`` (in units of ``1 / ||A||^2``-free alpha)
    is widened geometrically towards ``[alpha_min, alpha_max]`` and then
    bisected in ``log alpha`` until ``||A w - f||^2`` lies in
    ``band * m * sigma2``.  If even ``alpha_min`` leaves the residual below
    the band, ``alpha_min`` is returned.
    """
    if not sigma2 > 0:
        raise ValueError("sigma2 must be positive")
    P = _proj(geom)
    f = np.asarray(as_array(f), dtype=float)
    cfg = cgls_cfg or CGLSConfig(max_iters=3000, tol=1e-10)
    target = f.size * sigma2
    t_lo, t_hi = band[0] * target, band[1] * target
    evals = []

    def res(a):
        rho, _ = _surrogate_residual(P, f, a, None, cfg)
        evals.append((a, rho))
        if len(evals) > max_evals:
            raise AlphaSelectionError(
                f"discrepancy bracket failed after {max_evals} solves; target "
                f"[{t_lo:.4g}, {t_hi:.4g}], evaluations (alpha, residual): {evals[-5:]}")
        return rho

    r_lo = res(lo)
    while r_lo < t_lo:
        if lo <= alpha_min:
            return lo
        hi, lo = lo, max(lo / 100.0, alpha_min)
        r_lo = res(lo)
    if r_lo <= t_hi:
        return lo
    r_hi = res(hi)
    while r_hi > t_hi:
        if hi >= alpha_max:
            raise AlphaSelectionError(
                f"residual {r_hi:.4g} at alpha_max={alpha_max:g} still above target {t_hi:.4g}")
        lo, hi = hi, min(hi * 100.0, alpha_max)
        r_hi = res(hi)
    if r_hi >= t_lo:
        return hi
    while True:
        mid = math.sqrt(lo * hi)
        r = res(mid)
        if t_lo <= r <= t_hi:
            return mid
        if r > t_hi:
            lo = mid
        else:
            hi = mid


def background_mask(w0: np.ndarray, window: int, level: float) -> np.ndarray:
    """Pixels whose local mean lies below ``level`` times the image's 99th percentile."""
    smooth = window_mean(np.maximum(w0, 0.0), window)
    ref = np.percentile(smooth, 99)
    return smooth <= level * ref


def initial_guess(f, geom, cfg: SatvCtConfig, sigma2: float | None) -> np.ndarray:
    """Least-squares CGLS start, stopped at the discrepancy level when ``sigma2`` is known."""
    P = _proj(geom)
    target = None if not sigma2 else as_array(f).size * sigma2
    return cgls(f, P, CGLSConfig(max_iters=cfg.init_cgls_iters, tol=1e-8, nonneg=False),
                residual_target=target)


def reconstruct(f, geom, cfg: SatvCtConfig | None = None, u_true=None,
                background=None, lam0=None) -> ReconReport:
    """Run the alternating scheme and return a :class:`ReconReport`.

    Parameters
    ----------
    f : array or Sinogram
        Measured data.
    geom : geometry or Projector
    cfg : SatvCtConfig
    u_true : array, optional
        Ground truth; when given the report carries the final relative error.
    background : bool array, optional
        Dark-background mask used to estimate ``sigma_image2`` when the
        config does not supply it.
    lam0 : array, optional
        Starting weight map (clamped to the configured bounds); overrides
        ``cfg.lam_init``.
    """
    cfg = cfg or SatvCtConfig()
    t_start = time.perf_counter()
    P = _proj(geom)
    f = np.asarray(as_array(f), dtype=float)
    if not np.all(np.isfinite(f)):
        raise ValueError("non-finite data")

    if cfg.alpha == "auto":
        if not cfg.sigma2:
            raise ValueError("alpha='auto' requires sigma2")
        alpha = select_alpha(f, P, cfg.sigma2)
    else:
        alpha = float(cfg.alpha)

    w_ls = initial_guess(f, P, cfg, cfg.sigma2)
    w = np.maximum(w_ls, 0.0)
    if cfg.sigma_image2 is not None:
        sigma_img2 = float(cfg.sigma_image2)
    else:
        mask = background if background is not None else background_mask(
            w_ls, cfg.window, cfg.background_level)
        sigma_img2 = estimate_sigma_background(w_ls, mask) ** 2

    if not sigma_img2 > 0:
        raise ReconstructionError("image-domain noise variance must be positive")

    if lam0 is None:
        lam0 = cfg.eps if cfg.lam_init is None else cfg.lam_init
    lam0 = np.clip(np.broadcast_to(np.asarray(as_array(lam0), dtype=float), P.grid.shape),
                   cfg.eps, cfg.lam_max)
    lam = LambdaMap(lam0, cfg.eps, cfg.lam_max, cfg.window)

    u = w.copy()
    p = None
    J0 = objective(u, w, f, lam.values, alpha, P, cfg.denoise.isotropic)
    history: list[IterationRecord] = []
    converged = False
    for k in range(cfg.max_iters):
        res = weighted_tv_denoise(w, lam.values, cfg.denoise, u0=u, p0=p, full_output=True)
        u_new, p = res.u, res.dual
        updated = k < cfg.k0
        if updated:
            stats = local_residual_stats(w, u_new, cfg.window)
            lam = update_lambda(lam, stats, sigma_img2, smooth=cfg.smooth_lambda)
        w = cgls(f, P, cfg.cgls, lam_term=(lam.values, u_new), alpha=alpha, x0=w)

        nu = np.linalg.norm(u)
        change = np.linalg.norm(u_new - u) / nu if nu > 0 else (0.0 if not u_new.any() else math.inf)
        u = u_new
        r = P.forward(w) - f
        J = objective(u, w, f, lam.values, alpha, P, cfg.denoise.isotropic)
        if not math.isfinite(J):
            raise ReconstructionError(f"objective became non-finite at outer iteration {k + 1}")
        history.append(IterationRecord(
            k + 1, J, float(np.vdot(r, r)), float(change),
            float(lam.values.min()), float(lam.values.mean()), float(lam.values.max()),
            updated, _lam_hash(lam.values)))
        log.debug("outer %d: J=%.6g change=%.3g", k + 1, J, change)
        if k >= cfg.k0 and change <= cfg.tol:
            converged = True
            break

    rel = relative_error(u, u_true) if u_true is not None else None
    return ReconReport(u, w, lam, alpha, cfg.sigma2, sigma_img2, history, converged,
                       time.perf_counter() - t_start, J0, rel)
