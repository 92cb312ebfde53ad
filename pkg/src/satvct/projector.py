"""Discrete X-ray transform by exact ray/pixel intersection lengths.

Rays are traced with a Siddon-style traversal: the parametric crossings of
the line with the x- and y-grid planes are merged, and each interval between
consecutive crossings is attributed to the pixel containing its midpoint.
Directions are unit vectors, so interval lengths are physical lengths.

Two application modes produce identical operators:

* ``"sparse"`` assembles a CSR system matrix once; ``adjoint`` is its
  transpose, so the adjoint pair is exact by construction.
* ``"matrix-free"`` re-traces rays on every call (for grids where the
  matrix would not fit in memory).  Both loops run serially, which keeps
  summation order fixed.
"""
from __future__ import annotations

import functools
import math
from dataclasses import dataclass

import numba
import numpy as np
import scipy.sparse as sp

from .core import Geometry, GridSpec, as_array

# relative length below which an interval is treated as a degenerate corner hit
_DEGENERATE = 1e-12
# above this many stored entries the auto mode switches to matrix-free
_MAX_SPARSE_NNZ = 60_000_000


@numba.njit(cache=True)
def _clip(px, py, dx, dy, b):
    tmin = -np.inf
    tmax = np.inf
    if abs(dx) < 1e-15:
        if px < -b or px > b:
            return 1.0, 0.0
    else:
        t1 = (-b - px) / dx
        t2 = (b - px) / dx
        tmin = max(tmin, min(t1, t2))
        tmax = min(tmax, max(t1, t2))
    if abs(dy) < 1e-15:
        if py < -b or py > b:
            return 1.0, 0.0
    else:
        t1 = (-b - py) / dy
        t2 = (b - py) / dy
        tmin = max(tmin, min(t1, t2))
        tmax = min(tmax, max(t1, t2))
    return tmin, tmax


@numba.njit(cache=True)
def _crossings(p, d, b, h, n, tmin, tmax, out):
    """Write sorted plane crossings strictly inside (tmin, tmax) to ``out``."""
    if abs(d) < 1e-15:
        return 0
    a = p + tmin * d
    e = p + tmax * d
    lo = min(a, e)
    hi = max(a, e)
    k0 = int(math.floor((lo + b) / h)) + 1
    k1 = int(math.ceil((hi + b) / h)) - 1
    if k0 < 1:
        k0 = 1
    if k1 > n - 1:
        k1 = n - 1
    m = 0
    if d > 0:
        for k in range(k0, k1 + 1):
            t = (-b + k * h - p) / d
            if tmin < t < tmax:
                out[m] = t
                m += 1
    else:
        for k in range(k1, k0 - 1, -1):
            t = (-b + k * h - p) / d
            if tmin < t < tmax:
                out[m] = t
                m += 1
    return m


@numba.njit(cache=True)
def _trace(px, py, dx, dy, b, n, idx, lens, tx, ty):
    """Trace one ray; fills ``idx``/``lens`` and returns the segment count.

    Flat pixel index is ``i * n + j`` (x-major).  ``tx``/``ty`` are scratch
    buffers of length ``n + 1``.
    """
    tmin, tmax = _clip(px, py, dx, dy, b)
    if not tmax > tmin:
        return 0
    h = 2.0 * b / n
    mx = _crossings(px, dx, b, h, n, tmin, tmax, tx)
    my = _crossings(py, dy, b, h, n, tmin, tmax, ty)
    tol = _DEGENERATE * h
    count = 0
    a = 0
    c = 0
    t_prev = tmin
    while True:
        if a < mx and (c >= my or tx[a] <= ty[c]):
            t_next = tx[a]
            a += 1
        elif c < my:
            t_next = ty[c]
            c += 1
        else:
            t_next = tmax
        seg = t_next - t_prev
        if seg > tol:
            tm = 0.5 * (t_prev + t_next)
            i = int(math.floor((px + tm * dx + b) / h))
            j = int(math.floor((py + tm * dy + b) / h))
            if i < 0:
                i = 0
            elif i > n - 1:
                i = n - 1
            if j < 0:
                j = 0
            elif j > n - 1:
                j = n - 1
            idx[count] = i * n + j
            lens[count] = seg
            count += 1
        t_prev = t_next
        if t_next == tmax:
            break
    return count


@numba.njit(cache=True)
def _count_all(pts, dirs, b, n):
    nr = pts.shape[0]
    counts = np.zeros(nr, dtype=np.int64)
    idx = np.empty(2 * n + 2, dtype=np.int64)
    lens = np.empty(2 * n + 2)
    tx = np.empty(n + 1)
    ty = np.empty(n + 1)
    for r in range(nr):
        counts[r] = _trace(pts[r, 0], pts[r, 1], dirs[r, 0], dirs[r, 1], b, n, idx, lens, tx, ty)
    return counts


@numba.njit(cache=True)
def _fill_all(pts, dirs, b, n, indptr, indices, data):
    idx = np.empty(2 * n + 2, dtype=np.int64)
    lens = np.empty(2 * n + 2)
    tx = np.empty(n + 1)
    ty = np.empty(n + 1)
    for r in range(pts.shape[0]):
        m = _trace(pts[r, 0], pts[r, 1], dirs[r, 0], dirs[r, 1], b, n, idx, lens, tx, ty)
        s = indptr[r]
        for k in range(m):
            indices[s + k] = idx[k]
            data[s + k] = lens[k]


@numba.njit(cache=True)
def _forward_mf(pts, dirs, b, n, u, out):
    idx = np.empty(2 * n + 2, dtype=np.int64)
    lens = np.empty(2 * n + 2)
    tx = np.empty(n + 1)
    ty = np.empty(n + 1)
    for r in range(pts.shape[0]):
        m = _trace(pts[r, 0], pts[r, 1], dirs[r, 0], dirs[r, 1], b, n, idx, lens, tx, ty)
        acc = 0.0
        for k in range(m):
            acc += lens[k] * u[idx[k]]
        out[r] = acc


@numba.njit(cache=True)
def _adjoint_mf(pts, dirs, b, n, r_vals, out):
    idx = np.empty(2 * n + 2, dtype=np.int64)
    lens = np.empty(2 * n + 2)
    tx = np.empty(n + 1)
    ty = np.empty(n + 1)
    for r in range(pts.shape[0]):
        v = r_vals[r]
        if v == 0.0:
            continue
        m = _trace(pts[r, 0], pts[r, 1], dirs[r, 0], dirs[r, 1], b, n, idx, lens, tx, ty)
        for k in range(m):
            out[idx[k]] += lens[k] * v


@dataclass(frozen=True)
class RaySegmentList:
    """Pixels crossed by one ray: ``(i, j)`` index pairs and chord lengths."""

    pixels: np.ndarray  # (m, 2) integer array
    lengths: np.ndarray  # (m,) positive floats

    def __len__(self) -> int:
        return len(self.lengths)

    @property
    def total_length(self) -> float:
        return float(self.lengths.sum())


def trace_line(point, direction, grid: GridSpec) -> RaySegmentList:
    """Trace the line through ``point`` with direction ``direction``."""
    d = np.asarray(direction, dtype=float)
    d = d / np.hypot(d[0], d[1])
    n = grid.n
    idx = np.empty(2 * n + 2, dtype=np.int64)
    lens = np.empty(2 * n + 2)
    m = _trace(float(point[0]), float(point[1]), d[0], d[1], grid.half_width, n,
               idx, lens, np.empty(n + 1), np.empty(n + 1))
    flat = idx[:m]
    return RaySegmentList(np.stack([flat // n, flat % n], axis=1), lens[:m].copy())


def trace_ray(geom: Geometry, angle_index: int, bin_index: int,
              grid: GridSpec | None = None) -> RaySegmentList:
    """Intersection lengths of one acquisition ray with the pixel grid.

    A ray that misses the grid yields an empty list.
    """
    grid = geom.grid if grid is None else grid
    if not (0 <= angle_index < geom.n_angles and 0 <= bin_index < geom.n_bins):
        raise IndexError(f"ray ({angle_index}, {bin_index}) outside geometry {geom.shape}")
    pts, dirs = geom.rays()
    k = angle_index * geom.n_bins + bin_index
    return trace_line(pts[k], dirs[k], grid)


def system_matrix(geom: Geometry) -> sp.csr_matrix:
    """Assemble A as a CSR matrix of shape ``(n_rays, n_pixels)``."""
    return _cached_matrix(geom)


@functools.lru_cache(maxsize=8)
def _cached_matrix(geom: Geometry) -> sp.csr_matrix:
    grid = geom.grid
    pts, dirs = geom.rays()
    pts = np.ascontiguousarray(pts)
    dirs = np.ascontiguousarray(dirs)
    counts = _count_all(pts, dirs, grid.half_width, grid.n)
    indptr = np.zeros(len(counts) + 1, dtype=np.int64)
    np.cumsum(counts, out=indptr[1:])
    indices = np.empty(indptr[-1], dtype=np.int64)
    data = np.empty(indptr[-1])
    _fill_all(pts, dirs, grid.half_width, grid.n, indptr, indices, data)
    A = sp.csr_matrix((data, indices.astype(np.int32), indptr), shape=(len(counts), grid.size))
    A.sort_indices()
    return A


def estimate_nnz(geom: Geometry) -> int:
    return int(geom.n_rays * 1.5 * geom.grid.n)


class Projector:
    """Forward/adjoint pair for a fixed geometry.

    Parameters
    ----------
    geom : ParallelGeometry or FanGeometry
    mode : {"auto", "sparse", "matrix-free"}
        ``auto`` picks sparse unless the estimated matrix is very large.
    """

    def __init__(self, geom: Geometry, mode: str = "auto"):
        if mode not in ("auto", "sparse", "matrix-free"):
            raise ValueError(f"unknown projector mode {mode!r}")
        if mode == "auto":
            mode = "sparse" if estimate_nnz(geom) <= _MAX_SPARSE_NNZ else "matrix-free"
        self.geom = geom
        self.grid = geom.grid
        self.mode = mode
        self._A = None
        self._AT = None
        if mode == "matrix-free":
            pts, dirs = geom.rays()
            self._pts = np.ascontiguousarray(pts)
            self._dirs = np.ascontiguousarray(dirs)

    @property
    def shape(self) -> tuple[int, int]:
        return (self.geom.n_rays, self.grid.size)

    @property
    def matrix(self) -> sp.csr_matrix:
        if self._A is None:
            self._A = system_matrix(self.geom)
        return self._A

    def _transpose(self) -> sp.csr_matrix:
        if self._AT is None:
            self._AT = self.matrix.T.tocsr()
        return self._AT

    def forward(self, u) -> np.ndarray:
        u = as_array(u)
        if u.shape != self.grid.shape:
            raise ValueError(f"image shape {u.shape} does not match grid {self.grid.shape}")
        flat = np.ascontiguousarray(u, dtype=float).ravel()
        if self.mode == "sparse":
            out = self.matrix @ flat
        else:
            out = np.empty(self.geom.n_rays)
            _forward_mf(self._pts, self._dirs, self.grid.half_width, self.grid.n, flat, out)
        return out.reshape(self.geom.shape)

    def adjoint(self, r) -> np.ndarray:
        r = as_array(r)
        if r.shape != self.geom.shape:
            raise ValueError(f"sinogram shape {r.shape} does not match geometry {self.geom.shape}")
        flat = np.ascontiguousarray(r, dtype=float).ravel()
        if self.mode == "sparse":
            out = self._transpose() @ flat
        else:
            out = np.zeros(self.grid.size)
            _adjoint_mf(self._pts, self._dirs, self.grid.half_width, self.grid.n, flat, out)
        return out.reshape(self.grid.shape)

    def normal(self, u) -> np.ndarray:
        return self.adjoint(self.forward(u))

    def norm_sq(self, iterations: int = 50, seed: int = 0) -> float:
        return operator_norm_sq(self, iterations=iterations, seed=seed)

    def row_norms_sq(self) -> np.ndarray:
        A = self.matrix
        return np.asarray(A.multiply(A).sum(axis=1)).ravel()


@functools.lru_cache(maxsize=8)
def get_projector(geom: Geometry, mode: str = "auto") -> Projector:
    """Shared projector per geometry (geometries are immutable and hashable)."""
    return Projector(geom, mode)


def _projector(geom_or_proj) -> Projector:
    if isinstance(geom_or_proj, Projector):
        return geom_or_proj
    return get_projector(geom_or_proj)


def forward(u, geom) -> np.ndarray:
    """Apply A to an image; returns an ``(n_angles, n_bins)`` array."""
    return _projector(geom).forward(u)


def adjoint(r, geom, grid: GridSpec | None = None) -> np.ndarray:
    """Apply A^T to a sinogram; returns an image array."""
    P = _projector(geom)
    if grid is not None and grid != P.grid:
        raise ValueError("grid does not match geometry")
    return P.adjoint(r)


def operator_norm_sq(geom, grid: GridSpec | None = None, iterations: int = 50,
                     seed: int = 0) -> float:
    """Power-method estimate of ``||A||^2``.

    Returns the Rayleigh quotient ``||A x||^2 / ||x||^2`` of the last
    power iterate of ``A^T A``; this is non-decreasing in ``iterations``.
    """
    if iterations < 1:
        raise ValueError("iterations must be >= 1")
    P = _projector(geom)
    x = np.random.default_rng(seed).random(P.grid.shape) + 0.5
    x /= np.linalg.norm(x)
    est = 0.0
    for _ in range(iterations):
        Ax = P.forward(x)
        est = float(np.vdot(Ax, Ax))
        y = P.adjoint(Ax)
        ny = np.linalg.norm(y)
        if ny == 0:
            return 0.0
        x = y / ny
    return est
