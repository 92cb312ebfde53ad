"""Reconstruction quality against a known ground truth."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .core import as_array


def relative_error(u, u_true) -> float:
    """``||u - u_true|| / ||u_true||`` in the Euclidean norm."""
    u, u_true = as_array(u), as_array(u_true)
    den = np.linalg.norm(u_true)
    if den == 0:
        raise ValueError("relative error undefined for a zero ground truth")
    return float(np.linalg.norm(u - u_true) / den)


def snr_db(u, u_true) -> float:
    """``20 log10(||u_true|| / ||u - u_true||)``; ``inf`` for an exact match."""
    err = relative_error(u, u_true)
    return math.inf if err == 0 else -20.0 * math.log10(err)


def lambda_contrast(lam, textured_mask, homogeneous_mask) -> float:
    """Mean weight over the textured mask divided by the mean over the flat one."""
    lam = as_array(lam)
    t = np.asarray(textured_mask, dtype=bool)
    h = np.asarray(homogeneous_mask, dtype=bool)
    if not t.any() or not h.any():
        raise ValueError("masks must be nonempty")
    if np.any(t & h):
        raise ValueError("masks must be disjoint")
    return float(lam[t].mean() / lam[h].mean())


def rms_error(u, u_true, mask=None) -> float:
    """Root-mean-square difference, optionally restricted to ``mask``."""
    d = as_array(u) - as_array(u_true)
    if mask is not None:
        d = d[np.asarray(mask, dtype=bool)]
    if d.size == 0:
        raise ValueError("empty mask")
    return float(np.sqrt(np.mean(d * d)))


@dataclass
class MetricSet:
    """Global relative error and SNR plus per-region RMS errors."""

    relative_error: float
    snr_db: float
    regions: dict = field(default_factory=dict)

    @classmethod
    def compute(cls, u, u_true, masks: dict | None = None) -> "MetricSet":
        u, u_true = as_array(u), as_array(u_true)
        regions = {}
        for name, m in (masks or {}).items():
            regions[name] = rms_error(u, u_true, m)
        return cls(relative_error(u, u_true), snr_db(u, u_true), regions)
