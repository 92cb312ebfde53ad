"""Spatially adaptive total-variation reconstruction for X-ray CT."""
from .core import (FanGeometry, GridSpec, Image, LambdaMap, ParallelGeometry, Sinogram,
                   make_fan_geometry, make_parallel_geometry, underdetermined_rate)
from .metrics import MetricSet, lambda_contrast, relative_error, rms_error, snr_db
from .phantoms import (NoiseSpec, disk_chords, disk_phantom, estimate_sigma_background,
                       head_phantom, head_regions, simulate_data)
from .projector import Projector, adjoint, forward, operator_norm_sq, trace_ray
from .recon import ReconReport, SatvCtConfig, objective, reconstruct, select_alpha
from .satv import DenoiseConfig, local_residual_stats, update_lambda, weighted_tv_denoise
from .solvers import (CGLSConfig, IterativeConfig, PDHGConfig, cgls, fbp, kaczmarz,
                      l2tv_scalar, landweber)

__version__ = "0.1.0"
