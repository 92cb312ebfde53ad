import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from satvct.metrics import MetricSet, lambda_contrast, relative_error, rms_error, snr_db


def test_relative_error_basics(rng):
    u = rng.random((8, 8)) + 0.1
    assert relative_error(u, u) == 0.0
    assert relative_error(2 * u, u) == pytest.approx(1.0)
    e = rng.standard_normal(u.shape)
    e *= 0.1 * np.linalg.norm(u) / np.linalg.norm(e)
    assert relative_error(u + e, u) == pytest.approx(0.1, rel=1e-12)


def test_relative_error_zero_truth():
    with pytest.raises(ValueError):
        relative_error(np.ones(3), np.zeros(3))


@settings(max_examples=50)
@given(u=arrays(np.float64, (5, 5), elements=st.floats(-10, 10)),
       t=arrays(np.float64, (5, 5), elements=st.floats(0.5, 10)),
       c=st.floats(1e-3, 1e3))
def test_relative_error_scale_covariant(u, t, c):
    assert relative_error(c * u, c * t) == pytest.approx(relative_error(u, t), rel=1e-12, abs=1e-15)


def test_snr_db():
    t = np.ones(4)
    assert snr_db(t, t) == np.inf
    assert snr_db(1.1 * t, t) == pytest.approx(20.0)


def test_lambda_contrast():
    tex = np.zeros((4, 4), bool)
    tex[:2] = True
    assert lambda_contrast(np.full((4, 4), 7.0), tex, ~tex) == pytest.approx(1.0)
    lam = np.where(tex, 1e4, 1e-3)
    assert lambda_contrast(lam, tex, ~tex) == pytest.approx(1e7)
    with pytest.raises(ValueError):
        lambda_contrast(lam, tex, np.zeros_like(tex))
    with pytest.raises(ValueError):
        lambda_contrast(lam, tex, tex)


def test_metric_set_regions():
    t = np.ones((4, 4))
    u = t.copy()
    u[0, 0] = 3.0
    mask = np.zeros((4, 4), bool)
    mask[0, :2] = True
    m = MetricSet.compute(u, t, {"corner": mask})
    assert m.relative_error == pytest.approx(0.5)
    assert m.regions["corner"] == pytest.approx(rms_error(u, t, mask)) == pytest.approx(np.sqrt(2.0))
