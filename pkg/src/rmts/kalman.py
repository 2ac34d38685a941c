"""Constant-velocity Kalman filter over bounding-box state.

The 8-dimensional state

    cx, cy, w, h, vcx, vcy, vw, vh

holds the box center, width and height plus their per-frame velocities.
The box (cx, cy, w, h) is observed directly (linear observation model) and
dt is fixed at one frame.

Noise magnitudes are chosen relative to the current box height, with the
standard ratios used by published box trackers: position std 1/20 of the
height, velocity std 1/160 of the height.

All operations are value-in/value-out and thread-safe.  The ``multi_*``
functions are batched variants used by the tracker hot path; the single-state
operations are thin wrappers over them, so both paths share one
implementation.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import AffineTransform
from .errors import InputError

STD_POSITION = 1.0 / 20.0
STD_VELOCITY = 1.0 / 160.0

# dt = 1 constant-velocity transition: position += velocity.
_MOTION_MAT = np.eye(8)
for _i in range(4):
    _MOTION_MAT[_i, 4 + _i] = 1.0
_MOTION_MAT.setflags(write=False)


@dataclass(frozen=True, eq=False)
class KalmanState:
    """Filter state: 8-vector mean and 8x8 covariance.

    The covariance is kept symmetric (forced after every operation) and
    positive semi-definite.
    """

    mean: np.ndarray
    covariance: np.ndarray

    def __post_init__(self):
        mean = np.asarray(self.mean, dtype=np.float64)
        cov = np.asarray(self.covariance, dtype=np.float64)
        if mean.shape != (8,) or cov.shape != (8, 8):
            raise InputError("KalmanState needs an 8-vector mean and 8x8 covariance")
        mean.setflags(write=False)
        cov.setflags(write=False)
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "covariance", cov)


def _symmetrize(covs: np.ndarray) -> np.ndarray:
    return 0.5 * (covs + np.swapaxes(covs, -1, -2))


def make_state(mean: np.ndarray, covariance: np.ndarray) -> KalmanState:
    """Wrap already-validated arrays without re-checking (hot path)."""
    s = object.__new__(KalmanState)
    object.__setattr__(s, "mean", mean)
    object.__setattr__(s, "covariance", covariance)
    return s


def multi_initiate(measurements: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Create states from (N, 4) measurements (cx, cy, w, h)."""
    z = np.asarray(measurements, dtype=np.float64)
    if z.ndim != 2 or z.shape[1] != 4:
        raise InputError("measurements must have shape (N, 4)")
    if np.any(z[:, 2] <= 0.0) or np.any(z[:, 3] <= 0.0):
        raise InputError("box width and height must be > 0 to start a track")
    n = z.shape[0]
    means = np.zeros((n, 8), dtype=np.float64)
    means[:, :4] = z
    h = z[:, 3]
    std = np.empty((n, 8), dtype=np.float64)
    std[:, :4] = (2.0 * STD_POSITION * h)[:, None]
    std[:, 4:] = (10.0 * STD_VELOCITY * h)[:, None]
    covs = np.zeros((n, 8, 8), dtype=np.float64)
    idx = np.arange(8)
    covs[:, idx, idx] = std**2
    return means, covs


def multi_predict(means: np.ndarray, covs: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """One constant-velocity step for a batch of states."""
    h = means[:, 3]
    std = np.empty((means.shape[0], 8), dtype=np.float64)
    std[:, :4] = (STD_POSITION * h)[:, None]
    std[:, 4:] = (STD_VELOCITY * h)[:, None]

    new_means = means @ _MOTION_MAT.T
    # F P F^T for the block transition [[I, I], [0, I]], written as slice
    # adds; much cheaper than a dense 8x8 congruence.
    p_pp = covs[:, :4, :4]
    p_pv = covs[:, :4, 4:]
    p_vp = covs[:, 4:, :4]
    p_vv = covs[:, 4:, 4:]
    new_covs = np.empty_like(covs)
    new_covs[:, :4, :4] = p_pp + p_pv + p_vp + p_vv
    new_covs[:, :4, 4:] = p_pv + p_vv
    new_covs[:, 4:, :4] = p_vp + p_vv
    new_covs[:, 4:, 4:] = p_vv
    idx = np.arange(8)
    new_covs[:, idx, idx] += std**2
    return new_means, _symmetrize(new_covs)


def multi_update(
    means: np.ndarray, covs: np.ndarray, measurements: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """Kalman correction with direct observation of (cx, cy, w, h)."""
    z = np.asarray(measurements, dtype=np.float64)
    h = means[:, 3]
    r_std = (STD_POSITION * h)[:, None] * np.ones((1, 4))
    innovation_cov = covs[:, :4, :4].copy()
    idx = np.arange(4)
    innovation_cov[:, idx, idx] += r_std**2

    # gain K = P H^T S^-1; with H = [I4 0] the projection is a slice.
    gain = np.swapaxes(np.linalg.solve(innovation_cov, covs[:, :4, :]), -1, -2)
    innovation = z - means[:, :4]
    new_means = means + (gain @ innovation[:, :, None])[:, :, 0]
    new_covs = covs - gain @ innovation_cov @ np.swapaxes(gain, -1, -2)
    return new_means, _symmetrize(new_covs)


def multi_camera_motion(
    means: np.ndarray, covs: np.ndarray, transform: AffineTransform
) -> tuple[np.ndarray, np.ndarray]:
    """Express a batch of states in the coordinates of a new camera pose.

    Position becomes M @ p + t, velocity M @ v, and the box size is scaled
    isotropically by sqrt(|det M|).  The covariance is conjugated by the
    block-diagonal embedding of M on the position and velocity coordinates.
    """
    m = transform.linear
    t = transform.translation
    scale = np.sqrt(abs(transform.det))

    g = np.eye(8)
    g[0:2, 0:2] = m
    g[4:6, 4:6] = m

    new_means = means.copy()
    new_means[:, 0:2] = means[:, 0:2] @ m.T + t
    new_means[:, 4:6] = means[:, 4:6] @ m.T
    new_means[:, 2:4] = means[:, 2:4] * scale
    new_covs = g @ covs @ g.T
    return new_means, _symmetrize(new_covs)


def initiate(measurement) -> KalmanState:
    """Start a track from one (cx, cy, w, h) measurement.

    Velocities start at zero; the covariance is diagonal, scaled by the
    measured height.
    """
    means, covs = multi_initiate(np.asarray(measurement, dtype=np.float64)[None, :])
    return KalmanState(means[0], covs[0])


def predict(state: KalmanState) -> KalmanState:
    means, covs = multi_predict(state.mean[None, :], state.covariance[None, :, :])
    return KalmanState(means[0], covs[0])


def update(state: KalmanState, measurement) -> KalmanState:
    z = np.asarray(measurement, dtype=np.float64)
    if z.shape != (4,):
        raise InputError("measurement must be a 4-vector (cx, cy, w, h)")
    means, covs = multi_update(
        state.mean[None, :], state.covariance[None, :, :], z[None, :]
    )
    return KalmanState(means[0], covs[0])


def apply_camera_motion(state: KalmanState, transform: AffineTransform) -> KalmanState:
    means, covs = multi_camera_motion(
        state.mean[None, :], state.covariance[None, :, :], transform
    )
    return KalmanState(means[0], covs[0])
