"""Small-matrix algebra on SO(3) and so(3).

Every function broadcasts over leading axes: a vector argument has shape
``(..., 3)`` and a matrix argument ``(..., 3, 3)``. The simulator relies on
this to evaluate all crafts and edges in one call.
"""

from __future__ import annotations

import numpy as np

SKEW_TOL = 1e-9
ROTATION_TOL = 1e-9
SMALL_ANGLE = 1e-6
MAX_DRIFT = 1e-3


def transpose(M):
    """Swap the last two axes."""
    return np.swapaxes(M, -1, -2)


def hat(v):
    """Map ``v`` to the skew-symmetric matrix with ``hat(v) @ y == v x y``."""
    v = np.asarray(v, dtype=float)
    x, y, z = v[..., 0], v[..., 1], v[..., 2]
    out = np.zeros(v.shape[:-1] + (3, 3))
    out[..., 0, 1] = -z
    out[..., 0, 2] = y
    out[..., 1, 0] = z
    out[..., 1, 2] = -x
    out[..., 2, 0] = -y
    out[..., 2, 1] = x
    return out


def skew_part(M):
    M = np.asarray(M, dtype=float)
    return 0.5 * (M - transpose(M))


def vee(M, tol=SKEW_TOL):
    """Inverse of :func:`hat`.

    Operates on the skew part of ``M``; raises ``ValueError`` when the
    symmetric residual ``||M + M^T||`` exceeds ``tol``.
    """
    M = np.asarray(M, dtype=float)
    residual = np.linalg.norm(M + transpose(M), axis=(-2, -1))
    if np.any(residual > tol):
        raise ValueError(f"matrix is not skew-symmetric (residual {np.max(residual):.3e})")
    S = skew_part(M)
    return np.stack([S[..., 2, 1], S[..., 0, 2], S[..., 1, 0]], axis=-1)


def exp_so3(v):
    """Rodrigues' formula; series coefficients below ``SMALL_ANGLE``."""
    v = np.asarray(v, dtype=float)
    theta = np.linalg.norm(v, axis=-1)
    small = theta < SMALL_ANGLE
    safe = np.where(small, 1.0, theta)
    t2 = theta * theta
    a = np.where(small, 1.0 - t2 / 6.0, np.sin(safe) / safe)
    b = np.where(small, 0.5 - t2 / 24.0, (1.0 - np.cos(safe)) / (safe * safe))
    K = hat(v)
    I = np.broadcast_to(np.eye(3), K.shape)
    return I + a[..., None, None] * K + b[..., None, None] * (K @ K)


def rot_x(angle):
    c, s = np.cos(angle), np.sin(angle)
    one, zero = np.ones_like(c), np.zeros_like(c)
    return np.stack([
        np.stack([one, zero, zero], -1),
        np.stack([zero, c, -s], -1),
        np.stack([zero, s, c], -1),
    ], -2)


def rot_y(angle):
    c, s = np.cos(angle), np.sin(angle)
    one, zero = np.ones_like(c), np.zeros_like(c)
    return np.stack([
        np.stack([c, zero, s], -1),
        np.stack([zero, one, zero], -1),
        np.stack([-s, zero, c], -1),
    ], -2)


def rot_z(angle):
    c, s = np.cos(angle), np.sin(angle)
    one, zero = np.ones_like(c), np.zeros_like(c)
    return np.stack([
        np.stack([c, -s, zero], -1),
        np.stack([s, c, zero], -1),
        np.stack([zero, zero, one], -1),
    ], -2)


def euler321_to_rotation(yaw, pitch, roll):
    """Yaw-pitch-roll (3-2-1) attitude ``R_z(yaw) R_y(pitch) R_x(roll)``."""
    yaw, pitch, roll = np.broadcast_arrays(
        np.asarray(yaw, float), np.asarray(pitch, float), np.asarray(roll, float)
    )
    return rot_z(yaw) @ rot_y(pitch) @ rot_x(roll)


def orthonormality_error(R):
    """Frobenius norm of ``R^T R - I``."""
    R = np.asarray(R, dtype=float)
    return np.linalg.norm(transpose(R) @ R - np.eye(3), axis=(-2, -1))


def reorthonormalize(M, max_drift=MAX_DRIFT):
    """Project ``M`` onto SO(3) with the polar decomposition.

    The orthogonal polar factor is the nearest orthogonal matrix in the
    Frobenius norm, so an exact rotation is returned unchanged.
    """
    M = np.asarray(M, dtype=float)
    drift = orthonormality_error(M)
    if np.any(drift > max_drift):
        raise ValueError(f"drift {np.max(drift):.3e} exceeds {max_drift:g}; refusing to project")
    if np.any(np.linalg.det(M) <= 0.0):
        raise ValueError("matrix has non-positive determinant")
    U, _, Vt = np.linalg.svd(M)
    return U @ Vt


def is_rotation(R, tol=ROTATION_TOL):
    R = np.asarray(R, dtype=float)
    if R.shape[-2:] != (3, 3) or not np.all(np.isfinite(R)):
        return False
    return bool(np.all(orthonormality_error(R) <= tol)
                and np.all(np.abs(np.linalg.det(R) - 1.0) <= tol))


def as_rotation(R, tol=ROTATION_TOL):
    """Validate a rotation matrix and return it as a float array."""
    R = np.asarray(R, dtype=float)
    if not is_rotation(R, tol):
        raise ValueError("not a rotation matrix")
    return R


def unit(v, tol=0.0):
    v = np.asarray(v, dtype=float)
    n = np.linalg.norm(v, axis=-1, keepdims=True)
    if np.any(n <= tol):
        raise ValueError("cannot normalize a zero vector")
    return v / n


def cross(a, b):
    """Broadcasting cross product over the last axis; cheaper than ``np.cross`` on small batches."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    out = np.empty(np.broadcast_shapes(a.shape, b.shape))
    a0, a1, a2 = a[..., 0], a[..., 1], a[..., 2]
    b0, b1, b2 = b[..., 0], b[..., 1], b[..., 2]
    out[..., 0] = a1 * b2 - a2 * b1
    out[..., 1] = a2 * b0 - a0 * b2
    out[..., 2] = a0 * b1 - a1 * b0
    return out
