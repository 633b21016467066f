import math

import numpy as np
import pytest
from hypothesis import given
from scipy.linalg import expm, polar
from scipy.spatial.transform import Rotation

from losform.so3 import (cross, euler321_to_rotation, exp_so3, hat, is_rotation, orthonormality_error,
                         reorthonormalize, vee)

from conftest import seeds, vec3
from oracles import skew


def test_hat_basis():
    np.testing.assert_array_equal(hat([1.0, 0.0, 0.0]), [[0, 0, 0], [0, 0, -1], [0, 1, 0]])
    np.testing.assert_array_equal(hat([0.0, 0.0, 0.0]), np.zeros((3, 3)))


@given(vec3, vec3)
def test_hat_is_componentwise_cross(v, y):
    expected = np.array([v[1] * y[2] - v[2] * y[1], v[2] * y[0] - v[0] * y[2], v[0] * y[1] - v[1] * y[0]])
    np.testing.assert_allclose(hat(v) @ y, expected, atol=1e-12)
    np.testing.assert_array_equal(hat(v).T, -hat(v))
    np.testing.assert_allclose(cross(v, y), expected, atol=1e-12)


def test_vee_examples():
    np.testing.assert_array_equal(vee(hat([1.0, 2.0, 3.0])), [1.0, 2.0, 3.0])
    np.testing.assert_array_equal(vee(np.zeros((3, 3))), np.zeros(3))


def test_vee_rejects_non_skew():
    with pytest.raises(ValueError):
        vee(np.eye(3))
    # residual just inside the tolerance is accepted and projected
    M = hat([1.0, 2.0, 3.0]) + 2e-10 * np.eye(3)
    np.testing.assert_allclose(vee(M), [1.0, 2.0, 3.0], atol=1e-12)


@given(seeds)
def test_vee_of_skew_part_matches_trace_identity(seed):
    rng = np.random.default_rng(seed)
    M = rng.normal(size=(3, 3))
    w = vee(0.5 * (M - M.T))
    # tr(hat(x) M) = -x . (M - M^T)^vee, evaluated on the basis
    oracle = np.array([-0.5 * np.trace(skew(e) @ M) for e in np.eye(3)])
    np.testing.assert_allclose(w, oracle, atol=1e-12)


@given(vec3)
def test_vee_hat_roundtrip(v):
    np.testing.assert_allclose(vee(hat(v)), v, atol=0)
    S = hat(v)
    np.testing.assert_array_equal(hat(vee(S)), S)


def test_exp_examples():
    np.testing.assert_array_equal(exp_so3([0.0, 0.0, 0.0]), np.eye(3))
    np.testing.assert_allclose(exp_so3([0.0, 0.0, math.pi / 2]) @ [1.0, 0.0, 0.0], [0.0, 1.0, 0.0], atol=1e-15)
    v = np.array([0.999 * math.pi, 0.0, 0.0])
    R3 = exp_so3(v)
    np.testing.assert_allclose(R3 @ exp_so3(-v), np.eye(3), atol=1e-14)
    c, s = math.cos(0.999 * math.pi), math.sin(0.999 * math.pi)
    np.testing.assert_allclose(R3, [[1, 0, 0], [0, c, -s], [0, s, c]], atol=1e-15)


@given(vec3)
def test_exp_matches_matrix_exponential(v):
    np.testing.assert_allclose(exp_so3(v), expm(skew(v)), atol=1e-11)
    assert is_rotation(exp_so3(v))


@given(seeds)
def test_exp_small_angle_branch(seed):
    rng = np.random.default_rng(seed)
    v = rng.normal(size=3)
    v *= rng.uniform(1e-12, 1e-6) / np.linalg.norm(v)
    np.testing.assert_allclose(exp_so3(v), expm(skew(v)), atol=1e-15)


@given(seeds)
def test_exp_period(seed):
    rng = np.random.default_rng(seed)
    n = rng.normal(size=3)
    n /= np.linalg.norm(n)
    theta = rng.uniform(-3.0, 3.0)
    np.testing.assert_allclose(exp_so3((theta + 2 * math.pi) * n), exp_so3(theta * n), atol=1e-12)


def test_exp_broadcasts():
    v = np.random.default_rng(0).normal(size=(4, 5, 3))
    R = exp_so3(v)
    assert R.shape == (4, 5, 3, 3)
    np.testing.assert_allclose(R[2, 3], expm(skew(v[2, 3])), atol=1e-12)


def test_euler_examples():
    np.testing.assert_array_equal(euler321_to_rotation(0.0, 0.0, 0.0), np.eye(3))
    np.testing.assert_allclose(euler321_to_rotation(math.pi / 2, 0, 0) @ [1, 0, 0], [0, 1, 0], atol=1e-15)
    Q34 = euler321_to_rotation(math.sin(0.0), 0.1, math.cos(0.0))
    expected = Rotation.from_euler("ZYX", [0.0, 0.1, 1.0]).as_matrix()
    np.testing.assert_allclose(Q34, expected, atol=1e-15)


@given(seeds)
def test_euler_matches_intrinsic_zyx(seed):
    rng = np.random.default_rng(seed)
    yaw, pitch, roll = rng.uniform(-3, 3), rng.uniform(-1.5, 1.5), rng.uniform(-3, 3)
    expected = Rotation.from_euler("ZYX", [yaw, pitch, roll]).as_matrix()
    np.testing.assert_allclose(euler321_to_rotation(yaw, pitch, roll), expected, atol=1e-14)


def test_reorthonormalize_examples():
    R = exp_so3([0.3, -1.0, 2.0])
    np.testing.assert_allclose(reorthonormalize(R), R, atol=1e-12)
    M = np.eye(3) + 1e-6 * hat([0.0, 0.0, 1.0])
    P = reorthonormalize(M)
    np.testing.assert_allclose(P, polar(M)[0], atol=1e-15)
    assert np.linalg.norm(P - np.eye(3)) < 1e-6 * math.sqrt(2) + 1e-15


@given(seeds)
def test_reorthonormalize_against_polar(seed):
    rng = np.random.default_rng(seed)
    R = Rotation.random(random_state=rng).as_matrix()
    noise = 1e-5 * rng.uniform(-1, 1, size=(3, 3))
    P = reorthonormalize(R + noise)
    np.testing.assert_allclose(P, polar(R + noise)[0], atol=1e-13)
    assert np.max(np.abs(P - R)) < 2e-5
    assert orthonormality_error(P) < 1e-12
    assert abs(np.linalg.det(P) - 1.0) < 1e-12


def test_reorthonormalize_rejects():
    with pytest.raises(ValueError):
        reorthonormalize(np.diag([1.0, 1.0, -1.0]))
    with pytest.raises(ValueError):
        reorthonormalize(1.01 * np.eye(3))


@given(vec3, vec3, vec3, seeds)
def test_hat_identities(x, y, z, seed):
    rng = np.random.default_rng(seed)
    A = rng.normal(size=(3, 3))
    R = Rotation.random(random_state=rng).as_matrix()
    scale = 1.0 + np.linalg.norm(x) * np.linalg.norm(y) * (1 + np.linalg.norm(z))
    tol = 1e-12 * scale * 100
    X, Y, Z = hat(x), hat(y), hat(z)
    np.testing.assert_allclose(hat(np.cross(x, y)), X @ Y - Y @ X, atol=tol)
    np.testing.assert_allclose(hat(np.cross(x, y)), np.outer(y, x) - np.outer(x, y), atol=tol)
    lhs = np.trace(X @ A)
    assert abs(lhs - 0.5 * np.trace(X @ (A - A.T))) < tol
    assert abs(lhs + x @ vee(A - A.T, tol=np.inf)) < tol
    np.testing.assert_allclose(R @ X @ R.T, hat(R @ x), atol=tol)
    t = x @ (Y @ z)
    assert abs(t - y @ (Z @ x)) < tol and abs(t - z @ (X @ y)) < tol
    np.testing.assert_allclose(X @ Y @ z, (x @ z) * y - (x @ y) * z, atol=tol)
    np.testing.assert_allclose(X @ Y @ z - Z @ Y @ x, Y @ X @ z, atol=tol)
