"""Rotation-group primitives used throughout the package.

All rotations are 3x3 numpy arrays acting on column vectors. Axis-angle
tangent vectors live in R^3 and are mapped to skew-symmetric matrices by
:func:`hat`. Quaternions are scalar-last ``(qx, qy, qz, qw)``.
"""

from __future__ import annotations

import numpy as np

_SMALL_ANGLE = 1e-6  # below this, series expansions replace sin/cos ratios
_SKEW_TOL = 1e-9
_PI_GUARD = 1e-9  # log chart excludes angles within this margin of pi
_ORTHO_DRIFT_TOL = 1e-12


class NonSkewInputError(ValueError):
    """A matrix that should be skew-symmetric is not."""


class AngleAtPiError(ValueError):
    """Rotation angle is at or beyond the edge of the logarithm chart."""


def hat(v: np.ndarray) -> np.ndarray:
    """Map a 3-vector to its skew-symmetric cross-product matrix."""
    v = np.asarray(v, dtype=float)
    return np.array([
        [0.0, -v[2], v[1]],
        [v[2], 0.0, -v[0]],
        [-v[1], v[0], 0.0],
    ])


def vee(s: np.ndarray) -> np.ndarray:
    """Extract the 3-vector from a skew-symmetric matrix.

    Args:
        s: 3x3 matrix expected to satisfy ``s + s.T == 0``.

    Returns:
        Vector ``v`` such that ``hat(v) == s``.

    Raises:
        NonSkewInputError: if ``norm(s + s.T)`` exceeds 1e-9.
    """
    s = np.asarray(s, dtype=float)
    defect = float(np.linalg.norm(s + s.T))
    if defect > _SKEW_TOL:
        raise NonSkewInputError(
            f"matrix is not skew-symmetric (defect {defect:.3e})")
    return np.array([s[2, 1], s[0, 2], s[1, 0]])


def exp_map(v: np.ndarray) -> np.ndarray:
    """Rodrigues exponential: axis-angle vector to rotation matrix.

    Uses second-order series coefficients below an angle of 1e-6 so the
    map stays smooth and exact-to-double through zero.
    """
    v = np.asarray(v, dtype=float)
    theta = float(np.linalg.norm(v))
    s = hat(v)
    if theta < _SMALL_ANGLE:
        a = 1.0 - theta * theta / 6.0
        b = 0.5 - theta * theta / 24.0
    else:
        a = np.sin(theta) / theta
        b = (1.0 - np.cos(theta)) / (theta * theta)
    return np.eye(3) + a * s + b * (s @ s)


def rotation_angle(r: np.ndarray) -> float:
    """Geodesic angle of a rotation, in [0, pi].

    Computed as ``atan2(|skew part|, (trace - 1) / 2)``, which keeps full
    precision at tiny angles where an arccosine of the trace would bottom
    out near sqrt(machine epsilon).
    """
    r = np.asarray(r, dtype=float)
    s = 0.5 * np.array([r[2, 1] - r[1, 2], r[0, 2] - r[2, 0],
                        r[1, 0] - r[0, 1]])
    c = (np.trace(r) - 1.0) / 2.0
    return float(np.arctan2(np.linalg.norm(s), c))


def log_map(r: np.ndarray) -> np.ndarray:
    """Inverse of :func:`exp_map` on the open ball of radius pi.

    Args:
        r: rotation matrix with geodesic angle strictly below ``pi - 1e-9``.

    Returns:
        Axis-angle vector of length equal to the rotation angle.

    Raises:
        AngleAtPiError: when the angle reaches the chart boundary, where
            the axis is not recoverable from ``r - r.T``.
    """
    r = np.asarray(r, dtype=float)
    theta = rotation_angle(r)
    if theta >= np.pi - _PI_GUARD:
        raise AngleAtPiError(
            f"rotation angle {theta:.12f} is within 1e-9 of pi; "
            "logarithm is outside its chart")
    if theta < _SMALL_ANGLE:
        coef = 0.5 * (1.0 + theta * theta / 6.0)
    else:
        coef = theta / (2.0 * np.sin(theta))
    s = coef * (r - r.T)
    return np.array([s[2, 1], s[0, 2], s[1, 0]])


def geodesic_distance(a: np.ndarray, b: np.ndarray) -> float:
    """Angle of the relative rotation between two rotation matrices."""
    return float(np.linalg.norm(log_map(np.asarray(a).T @ np.asarray(b))))


def chordal_distance(a: np.ndarray, b: np.ndarray) -> float:
    """Frobenius norm of the difference of two rotation matrices."""
    return float(np.linalg.norm(np.asarray(a) - np.asarray(b)))


def geodesic_sq_derivative(r: np.ndarray, r_dot_body: np.ndarray) -> float:
    """Time derivative of ``0.5 * angle(r)^2`` along a body-frame velocity.

    Args:
        r: current rotation.
        r_dot_body: body-frame velocity ``r.T @ dr/dt``, a skew matrix.

    Returns:
        ``log_map(r) . vee(r_dot_body)``.
    """
    return float(log_map(r) @ vee(r_dot_body))


def quat_to_matrix(q: np.ndarray) -> np.ndarray:
    """Convert a scalar-last quaternion to a rotation matrix.

    The quaternion is normalized first, so mildly denormalized inputs
    (e.g. file round-off) are accepted.
    """
    q = np.asarray(q, dtype=float)
    n = float(np.linalg.norm(q))
    if n == 0.0:
        raise ValueError("zero quaternion has no direction")
    x, y, z, w = q / n
    return np.array([
        [1.0 - 2.0 * (y * y + z * z), 2.0 * (x * y - z * w), 2.0 * (x * z + y * w)],
        [2.0 * (x * y + z * w), 1.0 - 2.0 * (x * x + z * z), 2.0 * (y * z - x * w)],
        [2.0 * (x * z - y * w), 2.0 * (y * z + x * w), 1.0 - 2.0 * (x * x + y * y)],
    ])


def matrix_to_quat(r: np.ndarray) -> np.ndarray:
    """Convert a rotation matrix to a scalar-last quaternion with qw >= 0.

    Shepperd's method: branch on the largest of the four squared
    components so the division is always well conditioned.
    """
    r = np.asarray(r, dtype=float)
    t = np.trace(r)
    candidates = [t, r[0, 0], r[1, 1], r[2, 2]]
    case = int(np.argmax(candidates))
    if case == 0:
        w = 0.5 * np.sqrt(1.0 + t)
        f = 0.25 / w
        x = f * (r[2, 1] - r[1, 2])
        y = f * (r[0, 2] - r[2, 0])
        z = f * (r[1, 0] - r[0, 1])
    elif case == 1:
        x = 0.5 * np.sqrt(1.0 + r[0, 0] - r[1, 1] - r[2, 2])
        f = 0.25 / x
        w = f * (r[2, 1] - r[1, 2])
        y = f * (r[0, 1] + r[1, 0])
        z = f * (r[0, 2] + r[2, 0])
    elif case == 2:
        y = 0.5 * np.sqrt(1.0 - r[0, 0] + r[1, 1] - r[2, 2])
        f = 0.25 / y
        w = f * (r[0, 2] - r[2, 0])
        x = f * (r[0, 1] + r[1, 0])
        z = f * (r[1, 2] + r[2, 1])
    else:
        z = 0.5 * np.sqrt(1.0 - r[0, 0] - r[1, 1] + r[2, 2])
        f = 0.25 / z
        w = f * (r[1, 0] - r[0, 1])
        x = f * (r[0, 2] + r[2, 0])
        y = f * (r[1, 2] + r[2, 1])
    q = np.array([x, y, z, w])
    if q[3] < 0.0:
        q = -q
    return q / np.linalg.norm(q)


def random_rotation(rng: int | np.random.Generator | None = None) -> np.ndarray:
    """Draw a rotation uniformly from the Haar measure on SO(3).

    Samples four iid standard normals, normalizes them into a unit
    quaternion, and converts. Accepts a seed or an existing Generator so
    callers can thread one deterministic stream through many draws.
    """
    if not isinstance(rng, np.random.Generator):
        rng = np.random.default_rng(rng)
    q = rng.standard_normal(4)
    while np.linalg.norm(q) < 1e-12:  # pragma: no cover - probability ~0
        q = rng.standard_normal(4)
    # standard_normal order is (x, y, z, w) here; any fixed convention is
    # Haar-uniform, but the order is part of the deterministic stream.
    return quat_to_matrix(q / np.linalg.norm(q))


def project_to_rotation(m: np.ndarray) -> np.ndarray:
    """Nearest rotation matrix in the Frobenius sense (polar projection)."""
    u, _, vt = np.linalg.svd(np.asarray(m, dtype=float))
    d = np.sign(np.linalg.det(u @ vt))
    return u @ np.diag([1.0, 1.0, d]) @ vt


def orthonormality_drift(r: np.ndarray) -> float:
    """Frobenius distance of ``r.T @ r`` from the identity."""
    r = np.asarray(r, dtype=float)
    return float(np.linalg.norm(r.T @ r - np.eye(3)))


def renormalize(r: np.ndarray) -> np.ndarray:
    """Re-project onto SO(3) when accumulated drift exceeds 1e-12.

    Returns the input unchanged when it is already orthonormal to
    tolerance, so repeated calls are cheap and bit-stable.
    """
    if orthonormality_drift(r) > _ORTHO_DRIFT_TOL:
        return project_to_rotation(r)
    return r


def is_rotation(r: np.ndarray, tol: float = 1e-9) -> bool:
    """True when ``r`` is orthonormal with determinant +1 to tolerance."""
    r = np.asarray(r, dtype=float)
    if r.shape != (3, 3):
        return False
    return (orthonormality_drift(r) <= tol
            and abs(float(np.linalg.det(r)) - 1.0) <= tol)
