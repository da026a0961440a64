"""Input validation helpers used at public API boundaries."""

import numbers

import numpy as np


def as_float_array(value, shape, name="array"):
    """Coerce to a float ndarray of the given shape.

    Raises ValueError on wrong shape or non-finite entries.
    """
    arr = np.asarray(value, dtype=float)
    if arr.shape != tuple(shape):
        raise ValueError(f"{name} must have shape {tuple(shape)}, got {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite values")
    return arr


def as_state_vector(state, name="state"):
    """Coerce a planar state (x, y, v, theta) to a float vector of length 4."""
    if hasattr(state, "as_array"):
        state = state.as_array()
    return as_float_array(state, (4,), name)


def as_position(value, name="position"):
    """Accept a length-2 point or a longer state vector; return (x, y)."""
    arr = np.asarray(value, dtype=float).ravel()
    if arr.size < 2:
        raise ValueError(f"{name} must provide at least (x, y)")
    if not np.all(np.isfinite(arr[:2])):
        raise ValueError(f"{name} contains non-finite values")
    return arr[:2].copy()


def as_covariance(matrix, dim, name="covariance", tol=1e-8):
    """Validate a symmetric PSD matrix and return a symmetrized copy.

    Symmetry is enforced up to `tol` on the max-abs asymmetry, and the
    smallest eigenvalue must exceed -tol.
    """
    m = as_float_array(matrix, (dim, dim), name)
    if np.max(np.abs(m - m.T)) > tol:
        raise ValueError(f"{name} is not symmetric")
    m = 0.5 * (m + m.T)
    if np.linalg.eigvalsh(m)[0] < -tol:
        raise ValueError(f"{name} is not positive semidefinite")
    return m


def check_scalar(value, name, minimum=None, strict=False):
    """Validate a finite real scalar, optionally bounded below."""
    if not isinstance(value, numbers.Real) or isinstance(value, bool):
        raise TypeError(f"{name} must be a real number, got {type(value).__name__}")
    value = float(value)
    if not np.isfinite(value):
        raise ValueError(f"{name} must be finite")
    if minimum is not None:
        if strict and value <= minimum:
            raise ValueError(f"{name} must be > {minimum}, got {value}")
        if not strict and value < minimum:
            raise ValueError(f"{name} must be >= {minimum}, got {value}")
    return value


def normalize_angle(theta):
    """Wrap angles to (-pi, pi]."""
    return np.pi - np.mod(np.pi - np.asarray(theta, dtype=float), 2.0 * np.pi)
