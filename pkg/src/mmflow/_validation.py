"""Input validation helpers shared by every module."""

import numbers

import numpy as np


class ValidationError(ValueError):
    """Raised when an input violates a documented precondition."""


def check_square_matrix(W, name="W"):
    """Return ``W`` as a finite float64 square array or raise ValidationError."""
    A = np.asarray(W, dtype=np.float64)
    if A.ndim != 2 or A.shape[0] != A.shape[1] or A.shape[0] == 0:
        raise ValidationError(f"{name} must be a non-empty square matrix, got shape {A.shape}")
    if not np.all(np.isfinite(A)):
        raise ValidationError(f"{name} contains non-finite entries")
    return A


def check_vector(x, n=None, name="x"):
    v = np.asarray(x, dtype=np.float64)
    if v.ndim != 1:
        raise ValidationError(f"{name} must be one-dimensional, got shape {v.shape}")
    if n is not None and v.shape[0] != n:
        raise ValidationError(f"{name} has length {v.shape[0]}, expected {n}")
    if not np.all(np.isfinite(v)):
        raise ValidationError(f"{name} contains non-finite entries")
    return v


def check_scalar(value, name, *, low=None, high=None, strict_low=False, strict_high=False):
    """Validate a finite real scalar against optional bounds and return it as float."""
    if isinstance(value, bool) or not isinstance(value, numbers.Real):
        raise ValidationError(f"{name} must be a real number, got {value!r}")
    value = float(value)
    if not np.isfinite(value):
        raise ValidationError(f"{name} must be finite, got {value}")
    if low is not None:
        if strict_low and not value > low:
            raise ValidationError(f"{name} must be > {low}, got {value}")
        if not strict_low and not value >= low:
            raise ValidationError(f"{name} must be >= {low}, got {value}")
    if high is not None:
        if strict_high and not value < high:
            raise ValidationError(f"{name} must be < {high}, got {value}")
        if not strict_high and not value <= high:
            raise ValidationError(f"{name} must be <= {high}, got {value}")
    return value


def check_positive_int(value, name):
    if isinstance(value, bool) or not isinstance(value, numbers.Integral) or value < 1:
        raise ValidationError(f"{name} must be a positive integer, got {value!r}")
    return int(value)
