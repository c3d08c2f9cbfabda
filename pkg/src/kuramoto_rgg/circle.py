"""Arithmetic on the unit circle.

Angles are plain floats (or float arrays) in radians. ``normalize`` maps
them to the canonical range [0, 2*pi); the other helpers accept any real
input and reduce internally, so callers may pass unwrapped phases.
"""
import math

import numpy as np

TWO_PI = 2.0 * math.pi

#: default tolerance for antipodal detection in circle arithmetic
ANTIPODAL_TOL = 1e-12


class DomainError(ValueError):
    """Raised when an argument lies outside the domain of an operation."""


def _check_finite(x):
    if not np.all(np.isfinite(x)):
        raise DomainError("angle must be finite")


def normalize(theta):
    """Reduce ``theta`` to [0, 2*pi).

    Works elementwise on arrays and returns a float for scalar input.
    """
    _check_finite(theta)
    r = np.remainder(theta, TWO_PI)
    # remainder of a tiny negative number rounds up to exactly 2*pi
    r = np.where(r >= TWO_PI, 0.0, r)
    if np.ndim(r) == 0:
        return float(r)
    return r


def signed_diff(a, b):
    """Signed geodesic length from ``b`` to ``a``, in (-pi, pi].

    The result ``r`` satisfies ``a == b + r (mod 2*pi)``. Exactly ``pi`` is
    returned for antipodal pairs; use :func:`is_antipodal` where that case
    must be treated as undefined.
    """
    _check_finite(a)
    _check_finite(b)
    d = np.subtract(a, b)
    # magnitude from |a - b| so that swapping the arguments flips the sign exactly
    m = np.remainder(np.abs(d), TWO_PI)
    mag = np.minimum(m, TWO_PI - m)
    r = np.where(np.remainder(d, TWO_PI) > math.pi, -mag, mag)
    r = np.where(r == -math.pi, math.pi, r)
    if np.ndim(r) == 0:
        return float(r)
    return r


def geodesic_distance(a, b):
    """Arc-length distance between two angles, in [0, pi]; symmetric bitwise."""
    return np.abs(signed_diff(a, b))


def is_antipodal(a, b, tol=ANTIPODAL_TOL):
    """True where the two angles are within ``tol`` of being antipodal."""
    if tol < 0:
        raise DomainError(f"tolerance must be nonnegative, got {tol}")
    res = np.abs(geodesic_distance(a, b) - math.pi) <= tol
    if np.ndim(res) == 0:
        return bool(res)
    return res
