"""Reference-frame transformations and instantaneous power algebra.

Quantities live in two frames:

* ``abc``: three-phase instantaneous values, shape ``(3,)``.
* ``alpha/beta``: stationary two-dimensional frame, shape ``(2,)``.

The amplitude-invariant Clarke scaling (2/3 factor) is used throughout, so a
balanced three-phase set of peak amplitude A maps to an alpha/beta vector of
norm A.  Zero-sequence content is discarded by the transform; the Wye/Delta
transformer windings block zero-sequence current, so nothing physical is lost.

All functions are pure and accept/return plain numpy arrays.
"""

from __future__ import annotations

import math

import numpy as np

# Amplitude-invariant Clarke matrix and its (pseudo) inverse (3/2) K^T.
CLARKE = (2.0 / 3.0) * np.array(
    [[1.0, -0.5, -0.5],
     [0.0, math.sqrt(3.0) / 2.0, -math.sqrt(3.0) / 2.0]]
)
CLARKE_INV = 1.5 * CLARKE.T

# Quarter-turn rotation, the "imaginary unit" of the alpha/beta plane.
J = np.array([[0.0, -1.0], [1.0, 0.0]])

# Delta-winding alignment angle of the second conversion line.
DELTA_ROTATION = math.pi / 6.0


def rotation(angle: float) -> np.ndarray:
    """Return the 2x2 rotation matrix for ``angle`` radians (det +1)."""
    c, s = math.cos(angle), math.sin(angle)
    return np.array([[c, -s], [s, c]])


def clarke(x_abc: np.ndarray) -> np.ndarray:
    """Project a three-phase quantity onto the stationary frame.

    The zero-sequence component (common mode of the three phases) is lost.
    """
    return CLARKE @ np.asarray(x_abc, dtype=float)


def inverse_clarke(x_ab: np.ndarray) -> np.ndarray:
    """Map an alpha/beta vector back to a zero-sequence-free abc triple."""
    return CLARKE_INV @ np.asarray(x_ab, dtype=float)


def rotate(angle: float, x_ab: np.ndarray) -> np.ndarray:
    """Rotate an alpha/beta vector by ``angle`` radians."""
    c, s = math.cos(angle), math.sin(angle)
    x = np.asarray(x_ab, dtype=float)
    return np.array([c * x[0] - s * x[1], s * x[0] + c * x[1]])


def active_power(v_ab: np.ndarray, i_ab: np.ndarray) -> float:
    """Instantaneous active power v.i in per unit.

    Callers own any point-of-coupling conventions (e.g. the factor of two
    turning an average line current into the grid-injected current).
    """
    return float(np.dot(v_ab, i_ab))


def reactive_power(v_ab: np.ndarray, i_ab: np.ndarray) -> float:
    """Instantaneous reactive power v.J.i in per unit."""
    v = np.asarray(v_ab, dtype=float)
    i = np.asarray(i_ab, dtype=float)
    return float(v[0] * -i[1] + v[1] * i[0])
