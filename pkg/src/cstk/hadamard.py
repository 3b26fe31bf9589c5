"""Sylvester-ordered Walsh-Hadamard matrices and the fast transform.

The transform is unnormalized: applying ``fwht`` twice multiplies the input
by its length. Callers that need the true inverse divide by n themselves.
Row/column indices in the public API are 1-based.
"""

import numpy as np

from .errors import CapacityError, DimensionError

DENSE_LIMIT = 4096


def _is_power_of_two(n):
    return n >= 1 and (n & (n - 1)) == 0


def _working_dtype(arr):
    # integer input stays integer so repeated transforms are exact
    if arr.dtype == object:
        raise TypeError("object arrays are not supported")
    if np.issubdtype(arr.dtype, np.integer) or arr.dtype == bool:
        return np.int64
    if np.issubdtype(arr.dtype, np.complexfloating):
        return np.complex128
    return np.float64


def fwht(x):
    """Fast Walsh-Hadamard transform, normally (Sylvester) ordered.

    Returns H_n @ x for n = len(x), a power of two, using n*log2(n)
    additions/subtractions. The input is never modified.
    """
    arr = np.asarray(x)
    if arr.ndim != 1:
        raise DimensionError(f"expected a vector, got shape {arr.shape}")
    n = arr.shape[0]
    if not _is_power_of_two(n):
        raise DimensionError(f"length {n} is not a power of two")
    a = arr.astype(_working_dtype(arr), copy=True)
    h = 1
    while h < n:
        blocks = a.reshape(-1, 2, h)
        diff = blocks[:, 0, :] - blocks[:, 1, :]
        blocks[:, 0, :] += blocks[:, 1, :]
        blocks[:, 1, :] = diff
        h *= 2
    return a


def hadamard_row(n, i):
    """Row i (1-based) of H_n, obtained as the transform of a basis vector.

    Valid because H is symmetric; the first row is all ones.
    """
    if not _is_power_of_two(n):
        raise DimensionError(f"n={n} is not a power of two")
    if not 1 <= i <= n:
        raise IndexError(f"row index {i} outside [1, {n}]")
    e = np.zeros(n, dtype=np.int64)
    e[i - 1] = 1
    return fwht(e)


def dense_hadamard(n):
    """Explicit H_n built by the Kronecker recursion H_{2k} = H_2 (x) H_k.

    Guarded to n <= 4096; intended for tests and diagnostics only.
    """
    if not _is_power_of_two(n):
        raise DimensionError(f"n={n} is not a power of two")
    if n > DENSE_LIMIT:
        raise CapacityError(f"n={n} exceeds dense limit {DENSE_LIMIT}")
    h2 = np.array([[1, 1], [1, -1]], dtype=np.int64)
    h = np.array([[1]], dtype=np.int64)
    while h.shape[0] < n:
        h = np.kron(h2, h)
    return h
