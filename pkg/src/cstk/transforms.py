"""Supporting linear operators: periodic finite differences, the first-column
machinery that lets FFTs diagonalize grad^T grad, multi-level orthonormal Haar
wavelets, BayesShrink denoising, and elementwise Wiener deconvolution.
"""

import math
from dataclasses import dataclass

import numpy as np

from .errors import DimensionError, ParameterError

_SQRT2 = math.sqrt(2.0)


@dataclass(frozen=True)
class GradientOperator:
    """Weighted periodic first differences along x, y and frame axes.

    Acts on vectors of length n_frames * n_y * n_x laid out with x fastest.
    Each axis difference is the circulant matrix with first row [1, -1]:
    (D v)_i = v_i - v_{i+1} with wraparound.
    """

    n_x: int
    n_y: int
    n_frames: int = 1
    weights: tuple = (1.0, 1.0, 1.0)   # (w_x, w_y, w_t), all >= 0

    def __post_init__(self):
        if min(self.n_x, self.n_y, self.n_frames) < 1:
            raise ParameterError("dimensions must be positive")
        if len(self.weights) != 3 or min(self.weights) < 0:
            raise ParameterError("weights must be three non-negative reals")

    @property
    def size(self):
        return self.n_frames * self.n_y * self.n_x

    def _grid(self, x):
        x = np.asarray(x, dtype=np.float64)
        if x.shape != (self.size,):
            raise DimensionError(f"expected length {self.size}, got {x.shape}")
        return x.reshape(self.n_frames, self.n_y, self.n_x)

    def apply(self, x):
        """Stacked [w_x Dx; w_y Dy; w_t Dt] x, length 3 * size."""
        g = self._grid(x)
        wx, wy, wt = self.weights
        dx = wx * (g - np.roll(g, -1, axis=2))
        dy = wy * (g - np.roll(g, -1, axis=1))
        dt = wt * (g - np.roll(g, -1, axis=0))
        return np.concatenate([dx.ravel(), dy.ravel(), dt.ravel()])

    def apply_adjoint(self, z):
        """Transpose of apply; D^T v = v - roll(v, +1)."""
        z = np.asarray(z, dtype=np.float64)
        if z.shape != (3 * self.size,):
            raise DimensionError(
                f"expected length {3 * self.size}, got {z.shape}")
        wx, wy, wt = self.weights
        shape = (self.n_frames, self.n_y, self.n_x)
        zx, zy, zt = (z[i * self.size:(i + 1) * self.size].reshape(shape)
                      for i in range(3))
        out = wx * (zx - np.roll(zx, 1, axis=2))
        out += wy * (zy - np.roll(zy, 1, axis=1))
        out += wt * (zt - np.roll(zt, 1, axis=0))
        return out.ravel()

    def laplacian_first_column(self):
        """First column of grad^T grad via the Kronecker unit-vector build.

        Per axis the column is (first row + first column) of that axis's
        difference matrix, embedded with unit vectors on the other axes.
        """
        col = np.zeros((self.n_frames, self.n_y, self.n_x))
        wx, wy, wt = self.weights
        col[0, 0, :] += wx ** 2 * _dtd_first_column(self.n_x)
        col[0, :, 0] += wy ** 2 * _dtd_first_column(self.n_y)
        col[:, 0, 0] += wt ** 2 * _dtd_first_column(self.n_frames)
        return col.ravel()


def _dtd_first_column(n):
    # first row of D is [1, -1, 0, ...]; first column is [1, 0, ..., -1]
    col = np.zeros(n)
    if n == 1:
        return col
    col[0] = 2.0
    col[1] -= 1.0
    col[-1] -= 1.0
    return col


def dense_difference(n):
    """Dense circulant first-difference matrix; oracle for tests."""
    d = np.eye(n) - np.roll(np.eye(n), -1, axis=1)
    if n == 1:
        d[:] = 0.0
    return d


@dataclass(frozen=True)
class WaveletPlan:
    """Decomposition depth plus the target shape.

    Every transformed axis is halved per level, so each dimension must be
    divisible by 2**levels.
    """

    shape: tuple
    levels: int

    def __post_init__(self):
        shape = tuple(int(s) for s in np.atleast_1d(self.shape))
        object.__setattr__(self, "shape", shape)
        if self.levels < 1:
            raise ParameterError("levels must be >= 1")
        for s in shape:
            if s % (1 << self.levels) != 0:
                raise ParameterError(
                    f"dimension {s} not divisible by 2^{self.levels}")


def full_levels(shape):
    """Largest level count the shape supports (each dim halves per level)."""
    lv = 0
    for s in np.atleast_1d(shape):
        k = 0
        while s % 2 == 0 and s > 1:
            s //= 2
            k += 1
        lv = k if lv == 0 else min(lv, k)
    if lv == 0:
        raise ParameterError("shape supports no decomposition levels")
    return lv


def _haar_axis_forward(block, axis):
    b = np.moveaxis(block, axis, -1)
    s = (b[..., 0::2] + b[..., 1::2]) / _SQRT2
    d = (b[..., 0::2] - b[..., 1::2]) / _SQRT2
    return np.moveaxis(np.concatenate([s, d], axis=-1), -1, axis)


def _haar_axis_inverse(block, axis):
    b = np.moveaxis(block, axis, -1)
    half = b.shape[-1] // 2
    s, d = b[..., :half], b[..., half:]
    out = np.empty_like(b)
    out[..., 0::2] = (s + d) / _SQRT2
    out[..., 1::2] = (s - d) / _SQRT2
    return np.moveaxis(out, -1, axis)


def _approx_slices(shape, level):
    return tuple(slice(0, s >> level) for s in shape)


def haar_forward(plan, x):
    """Orthonormal multi-level Haar analysis in the in-place (Mallat) layout."""
    a = np.array(x, dtype=np.float64)
    if a.shape != plan.shape:
        raise DimensionError(f"expected shape {plan.shape}, got {a.shape}")
    for level in range(plan.levels):
        sl = _approx_slices(plan.shape, level)
        block = a[sl]
        for axis in range(a.ndim):
            block = _haar_axis_forward(block, axis)
        a[sl] = block
    return a


def haar_inverse(plan, coeffs):
    """Inverse of haar_forward; exact up to floating-point rounding."""
    a = np.array(coeffs, dtype=np.float64)
    if a.shape != plan.shape:
        raise DimensionError(f"expected shape {plan.shape}, got {a.shape}")
    for level in reversed(range(plan.levels)):
        sl = _approx_slices(plan.shape, level)
        block = a[sl]
        for axis in range(a.ndim):
            block = _haar_axis_inverse(block, axis)
        a[sl] = block
    return a


def _soft(v, t):
    return np.sign(v) * np.maximum(np.abs(v) - t, 0.0)


def _haar_last_axis(arr, levels, inverse=False):
    a = np.array(arr, dtype=np.float64)
    n = a.shape[-1]
    order = reversed(range(levels)) if inverse else range(levels)
    step = _haar_axis_inverse if inverse else _haar_axis_forward
    for level in order:
        width = n >> level
        a[..., :width] = step(a[..., :width], -1)
    return a


def bayes_shrink(noisy, plan):
    """Wavelet-domain denoiser with a level-dependent soft threshold.

    Works along the last axis (1-D decomposition), so batches of signals are
    cleaned in one call. Noise is estimated per signal from the finest detail
    band as median(|d|)/0.6745; each detail band is shrunk by sigma^2/sigma_x
    with sigma_x = sqrt(max(var(band) - sigma^2, 0)). A band whose variance
    sits below the noise floor is zeroed.
    """
    arr = np.asarray(noisy, dtype=np.float64)
    n = arr.shape[-1]
    if plan.shape != (n,):
        raise DimensionError(f"plan covers shape {plan.shape}, signal has {n}")
    coeffs = _haar_last_axis(arr, plan.levels)
    sigma = np.median(np.abs(coeffs[..., n // 2:]), axis=-1) / 0.6745
    for level in range(plan.levels):
        lo, hi = n >> (level + 1), n >> level
        band = coeffs[..., lo:hi]
        sig_var = np.maximum(band.var(axis=-1) - sigma ** 2, 0.0)
        with np.errstate(divide="ignore"):
            thresh = np.where(sig_var > 0.0,
                              sigma ** 2 / np.sqrt(sig_var), np.inf)
        thresh = np.where(sigma > 0.0, thresh, 0.0)
        coeffs[..., lo:hi] = _soft(band, thresh[..., None])
    return _haar_last_axis(coeffs, plan.levels, inverse=True)


def wiener_deconvolve(signal_spectrum, kernel_spectrum, noise_ratio):
    """Elementwise Wiener division conj(K).S / (|K|^2 + noise_ratio).

    Operates on already-transformed arrays; callers pair it with whatever
    forward/inverse transform defines their convolution.
    """
    s = np.asarray(signal_spectrum)
    k = np.asarray(kernel_spectrum)
    if s.shape != k.shape:
        raise DimensionError("signal and kernel spectra differ in shape")
    if noise_ratio < 0:
        raise ParameterError("noise_ratio must be >= 0")
    if not np.any(k):
        raise ParameterError("kernel spectrum is identically zero")
    return np.conj(k) * s / (np.abs(k) ** 2 + noise_ratio)
