"""Implicit randomized-Hadamard sensing operators.

A selector stores (row picks r, column permutation p, inverse q) so that the
sensing matrix A = H_n[r, p] is only ever applied through the fast transform:

    A x   : inverse-permute by q, fwht, extract entries at r
    A^T y : scatter y into zeros at r (duplicates add), fwht, permute by p

All indices in the stored vectors are 1-based to match the row/column
selection formulas; conversion to 0-based happens at the numpy boundary.
The adjoint is unnormalized, consistent with the unnormalized fwht.
"""

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionError, ParameterError
from .hadamard import _is_power_of_two, fwht


@dataclass(frozen=True)
class PermutedSelector:
    """Row-subsampled, column-permuted Hadamard operator of shape (m, n)."""

    n: int
    m: int
    r: np.ndarray          # length m, 1-based rows of H_n, repeats allowed
    p: np.ndarray          # length n, 1-based column permutation
    q: np.ndarray          # inverse permutation: q[p[i]] = i (1-based)
    seed: int | None = None
    allow_dc: bool = False

    def __post_init__(self):
        if not _is_power_of_two(self.n):
            raise ParameterError(f"n={self.n} is not a power of two")
        if self.m < 1:
            raise ParameterError("m must be >= 1")
        r = np.asarray(self.r, dtype=np.int64)
        p = np.asarray(self.p, dtype=np.int64)
        q = np.asarray(self.q, dtype=np.int64)
        if r.shape != (self.m,):
            raise ParameterError("r must have length m")
        if r.min(initial=self.n) < 1 or r.max(initial=1) > self.n:
            raise ParameterError("r entries outside [1, n]")
        if sorted(p) != list(range(1, self.n + 1)):
            raise ParameterError("p is not a permutation of 1..n")
        if not np.array_equal(q[p - 1], np.arange(1, self.n + 1)):
            raise ParameterError("q is not the inverse of p")
        object.__setattr__(self, "r", r)
        object.__setattr__(self, "p", p)
        object.__setattr__(self, "q", q)

    def dense(self):
        """Explicit A = H_n[r, p]; tests/diagnostics only."""
        from .hadamard import dense_hadamard

        h = dense_hadamard(self.n)
        return h[np.ix_(self.r - 1, self.p - 1)]


def _inverse_permutation(p):
    q = np.empty_like(p)
    q[p - 1] = np.arange(1, len(p) + 1, dtype=p.dtype)
    return q


def make_selector(n, m, seed, allow_dc=False):
    """Draw a selector: r uniform on [2, n] ([1, n] with allow_dc), p a
    uniform permutation. Deterministic given the seed; rows may repeat.
    """
    if not _is_power_of_two(n):
        raise ParameterError(f"n={n} is not a power of two")
    if m < 1:
        raise ParameterError("m must be >= 1")
    rng = np.random.default_rng(seed)
    low = 1 if allow_dc else 2
    if low > n:
        raise ParameterError("n=1 selector needs allow_dc=True")
    r = rng.integers(low, n, size=m, endpoint=True, dtype=np.int64)
    p = rng.permutation(n).astype(np.int64) + 1
    return PermutedSelector(n=n, m=m, r=r, p=p, q=_inverse_permutation(p),
                            seed=seed, allow_dc=allow_dc)


def apply(sel, x):
    """A @ x for A = H_n[r, p], in O(n log n)."""
    x = np.asarray(x)
    if x.shape != (sel.n,):
        raise DimensionError(f"expected length {sel.n}, got {x.shape}")
    return fwht(x[sel.q - 1])[sel.r - 1]


def apply_adjoint(sel, y):
    """A.T @ y; duplicate rows in r accumulate additively."""
    y = np.asarray(y)
    if y.shape != (sel.m,):
        raise DimensionError(f"expected length {sel.m}, got {y.shape}")
    beta = np.zeros(sel.n, dtype=np.result_type(y.dtype, np.float64))
    np.add.at(beta, sel.r - 1, y)
    return fwht(beta)[sel.p - 1]


@dataclass(frozen=True)
class JointSelector:
    """Joint-space operator A = H_{N^2}[r_si, p_si] built from two subspace
    selectors, with duplicate joint rows removed."""

    subspace_dim: int                 # N
    m: int                            # joint rows after de-duplication
    r_si: np.ndarray
    p_si: np.ndarray
    q_si: np.ndarray
    r_s: np.ndarray                   # surviving source picks, length m
    r_i: np.ndarray
    sel_s: PermutedSelector = field(repr=False)
    sel_i: PermutedSelector = field(repr=False)

    def __post_init__(self):
        if len(np.unique(self.r_si)) != len(self.r_si):
            raise ParameterError("r_si contains duplicates")

    @property
    def n(self):
        return self.subspace_dim ** 2

    def as_selector(self):
        """View the joint operator as a plain selector over N^2."""
        return PermutedSelector(n=self.n, m=self.m, r=self.r_si,
                                p=self.p_si, q=self.q_si)


def make_joint(sel_s, sel_i):
    """Combine signal/idler selectors into the joint-space selector.

    r_si[i] = N*(r_s[i]-1) + r_i[i]; p_si[N*(i-1)+j] = N*(p_s[i]-1) + p_i[j].
    Repeated r_si values are dropped together with their source pair, so the
    joint row count can shrink below the subspace m.
    """
    if sel_s.n != sel_i.n:
        raise ParameterError("subspace dimensions differ")
    if sel_s.m != sel_i.m:
        raise ParameterError("subspace row counts differ")
    big_n = sel_s.n
    r_si = big_n * (sel_s.r - 1) + sel_i.r
    _, first = np.unique(r_si, return_index=True)
    keep = np.sort(first)
    p_si = (big_n * (sel_s.p - 1)[:, None] + sel_i.p[None, :]).reshape(-1)
    return JointSelector(
        subspace_dim=big_n,
        m=len(keep),
        r_si=r_si[keep],
        p_si=p_si,
        q_si=_inverse_permutation(p_si),
        r_s=sel_s.r[keep],
        r_i=sel_i.r[keep],
        sel_s=sel_s,
        sel_i=sel_i,
    )


def apply_joint(js, v):
    """A @ v over the N^2-length joint space."""
    return apply(js.as_selector(), v)


def apply_joint_adjoint(js, w):
    """A.T @ w over the N^2-length joint space."""
    return apply_adjoint(js.as_selector(), w)


def decompose_pm(row):
    """Split a +/-1 row into its (0,1) positive and negative parts.

    plus - minus reconstructs the row; the parts drive binary-modulator
    measurements that need separate detections per sign.
    """
    row = np.asarray(row)
    if not np.all(np.abs(row) == 1):
        raise ValueError("row entries must be +1 or -1")
    plus = np.maximum(row, 0)
    minus = np.maximum(-row, 0)
    return plus, minus


@dataclass(frozen=True)
class BlockDiagonalSensor:
    """Per-frame selectors sharing (n, m); frame k samples frame k only."""

    selectors: tuple

    def __post_init__(self):
        sels = tuple(self.selectors)
        if not sels:
            raise ParameterError("at least one frame selector required")
        n, m = sels[0].n, sels[0].m
        for s in sels:
            if (s.n, s.m) != (n, m):
                raise ParameterError("all frames must share (n, m)")
        object.__setattr__(self, "selectors", sels)

    @property
    def n_frames(self):
        return len(self.selectors)

    @property
    def n(self):
        return self.selectors[0].n

    @property
    def m(self):
        return self.selectors[0].m

    def apply(self, x):
        x = np.asarray(x)
        if x.shape != (self.n_frames * self.n,):
            raise DimensionError(
                f"expected length {self.n_frames * self.n}, got {x.shape}")
        frames = x.reshape(self.n_frames, self.n)
        return np.concatenate(
            [apply(s, f) for s, f in zip(self.selectors, frames)])

    def apply_adjoint(self, y):
        y = np.asarray(y)
        if y.shape != (self.n_frames * self.m,):
            raise DimensionError(
                f"expected length {self.n_frames * self.m}, got {y.shape}")
        blocks = y.reshape(self.n_frames, self.m)
        return np.concatenate(
            [apply_adjoint(s, b) for s, b in zip(self.selectors, blocks)])


def selector_to_dict(sel):
    return {
        "n": sel.n,
        "m": sel.m,
        "r": sel.r.tolist(),
        "p": sel.p.tolist(),
        "seed": sel.seed,
        "allow_dc": sel.allow_dc,
    }


def selector_from_dict(d):
    p = np.asarray(d["p"], dtype=np.int64)
    return PermutedSelector(
        n=int(d["n"]), m=int(d["m"]),
        r=np.asarray(d["r"], dtype=np.int64),
        p=p, q=_inverse_permutation(p),
        seed=d.get("seed"), allow_dc=bool(d.get("allow_dc", False)),
    )


def save_selector(sel, path):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(selector_to_dict(sel), fh, indent=2)


def load_selector(path):
    with open(path, encoding="utf-8") as fh:
        return selector_from_dict(json.load(fh))


def joint_to_dict(js):
    return {
        "N": js.subspace_dim,
        "m": js.m,
        "pairs": np.stack([js.r_s, js.r_i], axis=1).tolist(),
        "seeds": [js.sel_s.seed, js.sel_i.seed],
        "signal": selector_to_dict(js.sel_s),
        "idler": selector_to_dict(js.sel_i),
    }


def joint_from_dict(d):
    js = make_joint(selector_from_dict(d["signal"]),
                    selector_from_dict(d["idler"]))
    pairs = np.asarray(d["pairs"], dtype=np.int64)
    if not (np.array_equal(js.r_s, pairs[:, 0])
            and np.array_equal(js.r_i, pairs[:, 1])):
        raise ParameterError("stored joint pairs disagree with rebuild")
    return js


def save_joint(js, path):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(joint_to_dict(js), fh, indent=2)


def load_joint(path):
    with open(path, encoding="utf-8") as fh:
        return joint_from_dict(json.load(fh))
