"""ADMM solvers for L1-regularized reconstruction.

Four solvers share the same augmented-Lagrangian skeleton:

* ``admm_lasso_dense``  - general (dense) sensing matrix, unitary sparse
  transform; x-update through the matrix-inversion lemma so only an m x m
  system is factored (LU cached until the penalty changes).
* ``admm_lasso_fast``   - permuted fast-transform sensing operator with
  F^T F = c I; every iterate costs O(n log n).
* ``admm_lasso_split``  - extra variable split for a non-unitary sparse
  transform; the x-update solves (c*beta I + gamma Psi^T Psi), closed-form
  for identity Psi, inner CG otherwise.
* ``admm_tv_video``     - anisotropic total variation over (x, y, t) with the
  x-update solved exactly per iteration by FFT diagonalization of
  M = beta*n I + gamma grad^T grad.

Penalties self-tune by the x2 / /2 residual-balancing rule every
``tune_interval`` iterations. Stopping uses relative primal/dual residuals
(the source algorithms state no rule): primal <= tol * max(|constraint
sides|) and dual <= tol * |multiplier|.
"""

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import lu_factor, lu_solve

from .errors import DimensionError, ParameterError, SolverError
from .hadamard import fwht
from .sensing import (BlockDiagonalSensor, JointSelector, PermutedSelector,
                      apply, apply_adjoint)

_TUNE_FACTOR = 10.0


@dataclass
class SolverConfig:
    """Knobs shared by the ADMM family.

    ``weight`` is the sparsity weight (the L1 coefficient of the objective).
    ``grad_weights`` only matter for the TV solver.
    """

    weight: float
    max_iters: int = 500
    tune_interval: int = 25
    tol: float = 1e-6
    grad_weights: tuple = (1.0, 1.0, 1.0)

    def __post_init__(self):
        if self.weight < 0:
            raise ParameterError("sparsity weight must be >= 0")
        if self.max_iters < 1 or self.tune_interval < 1:
            raise ParameterError("max_iters and tune_interval must be >= 1")
        if self.tol <= 0:
            raise ParameterError("tol must be positive")


@dataclass
class SolverState:
    """Final iterates plus the per-iteration convergence trace."""

    x: np.ndarray
    z: np.ndarray | None = None
    u: np.ndarray | None = None
    lambda1: np.ndarray | None = None
    lambda2: np.ndarray | None = None
    penalties: dict = field(default_factory=dict)
    iterations: int = 0
    converged: bool = False
    trace: list = field(default_factory=list)   # dict rows per iteration

    def trace_columns(self):
        if not self.trace:
            return []
        return list(self.trace[0].keys())


def write_trace_csv(state, path):
    """Dump the convergence trace (iteration, objective, residuals,
    penalties) as CSV."""
    cols = state.trace_columns()
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(",".join(cols) + "\n")
        for row in state.trace:
            fh.write(",".join(repr(row[c]) for c in cols) + "\n")


@dataclass(frozen=True)
class LinearOperatorHandle:
    """Forward/adjoint callables with declared shape.

    ``gram_constant`` is set when F^T F = c I holds for the underlying fast
    transform. The adjoint identity <Ax, y> = <x, A^T y> is spot-checked on
    seeded probe vectors at construction.
    """

    forward: object
    adjoint: object
    shape: tuple
    gram_constant: float | None = None
    check: bool = True

    def __post_init__(self):
        m, n = self.shape
        if m < 1 or n < 1:
            raise ParameterError("operator shape must be positive")
        if self.check:
            rng = np.random.default_rng(12345)
            for _ in range(2):
                x = rng.standard_normal(n)
                y = rng.standard_normal(m)
                ax = np.asarray(self.forward(x))
                aty = np.asarray(self.adjoint(y))
                if ax.shape != (m,) or aty.shape != (n,):
                    raise DimensionError("operator output shape mismatch")
                lhs = np.vdot(ax, y)
                rhs = np.vdot(x, aty)
                scale = max(np.linalg.norm(ax) * np.linalg.norm(y), 1.0)
                if abs(lhs - rhs) > 1e-8 * scale:
                    raise ParameterError(
                        f"adjoint identity violated: {lhs} vs {rhs}")


def identity_operator(n):
    return LinearOperatorHandle(lambda v: np.asarray(v, dtype=float).copy(),
                                lambda v: np.asarray(v, dtype=float).copy(),
                                (n, n), gram_constant=1.0, check=False)


def matrix_operator(a):
    a = np.asarray(a)
    ah = a.conj().T
    return LinearOperatorHandle(lambda v: a @ v, lambda v: ah @ v, a.shape)


def selector_operator(sel):
    """Wrap a permuted-Hadamard selector; H^T H = n I gives the gram
    constant."""
    if isinstance(sel, JointSelector):
        sel = sel.as_selector()
    return LinearOperatorHandle(lambda v: apply(sel, v),
                                lambda v: apply_adjoint(sel, v),
                                (sel.m, sel.n), gram_constant=float(sel.n),
                                check=False)


def gradient_handle(g):
    return LinearOperatorHandle(g.apply, g.apply_adjoint,
                                (3 * g.size, g.size), check=False)


def soft_threshold(x, alpha):
    """Proximal operator of alpha * L1: shrink magnitudes toward zero.

    Complex entries keep their phase; entries with |x| <= alpha vanish.
    """
    if alpha < 0:
        raise ParameterError("threshold must be >= 0")
    x = np.asarray(x)
    if np.iscomplexobj(x):
        mag = np.abs(x)
        shrunk = np.maximum(mag - alpha, 0.0)
        with np.errstate(invalid="ignore", divide="ignore"):
            phase = np.where(mag > 0, x / np.where(mag > 0, mag, 1.0), 0.0)
        return phase * shrunk
    return np.sign(x) * np.maximum(np.abs(x) - alpha, 0.0)


# ---------------------------------------------------------------------------
# LASSO: 0.5 |A x - b|^2 + weight * |Psi x|_1, Psi unitary
# ---------------------------------------------------------------------------

def _lasso_objective(forward, b, x, psi, beta):
    resid = forward(x) - b
    return 0.5 * float(np.real(np.vdot(resid, resid))) \
        + beta * float(np.sum(np.abs(psi.forward(x))))


def _lasso_loop(forward, x_update, b, psi, cfg, atb, on_rho_change):
    """Shared three-step iteration; ``x_update(rhs, rho)`` solves the
    ridge-regularized normal equations for the current penalty."""
    beta = cfg.weight
    x0 = atb
    px0 = psi.forward(x0)
    denom = float(np.mean(np.abs(px0)))
    if denom == 0.0:
        # A^T b = 0: x = 0 already satisfies the optimality condition
        state = SolverState(x=np.zeros_like(x0), converged=True)
        return np.zeros_like(x0), state
    rho = beta / denom if beta > 0 else 1.0 / denom
    on_rho_change(rho)
    z = soft_threshold(px0, beta / rho)
    lam = rho * (px0 - z)
    x = x0
    state = SolverState(x=x, penalties={"rho": rho})
    for k in range(cfg.max_iters):
        rhs = atb + rho * psi.adjoint(z - lam / rho)
        x = x_update(rhs, rho)
        px = psi.forward(x)
        z_old = z
        z = soft_threshold(px + lam / rho, beta / rho)
        lam = lam + rho * (px - z)
        primal = float(np.linalg.norm(px - z))
        dual = rho * float(np.linalg.norm(z - z_old))
        state.trace.append({
            "iteration": k,
            "objective": _lasso_objective(forward, b, x, psi, beta),
            "primal_residual": primal,
            "dual_residual": dual,
            "rho": rho,
        })
        p_ref = cfg.tol * max(np.linalg.norm(px), np.linalg.norm(z))
        d_ref = cfg.tol * np.linalg.norm(lam)
        if primal <= p_ref and dual <= d_ref:
            state.converged = True
            state.iterations = k + 1
            break
        if (k + 1) % cfg.tune_interval == 0:
            if primal > _TUNE_FACTOR * dual:
                rho *= 2.0
                on_rho_change(rho)
            elif dual > _TUNE_FACTOR * primal:
                rho *= 0.5
                on_rho_change(rho)
    else:
        state.iterations = cfg.max_iters
    state.x, state.z = x, z
    state.lambda1 = lam
    state.penalties = {"rho": rho}
    return x, state


def admm_lasso_dense(a, b, psi=None, cfg=None):
    """LASSO with a general (dense) sensing matrix and unitary Psi.

    The x-update inverts (A^+ A + rho I) through the matrix-inversion lemma,
    factoring only (I + A A^+ / rho); the LU factors are reused until a
    tuning event changes rho.
    """
    a = np.asarray(a)
    b = np.asarray(b)
    m, n = a.shape
    if b.shape != (m,):
        raise DimensionError(f"b must have length {m}")
    if cfg is None:
        raise ParameterError("cfg is required")
    psi = psi or identity_operator(n)
    if not np.any(b):
        return np.zeros(n), SolverState(x=np.zeros(n), converged=True)
    ah = a.conj().T
    gram = a @ ah                       # m x m, formed once
    atb = ah @ b
    cache = {}

    def on_rho_change(rho):
        cache["lu"] = lu_factor(np.eye(m) + gram / rho)

    def x_update(rhs, rho):
        mu = lu_solve(cache["lu"], a @ rhs)
        return (rhs - ah @ mu / rho) / rho

    return _lasso_loop(lambda v: a @ v, lambda v: ah @ v, x_update,
                       b, psi, cfg, atb, on_rho_change)


def _row_groups(sel):
    """Group duplicate row picks; A A^T = c P_r P_r^T is block-ones over
    these groups."""
    _, inverse, counts = np.unique(sel.r, return_inverse=True,
                                   return_counts=True)
    return inverse, counts.astype(float)


def admm_lasso_fast(sel, b, psi=None, cfg=None):
    """LASSO where A = P_r F P_c with F^T F = c I (c = n for the
    unnormalized Hadamard transform); every step uses fast transforms.

    A A^T = c P_r P_r^T, which is the identity only when all row picks are
    distinct; repeated picks form all-ones blocks whose inverse has a closed
    form, so the x-update stays exact and O(n log n) either way.
    """
    if isinstance(sel, JointSelector):
        sel = sel.as_selector()
    b = np.asarray(b, dtype=float)
    if b.shape != (sel.m,):
        raise DimensionError(f"b must have length {sel.m}")
    if cfg is None:
        raise ParameterError("cfg is required")
    n = sel.n
    c = float(n)
    psi = psi or identity_operator(n)
    if not np.any(b):
        return np.zeros(n), SolverState(x=np.zeros(n), converged=True)
    forward = lambda v: apply(sel, v)
    adjoint = lambda v: apply_adjoint(sel, v)
    atb = adjoint(b)
    group_index, group_sizes = _row_groups(sel)
    has_repeats = bool(np.any(group_sizes > 1))

    def x_update(rhs, rho):
        if not has_repeats:
            return (rhs - adjoint(forward(rhs)) / (rho + c)) / rho
        # (I + (c/rho) P_r P_r^T)^{-1} w, per duplicate group
        w = forward(rhs)
        aa = c / rho
        sums = np.bincount(group_index, weights=w,
                           minlength=len(group_sizes))
        w = w - (aa * sums / (1.0 + aa * group_sizes))[group_index]
        return (rhs - adjoint(w) / rho) / rho

    return _lasso_loop(forward, adjoint, x_update, b, psi, cfg, atb,
                       lambda rho: None)


def cg_solve(op_apply, rhs, x0=None, tol=1e-10, max_iters=200):
    """Plain conjugate gradient for an SPD operator given as a callable."""
    x = np.zeros_like(rhs) if x0 is None else x0.copy()
    r = rhs - op_apply(x)
    p = r.copy()
    rs = float(r @ r)
    target = tol * math.sqrt(float(rhs @ rhs)) + 1e-300
    for _ in range(max_iters):
        if math.sqrt(rs) <= target:
            return x, True
        ap = op_apply(p)
        alpha = rs / float(p @ ap)
        x += alpha * p
        r -= alpha * ap
        rs_new = float(r @ r)
        p = r + (rs_new / rs) * p
        rs = rs_new
    return x, math.sqrt(rs) <= target


def admm_lasso_split(sel, b, psi=None, cfg=None, x_solver=None):
    """Triple-split LASSO for a possibly non-unitary Psi.

    Constraints F P_c x = u and Psi x = z give the five-step iteration
    (x, u, z, lambda1, lambda2). The x-update needs
    (c*beta I + gamma Psi^T Psi)^{-1}; pass ``x_solver(rhs, cbeta, gamma)``
    when a closed form exists (circulant Psi^T Psi), otherwise an inner
    conjugate-gradient solve is used.
    """
    if isinstance(sel, JointSelector):
        sel = sel.as_selector()
    b = np.asarray(b, dtype=float)
    if b.shape != (sel.m,):
        raise DimensionError(f"b must have length {sel.m}")
    if cfg is None:
        raise ParameterError("cfg is required")
    n = sel.n
    c = float(n)
    alpha = cfg.weight
    identity_psi = psi is None
    psi = psi or identity_operator(n)

    q0 = sel.q - 1
    p0 = sel.p - 1
    r0 = sel.r - 1
    fpc = lambda v: fwht(v[q0])                 # F P_c
    fpc_t = lambda v: fwht(v)[p0]               # P_c^T F^T
    counts = np.bincount(r0, minlength=n).astype(float)   # P_r^T P_r diagonal
    prt_b = np.zeros(n)
    np.add.at(prt_b, r0, b)

    if not np.any(b):
        return np.zeros(n), SolverState(x=np.zeros(n), converged=True)

    x = apply_adjoint(sel, b)
    px = psi.forward(x)
    denom = float(np.mean(np.abs(px)))
    if denom == 0.0:
        return np.zeros(n), SolverState(x=np.zeros(n), converged=True)
    beta = 0.1
    gamma = alpha / denom if alpha > 0 else 1.0 / denom
    u = fpc(x)
    z = soft_threshold(px, alpha / gamma)
    lam1 = np.zeros(n)
    lam2 = np.zeros_like(z)

    def default_solver(rhs, cbeta, gam):
        if identity_psi:
            return rhs / (cbeta + gam)
        op = lambda v: cbeta * v + gam * psi.adjoint(psi.forward(v))
        sol, ok = cg_solve(op, rhs, x0=x, tol=1e-12, max_iters=400)
        if not ok:
            raise SolverError(
                f"inner CG for the x-update failed at iteration {k}")
        return sol

    solver = x_solver or default_solver
    state = SolverState(x=x)
    for k in range(cfg.max_iters):
        rhs = fpc_t(beta * u - lam1) + psi.adjoint(gamma * z - lam2)
        x = solver(rhs, c * beta, gamma)
        fx = fpc(x)
        px = psi.forward(x)
        u_old = u
        u = (prt_b + beta * fx + lam1) / (counts + beta)
        z_old = z
        z = soft_threshold(px + lam2 / gamma, alpha / gamma)
        lam1 = lam1 + beta * (fx - u)
        lam2 = lam2 + gamma * (px - z)
        pr1 = float(np.linalg.norm(fx - u))
        pr2 = float(np.linalg.norm(px - z))
        du1 = beta * float(np.linalg.norm(u - u_old))
        du2 = gamma * float(np.linalg.norm(z - z_old))
        primal = math.hypot(pr1, pr2)
        dual = math.hypot(du1, du2)
        resid = apply(sel, x) - b
        state.trace.append({
            "iteration": k,
            "objective": 0.5 * float(resid @ resid)
            + alpha * float(np.sum(np.abs(px))),
            "primal_residual": primal,
            "dual_residual": dual,
            "beta": beta,
            "gamma": gamma,
        })
        p_ref = cfg.tol * max(math.hypot(np.linalg.norm(fx),
                                         np.linalg.norm(px)),
                              math.hypot(np.linalg.norm(u),
                                         np.linalg.norm(z)))
        d_ref = cfg.tol * math.hypot(np.linalg.norm(lam1),
                                     np.linalg.norm(lam2))
        if primal <= p_ref and dual <= d_ref:
            state.converged = True
            state.iterations = k + 1
            break
        if (k + 1) % cfg.tune_interval == 0:
            if pr1 > _TUNE_FACTOR * du1:
                beta *= 2.0
            elif du1 > _TUNE_FACTOR * pr1:
                beta *= 0.5
            if pr2 > _TUNE_FACTOR * du2:
                gamma *= 2.0
            elif du2 > _TUNE_FACTOR * pr2:
                gamma *= 0.5
    else:
        state.iterations = cfg.max_iters
    state.x, state.z, state.u = x, z, u
    state.lambda1, state.lambda2 = lam1, lam2
    state.penalties = {"beta": beta, "gamma": gamma}
    return x, state


# ---------------------------------------------------------------------------
# TV video: 0.5 |A x - b|^2 + weight * TV(x), anisotropic over (x, y, t)
# ---------------------------------------------------------------------------

def _as_sensor(sensor):
    if isinstance(sensor, PermutedSelector):
        return BlockDiagonalSensor(selectors=(sensor,))
    return sensor


def admm_tv_video(sensor, b, grad, cfg):
    """Anisotropic TV reconstruction of n_frames images sampled frame-wise
    by permuted-Hadamard selectors.

    The x-update solves M x = rhs exactly each iteration with an FFT over
    the (frames, y, x) grid, using the first column of
    M = beta*n I + gamma grad^T grad; the column is recomputed whenever a
    tuning event changes beta or gamma. With a single frame the time
    gradient is identically zero and the FFT degenerates to 2-D.
    """
    sensor = _as_sensor(sensor)
    b = np.asarray(b, dtype=float)
    n_f, n = sensor.n_frames, sensor.n
    if grad.n_frames != n_f or grad.n_x * grad.n_y != n:
        raise DimensionError("gradient operator does not match sensor")
    if b.shape != (n_f * sensor.m,):
        raise DimensionError(f"b must have length {n_f * sensor.m}")
    alpha = cfg.weight
    shape3 = (n_f, grad.n_y, grad.n_x)

    hpc = lambda v: np.concatenate(
        [fwht(f[s.q - 1]) for s, f in zip(sensor.selectors,
                                          v.reshape(n_f, n))])
    hpc_t = lambda v: np.concatenate(
        [fwht(f)[s.p - 1] for s, f in zip(sensor.selectors,
                                          v.reshape(n_f, n))])
    counts = np.concatenate(
        [np.bincount(s.r - 1, minlength=n) for s in sensor.selectors]
    ).astype(float)
    prt_b = np.zeros(n_f * n)
    for i, s in enumerate(sensor.selectors):
        np.add.at(prt_b[i * n:(i + 1) * n], s.r - 1,
                  b[i * sensor.m:(i + 1) * sensor.m])

    lap_col = grad.laplacian_first_column().reshape(shape3)

    def eigenvalues(beta, gamma):
        eig = beta * n + gamma * np.fft.fftn(lap_col)
        return eig.real  # symmetric PSD circulant: spectrum is real

    x = sensor.apply_adjoint(b)
    gx = grad.apply(x)
    denom = float(np.mean(np.abs(gx)))
    if denom == 0.0:
        denom = 1.0
    beta = 0.1
    gamma = alpha / denom if alpha > 0 else 1.0 / denom
    lam1 = np.zeros(n_f * n)
    lam2 = np.zeros(3 * n_f * n)
    u = hpc(x)
    z_prev = soft_threshold(gx, alpha / gamma)
    eig = eigenvalues(beta, gamma)

    state = SolverState(x=x)
    for k in range(cfg.max_iters):
        gx = grad.apply(x)
        z = soft_threshold(gx + lam2 / gamma, alpha / gamma)
        u_old = u
        u = (prt_b + beta * hpc(x) + lam1) / (counts + beta)
        rhs = hpc_t(beta * u - lam1) + grad.apply_adjoint(gamma * z - lam2)
        x = np.fft.ifftn(np.fft.fftn(rhs.reshape(shape3)) / eig).real.ravel()
        hx = hpc(x)
        gx_new = grad.apply(x)
        lam1 = lam1 + beta * (hx - u)
        lam2 = lam2 + gamma * (gx_new - z)
        pr1 = float(np.linalg.norm(hx - u))
        pr2 = float(np.linalg.norm(gx_new - z))
        du1 = beta * float(np.linalg.norm(u - u_old))
        du2 = gamma * float(np.linalg.norm(z - z_prev))
        z_prev = z
        primal = math.hypot(pr1, pr2)
        resid = sensor.apply(x) - b
        state.trace.append({
            "iteration": k,
            "objective": 0.5 * float(resid @ resid)
            + alpha * float(np.sum(np.abs(gx_new))),
            "primal_residual": primal,
            "dual_residual": math.hypot(du1, du2),
            "beta": beta,
            "gamma": gamma,
        })
        p_ref = cfg.tol * max(math.hypot(np.linalg.norm(hx),
                                         np.linalg.norm(gx_new)),
                              math.hypot(np.linalg.norm(u),
                                         np.linalg.norm(z)))
        d_ref = cfg.tol * math.hypot(np.linalg.norm(lam1),
                                     np.linalg.norm(lam2))
        if primal <= p_ref and math.hypot(du1, du2) <= d_ref:
            state.converged = True
            state.iterations = k + 1
            break
        if (k + 1) % cfg.tune_interval == 0:
            changed = False
            if pr1 > _TUNE_FACTOR * du1:
                beta, changed = beta * 2.0, True
            elif du1 > _TUNE_FACTOR * pr1:
                beta, changed = beta * 0.5, True
            if pr2 > _TUNE_FACTOR * du2:
                gamma, changed = gamma * 2.0, True
            elif du2 > _TUNE_FACTOR * pr2:
                gamma, changed = gamma * 0.5, True
            if changed:
                eig = eigenvalues(beta, gamma)
    else:
        state.iterations = cfg.max_iters
    state.x, state.z, state.u = x, z, u
    state.lambda1, state.lambda2 = lam1, lam2
    state.penalties = {"beta": beta, "gamma": gamma}
    return x, state


def cg_least_squares(op, b, tol=1e-8, max_iters=None):
    """Minimize |op(x) - b|_2 by conjugate gradient on the normal equations.

    Stops when |A^T (A x - b)| <= tol * |A^T b|. Started from zero, a
    rank-deficient system converges to the least-norm solution. Returns
    (x, converged).
    """
    b = np.asarray(b, dtype=float)
    m, n = op.shape
    if b.shape != (m,):
        raise DimensionError(f"b must have length {m}")
    atb = np.asarray(op.adjoint(b), dtype=float)
    target = tol * np.linalg.norm(atb)
    x = np.zeros(n)
    r = b.copy()
    s = atb.copy()
    p = s.copy()
    gamma = float(s @ s)
    if max_iters is None:
        max_iters = 4 * n
    for _ in range(max_iters):
        if math.sqrt(gamma) <= target:
            return x, True
        q = np.asarray(op.forward(p), dtype=float)
        qq = float(q @ q)
        if qq == 0.0:
            break
        step = gamma / qq
        x += step * p
        r -= step * q
        s = np.asarray(op.adjoint(r), dtype=float)
        gamma_new = float(s @ s)
        p = s + (gamma_new / gamma) * p
        gamma = gamma_new
    return x, math.sqrt(gamma) <= target
