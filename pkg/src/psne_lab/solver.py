"""Per-player logistic model: feature map, loss, and an l1 solver.

For player i and joint action x the feature vector is
z = (x_i * x_{-i}, x_i) with the bias coordinate last, and the parameter
vector is v = (w_{i,-i}, -b_i), so that v . z equals player i's payoff
identically.  Fitting minimizes

    (1/m) sum_l log(1 + exp(-v . z^(l)))  +  lambda * ||v||_1

by accelerated proximal gradient descent (FISTA) with a restart whenever
the objective would increase.

All loss utilities take an optional weights vector (nonnegative, summing
to 1) replacing the uniform 1/m average; collapsing duplicate sample
rows into weights is how large datasets stay cheap.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import UsageError

_POWER_ITERS = 20
_POWER_TOL = 1e-10


def featurize(x, i: int) -> np.ndarray:
    """Feature vector for player i: (x_i * x_j for j != i ascending, x_i)."""
    x = np.asarray(x)
    n = x.shape[0]
    if not 0 <= i < n:
        raise UsageError(f"player index {i} out of range for n={n}")
    z = np.empty(n)
    pos = 0
    for j in range(n):
        if j != i:
            z[pos] = float(x[i]) * float(x[j])
            pos += 1
    z[n - 1] = float(x[i])
    return z


def feature_matrix(samples: np.ndarray, i: int) -> np.ndarray:
    """featurize() applied to every row; returns float64 (m, n)."""
    samples = np.asarray(samples)
    m, n = samples.shape
    if not 0 <= i < n:
        raise UsageError(f"player index {i} out of range for n={n}")
    others = [j for j in range(n) if j != i]
    z = np.empty((m, n))
    z[:, : n - 1] = samples[:, others] * samples[:, i : i + 1]
    z[:, n - 1] = samples[:, i]
    return z


def pack_params(w_slice, bias: float) -> np.ndarray:
    """(w_{i,-i}, b_i) -> v.  The bias enters negated, in the last slot."""
    w_slice = np.asarray(w_slice, dtype=np.float64)
    return np.concatenate([w_slice, [-float(bias)]])


def unpack_params(v: np.ndarray) -> tuple[np.ndarray, float]:
    v = np.asarray(v, dtype=np.float64)
    return v[:-1].copy(), -float(v[-1])


def param_vector(game, i: int) -> np.ndarray:
    """True parameter vector v* of player i for a known game."""
    if not 0 <= i < game.n:
        raise UsageError(f"player index {i} out of range for n={game.n}")
    others = [j for j in range(game.n) if j != i]
    return pack_params(game.weights[i, others], game.bias[i])


def eta(t):
    """Logistic curvature sigma(t)(1 - sigma(t)); in (0, 1/4], even in t.

    Evaluated through exp(-|t|) only, so it underflows smoothly instead
    of overflowing.
    """
    t = np.asarray(t, dtype=np.float64)
    e = np.exp(-np.abs(t))
    out = e / (1.0 + e) ** 2
    return float(out) if out.ndim == 0 else out


def _inv_one_plus_exp(t: np.ndarray) -> np.ndarray:
    """1 / (1 + e^t) without overflow on either tail."""
    out = np.empty_like(t)
    pos = t >= 0
    e = np.exp(-t[pos])
    out[pos] = e / (1.0 + e)
    out[~pos] = 1.0 / (1.0 + np.exp(t[~pos]))
    return out


def _check_weights(weights, m: int) -> np.ndarray | None:
    if weights is None:
        return None
    w = np.asarray(weights, dtype=np.float64)
    if w.shape != (m,):
        raise UsageError(f"weights must have shape ({m},), got {w.shape}")
    if np.any(w < 0):
        raise UsageError("weights must be nonnegative")
    return w


def loss(v: np.ndarray, z_mat: np.ndarray, weights=None) -> float:
    """Average logistic loss: mean (or weighted sum) of log(1 + exp(-v.z))."""
    u = -(z_mat @ v)
    terms = np.maximum(u, 0.0) + np.log1p(np.exp(-np.abs(u)))
    w = _check_weights(weights, z_mat.shape[0])
    if w is None:
        return float(terms.mean())
    return float(w @ terms)


def gradient(v: np.ndarray, z_mat: np.ndarray, weights=None) -> np.ndarray:
    """Gradient of loss: average of -z / (1 + exp(v.z))."""
    p = _inv_one_plus_exp(z_mat @ v)
    w = _check_weights(weights, z_mat.shape[0])
    if w is None:
        return -(z_mat.T @ p) / z_mat.shape[0]
    return -(z_mat.T @ (w * p))


def hessian(v: np.ndarray, z_mat: np.ndarray, weights=None) -> np.ndarray:
    """Hessian of loss: average of eta(v.z) z z^T.  Symmetrized exactly."""
    coef = eta(z_mat @ v)
    w = _check_weights(weights, z_mat.shape[0])
    coef = coef / z_mat.shape[0] if w is None else coef * w
    h = z_mat.T @ (z_mat * coef[:, None])
    return 0.5 * (h + h.T)


def soft_threshold(t, tau):
    """Shrink toward zero by tau and clip: sign(t) * max(|t| - tau, 0)."""
    t = np.asarray(t, dtype=np.float64)
    out = np.sign(t) * np.maximum(np.abs(t) - tau, 0.0)
    return float(out) if out.ndim == 0 else out


def max_eigenvalue(mat: np.ndarray, iters: int = _POWER_ITERS,
                   tol: float = _POWER_TOL) -> float:
    """Largest eigenvalue of a symmetric PSD matrix by power iteration."""
    dim = mat.shape[0]
    vec = np.full(dim, 1.0 / math.sqrt(dim))
    lam = 0.0
    for _ in range(iters):
        nxt = mat @ vec
        norm = float(np.linalg.norm(nxt))
        if norm == 0.0:
            return 0.0
        vec = nxt / norm
        new_lam = float(vec @ (mat @ vec))
        if abs(new_lam - lam) <= tol * max(abs(new_lam), 1.0):
            return new_lam
        lam = new_lam
    return lam


@dataclass(frozen=True)
class SolverOptions:
    max_iters: int = 10000
    objective_tol: float = 1e-9
    kkt_tol: float = 1e-6
    initial_v: np.ndarray | None = None
    # The l1 penalty covers the bias coordinate by default; flip this to
    # exempt it.
    penalize_bias: bool = True


@dataclass(frozen=True)
class FitReport:
    v_hat: np.ndarray
    iterations: int
    final_objective: float
    kkt_residual: float
    converged: bool
    objectives: tuple = field(repr=False, default=())


def kkt_residual(v: np.ndarray, grad: np.ndarray, lam_vec: np.ndarray) -> float:
    """Max coordinatewise violation of the l1 stationarity conditions.

    Coordinates at exactly zero use the subgradient branch
    max(|g_j| - lambda_j, 0); ties |g_j| = lambda_j therefore read as
    satisfied.
    """
    on = v != 0.0
    r = np.where(on,
                 np.abs(grad + lam_vec * np.sign(v)),
                 np.maximum(np.abs(grad) - lam_vec, 0.0))
    return float(r.max())


def fit_l1_logistic(z_mat: np.ndarray, lam: float,
                    opts: SolverOptions | None = None,
                    weights=None) -> FitReport:
    """Minimize loss + lam * ||v||_1 by FISTA with adaptive restart.

    Step size is 1/L with L the largest eigenvalue of the quarter-scaled
    feature scatter (power iteration).  When the accelerated step would
    raise the objective, momentum is reset and a plain proximal step from
    the last accepted point is taken instead, so the reported objective
    sequence never increases.  Terminates after the relative objective
    change stays below objective_tol for 3 consecutive iterations, or at
    max_iters.
    """
    if opts is None:
        opts = SolverOptions()
    z_mat = np.asarray(z_mat, dtype=np.float64)
    if z_mat.ndim != 2 or z_mat.shape[0] < 1:
        raise UsageError(f"feature matrix must be 2-D with m >= 1, got shape {z_mat.shape}")
    if not (np.isfinite(lam) and lam >= 0):
        raise UsageError(f"lambda must be finite and >= 0, got {lam}")
    m, dim = z_mat.shape
    w = _check_weights(weights, m)

    scatter = z_mat.T @ (z_mat if w is None else z_mat * w[:, None])
    scatter = 0.25 * (scatter / m if w is None else scatter)
    lip = max_eigenvalue(0.5 * (scatter + scatter.T))
    lip = max(lip, 1e-12)

    lam_vec = np.full(dim, lam)
    if not opts.penalize_bias:
        lam_vec[-1] = 0.0
    tau = lam_vec / lip

    def objective(v):
        return loss(v, z_mat, w) + float(lam_vec @ np.abs(v))

    if opts.initial_v is None:
        x = np.zeros(dim)
    else:
        x = np.asarray(opts.initial_v, dtype=np.float64).copy()
        if x.shape != (dim,):
            raise UsageError(f"initial_v must have shape ({dim},), got {x.shape}")
    x_prev = x
    t_prev = 1.0
    f_x = objective(x)
    if not np.isfinite(f_x):
        raise RuntimeError("internal error: non-finite objective at the initial point")
    objectives = [f_x]
    stall = 0
    iterations = 0

    for _ in range(opts.max_iters):
        t = 0.5 * (1.0 + math.sqrt(1.0 + 4.0 * t_prev * t_prev))
        y = x + ((t_prev - 1.0) / t) * (x - x_prev)
        cand = soft_threshold(y - gradient(y, z_mat, w) / lip, tau)
        f_cand = objective(cand)
        if f_cand > f_x:
            # restart: drop momentum, plain proximal step from x
            cand = soft_threshold(x - gradient(x, z_mat, w) / lip, tau)
            f_cand = objective(cand)
            t = 1.0
            if f_cand > f_x:
                cand, f_cand = x, f_x
        if not np.isfinite(f_cand):
            raise RuntimeError("internal error: non-finite objective during iteration")
        x_prev, x = x, cand
        t_prev = t
        rel = abs(objectives[-1] - f_cand) / max(1.0, abs(objectives[-1]))
        objectives.append(f_cand)
        f_x = f_cand
        iterations += 1
        stall = stall + 1 if rel < opts.objective_tol else 0
        if stall >= 3:
            break

    resid = kkt_residual(x, gradient(x, z_mat, w), lam_vec)
    return FitReport(
        v_hat=x,
        iterations=iterations,
        final_objective=f_x,
        kkt_residual=resid,
        converged=resid <= opts.kkt_tol,
        objectives=tuple(objectives),
    )
