"""Population quantities for the mixture model and the bound expressions.

Everything here evaluates, at desk scale, the constants the recovery
guarantees are phrased in: the signal weight nu, the gradient-bias
constant kappa, the support-restricted Hessian and second-moment
eigenvalue extremes (C_min, D_max), the population-Hessian decomposition

    H* = nu * H_NE + (1 - nu) * H_Rad,

and the sample-size / regularization windows assembled from them.
Exact mode enumerates all 2^n actions and is capped at n = 16.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import CapacityError, DomainError, UsageError
from .game import LinearInfluenceGame, PsneSet, decode_actions, min_psne_payoff
from .sampler import pmf_table, sample_dataset
from .solver import eta, feature_matrix, gradient, hessian, param_vector

EXACT_MODE_CAP = 16


def nu(q: float, ne_size: int, n: int) -> float:
    """Signal weight (q - |NE|/2^n) / (1 - |NE|/2^n), in (0, 1)."""
    total = 1 << n
    if not 1 <= ne_size <= total - 1:
        raise DomainError(f"ne_size must be in [1, 2^n - 1], got {ne_size} at n={n}")
    r = ne_size / total
    if not r < q < 1.0:
        raise DomainError(f"q must lie in (|NE|/2^n, 1) = ({r}, 1), got {q}")
    return (q - r) / (1.0 - r)


def kappa(rho_min: float) -> float:
    """Gradient-bias constant 1/(1 + e^rho_min), in (0, 1/2]."""
    if not (np.isfinite(rho_min) and rho_min >= 0):
        raise UsageError(f"rho_min must be finite and >= 0, got {rho_min}")
    # exp of the negated argument keeps large rho_min from overflowing
    e = math.exp(-rho_min)
    return e / (1.0 + e)


def _all_features(game: LinearInfluenceGame, i: int) -> np.ndarray:
    total = 1 << game.n
    return feature_matrix(decode_actions(np.arange(total, dtype=np.int64), game.n), i)


def _check_exact_cap(n: int) -> None:
    if n > EXACT_MODE_CAP:
        raise CapacityError(
            f"exact mode enumerates 2^{n} actions per player; cap is n={EXACT_MODE_CAP}"
        )


@dataclass(frozen=True)
class HessianDecomposition:
    """H* with its two components; std_error is None in exact mode."""

    h_star: np.ndarray
    h_ne: np.ndarray
    h_rad: np.ndarray
    nu: float
    std_error: float | None = None


def expected_hessian(game: LinearInfluenceGame, psne: PsneSet, q: float, i: int,
                     mode: str = "exact", mc_samples: int = 200000,
                     rng: np.random.Generator | None = None) -> HessianDecomposition:
    """Population Hessian of the logistic loss at the true parameters.

    H_NE averages eta(v*.z) z z^T uniformly over the PSNE set; H_Rad
    averages it over all of {-1,+1}^n (exact mode) or over mc_samples
    uniform draws (monte_carlo mode, with a max-elementwise standard
    error reported).
    """
    if psne.n != game.n:
        raise UsageError("psne set and game disagree on n")
    nu_val = nu(q, len(psne), game.n)
    v_star = param_vector(game, i)

    z_ne = feature_matrix(psne.actions(), i)
    coef = eta(z_ne @ v_star) / len(psne)
    h_ne = z_ne.T @ (z_ne * coef[:, None])
    h_ne = 0.5 * (h_ne + h_ne.T)

    if mode == "exact":
        _check_exact_cap(game.n)
        z_all = _all_features(game, i)
        coef = eta(z_all @ v_star) / z_all.shape[0]
        h_rad = z_all.T @ (z_all * coef[:, None])
        se = None
    elif mode == "monte_carlo":
        if mc_samples < 2:
            raise UsageError(f"mc_samples must be >= 2, got {mc_samples}")
        if rng is None:
            rng = np.random.default_rng(0)
        codes = rng.integers(0, 1 << game.n, size=mc_samples)
        z_mc = feature_matrix(decode_actions(codes, game.n), i)
        vals = eta(z_mc @ v_star)
        coef = vals / mc_samples
        h_rad = z_mc.T @ (z_mc * coef[:, None])
        # feature entries are +-1, so every element of eta*z_a*z_b has
        # second moment E[eta^2]; the largest elementwise variance is
        # E[eta^2] - min(mean^2)
        second = float(np.mean(vals ** 2))
        var = max(second - float(np.min(h_rad ** 2)), 0.0)
        se = math.sqrt(var / mc_samples)
    else:
        raise UsageError(f"mode must be 'exact' or 'monte_carlo', got {mode!r}")
    h_rad = 0.5 * (h_rad + h_rad.T)
    h_star = nu_val * h_ne + (1.0 - nu_val) * h_rad
    return HessianDecomposition(h_star=h_star, h_ne=h_ne, h_rad=h_rad,
                                nu=nu_val, std_error=se)


def expected_hessian_direct(game: LinearInfluenceGame, psne: PsneSet, q: float,
                            i: int) -> np.ndarray:
    """H* straight from its definition: sum_x p(x) eta(v*.z) z z^T.

    Deliberately a separate code path from expected_hessian so the
    convex-decomposition algebra is checkable against it.
    """
    _check_exact_cap(game.n)
    if psne.n != game.n:
        raise UsageError("psne set and game disagree on n")
    probs = pmf_table(psne, q)
    z_all = _all_features(game, i)
    v_star = param_vector(game, i)
    weights = probs * eta(z_all @ v_star)
    return np.einsum("l,la,lb->ab", weights, z_all, z_all)


def second_moment(psne: PsneSet, q: float, i: int) -> np.ndarray:
    """Exact E[z z^T] under the mixture pmf."""
    _check_exact_cap(psne.n)
    probs = pmf_table(psne, q)
    z_all = feature_matrix(decode_actions(np.arange(1 << psne.n, dtype=np.int64), psne.n), i)
    mom = z_all.T @ (z_all * probs[:, None])
    return 0.5 * (mom + mom.T)


@dataclass(frozen=True)
class AssumptionReport:
    """Per-player estimates of the recovery-theory constants.

    c_min_est, d_max_est and payoff_condition_met are None when the
    player's true parameter vector is identically zero (empty support).
    """

    player: int
    c_min_est: float | None
    d_max_est: float | None
    nu: float
    kappa: float
    rho_min: float
    payoff_condition_met: bool | None
    hessian_decomposition_residual: float
    support: tuple[int, ...]


def assumption_report(game: LinearInfluenceGame, psne: PsneSet, q: float,
                      i: int) -> AssumptionReport:
    """Evaluate the eigenvalue constants on the support of player i.

    The support is the set of nonzero coordinates of v*, so the bias
    coordinate participates exactly when the player's true bias is
    nonzero.
    """
    v_star = param_vector(game, i)
    support = np.flatnonzero(v_star != 0.0)
    rho = min_psne_payoff(game, psne)
    decomp = expected_hessian(game, psne, q, i, mode="exact")
    direct = expected_hessian_direct(game, psne, q, i)
    residual = float(np.max(np.abs(decomp.h_star - direct)))
    if support.size == 0:
        return AssumptionReport(
            player=i, c_min_est=None, d_max_est=None, nu=decomp.nu,
            kappa=kappa(rho), rho_min=rho, payoff_condition_met=None,
            hessian_decomposition_residual=residual, support=(),
        )
    sub = np.ix_(support, support)
    c_min = float(np.linalg.eigvalsh(decomp.h_star[sub]).min())
    d_max = float(np.linalg.eigvalsh(second_moment(psne, q, i)[sub]).max())
    return AssumptionReport(
        player=i,
        c_min_est=c_min,
        d_max_est=d_max,
        nu=decomp.nu,
        kappa=kappa(rho),
        rho_min=rho,
        payoff_condition_met=bool(rho > 5.0 * c_min / d_max),
        hessian_decomposition_residual=residual,
        support=tuple(int(j) for j in support),
    )


def lemma2_gradient_bound(m: int, n: int, delta: float, nu_val: float,
                          kappa_val: float) -> float:
    """High-probability bound on ||grad loss(v*)||_inf: nu*kappa + noise."""
    if m < 1:
        raise UsageError(f"m must be >= 1, got {m}")
    if not 0 < delta < 1:
        raise UsageError(f"delta must be in (0,1), got {delta}")
    return nu_val * kappa_val + math.sqrt((2.0 / m) * math.log(2.0 * n / delta))


@dataclass(frozen=True)
class SampleComplexityBound:
    feasible: bool
    m_min: int | None
    big_k: float


def theorem_sample_bound(k: int, n: int, delta: float, c_min: float,
                         d_max: float, nu_val: float,
                         kappa_val: float) -> SampleComplexityBound:
    """Sample-size threshold from the recovery theorem.

    K = 5 C_min^2 / (32 k D_max) - nu*kappa must be positive for the
    first term to exist; otherwise the bound is infeasible (a value, not
    an error).
    """
    big_k = 5.0 * c_min ** 2 / (32.0 * k * d_max) - nu_val * kappa_val
    if big_k <= 0:
        return SampleComplexityBound(feasible=False, m_min=None, big_k=big_k)
    terms = (
        (2.0 / big_k ** 2) * math.log(6.0 * n * n / delta),
        (2.0 * k / c_min) * math.log(3.0 * k * n / delta),
        (4.0 * k / (1.0 - nu_val)) * math.log(3.0 * k * n / delta),
    )
    return SampleComplexityBound(feasible=True, m_min=int(math.ceil(max(terms))),
                                 big_k=big_k)


@dataclass(frozen=True)
class Lemma1Check:
    min_eig_pass_rate: float
    max_eig_pass_rate: float


def lemma1_eigenvalue_check(game: LinearInfluenceGame, psne: PsneSet, q: float,
                            i: int, m: int, trials: int,
                            seed: int = 0) -> Lemma1Check:
    """Finite-sample eigenvalue concentration, checked by simulation.

    Over fresh datasets of size m: fraction where the sample Hessian at
    v* restricted to the support has lambda_min >= C_min_est/2, and
    where the support-restricted scatter mean has lambda_max <=
    2*D_max_est.  The scatter is checked in mean-normalized form (the
    unnormalized sum scales with m and has no population counterpart).
    """
    if trials < 1:
        raise UsageError(f"trials must be >= 1, got {trials}")
    report = assumption_report(game, psne, q, i)
    if not report.support:
        raise DomainError("player has empty support; eigenvalue check undefined")
    sub = np.ix_(report.support, report.support)
    v_star = param_vector(game, i)
    seeds = np.random.SeedSequence(seed).generate_state(trials, dtype=np.uint64)
    min_pass = 0
    max_pass = 0
    for t in range(trials):
        ds = sample_dataset(psne, game.n, q, m, seed=int(seeds[t]))
        rows, counts = ds.collapsed()
        w = counts / float(m)
        z_mat = feature_matrix(rows, i)
        h_sample = hessian(v_star, z_mat, weights=w)
        scatter = z_mat.T @ (z_mat * w[:, None])
        if float(np.linalg.eigvalsh(h_sample[sub]).min()) >= report.c_min_est / 2.0:
            min_pass += 1
        if float(np.linalg.eigvalsh(scatter[sub]).max()) <= 2.0 * report.d_max_est:
            max_pass += 1
    return Lemma1Check(min_eig_pass_rate=min_pass / trials,
                       max_eig_pass_rate=max_pass / trials)
