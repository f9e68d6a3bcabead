"""Assemble learned games from per-player fits and judge PSNE recovery.

Each player's row of W and bias are estimated independently by the l1
logistic fit on that player's feature view of the same dataset; the
learned game's PSNE set is then enumerated and compared, as a set,
against the true one.  Exact set equality is the success criterion.
"""

from __future__ import annotations

import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import UsageError
from .game import (ENUMERATION_CAP, LinearInfluenceGame, PsneSet,
                   enumerate_psne, neighborhood)
from .sampler import Dataset
from .solver import (FitReport, SolverOptions, feature_matrix, fit_l1_logistic,
                     gradient, unpack_params)


@dataclass(frozen=True)
class LearnedGame:
    """A fitted game plus the per-player fit reports that built it."""

    game: LinearInfluenceGame
    fits: tuple[FitReport, ...]
    lam: float


def learn_game(dataset: Dataset, lam: float,
               opts: SolverOptions | None = None,
               workers: int = 1) -> LearnedGame:
    """Fit every player's row on the shared dataset.

    Duplicate sample rows are collapsed to weights first; each player
    then sees an (unique x n) feature matrix.  Players are independent,
    so any worker count produces the identical result; a non-converged
    fit is recorded in its report, never raised.
    """
    if lam < 0:
        raise UsageError(f"lambda must be >= 0, got {lam}")
    if workers < 1:
        raise UsageError(f"workers must be >= 1, got {workers}")
    n = dataset.n
    rows, counts = dataset.collapsed()
    weights = counts / float(dataset.m)

    def fit_player(i: int) -> FitReport:
        return fit_l1_logistic(feature_matrix(rows, i), lam, opts, weights=weights)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            fits = list(pool.map(fit_player, range(n)))
    else:
        fits = [fit_player(i) for i in range(n)]

    w_hat = np.zeros((n, n))
    b_hat = np.zeros(n)
    for i, fit in enumerate(fits):
        w_slice, bias = unpack_params(fit.v_hat)
        others = [j for j in range(n) if j != i]
        w_hat[i, others] = w_slice
        b_hat[i] = bias
    return LearnedGame(game=LinearInfluenceGame(n=n, weights=w_hat, bias=b_hat),
                       fits=tuple(fits), lam=float(lam))


def zero_fit_threshold(dataset: Dataset) -> float:
    """Smallest lambda at which every player's fit is exactly zero:
    max over players of ||grad loss(0)||_inf, on the collapsed view."""
    rows, counts = dataset.collapsed()
    weights = counts / float(dataset.m)
    zero = np.zeros(dataset.n)
    return max(
        float(np.max(np.abs(gradient(zero, feature_matrix(rows, i), weights))))
        for i in range(dataset.n)
    )


def lambda_schedule(m: int, n: int, delta: float, multiplier: float = 1.0) -> float:
    """Regularization schedule multiplier * sqrt((2/m) log(2n/delta))."""
    if m < 1:
        raise UsageError(f"m must be >= 1, got {m}")
    if n < 1:
        raise UsageError(f"n must be >= 1, got {n}")
    if not 0 < delta < 1:
        raise UsageError(f"delta must be in (0,1), got {delta}")
    if not (np.isfinite(multiplier) and multiplier >= 0):
        raise UsageError(f"multiplier must be finite and >= 0, got {multiplier}")
    return multiplier * math.sqrt((2.0 / m) * math.log(2.0 * n / delta))


@dataclass(frozen=True)
class LambdaWindow:
    lower: float
    upper: float
    feasible: bool


def theorem_lambda_window(m: int, n: int, delta: float, k: int, c_min: float,
                          d_max: float, nu_val: float,
                          kappa_val: float) -> LambdaWindow:
    """Regularization window from the recovery theorem (reporting only).

    lower = nu*kappa + sqrt((2/m) log(6 n^2/delta)), upper = 2K + nu*kappa
    minus the same noise term, K = 5 C_min^2/(32 k D_max) - nu*kappa.
    """
    noise = math.sqrt((2.0 / m) * math.log(6.0 * n * n / delta))
    bias = nu_val * kappa_val
    big_k = 5.0 * c_min ** 2 / (32.0 * k * d_max) - bias
    lower = bias + noise
    upper = 2.0 * big_k + bias - noise
    return LambdaWindow(lower=lower, upper=upper, feasible=lower <= upper)


@dataclass(frozen=True)
class PsneComparison:
    equal: bool
    missed: int
    spurious: int


def psne_equivalent(learned, truth: PsneSet,
                    cap: int = ENUMERATION_CAP) -> PsneComparison:
    """Enumerate the learned game's PSNE set and compare with truth.

    missed counts true equilibria the learned game loses; spurious
    counts learned equilibria the true game lacks.  Accepts a
    LearnedGame or a bare game.
    """
    game = learned.game if isinstance(learned, LearnedGame) else learned
    if game.n != truth.n:
        raise UsageError("learned game and truth disagree on n")
    learned_codes = enumerate_psne(game, cap=cap).codes
    missed = int(np.setdiff1d(truth.codes, learned_codes, assume_unique=True).size)
    spurious = int(np.setdiff1d(learned_codes, truth.codes, assume_unique=True).size)
    return PsneComparison(equal=(missed == 0 and spurious == 0),
                          missed=missed, spurious=spurious)


def signed_neighborhood_match(learned, truth: LinearInfluenceGame,
                              zero_tol: float = 1e-6) -> list[bool]:
    """Per player: does {j: |W_hat[i,j]| > zero_tol} with signs equal the
    true signed neighborhood?  Diagnostic only; recovery is judged on
    PSNE sets, not supports."""
    game = learned.game if isinstance(learned, LearnedGame) else learned
    if game.n != truth.n:
        raise UsageError("learned game and truth disagree on n")
    out = []
    for i in range(truth.n):
        est = neighborhood(game, i, zero_tol=zero_tol)
        ref = neighborhood(truth, i)
        out.append(est.neighbors == ref.neighbors and est.signs == ref.signs)
    return out


def save_learned_game(learned: LearnedGame, path) -> None:
    """Learned-game JSON: the usual game fields plus lambda and fits."""
    game = learned.game
    doc = {
        "n": game.n,
        "w": game.weights.tolist(),
        "b": game.bias.tolist(),
        "lambda": learned.lam,
        "fits": [
            {
                "player": i,
                "iterations": fit.iterations,
                "final_objective": fit.final_objective,
                "kkt_residual": fit.kkt_residual,
                "converged": fit.converged,
            }
            for i, fit in enumerate(learned.fits)
        ],
    }
    Path(path).write_text(json.dumps(doc, indent=1) + "\n")
