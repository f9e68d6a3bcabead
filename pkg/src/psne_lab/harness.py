"""Experiment orchestration for the sample-scaling recovery sweep.

A sweep fixes (n, k, q, delta) and walks a grid of control values c;
each cell draws `games` fresh random games, samples m(c) observations
per game with

    m(c) = floor(C_scale * 10^c * k^2 * ln(6 n^2 / delta)),

fits every player, and scores exact PSNE-set recovery.  All randomness
derives from sha256 of (base_seed, n, k, c, trial), so runs are
reproducible to the byte regardless of worker count.
"""

from __future__ import annotations

import hashlib
import json
import logging
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, replace
from pathlib import Path

import jsonschema
import numpy as np

from . import RNG_ALGORITHM, __version__
from .diagnostics import (EXACT_MODE_CAP, SampleComplexityBound,
                          assumption_report, kappa, lemma2_gradient_bound, nu,
                          theorem_sample_bound)
from .errors import PsneLabError, UsageError
from .game import enumerate_psne, game_hash, min_psne_payoff, random_lig
from .recovery import (LambdaWindow, lambda_schedule, learn_game,
                       psne_equivalent, theorem_lambda_window)
from .sampler import sample_dataset
from .solver import eta, feature_matrix, gradient, param_vector

logger = logging.getLogger("psne_lab.harness")

WORKERS_ENV_VAR = "PSNE_LAB_WORKERS"

# How many fresh seeds a trial slot may burn looking for an admissible
# (non-trivial, q-compatible, positive-rho_min) game.
MAX_GAME_DRAWS = 100

DEFAULT_C_GRID = (-1.0, -0.75, -0.5, -0.25, 0.0, 0.25, 0.5, 0.75, 1.0)

CONFIG_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "required": ["n", "k"],
    "properties": {
        "n": {"type": "integer", "minimum": 2},
        "k": {"type": "integer", "minimum": 1},
        "q": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
        "delta": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
        "lambda_multiplier": {"type": "number", "minimum": 0},
        "c_grid": {"type": "array", "minItems": 1, "items": {"type": "number"}},
        "c_scale": {"type": "number", "exclusiveMinimum": 0},
        "games": {"type": "integer", "minimum": 1},
        "base_seed": {"type": "integer"},
        "workers": {"type": "integer", "minimum": 0},
    },
}


def derive_seed(*parts) -> int:
    """Deterministic 63-bit seed from a tuple of identifying values."""
    text = ":".join(str(p) for p in parts)
    return int.from_bytes(hashlib.sha256(text.encode()).digest()[:8], "big") >> 1


@dataclass(frozen=True)
class ExperimentConfig:
    """Sweep parameters.  c_scale defaults to the protocol constant for
    the given k (10000 when k = 1, else 1000); workers = 0 means one per
    CPU."""

    n: int
    k: int
    q: float = 0.01
    delta: float = 0.01
    lambda_multiplier: float = 1.0
    c_grid: tuple[float, ...] = DEFAULT_C_GRID
    c_scale: float | None = None
    games: int = 40
    base_seed: int = 0
    workers: int = 1

    def __post_init__(self):
        if self.n < 2:
            raise UsageError(f"n must be >= 2, got {self.n}")
        if not 1 <= self.k <= self.n - 1:
            raise UsageError(f"k must be in [1, n-1], got k={self.k} for n={self.n}")
        for name in ("q", "delta"):
            val = getattr(self, name)
            if not 0 < val < 1:
                raise UsageError(f"{name} must be in (0,1), got {val}")
        if not (np.isfinite(self.lambda_multiplier) and self.lambda_multiplier >= 0):
            raise UsageError(f"lambda_multiplier must be >= 0, got {self.lambda_multiplier}")
        if self.games < 1:
            raise UsageError(f"games must be >= 1, got {self.games}")
        if self.workers < 0:
            raise UsageError(f"workers must be >= 0, got {self.workers}")
        if self.c_scale is not None and not self.c_scale > 0:
            raise UsageError(f"c_scale must be positive, got {self.c_scale}")
        grid = tuple(float(c) for c in self.c_grid)
        if not grid:
            raise UsageError("c_grid must be non-empty")
        if not all(np.isfinite(c) for c in grid):
            raise UsageError("c_grid values must be finite")
        object.__setattr__(self, "c_grid", grid)
        for c in grid:
            if self.m_for(c) < 1:
                raise UsageError(f"m(c) < 1 at c={c}; raise c_scale or c")

    @property
    def resolved_c_scale(self) -> float:
        if self.c_scale is not None:
            return float(self.c_scale)
        return 10000.0 if self.k == 1 else 1000.0

    def m_for(self, c: float) -> int:
        scale = self.resolved_c_scale
        return math.floor(scale * 10.0 ** c * self.k ** 2
                          * math.log(6.0 * self.n ** 2 / self.delta))

    def to_dict(self) -> dict:
        doc = asdict(self)
        doc["c_grid"] = list(self.c_grid)
        doc["c_scale"] = self.resolved_c_scale
        return doc

    @classmethod
    def from_dict(cls, doc: dict) -> "ExperimentConfig":
        try:
            jsonschema.validate(doc, CONFIG_SCHEMA)
        except jsonschema.ValidationError as exc:
            raise UsageError(f"invalid config: {exc.message}") from exc
        kwargs = dict(doc)
        if "c_grid" in kwargs:
            kwargs["c_grid"] = tuple(float(c) for c in kwargs["c_grid"])
        return cls(**kwargs)

    @classmethod
    def from_json_file(cls, path) -> "ExperimentConfig":
        try:
            doc = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise UsageError(f"cannot read config file {path}: {exc}") from exc
        if not isinstance(doc, dict):
            raise UsageError(f"config file {path} is not a JSON object")
        return cls.from_dict(doc)


@dataclass(frozen=True)
class PlayerDiagnostics:
    player: int
    support_size: int
    c_min_est: float
    d_max_est: float
    c_min_lower: float
    d_max_upper: float
    grad_norm_at_truth: float
    offsupport_grad_norm: float
    lemma2_bound: float
    payoff_condition_met: bool
    hessian_residual: float


@dataclass(frozen=True)
class TrialDiagnostics:
    nu: float
    kappa: float
    rho_min: float
    c_min: float
    d_max: float
    lambda_window: LambdaWindow
    sample_bound: SampleComplexityBound
    players: tuple[PlayerDiagnostics, ...]


@dataclass(frozen=True)
class TrialRecord:
    trial: int
    m: int
    lam: float
    ne_size: int | None
    rho_min: float | None
    rejections: tuple[str, ...]
    equal: bool
    missed: int | None
    spurious: int | None
    iterations: int
    all_converged: bool
    runtime: float
    error: str | None = None
    diagnostics: TrialDiagnostics | None = None


@dataclass(frozen=True)
class CellRecord:
    n: int
    k: int
    c: float
    m: int
    lam: float
    successes: int
    games: int
    recovery_probability: float
    mean_solver_iterations: float
    mean_runtime: float
    assumption_summaries: dict | None
    trials: tuple[TrialRecord, ...]
    error: str | None = None


@dataclass(frozen=True)
class ExperimentResult:
    cells: tuple[CellRecord, ...]
    config: ExperimentConfig
    version: str
    rng: str
    calibration: dict | None = None

    def to_dict(self) -> dict:
        return {
            "version": self.version,
            "rng": self.rng,
            "config": self.config.to_dict(),
            "calibration": self.calibration,
            "cells": [asdict(cell) for cell in self.cells],
        }


def _admissible_game(config: ExperimentConfig, c: float, trial: int):
    """Draw games until one passes the protocol filters; returns
    (game, psne, rho_min, rejection reasons)."""
    rejections = []
    for attempt in range(MAX_GAME_DRAWS):
        seed = derive_seed(config.base_seed, config.n, config.k, c, trial,
                           "game", attempt)
        game = random_lig(config.n, config.k, np.random.default_rng(seed))
        psne = enumerate_psne(game)
        ne, total = len(psne), 1 << config.n
        if ne == 0:
            rejections.append("empty-psne")
            continue
        if ne == total:
            rejections.append("full-psne")
            continue
        if not ne / total < config.q:
            rejections.append("q-range")
            continue
        rho = min_psne_payoff(game, psne)
        if rho <= 0:
            rejections.append("nonpositive-rho-min")
            continue
        return game, psne, rho, rejections
    return None, None, None, rejections


def _trial_diagnostics(config: ExperimentConfig, game, psne, dataset,
                       m: int) -> TrialDiagnostics:
    n = config.n
    nu_val = nu(config.q, len(psne), n)
    rho = min_psne_payoff(game, psne)
    kappa_val = kappa(rho)
    bound = lemma2_gradient_bound(m, n, config.delta, nu_val, kappa_val)
    rows, counts = dataset.collapsed()
    weights = counts / float(m)
    players = []
    for i in range(n):
        rep = assumption_report(game, psne, config.q, i)
        v_star = param_vector(game, i)
        lower = (1.0 - nu_val) * eta(float(np.abs(v_star).sum()))
        upper = nu_val * len(rep.support) + (1.0 - nu_val)
        # these are theorems about the model, not assumptions; a breach
        # means the implementation is wrong, so the trial must die loudly
        if rep.c_min_est < lower - 1e-9 or rep.d_max_est > upper + 1e-9:
            raise RuntimeError(
                f"internal error: eigenvalue bounds violated for player {i}: "
                f"C_min {rep.c_min_est} vs lower {lower}, "
                f"D_max {rep.d_max_est} vs upper {upper}"
            )
        grad = gradient(v_star, feature_matrix(rows, i), weights)
        off_support = np.ones(n, dtype=bool)
        off_support[np.asarray(rep.support, dtype=np.int64)] = False
        players.append(PlayerDiagnostics(
            player=i,
            support_size=len(rep.support),
            c_min_est=rep.c_min_est,
            d_max_est=rep.d_max_est,
            c_min_lower=lower,
            d_max_upper=upper,
            grad_norm_at_truth=float(np.max(np.abs(grad))),
            offsupport_grad_norm=float(np.max(np.abs(grad[off_support]))) if off_support.any() else 0.0,
            lemma2_bound=bound,
            payoff_condition_met=rep.payoff_condition_met,
            hessian_residual=rep.hessian_decomposition_residual,
        ))
    c_min = min(p.c_min_est for p in players)
    d_max = max(p.d_max_est for p in players)
    return TrialDiagnostics(
        nu=nu_val,
        kappa=kappa_val,
        rho_min=rho,
        c_min=c_min,
        d_max=d_max,
        lambda_window=theorem_lambda_window(m, n, config.delta, config.k,
                                            c_min, d_max, nu_val, kappa_val),
        sample_bound=theorem_sample_bound(config.k, n, config.delta, c_min,
                                          d_max, nu_val, kappa_val),
        players=tuple(players),
    )


def run_trial(config: ExperimentConfig, c: float, trial: int) -> TrialRecord:
    """One game draw, one dataset, one learned game, one verdict."""
    start = time.perf_counter()
    m = config.m_for(c)
    lam = lambda_schedule(m, config.n, config.delta, config.lambda_multiplier)
    try:
        game, psne, rho, rejections = _admissible_game(config, c, trial)
        if game is None:
            return TrialRecord(
                trial=trial, m=m, lam=lam, ne_size=None, rho_min=None,
                rejections=tuple(rejections), equal=False, missed=None,
                spurious=None, iterations=0, all_converged=False,
                runtime=time.perf_counter() - start,
                error=f"no admissible game in {MAX_GAME_DRAWS} draws",
            )
        data_seed = derive_seed(config.base_seed, config.n, config.k, c,
                                trial, "data")
        dataset = sample_dataset(psne, config.n, config.q, m, seed=data_seed,
                                 game_id=game_hash(game))
        learned = learn_game(dataset, lam)
        outcome = psne_equivalent(learned, psne)
        diagnostics = (_trial_diagnostics(config, game, psne, dataset, m)
                       if config.n <= EXACT_MODE_CAP else None)
        return TrialRecord(
            trial=trial, m=m, lam=lam, ne_size=len(psne), rho_min=rho,
            rejections=tuple(rejections), equal=outcome.equal,
            missed=outcome.missed, spurious=outcome.spurious,
            iterations=sum(f.iterations for f in learned.fits),
            all_converged=all(f.converged for f in learned.fits),
            runtime=time.perf_counter() - start,
            diagnostics=diagnostics,
        )
    except (PsneLabError, RuntimeError) as exc:
        return TrialRecord(
            trial=trial, m=m, lam=lam, ne_size=None, rho_min=None,
            rejections=(), equal=False, missed=None, spurious=None,
            iterations=0, all_converged=False,
            runtime=time.perf_counter() - start, error=str(exc),
        )


def _run_trial_star(args) -> TrialRecord:
    return run_trial(*args)


def _resolve_workers(config: ExperimentConfig) -> int:
    env = os.environ.get(WORKERS_ENV_VAR)
    if env is not None:
        try:
            workers = int(env)
        except ValueError as exc:
            raise UsageError(f"{WORKERS_ENV_VAR} must be an integer, got {env!r}") from exc
        if workers < 0:
            raise UsageError(f"{WORKERS_ENV_VAR} must be >= 0, got {workers}")
    else:
        workers = config.workers
    return workers if workers > 0 else (os.cpu_count() or 1)


def _summarize_assumptions(trials) -> dict | None:
    diags = [t.diagnostics for t in trials if t.diagnostics is not None]
    if not diags:
        return None
    players = [p for d in diags for p in d.players]
    return {
        "trials_with_diagnostics": len(diags),
        "c_min_est_min": min(p.c_min_est for p in players),
        "d_max_est_max": max(p.d_max_est for p in players),
        "lemma2_gradient_pass_rate":
            sum(p.grad_norm_at_truth <= p.lemma2_bound for p in players) / len(players),
        "lemma2_offsupport_pass_rate":
            sum(p.offsupport_grad_norm <= p.lemma2_bound for p in players) / len(players),
        "payoff_condition_rate":
            sum(bool(p.payoff_condition_met) for p in players) / len(players),
        "lambda_window_feasible_rate":
            sum(d.lambda_window.feasible for d in diags) / len(diags),
    }


def run_cell(config: ExperimentConfig, c: float) -> CellRecord:
    """All trials of one grid cell, in deterministic trial order."""
    c = float(c)
    m = config.m_for(c)
    lam = lambda_schedule(m, config.n, config.delta, config.lambda_multiplier)
    workers = _resolve_workers(config)
    jobs = [(config, c, t) for t in range(config.games)]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            trials = list(pool.map(_run_trial_star, jobs))
    else:
        trials = [run_trial(*job) for job in jobs]
    for rec in trials:
        if rec.rejections:
            logger.info("trial=%d cell=(%d,%d,%s) rejections=%d reasons=%s",
                        rec.trial, config.n, config.k, c,
                        len(rec.rejections), ",".join(rec.rejections))
        logger.info("trial=%d cell=(%d,%d,%s) m=%d equal=%s iters=%d",
                    rec.trial, config.n, config.k, c, rec.m, rec.equal,
                    rec.iterations)
    exhausted = sum(len(t.rejections) >= MAX_GAME_DRAWS for t in trials)
    error = (f"{exhausted} trial slots found no admissible game in "
             f"{MAX_GAME_DRAWS} draws" if exhausted else None)
    successes = sum(t.equal for t in trials)
    return CellRecord(
        n=config.n, k=config.k, c=c, m=m, lam=lam,
        successes=successes, games=config.games,
        recovery_probability=successes / config.games,
        mean_solver_iterations=sum(t.iterations for t in trials) / config.games,
        mean_runtime=sum(t.runtime for t in trials) / config.games,
        assumption_summaries=_summarize_assumptions(trials),
        trials=tuple(trials),
        error=error,
    )


def run_sweep(config: ExperimentConfig, out_dir=None) -> ExperimentResult:
    """run_cell over the whole grid, ascending in c; optionally write
    results.json and results.csv under out_dir."""
    cells = []
    for c in sorted(config.c_grid):
        try:
            cell = run_cell(config, c)
        except PsneLabError as exc:
            cell = CellRecord(
                n=config.n, k=config.k, c=float(c), m=config.m_for(c),
                lam=lambda_schedule(config.m_for(c), config.n, config.delta,
                                    config.lambda_multiplier),
                successes=0, games=config.games, recovery_probability=0.0,
                mean_solver_iterations=0.0, mean_runtime=0.0,
                assumption_summaries=None, trials=(), error=str(exc),
            )
        logger.info("cell=(%d,%d,%s) m=%d recovery=%s",
                    config.n, config.k, cell.c, cell.m,
                    cell.recovery_probability)
        cells.append(cell)
    result = ExperimentResult(cells=tuple(cells), config=config,
                              version=__version__, rng=RNG_ALGORITHM)
    if out_dir is not None:
        write_result(result, out_dir)
    return result


def result_csv(result: ExperimentResult) -> str:
    """Flat per-cell table; floats keep full repr so reruns are
    byte-identical."""
    lines = ["n,k,c,m,lambda,successes,games,probability"]
    for cell in result.cells:
        lines.append(
            f"{cell.n},{cell.k},{cell.c!r},{cell.m},{cell.lam!r},"
            f"{cell.successes},{cell.games},{cell.recovery_probability!r}"
        )
    return "\n".join(lines) + "\n"


def write_result(result: ExperimentResult, out_dir) -> tuple[Path, Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    json_path = out / "results.json"
    csv_path = out / "results.csv"
    json_path.write_text(json.dumps(result.to_dict(), indent=1) + "\n")
    csv_path.write_text(result_csv(result))
    return json_path, csv_path


def calibrate_lambda(config: ExperimentConfig,
                     multipliers=(0.5, 1.0, 2.0)) -> dict:
    """Recovery probability at the top-of-grid cell per candidate
    multiplier; ties go to the smallest multiplier."""
    if not multipliers:
        raise UsageError("multipliers must be non-empty")
    top = max(config.c_grid)
    scores = {}
    for mult in multipliers:
        cell = run_cell(replace(config, lambda_multiplier=float(mult)), top)
        scores[float(mult)] = cell.recovery_probability
        logger.info("calibration multiplier=%s recovery=%s", mult,
                    cell.recovery_probability)
    chosen = max(sorted(scores), key=lambda mult: scores[mult])
    return {"c": top, "scores": scores, "chosen": chosen}
