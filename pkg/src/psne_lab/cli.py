"""Command line interface.

Exit codes: 0 success, 1 usage error (bad flags, bad file contents,
violated preconditions), 2 runtime error (capacity limits, failed
computations).
"""

from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import replace

import numpy as np

from . import RNG_ALGORITHM, __version__
from .diagnostics import assumption_report, kappa, nu
from .errors import DomainError, PsneLabError, UsageError
from .game import (enumerate_psne, game_hash, load_game, min_psne_payoff,
                   random_lig, save_game)
from .harness import ExperimentConfig, calibrate_lambda, run_sweep, write_result
from .recovery import learn_game, psne_equivalent, save_learned_game
from .sampler import sample_dataset, save_dataset, load_dataset
from .solver import param_vector

PROG = "psne-lab"


class _Parser(argparse.ArgumentParser):
    """argparse exits with status 2 on bad flags; we need status 1 and a
    catchable exception instead."""

    def error(self, message):
        raise UsageError(f"{message}\n{self.format_usage().rstrip()}")


def build_parser() -> _Parser:
    parser = _Parser(prog=PROG, description=__doc__.splitlines()[0]
                     if __doc__ else None)
    parser.add_argument("--version", action="version",
                        version=f"{PROG} {__version__} rng={RNG_ALGORITHM}")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser,
                                metavar="command")

    p = sub.add_parser("gen-game", help="draw a random game and save it")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_gen_game)

    p = sub.add_parser("enumerate", help="enumerate the PSNE set of a game")
    p.add_argument("--game", required=True)
    p.add_argument("--out", default=None)
    p.set_defaults(func=_cmd_enumerate)

    p = sub.add_parser("sample", help="draw observations from a game's mixture")
    p.add_argument("--game", required=True)
    p.add_argument("--q", type=float, required=True)
    p.add_argument("--m", type=int, required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_sample)

    p = sub.add_parser("fit", help="learn a game from observations")
    p.add_argument("--data", required=True)
    p.add_argument("--lambda", dest="lam", type=float, required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_fit)

    p = sub.add_parser("recover",
                       help="learn from data and compare PSNE sets with a game")
    p.add_argument("--game", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--lambda", dest="lam", type=float, required=True)
    p.set_defaults(func=_cmd_recover)

    p = sub.add_parser("diagnose",
                       help="per-player assumption report for a game")
    p.add_argument("--game", required=True)
    p.add_argument("--q", type=float, required=True)
    p.set_defaults(func=_cmd_diagnose)

    p = sub.add_parser("sweep", help="run a sample-scaling experiment sweep")
    p.add_argument("--config", required=True)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--calibrate", action="store_true",
                   help="pick the lambda multiplier from {0.5, 1, 2} at the "
                        "top-of-grid cell first")
    p.set_defaults(func=_cmd_sweep)
    return parser


def _cmd_gen_game(args) -> int:
    game = random_lig(args.n, args.k, np.random.default_rng(args.seed))
    game = replace(game, seed=args.seed)
    save_game(game, args.out)
    print(f"game={game_hash(game)} n={game.n} k={args.k} out={args.out}")
    return 0


def _cmd_enumerate(args) -> int:
    game = load_game(args.game)
    psne = enumerate_psne(game)
    print(f"count={len(psne)}")
    for code in psne.codes:
        print(int(code))
    if args.out is not None:
        import json
        doc = {"n": psne.n, "game": game_hash(game),
               "codes": [int(c) for c in psne.codes]}
        with open(args.out, "w") as fh:
            json.dump(doc, fh, indent=1)
            fh.write("\n")
    return 0


def _cmd_sample(args) -> int:
    game = load_game(args.game)
    psne = enumerate_psne(game)
    dataset = sample_dataset(psne, game.n, args.q, args.m, seed=args.seed,
                             game_id=game_hash(game))
    save_dataset(dataset, args.out)
    print(f"m={dataset.m} n={dataset.n} q={args.q} ne={len(psne)} out={args.out}")
    return 0


def _cmd_fit(args) -> int:
    dataset = load_dataset(args.data)
    learned = learn_game(dataset, args.lam)
    save_learned_game(learned, args.out)
    total = sum(f.iterations for f in learned.fits)
    print(f"players={dataset.n} iterations={total} "
          f"converged={all(f.converged for f in learned.fits)} out={args.out}")
    return 0


def _cmd_recover(args) -> int:
    game = load_game(args.game)
    dataset = load_dataset(args.data)
    learned = learn_game(dataset, args.lam)
    truth = enumerate_psne(game)
    outcome = psne_equivalent(learned, truth)
    print(f"equal={outcome.equal} missed={outcome.missed} "
          f"spurious={outcome.spurious}")
    return 0


def _cmd_diagnose(args) -> int:
    game = load_game(args.game)
    psne = enumerate_psne(game)
    if len(psne) == 0:
        raise UsageError("game has no equilibria; nothing to diagnose")
    nu_val = nu(args.q, len(psne), game.n)
    rho = min_psne_payoff(game, psne)
    print(f"n={game.n} ne={len(psne)} rho_min={rho!r} nu={nu_val!r} "
          f"kappa={kappa(rho)!r}")
    for i in range(game.n):
        rep = assumption_report(game, psne, args.q, i)
        l1 = float(np.abs(param_vector(game, i)).sum())
        print(f"player={i} support={len(rep.support)} l1={l1!r} "
              f"c_min={rep.c_min_est!r} d_max={rep.d_max_est!r} "
              f"payoff_condition={rep.payoff_condition_met} "
              f"residual={rep.hessian_decomposition_residual:.3e}")
    return 0


def _cmd_sweep(args) -> int:
    config = ExperimentConfig.from_json_file(args.config)
    calibration = None
    if args.calibrate:
        calibration = calibrate_lambda(config)
        config = replace(config, lambda_multiplier=calibration["chosen"])
        print(f"calibrated lambda_multiplier={calibration['chosen']} "
              f"scores={calibration['scores']}")
    result = run_sweep(config)
    if calibration is not None:
        result = replace(result, calibration=calibration)
    json_path, csv_path = write_result(result, args.out_dir)
    for cell in result.cells:
        print(f"c={cell.c} m={cell.m} lambda={cell.lam!r} "
              f"probability={cell.recovery_probability!r}")
    print(f"wrote {json_path} and {csv_path}")
    return 0


def main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO, stream=sys.stderr,
                        format="%(message)s")
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if getattr(args, "func", None) is None:
            parser.error("a command is required")
        return args.func(args)
    except SystemExit as exc:
        # argparse --help/--version exit 0; anything else is routed
        # through _Parser.error and never lands here
        return 0 if exc.code in (0, None) else 1
    except (UsageError, DomainError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except PsneLabError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
