import json

import numpy as np
import pytest

from psne_lab import (Dataset, DatasetMeta, LinearInfluenceGame, PsneSet,
                      SolverOptions, UsageError, enumerate_psne, lambda_schedule,
                      learn_game, psne_equivalent, random_lig, sample_dataset,
                      save_learned_game, signed_neighborhood_match,
                      theorem_lambda_window, zero_fit_threshold)


def admitted_game(n, k, seed, q):
    rng = np.random.default_rng(seed)
    while True:
        game = random_lig(n, k, rng)
        psne = enumerate_psne(game)
        if 0 < len(psne) < 2 ** n and len(psne) / 2 ** n < q:
            return game, psne


def test_learn_recovers_psne_set():
    game, psne = admitted_game(6, 1, seed=1, q=0.2)
    ds = sample_dataset(psne, 6, 0.2, 40000, seed=2)
    lam = 0.25 * zero_fit_threshold(ds)
    learned = learn_game(ds, lam)
    outcome = psne_equivalent(learned, psne)
    assert outcome.equal and outcome.missed == 0 and outcome.spurious == 0
    assert learned.lam == lam


def test_learn_recovers_signed_structure():
    # Three 2-cycles give |NE| = 8, so every non-parent product feature
    # still varies inside the equilibrium set and the true edge is the
    # only coordinate with a constant sign there.  A random one-parent
    # game with |NE| = 2 leaves all products constant on equilibria and
    # the parent unidentifiable, so structure is checked here instead.
    w = np.zeros((6, 6))
    w[0, 1] = w[1, 0] = 1.0
    w[2, 3] = w[3, 2] = 1.0
    w[4, 5] = w[5, 4] = -1.0
    game = LinearInfluenceGame(n=6, weights=w, bias=np.zeros(6))
    psne = enumerate_psne(game)
    assert len(psne) == 8
    ds = sample_dataset(psne, 6, 0.7, 40000, seed=2)
    lam = 0.25 * zero_fit_threshold(ds)
    learned = learn_game(ds, lam)
    outcome = psne_equivalent(learned, psne)
    assert outcome.equal and outcome.missed == 0 and outcome.spurious == 0
    assert all(signed_neighborhood_match(learned, game, zero_tol=1e-4))
    assert len(learned.fits) == 6


def test_learn_is_invariant_to_row_order():
    _, psne = admitted_game(5, 1, seed=3, q=0.3)
    ds = sample_dataset(psne, 5, 0.3, 3000, seed=4)
    perm = np.random.default_rng(5).permutation(ds.m)
    shuffled = Dataset(n=5, samples=ds.samples[perm], meta=ds.meta)
    a = learn_game(ds, 0.01)
    b = learn_game(shuffled, 0.01)
    assert np.array_equal(a.game.weights, b.game.weights)
    assert np.array_equal(a.game.bias, b.game.bias)


def test_learn_worker_count_does_not_change_result():
    _, psne = admitted_game(6, 2, seed=6, q=0.3)
    ds = sample_dataset(psne, 6, 0.3, 2000, seed=7)
    a = learn_game(ds, 0.02, workers=1)
    b = learn_game(ds, 0.02, workers=4)
    assert np.array_equal(a.game.weights, b.game.weights)
    assert np.array_equal(a.game.bias, b.game.bias)


def test_learned_game_has_zero_diagonal():
    _, psne = admitted_game(5, 2, seed=8, q=0.4)
    ds = sample_dataset(psne, 5, 0.4, 1000, seed=9)
    learned = learn_game(ds, 0.05)
    assert np.all(np.diag(learned.game.weights) == 0.0)


def test_zero_fit_threshold_is_exact():
    _, psne = admitted_game(6, 1, seed=10, q=0.25)
    ds = sample_dataset(psne, 6, 0.25, 5000, seed=11)
    thr = zero_fit_threshold(ds)
    at = learn_game(ds, thr)
    assert np.all(at.game.weights == 0.0) and np.all(at.game.bias == 0.0)
    above = learn_game(ds, thr * 1.000001)
    assert np.all(above.game.weights == 0.0) and np.all(above.game.bias == 0.0)
    below = learn_game(ds, thr * 0.95)
    moved = (np.abs(below.game.weights).sum() + np.abs(below.game.bias).sum())
    assert moved > 0.0


def test_zero_game_makes_every_action_spurious():
    game, psne = admitted_game(6, 1, seed=12, q=0.2)
    zero = LinearInfluenceGame(n=6, weights=np.zeros((6, 6)), bias=np.zeros(6))
    outcome = psne_equivalent(zero, psne)
    assert outcome.missed == 0
    assert outcome.spurious == 2 ** 6 - len(psne)
    assert not outcome.equal


def test_psne_comparison_counts():
    truth = PsneSet(n=3, codes=np.array([1, 4, 6]))
    # game whose PSNE set is everything: zero payoffs
    allgame = LinearInfluenceGame(n=3, weights=np.zeros((3, 3)), bias=np.zeros(3))
    out = psne_equivalent(allgame, truth)
    assert out.missed == 0 and out.spurious == 5
    # a game with an empty PSNE set
    w = np.array([[0.0, 1.0, 0.0], [-1.0, 0.0, 0.0], [-1.0, 0.0, 0.0]])
    empty = LinearInfluenceGame(n=3, weights=w, bias=np.zeros(3))
    assert len(enumerate_psne(empty)) == 0
    out = psne_equivalent(empty, truth)
    assert out.missed == 3 and out.spurious == 0


def test_signed_neighborhood_match_detects_sign_flip():
    w = np.array([[0.0, -1.0], [-1.0, 0.0]])
    truth = LinearInfluenceGame(n=2, weights=w, bias=np.zeros(2))
    flipped = LinearInfluenceGame(n=2, weights=-w, bias=np.zeros(2))
    assert signed_neighborhood_match(truth, truth) == [True, True]
    assert signed_neighborhood_match(flipped, truth) == [False, False]
    shrunk = LinearInfluenceGame(n=2, weights=w * 1e-9, bias=np.zeros(2))
    assert signed_neighborhood_match(shrunk, truth) == [False, False]


def test_lambda_schedule_formula():
    m, n, delta = 110020, 10, 0.01
    expected = np.sqrt((2.0 / m) * np.log(2.0 * n / delta))
    assert lambda_schedule(m, n, delta) == pytest.approx(expected, rel=1e-15)
    assert lambda_schedule(m, n, delta, 2.0) == pytest.approx(2 * expected, rel=1e-15)
    assert lambda_schedule(m, n, delta, 0.0) == 0.0
    with pytest.raises(UsageError):
        lambda_schedule(0, n, delta)
    with pytest.raises(UsageError):
        lambda_schedule(m, n, 1.5)
    with pytest.raises(UsageError):
        lambda_schedule(m, n, delta, -1.0)


def test_lambda_window_feasibility():
    # plentiful samples, healthy constants: window open
    win = theorem_lambda_window(10 ** 7, 10, 0.01, 1, 0.19, 1.0, 0.008, 0.27)
    assert win.feasible and win.lower < win.upper
    # tiny m blows up the noise term: window closed
    tight = theorem_lambda_window(10, 10, 0.01, 1, 0.19, 1.0, 0.008, 0.27)
    assert not tight.feasible
    # degenerate constants close it too
    bad = theorem_lambda_window(10 ** 7, 10, 0.01, 5, 0.01, 1.0, 0.5, 0.5)
    assert not bad.feasible


def test_save_learned_game(tmp_path):
    _, psne = admitted_game(5, 1, seed=13, q=0.3)
    ds = sample_dataset(psne, 5, 0.3, 500, seed=14)
    learned = learn_game(ds, 0.05)
    path = tmp_path / "learned.json"
    save_learned_game(learned, path)
    doc = json.loads(path.read_text())
    assert doc["n"] == 5 and doc["lambda"] == 0.05
    assert len(doc["fits"]) == 5
    assert {"player", "iterations", "final_objective", "kkt_residual",
            "converged"} <= set(doc["fits"][0])
    assert np.asarray(doc["w"]).shape == (5, 5)


def test_learn_game_validation():
    _, psne = admitted_game(5, 1, seed=15, q=0.3)
    ds = sample_dataset(psne, 5, 0.3, 100, seed=16)
    with pytest.raises(UsageError):
        learn_game(ds, -0.1)
    with pytest.raises(UsageError):
        learn_game(ds, 0.1, workers=0)
