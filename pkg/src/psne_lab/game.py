"""Linear influence games over binary actions.

A game on n players is a pair (W, b): an n x n weight matrix with zero
diagonal and a length-n bias vector.  Every player picks an action in
{-1, +1}; player i's payoff under joint action x is

    x_i * (sum_j W[i, j] * x_j - b[i])

and x is a pure-strategy Nash equilibrium (PSNE) when every player's
payoff is >= 0, i.e. nobody gains by flipping their own action.  The
comparison is exact; there is no tolerance anywhere in the equilibrium
definition.

Joint actions are encoded as integers: bit i holds player i's action
(0 for -1, 1 for +1), player 0 in the least significant bit.  Ascending
codes give the canonical enumeration order.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .errors import CapacityError, DomainError, UsageError

# Full enumeration walks all 2^n joint actions; past this n the walk is
# refused rather than silently taking hours.
ENUMERATION_CAP = 25

_CHUNK = 1 << 16


def decode_actions(codes, n: int) -> np.ndarray:
    """Decode integer codes to rows of {-1, +1} actions, player 0 in bit 0."""
    codes = np.asarray(codes, dtype=np.int64)
    # column at a time; a broadcast over all n bits would transiently
    # need m x n int64
    out = np.empty((codes.size, n), dtype=np.int8)
    for j in range(n):
        out[:, j] = ((codes >> j) & 1).astype(np.int8) * 2 - 1
    return out


def encode_actions(actions) -> np.ndarray:
    """Inverse of decode_actions; accepts a single action row or a matrix."""
    x = np.asarray(actions)
    single = x.ndim == 1
    if single:
        x = x[None, :]
    codes = np.zeros(x.shape[0], dtype=np.int64)
    for j in range(x.shape[1]):
        codes |= (x[:, j] > 0).astype(np.int64) << j
    return codes[0] if single else codes


def _as_action(x, n: int) -> np.ndarray:
    arr = np.asarray(x)
    if arr.shape != (n,):
        raise UsageError(f"joint action must have length {n}, got shape {arr.shape}")
    if not np.all(np.abs(arr) == 1):
        raise UsageError("joint action entries must be -1 or +1")
    return arr.astype(np.int8)


@dataclass(frozen=True)
class LinearInfluenceGame:
    """Immutable (W, b) pair.  seed and k are optional provenance tags."""

    n: int
    weights: np.ndarray
    bias: np.ndarray
    seed: int | None = None
    k: int | None = None

    def __post_init__(self):
        if self.n < 1:
            raise UsageError(f"n must be >= 1, got {self.n}")
        w = np.array(self.weights, dtype=np.float64)
        b = np.array(self.bias, dtype=np.float64)
        if w.shape != (self.n, self.n):
            raise UsageError(f"weights must be {self.n}x{self.n}, got {w.shape}")
        if b.shape != (self.n,):
            raise UsageError(f"bias must have length {self.n}, got {b.shape}")
        if not (np.all(np.isfinite(w)) and np.all(np.isfinite(b))):
            raise UsageError("weights and bias must be finite")
        if np.any(np.diagonal(w) != 0.0):
            raise UsageError("weight matrix must have a zero diagonal")
        w.flags.writeable = False
        b.flags.writeable = False
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "bias", b)


def _influences(game: LinearInfluenceGame, x_rows: np.ndarray) -> np.ndarray:
    """Column i is sum_j W[i, j] * x_j, accumulated over ascending j.

    The explicit j loop keeps the float accumulation order identical to
    the scalar payoff() path, so enumeration and single-point checks can
    never disagree on a borderline zero payoff.
    """
    m, n = x_rows.shape
    acc = np.zeros((m, n))
    for j in range(n):
        acc += np.multiply.outer(x_rows[:, j], game.weights[:, j])
    return acc


def _payoffs(game: LinearInfluenceGame, x_rows: np.ndarray) -> np.ndarray:
    return x_rows * (_influences(game, x_rows) - game.bias[None, :])


def payoff(game: LinearInfluenceGame, i: int, x) -> float:
    """Player i's payoff under joint action x."""
    if not 0 <= i < game.n:
        raise UsageError(f"player index {i} out of range for n={game.n}")
    xa = _as_action(x, game.n)
    acc = 0.0
    for j in range(game.n):
        acc += game.weights[i, j] * float(xa[j])
    return float(xa[i]) * (acc - game.bias[i])


def is_psne(game: LinearInfluenceGame, x) -> bool:
    """True when every player's payoff under x is >= 0 (exact comparison)."""
    xa = _as_action(x, game.n).astype(np.float64)[None, :]
    return bool(np.all(_payoffs(game, xa) >= 0.0))


@dataclass(frozen=True)
class PsneSet:
    """The full PSNE set of a game, stored as sorted integer action codes."""

    n: int
    codes: np.ndarray

    def __post_init__(self):
        codes = np.array(self.codes, dtype=np.int64)
        codes.flags.writeable = False
        object.__setattr__(self, "codes", codes)

    def __len__(self) -> int:
        return int(self.codes.size)

    def contains_code(self, code: int) -> bool:
        pos = int(np.searchsorted(self.codes, code))
        return pos < self.codes.size and self.codes[pos] == code

    def __contains__(self, x) -> bool:
        return self.contains_code(int(encode_actions(_as_action(x, self.n))))

    def member_mask(self, codes) -> np.ndarray:
        """Boolean membership mask for an array of action codes."""
        codes = np.asarray(codes, dtype=np.int64)
        if self.codes.size == 0:
            return np.zeros(codes.shape, dtype=bool)
        pos = np.minimum(np.searchsorted(self.codes, codes), self.codes.size - 1)
        return self.codes[pos] == codes

    def actions(self) -> np.ndarray:
        """Decode the whole set to a matrix of {-1, +1} rows."""
        return decode_actions(self.codes, self.n)


def enumerate_psne(game: LinearInfluenceGame, cap: int = ENUMERATION_CAP) -> PsneSet:
    """Exhaustively enumerate the PSNE set over all 2^n joint actions.

    Deterministic: returned codes are ascending.  Raises CapacityError
    when n exceeds cap.
    """
    n = game.n
    if n > cap:
        raise CapacityError(f"enumeration needs 2^{n} evaluations, cap is n={cap}")
    total = 1 << n
    hits = []
    for start in range(0, total, _CHUNK):
        codes = np.arange(start, min(start + _CHUNK, total), dtype=np.int64)
        rows = decode_actions(codes, n).astype(np.float64)
        ok = np.all(_payoffs(game, rows) >= 0.0, axis=1)
        hits.append(codes[ok])
    return PsneSet(n=n, codes=np.concatenate(hits))


def min_psne_payoff(game: LinearInfluenceGame, psne: PsneSet) -> float:
    """Smallest payoff any player gets at any equilibrium (rho_min)."""
    if psne.n != game.n:
        raise UsageError("psne set and game disagree on n")
    if len(psne) == 0:
        raise DomainError("game has no PSNE; minimum payoff is undefined")
    best = np.inf
    for start in range(0, psne.codes.size, _CHUNK):
        rows = decode_actions(psne.codes[start:start + _CHUNK], game.n).astype(np.float64)
        best = min(best, float(_payoffs(game, rows).min()))
    return best


def random_lig(n: int, k: int, rng: np.random.Generator) -> LinearInfluenceGame:
    """Draw a game with exactly k entries of -1 per row (off-diagonal,
    positions uniform without replacement) and zero bias."""
    if n < 2:
        raise UsageError(f"random games need n >= 2, got {n}")
    if not 1 <= k <= n - 1:
        raise UsageError(f"k must be in [1, n-1], got k={k} for n={n}")
    w = np.zeros((n, n))
    for i in range(n):
        cols = rng.choice(n - 1, size=k, replace=False)
        cols = cols + (cols >= i)
        w[i, cols] = -1.0
    return LinearInfluenceGame(n=n, weights=w, bias=np.zeros(n), k=k)


def scale_game(game: LinearInfluenceGame, c: float) -> LinearInfluenceGame:
    """Scale (W, b) by c > 0.  Payoffs scale by c, so the PSNE set is unchanged."""
    if not (np.isfinite(c) and c > 0):
        raise UsageError(f"scale factor must be positive and finite, got {c}")
    return replace(game, weights=np.asarray(game.weights) * c, bias=np.asarray(game.bias) * c)


@dataclass(frozen=True)
class Neighborhood:
    """Signed in-neighborhood of one player: who influences them and how."""

    player: int
    neighbors: tuple[int, ...]
    signs: dict[int, int]


def neighborhood(game: LinearInfluenceGame, i: int, zero_tol: float = 0.0) -> Neighborhood:
    """Players j with |W[i, j]| > zero_tol, with the sign of each weight."""
    if not 0 <= i < game.n:
        raise UsageError(f"player index {i} out of range for n={game.n}")
    if zero_tol < 0:
        raise UsageError("zero_tol must be >= 0")
    row = np.asarray(game.weights[i])
    idx = np.flatnonzero(np.abs(row) > zero_tol)
    return Neighborhood(
        player=i,
        neighbors=tuple(int(j) for j in idx),
        signs={int(j): (1 if row[j] > 0 else -1) for j in idx},
    )


def game_hash(game: LinearInfluenceGame) -> str:
    """Stable 16-hex-digit id of (n, W, b); provenance tags do not count."""
    doc = {"n": game.n, "w": game.weights.tolist(), "b": game.bias.tolist()}
    blob = json.dumps(doc, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


def save_game(game: LinearInfluenceGame, path) -> None:
    """Write the game as JSON.  Floats round-trip exactly (repr serialization)."""
    doc = {"n": game.n, "w": game.weights.tolist(), "b": game.bias.tolist()}
    if game.seed is not None:
        doc["seed"] = game.seed
    if game.k is not None:
        doc["k"] = game.k
    Path(path).write_text(json.dumps(doc, indent=1) + "\n")


def load_game(path) -> LinearInfluenceGame:
    try:
        doc = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise UsageError(f"cannot read game file {path}: {exc}") from exc
    if not isinstance(doc, dict):
        raise UsageError(f"game file {path} is not a JSON object")
    unknown = set(doc) - {"n", "w", "b", "seed", "k"}
    if unknown:
        raise UsageError(f"game file {path} has unknown fields {sorted(unknown)}")
    try:
        return LinearInfluenceGame(
            n=int(doc["n"]),
            weights=np.array(doc["w"], dtype=np.float64),
            bias=np.array(doc["b"], dtype=np.float64),
            seed=doc.get("seed"),
            k=doc.get("k"),
        )
    except KeyError as exc:
        raise UsageError(f"game file {path} is missing field {exc}") from exc
