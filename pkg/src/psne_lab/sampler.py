"""Mixture sampling of joint actions around a PSNE set.

Observations are i.i.d. from a two-component mixture: with probability q
a uniform draw from the PSNE set, otherwise a uniform draw from its
complement.  The same distribution can be rewritten as a signal weight
nu on the PSNE set plus a uniform background over all 2^n actions,

    p(x) = nu * 1[x in NE] / |NE| + (1 - nu) / 2^n,
    nu   = (q - |NE|/2^n) / (1 - |NE|/2^n),

and both forms are implemented so the algebra is checkable numerically.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DomainError, UsageError
from .game import PsneSet, decode_actions, encode_actions

# Above this n, collapsing by bincount over 2^n cells would dominate
# memory; fall back to sort-based unique.
_BINCOUNT_CAP = 22

_HEADER_RE = re.compile(
    r"^psne-lab-dataset v1 n=(\d+) m=(\d+) q=(\S+) seed=(-?\d+) game=(\S*)$"
)


@dataclass(frozen=True)
class DatasetMeta:
    q: float
    seed: int
    game_id: str = ""
    ne_size: int | None = None


@dataclass(frozen=True)
class Dataset:
    """m joint-action samples plus the generation metadata."""

    n: int
    samples: np.ndarray
    meta: DatasetMeta

    def __post_init__(self):
        s = np.array(self.samples, dtype=np.int8)
        if s.ndim != 2 or s.shape[1] != self.n or s.shape[0] < 1:
            raise UsageError(f"samples must be m x {self.n} with m >= 1, got {s.shape}")
        if not np.all(np.abs(s) == 1):
            raise UsageError("sample entries must be -1 or +1")
        s.flags.writeable = False
        object.__setattr__(self, "samples", s)

    @property
    def m(self) -> int:
        return int(self.samples.shape[0])

    def codes(self) -> np.ndarray:
        return encode_actions(self.samples)

    def collapsed(self) -> tuple[np.ndarray, np.ndarray]:
        """Unique sample rows (code-ascending) and their counts.

        Duplicate joint actions carry no extra information for the
        empirical loss, so downstream fits work on this compressed view.
        """
        codes = self.codes()
        if self.n <= _BINCOUNT_CAP:
            counts = np.bincount(codes, minlength=1 << self.n)
            present = np.flatnonzero(counts)
            return decode_actions(present, self.n), counts[present]
        uniq, counts = np.unique(codes, return_counts=True)
        return decode_actions(uniq, self.n), counts


def _check_mixture(psne: PsneSet, q: float) -> tuple[int, int]:
    ne = len(psne)
    total = 1 << psne.n
    if ne == 0 or ne == total:
        raise DomainError(
            f"PSNE set is trivial (|NE|={ne} of {total}); the mixture is undefined"
        )
    if not (ne / total < q < 1.0):
        raise UsageError(f"q must lie in (|NE|/2^n, 1) = ({ne / total}, 1), got {q}")
    return ne, total


def sample_dataset(psne: PsneSet, n: int, q: float, m: int, seed: int,
                   game_id: str = "") -> Dataset:
    """Draw m i.i.d. joint actions from the mixture.

    Complement draws use rejection: sample uniformly over all 2^n codes
    and redraw the positions that landed inside the PSNE set.  The seed
    is stored in the metadata; the generator is numpy's default PCG64.
    """
    if psne.n != n:
        raise UsageError(f"psne has n={psne.n}, expected {n}")
    if m < 1:
        raise UsageError(f"m must be >= 1, got {m}")
    ne, total = _check_mixture(psne, q)
    rng = np.random.default_rng(seed)
    from_ne = rng.random(m) < q
    codes = np.empty(m, dtype=np.int64)
    codes[from_ne] = psne.codes[rng.integers(0, ne, size=int(from_ne.sum()))]
    todo = np.flatnonzero(~from_ne)
    while todo.size:
        draw = rng.integers(0, total, size=todo.size)
        codes[todo] = draw
        todo = todo[psne.member_mask(draw)]
    meta = DatasetMeta(q=float(q), seed=int(seed), game_id=game_id, ne_size=ne)
    return Dataset(n=n, samples=decode_actions(codes, n), meta=meta)


def empirical_mixture_fraction(dataset: Dataset, psne: PsneSet) -> float:
    """Fraction of samples that are PSNE members."""
    if dataset.n != psne.n:
        raise UsageError("dataset and psne disagree on n")
    return float(psne.member_mask(dataset.codes()).mean())


def exact_pmf(x, psne: PsneSet, q: float, n: int) -> float:
    """Mixture probability of one joint action (uniform-on-set form)."""
    if psne.n != n:
        raise UsageError(f"psne has n={psne.n}, expected {n}")
    ne, total = _check_mixture(psne, q)
    if x in psne:
        return q / ne
    return (1.0 - q) / (total - ne)


def exact_pmf_signal_form(x, psne: PsneSet, q: float, n: int) -> float:
    """Same probability via the signal-weight form nu/|NE| + (1-nu)/2^n."""
    if psne.n != n:
        raise UsageError(f"psne has n={psne.n}, expected {n}")
    ne, total = _check_mixture(psne, q)
    r = ne / total
    nu = (q - r) / (1.0 - r)
    background = (1.0 - nu) / total
    if x in psne:
        return nu / ne + background
    return background


def pmf_table(psne: PsneSet, q: float) -> np.ndarray:
    """Probabilities of all 2^n actions, indexed by action code."""
    ne, total = _check_mixture(psne, q)
    table = np.full(total, (1.0 - q) / (total - ne))
    table[psne.codes] = q / ne
    return table


def save_dataset(dataset: Dataset, path) -> None:
    meta = dataset.meta
    lines = [
        f"psne-lab-dataset v1 n={dataset.n} m={dataset.m} q={meta.q!r} "
        f"seed={meta.seed} game={meta.game_id}"
    ]
    for row in dataset.samples:
        lines.append(" ".join("+1" if v > 0 else "-1" for v in row))
    Path(path).write_text("\n".join(lines) + "\n")


def load_dataset(path) -> Dataset:
    """Parse a dataset file.  Any token other than +1/-1 is rejected."""
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise UsageError(f"cannot read dataset file {path}: {exc}") from exc
    lines = text.splitlines()
    if not lines:
        raise UsageError(f"dataset file {path} is empty")
    match = _HEADER_RE.match(lines[0])
    if not match:
        raise UsageError(f"dataset file {path} has a malformed header: {lines[0]!r}")
    n, m = int(match.group(1)), int(match.group(2))
    try:
        q = float(match.group(3))
    except ValueError as exc:
        raise UsageError(f"dataset file {path} has a malformed q value") from exc
    seed, game_id = int(match.group(4)), match.group(5)
    body = lines[1:]
    if len(body) != m:
        raise UsageError(f"dataset file {path} declares m={m} but has {len(body)} rows")
    samples = np.empty((m, n), dtype=np.int8)
    step = 1 << 16
    for start in range(0, m, step):
        chunk = [line.split() for line in body[start:start + step]]
        for r, row in enumerate(chunk):
            if len(row) != n:
                raise UsageError(
                    f"dataset file {path} row {start + r} has {len(row)} tokens, expected {n}"
                )
        # dtype=str keeps full token width, so "+1x" cannot alias "+1"
        tokens = np.array(chunk, dtype=str)
        plus = tokens == "+1"
        bad = ~(plus | (tokens == "-1"))
        if bad.any():
            r, c = (int(v) for v in np.argwhere(bad)[0])
            raise UsageError(
                f"dataset file {path} row {start + r} has invalid token {chunk[r][c]!r}"
            )
        samples[start:start + len(chunk)] = np.where(plus, 1, -1)
    return Dataset(n=n, samples=samples,
                   meta=DatasetMeta(q=q, seed=seed, game_id=game_id, ne_size=None))
