import numpy as np
import pytest
from scipy import stats

from psne_lab import (Dataset, DatasetMeta, DomainError, PsneSet, UsageError,
                      decode_actions, empirical_mixture_fraction,
                      enumerate_psne, exact_pmf, exact_pmf_signal_form,
                      load_dataset, pmf_table, random_lig, sample_dataset,
                      save_dataset)


def make_psne(n, codes):
    return PsneSet(n=n, codes=np.asarray(codes, dtype=np.int64))


def admitted_game(n, k, seed, q):
    rng = np.random.default_rng(seed)
    while True:
        game = random_lig(n, k, rng)
        psne = enumerate_psne(game)
        if 0 < len(psne) < 2 ** n and len(psne) / 2 ** n < q:
            return game, psne


def test_sampling_is_deterministic():
    psne = make_psne(5, [3, 28])
    a = sample_dataset(psne, 5, 0.3, 500, seed=42)
    b = sample_dataset(psne, 5, 0.3, 500, seed=42)
    assert np.array_equal(a.samples, b.samples)
    c = sample_dataset(psne, 5, 0.3, 500, seed=43)
    assert not np.array_equal(a.samples, c.samples)
    assert a.meta.seed == 42 and a.meta.q == 0.3 and a.meta.ne_size == 2


def test_complement_rejection_never_returns_psne_rows():
    # with a large PSNE set the rejection loop is exercised hard
    psne = make_psne(4, list(range(12)))
    ds = sample_dataset(psne, 4, 0.8, 4000, seed=1)
    member = psne.member_mask(ds.codes())
    frac = member.mean()
    # all non-member rows must be outside the set by construction
    assert set(np.unique(ds.codes()[~member])) <= set(range(12, 16))
    assert abs(frac - 0.8) < 5 * np.sqrt(0.8 * 0.2 / 4000)


def test_mixture_fraction_concentrates():
    psne = make_psne(6, [0, 9, 33])
    q, m = 0.2, 100000
    ds = sample_dataset(psne, 6, q, m, seed=7)
    se = np.sqrt(q * (1 - q) / m)
    assert abs(empirical_mixture_fraction(ds, psne) - q) < 5 * se


def test_preconditions():
    psne = make_psne(3, [1])
    with pytest.raises(UsageError):
        sample_dataset(psne, 3, 0.05, 10, seed=0)  # q below |NE|/2^n
    with pytest.raises(UsageError):
        sample_dataset(psne, 3, 1.0, 10, seed=0)
    with pytest.raises(UsageError):
        sample_dataset(psne, 3, 0.5, 0, seed=0)
    with pytest.raises(UsageError):
        sample_dataset(psne, 4, 0.5, 10, seed=0)  # n mismatch
    empty = make_psne(3, [])
    with pytest.raises(DomainError):
        sample_dataset(empty, 3, 0.5, 10, seed=0)
    full = make_psne(2, [0, 1, 2, 3])
    with pytest.raises(DomainError):
        sample_dataset(full, 2, 0.5, 10, seed=0)


def test_pmf_forms_agree_and_normalize():
    rng = np.random.default_rng(0)
    for _ in range(10):
        n = int(rng.integers(2, 9))
        size = int(rng.integers(1, 2 ** n))
        codes = np.sort(rng.choice(2 ** n, size=size, replace=False))
        psne = make_psne(n, codes)
        q = float(rng.uniform(size / 2 ** n, 1.0))
        actions = decode_actions(np.arange(2 ** n), n)
        p_mix = np.array([exact_pmf(x, psne, q, n) for x in actions])
        p_sig = np.array([exact_pmf_signal_form(x, psne, q, n) for x in actions])
        assert np.max(np.abs(p_mix - p_sig)) < 1e-15
        assert abs(p_mix.sum() - 1.0) < 1e-12
        table = pmf_table(psne, q)
        assert np.array_equal(table, p_mix)


def test_pmf_table_structure():
    psne = make_psne(4, [2, 7])
    table = pmf_table(psne, 0.5)
    assert table[2] == table[7] == 0.25
    others = np.delete(table, [2, 7])
    assert np.all(others == 0.5 / 14)


def test_collapsed_counts():
    samples = np.array([[1, -1], [-1, -1], [1, -1], [1, 1], [1, -1]], dtype=np.int8)
    ds = Dataset(n=2, samples=samples, meta=DatasetMeta(q=0.5, seed=0))
    rows, counts = ds.collapsed()
    # codes: [1,-1] -> 1, [-1,-1] -> 0, [1,1] -> 3; ascending order
    assert rows.tolist() == [[-1, -1], [1, -1], [1, 1]]
    assert counts.tolist() == [1, 3, 1]
    assert counts.sum() == ds.m


def test_collapsed_wide_rows_use_unique_path():
    rng = np.random.default_rng(4)
    samples = (rng.integers(0, 2, size=(64, 25)) * 2 - 1).astype(np.int8)
    ds = Dataset(n=25, samples=samples, meta=DatasetMeta(q=0.5, seed=0))
    rows, counts = ds.collapsed()
    assert counts.sum() == 64
    codes = np.sort(ds.codes())
    from psne_lab import encode_actions
    assert np.array_equal(np.repeat(encode_actions(rows), counts), codes)


def test_dataset_validation():
    with pytest.raises(UsageError):
        Dataset(n=2, samples=np.array([[1, 2]]), meta=DatasetMeta(q=0.5, seed=0))
    with pytest.raises(UsageError):
        Dataset(n=3, samples=np.array([[1, -1]]), meta=DatasetMeta(q=0.5, seed=0))
    with pytest.raises(UsageError):
        Dataset(n=2, samples=np.empty((0, 2)), meta=DatasetMeta(q=0.5, seed=0))


def test_save_load_roundtrip_byte_identical(tmp_path):
    _, psne = admitted_game(8, 1, seed=0, q=0.3)
    ds = sample_dataset(psne, 8, 0.3, 700, seed=11, game_id="abc123")
    path = tmp_path / "data.txt"
    save_dataset(ds, path)
    loaded = load_dataset(path)
    assert np.array_equal(loaded.samples, ds.samples)
    assert loaded.meta.q == ds.meta.q
    assert loaded.meta.seed == ds.meta.seed
    assert loaded.meta.game_id == "abc123"
    path2 = tmp_path / "again.txt"
    save_dataset(loaded, path2)
    assert path.read_bytes() == path2.read_bytes()


def test_load_rejects_malformed_files(tmp_path):
    path = tmp_path / "bad.txt"
    path.write_text("wrong header\n+1 -1\n")
    with pytest.raises(UsageError):
        load_dataset(path)
    path.write_text("psne-lab-dataset v1 n=2 m=2 q=0.5 seed=0 game=\n+1 -1\n")
    with pytest.raises(UsageError):
        load_dataset(path)  # row count mismatch
    path.write_text("psne-lab-dataset v1 n=2 m=1 q=0.5 seed=0 game=\n+1 -1 +1\n")
    with pytest.raises(UsageError):
        load_dataset(path)  # token count mismatch
    path.write_text("psne-lab-dataset v1 n=2 m=1 q=0.5 seed=0 game=\n+1 2\n")
    with pytest.raises(UsageError):
        load_dataset(path)  # bad token
    path.write_text("psne-lab-dataset v1 n=2 m=1 q=0.5 seed=0 game=\n+1x -1\n")
    with pytest.raises(UsageError):
        load_dataset(path)  # token with trailing junk
    with pytest.raises(UsageError):
        load_dataset(tmp_path / "missing.txt")


def test_frequencies_match_pmf_chi_squared():
    # smaller cousin of the acceptance check; same machinery
    _, psne = admitted_game(8, 1, seed=3, q=0.1)
    q, m = 0.1, 200000
    ds = sample_dataset(psne, 8, q, m, seed=5)
    observed = np.bincount(ds.codes(), minlength=256)
    expected = pmf_table(psne, q) * m
    chi2 = float(((observed - expected) ** 2 / expected).sum())
    assert chi2 < stats.chi2.ppf(0.9999, 255)
