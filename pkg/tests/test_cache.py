import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from valuecert.cache import (
    CacheChecksumError,
    CacheEntry,
    CacheError,
    CacheMeta,
    CacheTruncatedError,
    CacheVersionError,
    ValueCache,
    dumps_cache,
    load_cache,
    loads_cache,
    save_cache,
)


def random_cache(gen, m=None):
    m = int(gen.integers(1, 60)) if m is None else m
    dim = int(gen.integers(1, 4))
    meta = CacheMeta(
        env="env-%d" % gen.integers(100), policy="uniform", epsilon=float(gen.uniform(0.01, 0.5)),
        delta=float(gen.uniform(0.01, 0.5)), tau=float(gen.uniform(0, 2)), c=2.0,
        K=int(gen.integers(1, 5)), gamma=0.9, vmax=10.0, rmax=1.0, seed=int(gen.integers(1000)),
        m=m, total_samples=int(gen.integers(10**6)), extra={"eps_bar": 0.01},
    )
    entries = [
        CacheEntry(i, gen.normal(size=dim).tolist(), float(gen.normal() * 10),
                   int(gen.integers(1, 10**6)), "relative-width", int(gen.integers(10**7)))
        for i in range(m)
    ]
    return ValueCache(meta, entries, queries=int(gen.integers(0, 3)))


def test_round_trip_is_exact(tmp_path):
    cache = random_cache(np.random.default_rng(0), m=40)
    save_cache(cache, tmp_path / "c.json")
    back = load_cache(tmp_path / "c.json")
    assert back == cache
    assert np.array_equal(back.values, cache.values)
    assert dumps_cache(back) == dumps_cache(cache)


@given(st.integers(0, 2**32 - 1), st.data())
@settings(max_examples=60, deadline=None)
def test_any_flipped_byte_is_detected(seed, data):
    text = dumps_cache(random_cache(np.random.default_rng(seed))).encode()
    pos = data.draw(st.integers(0, len(text) - 1))
    bit = data.draw(st.integers(0, 7))
    bad = bytearray(text)
    bad[pos] ^= 1 << bit
    with pytest.raises(CacheError):
        try:
            raw = bytes(bad).decode()
        except UnicodeDecodeError as err:
            raise CacheChecksumError(str(err))
        loads_cache(raw)


def test_changed_value_fails_checksum(tmp_path):
    path = tmp_path / "c.json"
    save_cache(random_cache(np.random.default_rng(1), m=5), path)
    doc = path.read_text()
    entry = json.loads(doc)["entries"][2]
    text = doc.replace(repr(entry["value"]), repr(entry["value"] + 1), 1)
    path.write_text(text)
    with pytest.raises(CacheChecksumError, match="checksum"):
        load_cache(path)


def test_old_version_is_named(tmp_path):
    path = tmp_path / "c.json"
    text = dumps_cache(random_cache(np.random.default_rng(2), m=3))
    path.write_text(text.replace('"format_version": 1', '"format_version": 0', 1))
    with pytest.raises(CacheVersionError, match="version 0"):
        load_cache(path)


def test_truncated_file(tmp_path):
    path = tmp_path / "c.json"
    text = dumps_cache(random_cache(np.random.default_rng(3), m=10))
    path.write_text(text[: len(text) // 2])
    with pytest.raises(CacheTruncatedError):
        load_cache(path)


def test_empty_file(tmp_path):
    path = tmp_path / "c.json"
    path.write_bytes(b"")
    with pytest.raises(CacheTruncatedError, match="empty"):
        load_cache(path)


def test_invalid_utf8(tmp_path):
    path = tmp_path / "c.json"
    path.write_bytes(b'{"format_version": 1, \xff\xfe}')
    with pytest.raises(CacheChecksumError):
        load_cache(path)


def test_missing_trailer():
    cache = random_cache(np.random.default_rng(4), m=2)
    with pytest.raises(CacheChecksumError, match="trailer"):
        loads_cache(json.dumps(cache.to_dict()))


def test_entries_must_match_m():
    cache = random_cache(np.random.default_rng(5), m=3)
    with pytest.raises(ValueError):
        ValueCache(cache.meta, cache.entries[:2])
    with pytest.raises(ValueError):
        ValueCache(cache.meta, cache.entries[::-1])


def test_nan_values_are_not_written():
    cache = random_cache(np.random.default_rng(6), m=2)
    cache.entries[0].value = float("nan")
    with pytest.raises(ValueError):
        dumps_cache(cache)


def test_budget_stats_skip_terminals():
    cache = random_cache(np.random.default_rng(7), m=3)
    for e, n in zip(cache.entries, (10, 20, 0)):
        e.samples = n
    cache.entries[2].case = "terminal"
    stats = cache.budget_stats()
    assert (stats["min"], stats["median"], stats["max"]) == (10, 15.0, 20)
