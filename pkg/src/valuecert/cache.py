"""The value cache and its on-disk format.

A cache file is a single JSON document::

    {
     "format_version": 1,
     "meta": {...},
     "entries": [{"state_id": 0, "coords": [...], "value": ..., ...}, ...],
     "usage": {"queries": 0},
     "sha256": "<hex digest>"
    }

The digest covers the exact bytes of the document written without the
``sha256`` member, so any altered byte is detected on load.
"""
from __future__ import annotations

import hashlib
import json
import re
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

FORMAT_VERSION = 1


class CacheError(Exception):
    pass


class CacheVersionError(CacheError):
    pass


class CacheChecksumError(CacheError):
    pass


class CacheTruncatedError(CacheError):
    pass


@dataclass
class CacheMeta:
    env: str
    policy: str
    epsilon: float
    delta: float
    tau: float
    c: float | None
    K: int
    gamma: float
    vmax: float
    rmax: float
    seed: int
    m: int
    loss_kind: str = "CMAPVE"
    method: str = "ebgstop"
    created: str | None = None
    total_samples: int = 0
    extra: dict = field(default_factory=dict)


@dataclass
class CacheEntry:
    state_id: int
    coords: list[float]
    value: float
    samples: int
    case: str
    steps: int = 0


@dataclass
class ValueCache:
    meta: CacheMeta
    entries: list[CacheEntry]
    queries: int = 0

    def __post_init__(self):
        if len(self.entries) != self.meta.m:
            raise ValueError(f"cache has {len(self.entries)} entries but meta.m={self.meta.m}")
        if [e.state_id for e in self.entries] != list(range(self.meta.m)):
            raise ValueError("state ids must be 0..m-1 in order")

    @property
    def values(self) -> np.ndarray:
        return np.array([e.value for e in self.entries])

    @property
    def budget_exhausted(self) -> bool:
        return self.queries > self.meta.K

    def record_query(self) -> int:
        self.queries += 1
        return self.queries

    def budget_stats(self) -> dict:
        """Per-state sample counts (terminal states excluded) and total steps."""
        used = np.array([e.samples for e in self.entries if e.case != "terminal"])
        if used.size == 0:
            used = np.zeros(1, dtype=int)
        return {
            "samples": [e.samples for e in self.entries],
            "min": int(used.min()),
            "median": float(np.median(used)),
            "max": int(used.max()),
            "total_steps": int(sum(e.steps for e in self.entries)),
        }

    def to_dict(self) -> dict:
        return {
            "format_version": FORMAT_VERSION,
            "meta": asdict(self.meta),
            "entries": [asdict(e) for e in self.entries],
            "usage": {"queries": self.queries},
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "ValueCache":
        try:
            meta = CacheMeta(**doc["meta"])
            entries = [CacheEntry(**e) for e in doc["entries"]]
            return cls(meta, entries, int(doc["usage"]["queries"]))
        except (KeyError, TypeError) as err:
            raise CacheTruncatedError(f"cache document is incomplete: {err}") from err


_TRAILER = re.compile(r',\n "sha256": "([0-9a-f]{64})"\n}\n?$')


def dumps_cache(cache: ValueCache) -> str:
    body = json.dumps(cache.to_dict(), indent=1, sort_keys=False, allow_nan=False)
    digest = hashlib.sha256(body.encode()).hexdigest()
    assert body.endswith("\n}")
    return body[:-2] + f',\n "sha256": "{digest}"\n}}\n'


def loads_cache(text: str) -> ValueCache:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as err:
        if err.pos >= len(text.rstrip()) - 1:
            raise CacheTruncatedError(f"cache file ends prematurely: {err}") from err
        raise CacheChecksumError(f"cache file is corrupted: {err}") from err
    if not isinstance(doc, dict) or "format_version" not in doc:
        raise CacheChecksumError("cache file is corrupted: no format_version")
    if doc["format_version"] != FORMAT_VERSION:
        raise CacheVersionError(
            f"unsupported cache format version {doc['format_version']!r} "
            f"(this library reads version {FORMAT_VERSION})"
        )
    match = _TRAILER.search(text)
    if match is None:
        raise CacheChecksumError("cache file is corrupted: checksum trailer not found")
    body = text[: match.start()] + "\n}"
    if hashlib.sha256(body.encode()).hexdigest() != match.group(1):
        raise CacheChecksumError("cache checksum mismatch")
    doc.pop("sha256", None)
    return ValueCache.from_dict(doc)


def save_cache(cache: ValueCache, path) -> None:
    Path(path).write_bytes(dumps_cache(cache).encode())


def load_cache(path) -> ValueCache:
    raw = Path(path).read_bytes()
    try:
        text = raw.decode()
    except UnicodeDecodeError as err:
        raise CacheChecksumError(f"cache file is corrupted: {err}") from err
    if not text:
        raise CacheTruncatedError("cache file is empty")
    return loads_cache(text)
